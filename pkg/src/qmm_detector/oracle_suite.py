"""Engine-versus-closed-form comparisons, each with a fixed tolerance."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .models import ModelParams, build_lindblads, full_hamiltonian, full_layout, qubit_layout
from .operators import annihilation, basis_state, embed, expectation, pauli
from .oracles import (bell_readout_times, coherent_amplitudes, displacement_apply, rabi_layout,
                      required_levels, rwa_hamiltonian, vacuum_rabi_state)
from .parallel import parallel_map
from .qsd import QSDStepper, NoiseStream

TWO_PI = 2.0 * math.pi


@dataclass
class CheckResult:
    name: str
    value: float
    tolerance: float
    passed: bool
    detail: str = ""

    def as_row(self) -> dict:
        return {"check": self.name, "value": self.value, "tolerance": self.tolerance,
                "passed": self.passed, "detail": self.detail}


def _fidelity(a, b) -> float:
    return float(abs(np.vdot(a, b)) ** 2)


def _propagate(stepper: QSDStepper, psi, n_steps: int, t0: float = 0.0):
    empty = np.zeros((0,) + psi.shape[1:])
    for n in range(n_steps):
        psi, _ = stepper.step(psi, t0 + n * stepper.dt, empty)
    return psi


def check_unitary_limit(periods: float = 50.0, dt: float = TWO_PI / 200) -> CheckResult:
    """Dissipation-free QSD against one matrix exponential of the full model."""
    p = ModelParams(n_qubits=2, delta=0.1, m_a=4, m_b=4, gamma_z=0.0, gamma_xy=0.0, gamma_b=0.0)
    lay = full_layout(p)
    h = full_hamiltonian(p)
    plus = np.array([1, 1], complex) / math.sqrt(2)
    psi0 = lay.product_state([plus, plus, coherent_amplitudes(1.0, 4) / np.linalg.norm(coherent_amplitudes(1.0, 4)),
                              basis_state(4, 0)])
    n = int(round(periods * TWO_PI / dt))
    psi = _propagate(QSDStepper(h, [], dt, method="exp"), psi0, n)
    exact = scipy.linalg.expm(-1j * h.static * n * dt) @ psi0
    inf = 1.0 - _fidelity(psi, exact)
    return CheckResult("qsd_zero_dissipation_vs_expm", inf, 1e-6, inf <= 1e-6,
                       f"infidelity after {periods:g} periods, dim {lay.dim}")


def check_vacuum_rabi(g_a: float = 0.01, samples: int = 16, dt: float = TWO_PI / 200) -> CheckResult:
    """Rotating-wave numerical propagation against the two-branch state over
    one full Rabi period."""
    lay = rabi_layout()
    stepper = QSDStepper(rwa_hamiltonian(g_a), [], dt, method="exp")
    period = math.pi / (math.sqrt(2.0) * g_a)
    n_total = int(round(period / dt))
    psi = vacuum_rabi_state(g_a, 0.0)
    worst, done = 0.0, 0
    for k in range(1, samples + 1):
        target = round(k * n_total / samples)
        psi = _propagate(stepper, psi, target - done, done * dt)
        done = target
        worst = max(worst, 1.0 - _fidelity(psi, vacuum_rabi_state(g_a, done * dt)))
    assert lay.dim == psi.size
    return CheckResult("vacuum_rabi_vs_closed_form", worst, 1e-6, worst <= 1e-6,
                       f"max infidelity at {samples} times over one Rabi period")


def check_bell_times(g_a: float = 0.01, n_times: int = 3, dt: float = TWO_PI / 200) -> list[CheckResult]:
    lay = rabi_layout()
    num = embed(annihilation(2), "A", lay)
    num = num.conj().T @ num
    times = bell_readout_times(g_a, np.arange(n_times))
    oracle = max(expectation(vacuum_rabi_state(g_a, t), num).real for t in times)
    stepper = QSDStepper(rwa_hamiltonian(g_a), [], dt, method="exp")
    psi, t_now, worst = vacuum_rabi_state(g_a, 0.0), 0.0, 0.0
    for t in times:
        # land exactly on t_n: whole steps, then one fractional step
        n = int((t - t_now) // dt)
        psi = _propagate(stepper, psi, n, t_now)
        rest = t - t_now - n * dt
        psi = scipy.linalg.expm(-1j * rwa_hamiltonian(g_a) * rest) @ psi
        t_now = t
        worst = max(worst, expectation(psi, num).real)
    return [
        CheckResult("bell_times_photon_number_oracle", oracle, 1e-12, oracle < 1e-12, f"t_0..t_{n_times - 1}"),
        CheckResult("bell_times_photon_number_rwa_numeric", worst, 1e-3, worst < 1e-3, f"t_0..t_{n_times - 1}"),
    ]


def check_displacement(alphas=(0.5, 1.0, math.sqrt(5.0), 2.5 + 1.0j)) -> CheckResult:
    """At the minimal truncation: kept amplitudes agree entrywise, and the
    renormalized states overlap to within 1e-8."""
    worst_amp, worst_fid = 0.0, 0.0
    for a in alphas:
        m = required_levels(a)
        out = displacement_apply(a, basis_state(m, 0))
        ref = coherent_amplitudes(a, m)
        worst_amp = max(worst_amp, float(np.max(np.abs(out - ref))))
        worst_fid = max(worst_fid, 1.0 - _fidelity(out / np.linalg.norm(out), ref / np.linalg.norm(ref)))
    worst = max(worst_amp, worst_fid)
    return CheckResult("displacement_vs_coherent_amplitudes", worst, 1e-8, worst <= 1e-8,
                       f"max(entrywise error {worst_amp:.1e}, 1 - overlap {worst_fid:.1e}), alpha in {list(alphas)}")


def _damping_job(args):
    gamma, dt, n_steps, stride, seeds = args
    p = ModelParams(n_qubits=1, eps=1.0, delta=0.0, gamma_z=gamma, gamma_xy=0.0, g_a=0.0, g_b=0.0)
    lay = qubit_layout(p)
    lind = [l for l in build_lindblads(p, lay) if l.rate > 0]
    stepper = QSDStepper(-0.5 * embed(pauli("z"), 0, lay), lind, dt, method="exp")
    proj = pauli("+") @ pauli("-")
    streams = [NoiseStream(s, len(lind), dt) for s in seeds]
    psi = np.tile(basis_state(2, 1)[:, None], (1, len(seeds)))
    out = [np.real(np.sum(psi.conj() * (proj @ psi), axis=0))]
    for n in range(n_steps):
        dxi = np.stack([s.next() for s in streams], axis=-1)
        psi, _ = stepper.step(psi, n * dt, dxi)
        if (n + 1) % stride == 0:
            out.append(np.real(np.sum(psi.conj() * (proj @ psi), axis=0)))
    return np.array(out)


def amplitude_damping_ensemble(n_traj: int = 2000, gamma: float = 0.05, dt: float = 0.01, t_end: float = 20.0,
                               stride: int = 100, seed: int = 0, workers: int = 1, batch: int = 500):
    """Excited-state population of a relaxing qubit: (times, mean, stderr)."""
    n_steps = int(round(t_end / dt))
    seeds = [seed + i for i in range(n_traj)]
    blocks = [seeds[i:i + batch] for i in range(0, n_traj, batch)]
    pops = np.concatenate(parallel_map(_damping_job, [(gamma, dt, n_steps, stride, b) for b in blocks],
                                       workers=workers), axis=1)
    times = np.arange(pops.shape[0]) * dt * stride
    return times, pops.mean(axis=1), pops.std(axis=1, ddof=1) / math.sqrt(n_traj)


def check_amplitude_damping(n_traj: int = 2000, seed: int = 0, workers: int = 1) -> CheckResult:
    gamma = 0.05
    times, mean, err = amplitude_damping_ensemble(n_traj, gamma, seed=seed, workers=workers)
    sel = slice(1, None)
    z = np.abs(mean[sel] - np.exp(-2 * gamma * times[sel])) / err[sel]
    worst = float(z.max())
    return CheckResult("amplitude_damping_vs_exp(-2 gamma t)", worst, 3.0, worst <= 3.0,
                       f"max |mean - exact| / stderr over {len(z)} times, n_traj={n_traj}")


def run_suite(seed: int = 0, damping_traj: int = 2000, workers: int = 1) -> list[CheckResult]:
    out = [check_unitary_limit(), check_vacuum_rabi()]
    out += check_bell_times()
    out.append(check_displacement())
    out.append(check_amplitude_damping(damping_traj, seed=seed, workers=workers))
    return out
