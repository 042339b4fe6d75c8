"""Deterministic Lindblad evolution.

Besides a generic dense-rho integrator, the noisy-chain studies work in the
Pauli-product (Bloch) representation ``rho = 2^-n sum_a Pi_a P_a``.  There the
Lindblad generator is a real matrix and the noisy, driven Hamiltonian enters
linearly, ``dPi/dt = (M0 + sum_j e_j(t) M_j) Pi``, which vectorizes over
noise realizations and qubits.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .models import (Lindblad, ModelParams, build_lindblads, chain_parts, drive_signal,
                     qubit_layout)
from .operators import pauli

PAULI_LABELS = ("0", "x", "y", "z")
_P = [pauli(a) for a in ("i", "x", "y", "z")]


class IntegrationError(RuntimeError):
    """Density matrix left the physical set (step too large)."""


def _ops(lindblads) -> list[np.ndarray]:
    return [l.op if isinstance(l, Lindblad) else np.asarray(l) for l in lindblads]


def lindblad_rhs(rho: np.ndarray, H: np.ndarray, lindblads) -> np.ndarray:
    """``-i[H, rho] + sum_k (L rho L^dag - {L^dag L, rho}/2)``.

    ``rho`` may carry leading batch axes.
    """
    out = -1j * (H @ rho - rho @ H)
    for L in _ops(lindblads):
        ld = L.conj().T
        ldl = ld @ L
        out = out + L @ rho @ ld - 0.5 * (ldl @ rho + rho @ ldl)
    return out


def check_density(rho: np.ndarray, trace_tol=1e-9, herm_tol=1e-10, pos_tol=1e-8) -> None:
    if abs(np.trace(rho) - 1) > trace_tol:
        raise ValueError(f"trace {np.trace(rho).real:.12g} != 1")
    if np.max(np.abs(rho - rho.conj().T)) > herm_tol:
        raise ValueError("density matrix is not Hermitian")
    if np.min(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))) < -pos_tol:
        raise ValueError("density matrix has negative eigenvalues")


def rk4(f: Callable, y, t: float, dt: float):
    k1 = f(y, t)
    k2 = f(y + 0.5 * dt * k1, t + 0.5 * dt)
    k3 = f(y + 0.5 * dt * k2, t + 0.5 * dt)
    k4 = f(y + dt * k3, t + dt)
    return y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def evolve_density(rho0: np.ndarray, hamiltonian, lindblads, dt: float, n_steps: int, stride: int = 1,
                   observables: Sequence[np.ndarray] = ()):
    """RK4 evolution of a dense density matrix.

    ``hamiltonian`` is an array or a callable ``t -> H``.  Returns the sample
    times, the expectation values (``(n_samples, n_obs)``) and the final state.
    """
    ham = hamiltonian if callable(hamiltonian) else (lambda t, h=np.asarray(hamiltonian): h)
    ops = _ops(lindblads)
    rho = np.asarray(rho0, dtype=complex)
    n_samples = n_steps // stride + 1
    values = np.zeros((n_samples, len(observables)))

    def sample(i, r):
        for k, o in enumerate(observables):
            values[i, k] = np.trace(r @ o).real

    sample(0, rho)
    j = 1
    for n in range(n_steps):
        rho = rk4(lambda r, t: lindblad_rhs(r, ham(t), ops), rho, n * dt, dt)
        if (n + 1) % stride == 0 and j < n_samples:
            sample(j, rho)
            j += 1
    times = np.arange(n_samples) * dt * stride
    return times, values, rho


# ------------------------------------------------------------------ Pauli basis


def pauli_basis(n_qubits: int) -> list[np.ndarray]:
    """Products ``P_a1 (x) P_a2 ...`` with the first qubit's index slowest."""
    out = []
    for idx in itertools.product(range(4), repeat=n_qubits):
        m = np.ones((1, 1), dtype=complex)
        for i in idx:
            m = np.kron(m, _P[i])
        out.append(m)
    return out


def bloch_encode(rho: np.ndarray) -> np.ndarray:
    """``Pi_ab = Tr[rho (sigma_a (x) sigma_b)]`` as a real 4x4 array."""
    rho = np.asarray(rho)
    if rho.shape != (4, 4):
        raise ValueError(f"expected a two-qubit density matrix, got shape {rho.shape}")
    pi = np.empty((4, 4))
    for a in range(4):
        for b in range(4):
            pi[a, b] = np.trace(rho @ np.kron(_P[a], _P[b])).real
    return pi


def bloch_decode(pi: np.ndarray) -> np.ndarray:
    """``rho = 1/4 sum_ab Pi_ab sigma_a (x) sigma_b``."""
    pi = np.asarray(pi, dtype=float)
    if pi.shape != (4, 4):
        raise ValueError(f"expected a 4x4 Bloch tensor, got shape {pi.shape}")
    rho = np.zeros((4, 4), dtype=complex)
    for a in range(4):
        for b in range(4):
            rho += pi[a, b] * np.kron(_P[a], _P[b])
    return rho / 4.0


def pauli_liouvillian(H: np.ndarray, lindblads=(), n_qubits: int | None = None) -> np.ndarray:
    """Real matrix ``M`` with ``dPi/dt = M Pi`` for ``Pi_a = Tr(rho P_a)``."""
    H = np.asarray(H)
    if n_qubits is None:
        n_qubits = int(round(math.log2(H.shape[0])))
    basis = pauli_basis(n_qubits)
    dim = 2 ** n_qubits
    stack = np.stack(basis)
    images = lindblad_rhs(stack / dim, H, lindblads)
    # M[a, b] = Tr(P_a L(P_b / dim))
    return np.einsum("aij,bji->ab", stack, images).real


def _pauli_index(n_qubits: int, axes: dict) -> int:
    """Flat index of the Pauli product with ``axes = {qubit: 'x'|'y'|'z'}``."""
    idx = 0
    for q in range(n_qubits):
        idx = idx * 4 + PAULI_LABELS.index(axes.get(q, "0"))
    return idx


def product_bloch(vectors: Sequence[Sequence[float]]) -> np.ndarray:
    """Pauli-basis vector of a product state from single-qubit Bloch vectors."""
    out = np.ones(1)
    for v in vectors:
        out = np.kron(out, np.r_[1.0, np.asarray(v, dtype=float)])
    return out


# --------------------------------------------------------------- noisy chains


class _ChainNoise:
    """Per-(realization, qubit) noise streams, nested across N.

    Qubit ``j`` of realization ``r`` always draws from
    ``SeedSequence([seed, r, j])``, independent of how many qubits or
    realizations are simulated alongside it.
    """

    chunk = 4096

    def __init__(self, seed: int, realizations: Sequence[int], n_qubits: int, dt: float, D: float):
        self.scale = math.sqrt(2.0 * D / dt)
        self.rngs = [[np.random.default_rng(np.random.SeedSequence([seed, r, j])) for j in range(n_qubits)]
                     for r in realizations]
        self.shape = (len(realizations), n_qubits)
        self.buf = None
        self.pos = self.chunk

    def next(self) -> np.ndarray:
        if self.pos >= self.chunk:
            self.buf = np.empty((self.chunk,) + self.shape)
            for r, row in enumerate(self.rngs):
                for j, rng in enumerate(row):
                    self.buf[:, r, j] = rng.standard_normal(self.chunk)
            self.buf *= self.scale
            self.pos = 0
        out = self.buf[self.pos]
        self.pos += 1
        return out


@dataclass
class ChainResult:
    """Sampled chain dynamics.

    ``sz`` has shape ``(realizations, n_qubits, samples)`` for the uncoupled
    ensemble (per-qubit ``<sigma^z_j>``) and ``(realizations, samples)`` for
    the coupled pair (the total ``S^z``).
    """

    times: np.ndarray
    sz: np.ndarray
    in_window: np.ndarray
    bloch: np.ndarray | None = None

    def total_sz(self, n: int | None = None) -> np.ndarray:
        """``S^z`` per realization, summed over the first ``n`` qubits."""
        if self.sz.ndim == 2:
            return self.sz
        return self.sz[:, : (n or self.sz.shape[1]), :].sum(axis=1)


def _single_qubit_generators(params: ModelParams):
    p1 = params.with_(n_qubits=1, eps=params.eps[0], delta=params.delta[0],
                      g_a=params.g_a[0], g_b=params.g_b[0])
    h0, (zop,) = chain_parts(p1)
    m0 = pauli_liouvillian(h0, build_lindblads(p1, qubit_layout(p1)), 1)
    m1 = pauli_liouvillian(zop, (), 1)
    return m0, m1


def _drive_table(params: ModelParams, n_steps: int, dt: float) -> np.ndarray:
    """Drive at the start, midpoint and end of every RK4 step."""
    t = np.arange(n_steps)[:, None] * dt + np.array([0.0, 0.5, 1.0]) * dt
    return drive_signal(params, t)


def run_uncoupled_ensemble(params: ModelParams, n_qubits: int, duration: float, dt: float,
                           realizations: int | Sequence[int] = 1, seed: int = 0, stride: int = 10,
                           warmup: float = 0.0, initial_bloch=(1.0, 0.0, 0.0)) -> ChainResult:
    """N independent single-qubit master equations with a shared drive and
    private white noise.

    ``duration`` and ``warmup`` are times in units of ``1/eps``.  Requires
    identical qubits (per-qubit parameters of qubit 0 are used) and
    ``g_qq = 0``.  The noise is held constant over each RK4 step.
    """
    if params.g_qq != 0:
        raise ValueError("uncoupled ensemble requires g_qq = 0")
    reals = list(range(realizations)) if np.ndim(realizations) == 0 else list(realizations)
    m0, m1 = _single_qubit_generators(params)
    n_steps = int(round(duration / dt))
    n_samples = n_steps // stride + 1
    noise = _ChainNoise(seed, reals, n_qubits, dt, params.noise_D)
    state = np.broadcast_to(np.r_[1.0, np.asarray(initial_bloch, float)], (len(reals), n_qubits, 4)).copy()
    out = np.empty((len(reals), n_qubits, n_samples))
    out[..., 0] = state[..., 3]
    gen = np.hstack([m0.T, m1.T])

    def f(s, e):
        y = s @ gen
        return y[..., :4] + e[..., None] * y[..., 4:]

    drive = _drive_table(params, n_steps, dt)
    j = 1
    for n in range(n_steps):
        xi = noise.next()
        d0, dh, d1 = drive[n]
        k1 = f(state, d0 + xi)
        k2 = f(state + 0.5 * dt * k1, dh + xi)
        k3 = f(state + 0.5 * dt * k2, dh + xi)
        k4 = f(state + dt * k3, d1 + xi)
        state = state + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if (n + 1) % stride == 0 and j < n_samples:
            out[..., j] = state[..., 3]
            j += 1
    times = np.arange(n_samples) * dt * stride
    return ChainResult(times, out, times >= warmup - 1e-9)


def run_coupled_pair(params: ModelParams, duration: float, dt: float, realizations: int | Sequence[int] = 1,
                     seed: int = 0, stride: int = 10, warmup: float = 0.0,
                     initial_bloch=((1.0, 0.0, 0.0), (1.0, 0.0, 0.0)), keep_bloch: bool = True,
                     positivity_tol: float = 1e-6) -> ChainResult:
    """Two sigma^z-coupled qubits, full 4x4 density matrix in the Pauli basis.

    Noise streams coincide with qubits 0 and 1 of :func:`run_uncoupled_ensemble`
    for the same ``seed``, so ``g_qq = 0`` reproduces two independent runs.
    ``bloch`` (if kept) holds the Bloch tensor of the first realization at
    every sample, shape ``(samples, 4, 4)``.
    """
    if params.n_qubits != 2:
        params = params.with_(n_qubits=2, eps=params.eps[0], delta=params.delta[0],
                              g_a=params.g_a[0], g_b=params.g_b[0])
    reals = list(range(realizations)) if np.ndim(realizations) == 0 else list(realizations)
    h0, zops = chain_parts(params)
    m0 = pauli_liouvillian(h0, build_lindblads(params, qubit_layout(params)), 2)
    m1 = pauli_liouvillian(zops[0], (), 2)
    m2 = pauli_liouvillian(zops[1], (), 2)
    iz = [_pauli_index(2, {0: "z"}), _pauli_index(2, {1: "z"})]
    n_steps = int(round(duration / dt))
    n_samples = n_steps // stride + 1
    noise = _ChainNoise(seed, reals, 2, dt, params.noise_D)
    state = np.broadcast_to(product_bloch(initial_bloch), (len(reals), 16)).copy()
    sz = np.empty((len(reals), n_samples))
    bloch = np.empty((n_samples, 4, 4)) if keep_bloch else None
    basis = np.stack(pauli_basis(2)) / 4.0

    def sample(i, s):
        sz[:, i] = s[:, iz[0]] + s[:, iz[1]]
        if bloch is not None:
            bloch[i] = s[0].reshape(4, 4)
        rho = np.einsum("ra,aij->rij", s, basis)
        low = np.linalg.eigvalsh(0.5 * (rho + rho.conj().transpose(0, 2, 1))).min()
        if low < -positivity_tol:
            raise IntegrationError(f"density matrix eigenvalue {low:.2e} at sample {i}; reduce dt")

    gen = np.hstack([m0.T, m1.T, m2.T])

    def f(s, e):
        y = s @ gen
        return y[:, :16] + e[:, 0, None] * y[:, 16:32] + e[:, 1, None] * y[:, 32:]

    drive = _drive_table(params, n_steps, dt)
    sample(0, state)
    j = 1
    for n in range(n_steps):
        xi = noise.next()
        d0, dh, d1 = drive[n]
        k1 = f(state, d0 + xi)
        k2 = f(state + 0.5 * dt * k1, dh + xi)
        k3 = f(state + 0.5 * dt * k2, dh + xi)
        k4 = f(state + dt * k3, d1 + xi)
        state = state + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if (n + 1) % stride == 0 and j < n_samples:
            sample(j, state)
            j += 1
    times = np.arange(n_samples) * dt * stride
    return ChainResult(times, sz, times >= warmup - 1e-9, bloch)


def averaged_response(params: ModelParams, frequency: float | None = None) -> complex:
    """Complex linear response of the noise-averaged pair/qubit ``S^z`` to the
    common drive, per unit drive amplitude.

    White noise of intensity ``D`` in ``-eps_j/2 sigma^z_j`` averages to an
    extra Lindblad channel ``sqrt(D/2) sigma^z_j``; the periodic response is
    then solved in closed form from the Pauli-basis generator.
    """
    n = params.n_qubits
    lay = qubit_layout(params)
    h0, zops = chain_parts(params)
    lind = build_lindblads(params, lay) + [math.sqrt(params.noise_D / 2.0) * (-2.0 * z) for z in zops]
    m0 = pauli_liouvillian(h0, lind, n)
    m1 = pauli_liouvillian(sum(zops), (), n)
    a, b = m0[1:, 1:], m0[1:, 0]
    steady = np.r_[1.0, np.linalg.solve(a, -b)]
    w = params.drive_freq if frequency is None else frequency
    # drive sin(wt) = Im e^{iwt}; response of Pi to the e^{iwt} component
    resp = np.linalg.solve(1j * w * np.eye(m0.shape[0]) - m0, m1 @ steady)
    idx = [_pauli_index(n, {j: "z"}) for j in range(n)]
    return complex(sum(resp[i] for i in idx))
