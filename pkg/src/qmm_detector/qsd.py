"""Quantum state diffusion trajectories of the full detector model.

The stepper advances a block of trajectories at once (columns of a ``(dim, k)``
array).  Each trajectory owns its random stream, seeded with ``seed + i``, so
results do not depend on how trajectories are grouped across workers.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .models import Hamiltonian, Lindblad, ModelParams, build_lindblads, full_hamiltonian, full_layout
from .operators import HilbertLayout, annihilation, embed
from .oracles import coherent_amplitudes, required_levels

log = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
DEFAULT_DT = TWO_PI / 200
NOISE_CHUNK = 2048
LEAKAGE_LIMIT = 1e-4
_DENSE_EXP_MAX_DIM = 640


class IntegrationError(RuntimeError):
    """Raised when a stochastic step loses the state (norm collapse)."""


def wiener_increments(rng: np.random.Generator, shape, dt: float) -> np.ndarray:
    """Complex increments with independent real/imaginary parts of variance dt/2."""
    shape = (shape,) if np.ndim(shape) == 0 else tuple(shape)
    z = rng.standard_normal(shape + (2,))
    return (z[..., 0] + 1j * z[..., 1]) * math.sqrt(dt / 2.0)


def _as_operator(op: np.ndarray):
    nnz = np.count_nonzero(op)
    if op.shape[0] >= 32 and nnz < 0.1 * op.size:
        return sp.csr_matrix(op)
    return np.asarray(op)


class QSDStepper:
    """Advance ``psi`` (shape ``(dim,)`` or ``(dim, k)``) by one step.

    ``method``:

    * ``"euler"`` - plain Euler-Maruyama of the full increment.
    * ``"exp"``   - the Hamiltonian part is propagated exactly (cached
      ``expm(-i H dt)`` for static ``H``, a midpoint exponential otherwise);
      dissipative drift and noise are Euler-Maruyama.
    * ``"rk4"``   - as ``"exp"`` but the Hamiltonian substep is classical RK4
      with sparse ``H``; used for large dimensions.
    * ``"auto"``  - ``"exp"`` up to dimension 640, else ``"rk4"``.
    """

    def __init__(self, hamiltonian, lindblads: Sequence[Lindblad] | Sequence[np.ndarray], dt: float,
                 method: str = "auto"):
        if not isinstance(hamiltonian, Hamiltonian):
            hamiltonian = Hamiltonian(np.asarray(hamiltonian, dtype=complex))
        self.hamiltonian = hamiltonian
        self.dim = hamiltonian.static.shape[0]
        self.dt = float(dt)
        if method == "auto":
            method = "exp" if self.dim <= _DENSE_EXP_MAX_DIM else "rk4"
        if method not in ("euler", "exp", "rk4"):
            raise ValueError(f"unknown stepping method {method!r}")
        self.method = method
        ops = [l.op if isinstance(l, Lindblad) else np.asarray(l) for l in lindblads]
        ops = [op for op in ops if np.any(op)]
        self.n_channels = len(ops)
        self.ops = [_as_operator(op) for op in ops]
        ldl = sum((op.conj().T @ op for op in ops), np.zeros((self.dim, self.dim), dtype=complex))
        self.ldl_half = _as_operator(0.5 * ldl)
        self._h_static = _as_operator(hamiltonian.static)
        self._h_terms = [(_as_operator(op), c) for op, c in hamiltonian.terms]
        self._propagator = None
        if method == "exp" and hamiltonian.is_static:
            self._propagator = scipy.linalg.expm(-1j * hamiltonian.static * self.dt)

    def _apply_h(self, psi, t):
        out = self._h_static @ psi
        for op, coeff in self._h_terms:
            c = coeff(t)
            if c:
                out = out + c * (op @ psi)
        return out

    def _unitary(self, psi, t):
        dt = self.dt
        if self._propagator is not None:
            return self._propagator @ psi
        if self.method == "exp":
            u = scipy.linalg.expm(-1j * self.hamiltonian(t + 0.5 * dt) * dt)
            return u @ psi
        k1 = -1j * self._apply_h(psi, t)
        k2 = -1j * self._apply_h(psi + 0.5 * dt * k1, t + 0.5 * dt)
        k3 = -1j * self._apply_h(psi + 0.5 * dt * k2, t + 0.5 * dt)
        k4 = -1j * self._apply_h(psi + dt * k3, t + dt)
        return psi + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)

    def increment(self, psi, t, dxi):
        """Euler-Maruyama increment from the dissipators (and, for ``"euler"``,
        from ``-i H``).  ``dxi`` has shape ``(n_channels,) + psi.shape[1:]``."""
        dt = self.dt
        d = -(self.ldl_half @ psi) * dt
        if self.method == "euler":
            d = d - 1j * self._apply_h(psi, t) * dt
        for op, dx in zip(self.ops, dxi):
            lpsi = op @ psi
            ell = np.sum(psi.conj() * lpsi, axis=0)
            d = d + (ell.conj() * lpsi - 0.5 * (ell.conj() * ell) * psi) * dt + (lpsi - ell * psi) * dx
        return d

    def step(self, psi, t, dxi):
        """One step; returns ``(new_psi, pre_normalization_norm)``."""
        if self.method != "euler":
            psi = self._unitary(psi, t)
        if self.n_channels or self.method == "euler":
            psi = psi + self.increment(psi, t, dxi)
        norm = np.linalg.norm(psi, axis=0)
        if np.any(norm < 1e-8) or not np.all(np.isfinite(norm)):
            raise IntegrationError(f"state norm collapsed to {np.min(norm):.3g} at t={t:.6g}")
        return psi / norm, norm


def qsd_step(state, H, lindblads, dt: float, rng: np.random.Generator, t: float = 0.0,
             method: str = "euler") -> np.ndarray:
    """Single QSD step of a normalized state with fresh Wiener increments."""
    state = np.asarray(state, dtype=complex)
    if abs(np.linalg.norm(state) - 1) > 1e-9:
        raise ValueError("input state must be normalized")
    stepper = QSDStepper(H, lindblads, dt, method=method)
    dxi = wiener_increments(rng, (stepper.n_channels,) + state.shape[1:], dt)
    return stepper.step(state, t, dxi)[0]


# --------------------------------------------------------------------------- runs


@dataclass(frozen=True)
class RunConfig:
    """One QSD experiment.  Times are in periods of the qubit splitting
    (``2 pi / eps``) unless suffixed otherwise."""

    params: ModelParams = field(default_factory=ModelParams)
    photons: float = 0.0
    fock_input: bool = False
    qubit_state: str | Sequence = "plus"
    duration_periods: float = 500.0
    warmup_periods: float = 300.0
    dt: float = DEFAULT_DT
    stride: int = 10
    seed: int = 0
    method: str = "auto"
    auto_truncation: bool = True

    def __post_init__(self):
        if self.duration_periods < self.warmup_periods:
            raise ValueError("duration must be >= warmup")
        if self.photons < 0:
            raise ValueError("photon number must be >= 0")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")
        limit = TWO_PI / (50.0 * self.params.max_frequency())
        if self.dt <= 0 or self.dt > limit * (1 + 1e-12):
            raise ValueError(f"dt={self.dt:.4g} exceeds 1/50 of the fastest period ({limit:.4g})")

    @property
    def n_steps(self) -> int:
        return int(round(self.duration_periods * TWO_PI / self.dt))

    def resolved_params(self) -> ModelParams:
        """Parameters with the input-mode truncation raised, if needed, to hold
        the initial coherent state."""
        p = self.params
        if self.auto_truncation and not self.fock_input and self.photons > 0:
            need = required_levels(math.sqrt(self.photons))
            if need > p.m_a:
                p = p.with_(m_a=need)
        elif self.fock_input and self.photons + 2 > p.m_a:
            p = p.with_(m_a=int(self.photons) + 2)
        return p

    def to_dict(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k != "params"}
        d["qubit_state"] = d["qubit_state"] if isinstance(d["qubit_state"], str) else list(d["qubit_state"])
        d["params"] = self.resolved_params().to_dict()
        return d


_QUBIT_STATES = {
    "plus": np.array([1, 1]) / math.sqrt(2),
    "minus": np.array([1, -1]) / math.sqrt(2),
    "ground": np.array([1, 0]),
    "excited": np.array([0, 1]),
}


def _qubit_vector(spec) -> np.ndarray:
    if isinstance(spec, str):
        try:
            return _QUBIT_STATES[spec].astype(complex)
        except KeyError:
            raise ValueError(f"unknown qubit state {spec!r}; choose from {sorted(_QUBIT_STATES)}") from None
    v = np.asarray(spec, dtype=complex)
    if v.shape != (2,):
        raise ValueError("explicit qubit state must have two amplitudes")
    return v / np.linalg.norm(v)


def initial_state(config: RunConfig, params: ModelParams | None = None) -> np.ndarray:
    """Qubits (same state each, or one spec per qubit), input mode in a
    coherent (or Fock) state, readout in vacuum."""
    p = params or config.resolved_params()
    lay = full_layout(p)
    qs = config.qubit_state
    if isinstance(qs, str) or (len(qs) == 2 and not isinstance(qs[0], (str, list, tuple))):
        qubits = [_qubit_vector(qs)] * p.n_qubits
    else:
        if len(qs) != p.n_qubits:
            raise ValueError("need one qubit-state spec per qubit")
        qubits = [_qubit_vector(q) for q in qs]
    if config.fock_input:
        n = int(round(config.photons))
        mode_a = np.zeros(p.m_a, dtype=complex)
        mode_a[n] = 1.0
    else:
        mode_a = coherent_amplitudes(math.sqrt(config.photons), p.m_a)
        mode_a /= np.linalg.norm(mode_a)
    mode_b = np.zeros(p.m_b, dtype=complex)
    mode_b[0] = 1.0
    return lay.product_state(qubits + [mode_a, mode_b])


OBSERVABLES = ("x_b", "p_b", "n_a", "n_b", "S_z")


@dataclass
class TrajectoryRecord:
    seed: int
    dt: float
    times: np.ndarray
    observables: dict
    in_window: np.ndarray
    norm_drift: np.ndarray
    step_norm_error: float
    leakage_a: float
    leakage_b: float
    flagged: bool = False

    def series_names(self) -> list[str]:
        return list(self.observables)

    def window(self, name: str) -> np.ndarray:
        return self.observables[name][self.in_window]

    @property
    def sample_dt(self) -> float:
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else self.dt


class _Observer:
    """Cheap per-sample observables for a block of states."""

    def __init__(self, params: ModelParams, layout: HilbertLayout):
        self.layout = layout
        self.n_qubits = params.n_qubits
        self.omega_b = params.omega_b
        self.b = sp.csr_matrix(embed(annihilation(params.m_b), "B", layout))

    def __call__(self, psi) -> dict:
        dims = self.layout.dims
        k = psi.shape[1]
        prob = (psi.real ** 2 + psi.imag ** 2).reshape(dims + (k,))
        out = {}
        sz_total = 0.0
        nq = self.n_qubits
        for j in range(nq):
            axes = tuple(i for i in range(len(dims)) if i != j)
            marg = prob.sum(axis=axes)
            sz = marg[0] - marg[1]
            out[f"sz_{j}"] = sz
            sz_total = sz_total + sz
        out["S_z"] = sz_total
        for label, ix in (("a", nq), ("b", nq + 1)):
            axes = tuple(i for i in range(len(dims)) if i != ix)
            marg = prob.sum(axis=axes)
            out[f"n_{label}"] = np.arange(dims[ix]) @ marg
            out[f"top_{label}"] = marg[-1]
        bexp = np.sum(psi.conj() * (self.b @ psi), axis=0)
        out["x_b"] = math.sqrt(1.0 / (2.0 * self.omega_b)) * 2.0 * bexp.real
        out["p_b"] = math.sqrt(self.omega_b / 2.0) * 2.0 * bexp.imag
        return out


class NoiseStream:
    """Per-trajectory Wiener increments drawn in fixed-size chunks."""

    def __init__(self, seed: int, n_channels: int, dt: float):
        self.rng = np.random.default_rng(seed)
        self.n = n_channels
        self.dt = dt
        self.buf = None
        self.pos = NOISE_CHUNK

    def next(self) -> np.ndarray:
        if self.pos >= NOISE_CHUNK:
            self.buf = wiener_increments(self.rng, (NOISE_CHUNK, self.n), self.dt)
            self.pos = 0
        out = self.buf[self.pos]
        self.pos += 1
        return out


def run_batch(config: RunConfig, seeds: Sequence[int]) -> list[TrajectoryRecord]:
    """Integrate one trajectory per seed, vectorized over the block."""
    params = config.resolved_params()
    layout = full_layout(params)
    ham = full_hamiltonian(params)
    stepper = QSDStepper(ham, build_lindblads(params, layout), config.dt, method=config.method)
    observe = _Observer(params, layout)
    k = len(seeds)
    psi = np.repeat(initial_state(config, params)[:, None], k, axis=1)
    streams = [NoiseStream(s, stepper.n_channels, config.dt) for s in seeds]
    n_steps = config.n_steps
    n_samples = n_steps // config.stride + 1
    names = None
    series: dict = {}
    drift = np.zeros((n_samples, k))
    step_err = np.zeros(k)
    top_a = np.zeros(k)
    top_b = np.zeros(k)
    dxi = np.empty((stepper.n_channels, k), dtype=complex)

    def record(i, psi):
        nonlocal names
        obs = observe(psi)
        if names is None:
            names = [n for n in obs if not n.startswith("top_")]
            for n in names:
                series[n] = np.zeros((n_samples, k))
        for n in names:
            series[n][i] = obs[n]
        np.maximum(top_a, obs["top_a"], out=top_a)
        np.maximum(top_b, obs["top_b"], out=top_b)
        drift[i] = np.abs(np.linalg.norm(psi, axis=0) - 1.0)

    record(0, psi)
    t = 0.0
    sample = 1
    for n in range(1, n_steps + 1):
        for c, stream in enumerate(streams):
            dxi[:, c] = stream.next()
        psi, norm = stepper.step(psi, t, dxi)
        np.maximum(step_err, np.abs(norm - 1.0), out=step_err)
        t = n * config.dt
        if n % config.stride == 0 and sample < n_samples:
            record(sample, psi)
            sample += 1
    times = np.arange(n_samples) * config.dt * config.stride
    in_window = times >= config.warmup_periods * TWO_PI - 1e-9
    out = []
    for c, seed in enumerate(seeds):
        rec = TrajectoryRecord(
            seed=int(seed), dt=config.dt, times=times,
            observables={n: series[n][:, c].copy() for n in names},
            in_window=in_window, norm_drift=drift[:, c].copy(),
            step_norm_error=float(step_err[c]),
            leakage_a=float(top_a[c]), leakage_b=float(top_b[c]),
        )
        rec.flagged = bool(rec.leakage_a > LEAKAGE_LIMIT or rec.leakage_b > LEAKAGE_LIMIT)
        if rec.flagged:
            log.warning("trajectory seed=%d: top-level population %.2e (A) / %.2e (B) exceeds %.0e",
                        seed, rec.leakage_a, rec.leakage_b, LEAKAGE_LIMIT)
        out.append(rec)
    return out


def run_trajectory(config: RunConfig) -> TrajectoryRecord:
    return run_batch(config, [config.seed])[0]


@dataclass
class EnsembleResult:
    records: list
    mean: TrajectoryRecord
    stderr: dict

    @property
    def flagged(self) -> bool:
        return any(r.flagged for r in self.records)


def _batch_job(args):
    config, seeds = args
    return run_batch(config, seeds)


def ensemble_mean(records: Sequence[TrajectoryRecord]) -> tuple[TrajectoryRecord, dict]:
    first = records[0]
    n = len(records)
    mean_obs, stderr = {}, {}
    for name in first.observables:
        stack = np.stack([r.observables[name] for r in records])
        mean_obs[name] = stack.mean(axis=0)
        stderr[name] = stack.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros(stack.shape[1])
    mean = TrajectoryRecord(
        seed=first.seed, dt=first.dt, times=first.times, observables=mean_obs,
        in_window=first.in_window,
        norm_drift=np.max([r.norm_drift for r in records], axis=0),
        step_norm_error=max(r.step_norm_error for r in records),
        leakage_a=max(r.leakage_a for r in records),
        leakage_b=max(r.leakage_b for r in records),
        flagged=any(r.flagged for r in records),
    )
    return mean, stderr


def run_ensemble(config: RunConfig, n_traj: int, batch_size: int = 32, workers: int = 1) -> EnsembleResult:
    """Trajectories with seeds ``config.seed + i`` for ``i < n_traj``.

    Blocks of ``batch_size`` consecutive seeds form the unit of work; results
    are reassembled by index, so ``workers`` only changes wall time.
    """
    if n_traj < 1:
        raise ValueError("n_traj must be >= 1")
    from .parallel import parallel_map

    seeds = [config.seed + i for i in range(n_traj)]
    blocks = [seeds[i:i + batch_size] for i in range(0, n_traj, batch_size)]
    results = parallel_map(_batch_job, [(config, b) for b in blocks], workers=workers)
    records = [r for block in results for r in block]
    mean, stderr = ensemble_mean(records)
    return EnsembleResult(records, mean, stderr)


def with_params(config: RunConfig, **changes) -> RunConfig:
    return replace(config, params=config.params.with_(**changes))
