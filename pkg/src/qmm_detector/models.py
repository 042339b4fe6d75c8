"""Hamiltonians and dissipators of the photon-detector model.

Units: hbar = 1 and the reference qubit splitting eps = 1, so every frequency
and rate is a dimensionless ratio to eps.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, fields, replace
from typing import Callable, NamedTuple, Sequence, Union

import numpy as np

from .operators import HilbertLayout, annihilation, embed, number, pauli

Envelope = Union[None, float, Callable[[float], float]]

_PER_QUBIT = ("eps", "delta", "g_a", "g_b")


class DispersiveWarning(UserWarning):
    """Detuning is not large compared with the coupling."""


def _per_qubit(value, n: int, name: str) -> tuple[float, ...]:
    if np.ndim(value) == 0:
        return (float(value),) * n
    value = tuple(float(v) for v in value)
    if len(value) != n:
        raise ValueError(f"{name} has {len(value)} entries, expected n_qubits={n}")
    return value


def envelope_value(env: Envelope, t: float) -> float:
    if env is None:
        return 0.0
    if callable(env):
        return float(env(t))
    return float(env)


@dataclass(frozen=True)
class ModelParams:
    """Every physical constant of the detector and scaling models.

    Per-qubit fields (``eps``, ``delta``, ``g_a``, ``g_b``) accept a scalar,
    which is broadcast, or one value per qubit.  ``gamma_b`` defaults to
    ``1e-3 * omega_b``.
    """

    n_qubits: int = 2
    eps: float | Sequence[float] = 1.0
    delta: float | Sequence[float] = 0.0
    omega_a: float = 0.5
    omega_b: float = 0.5
    g_a: float | Sequence[float] = 0.01
    g_b: float | Sequence[float] = 0.01
    gamma_z: float = 1e-3
    gamma_xy: float = 1e-3
    gamma_b: float | None = None
    g_qq: float = 0.0
    noise_D: float = 0.0
    drive_amp: float = 0.05
    drive_freq: float = 0.8
    m_a: int = 8
    m_b: int = 6
    f_envelope: Envelope = None
    h_envelope: Envelope = None
    chain_boundary: str = "open"
    dissipator_basis: str = "energy"

    def __post_init__(self):
        n = int(self.n_qubits)
        if n < 1:
            raise ValueError("n_qubits must be >= 1")
        object.__setattr__(self, "n_qubits", n)
        for name in _PER_QUBIT:
            object.__setattr__(self, name, _per_qubit(getattr(self, name), n, name))
        if self.gamma_b is None:
            object.__setattr__(self, "gamma_b", 1e-3 * self.omega_b)
        for name in ("omega_a", "omega_b", "gamma_z", "gamma_xy", "gamma_b", "noise_D", "drive_freq"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if int(self.m_a) < 2 or int(self.m_b) < 2:
            raise ValueError("truncation levels must be >= 2")
        if self.chain_boundary not in ("open", "periodic"):
            raise ValueError("chain_boundary must be 'open' or 'periodic'")
        if self.dissipator_basis not in ("energy", "computational"):
            raise ValueError("dissipator_basis must be 'energy' or 'computational'")

    def with_(self, **changes) -> "ModelParams":
        return replace(self, **changes)

    def qubit_splitting(self, j: int) -> float:
        return math.hypot(self.delta[j], self.eps[j])

    def max_frequency(self, with_modes: bool = True) -> float:
        freqs = [self.qubit_splitting(j) for j in range(self.n_qubits)]
        if with_modes:
            freqs += [self.omega_a, self.omega_b]
        freqs.append(self.drive_freq)
        return max(freqs)

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = list(v)
            elif callable(v):
                v = repr(v)
            out[f.name] = v
        return out


def full_layout(params: ModelParams) -> HilbertLayout:
    return HilbertLayout.build(params.n_qubits, params.m_a, params.m_b)


def qubit_layout(params: ModelParams) -> HilbertLayout:
    return HilbertLayout.build(params.n_qubits)


@dataclass(frozen=True)
class Hamiltonian:
    """``H(t) = static + sum_k coeff_k(t) * op_k``."""

    static: np.ndarray
    terms: tuple = field(default=())

    @property
    def is_static(self) -> bool:
        return not self.terms

    def __call__(self, t: float) -> np.ndarray:
        if not self.terms:
            return self.static
        h = self.static.copy()
        for op, coeff in self.terms:
            c = coeff(t)
            if c:
                h = h + c * op
        return h


def full_hamiltonian(params: ModelParams) -> Hamiltonian:
    """Input mode A, qubits, readout mode B and their sigma^x couplings."""
    lay = full_layout(params)
    a = embed(annihilation(params.m_a), "A", lay)
    b = embed(annihilation(params.m_b), "B", lay)
    xa = a + a.conj().T
    xb = b + b.conj().T
    eye = lay.identity()
    h = params.omega_a * (embed(number(params.m_a), "A", lay) + 0.5 * eye)
    h = h + params.omega_b * (embed(number(params.m_b), "B", lay) + 0.5 * eye)
    for j in range(params.n_qubits):
        sx = embed(pauli("x"), j, lay)
        h = h - 0.5 * (params.delta[j] * sx + params.eps[j] * embed(pauli("z"), j, lay))
        h = h + params.g_a[j] * (xa @ sx) + params.g_b[j] * (xb @ sx)
    terms = []
    for env, x in ((params.f_envelope, xa), (params.h_envelope, xb)):
        if env is None or (not callable(env) and float(env) == 0.0):
            continue
        terms.append((x, (lambda t, env=env: envelope_value(env, t))))
    return Hamiltonian(h, tuple(terms))


def build_full_hamiltonian(params: ModelParams, t: float = 0.0) -> np.ndarray:
    return full_hamiltonian(params)(t)


class Lindblad(NamedTuple):
    label: str
    op: np.ndarray
    rate: float


LindbladSet = list  # list[Lindblad]


def qubit_ladder(params: ModelParams, j: int) -> tuple[np.ndarray, np.ndarray]:
    """(lowering, excited-state projector) of qubit j as 2x2 matrices.

    In the ``"energy"`` basis they refer to the eigenstates of the qubit's own
    static Hamiltonian ``-(delta sigma^x + eps sigma^z)/2``; for ``delta = 0``
    and ``eps > 0`` these are exactly ``sigma_-`` and ``sigma_+ sigma_-``.
    """
    lower, proj = pauli("-"), pauli("+") @ pauli("-")
    d, e = params.delta[j], params.eps[j]
    if params.dissipator_basis == "computational" or (d == 0.0 and e >= 0.0):
        return lower, proj
    _, vecs = np.linalg.eigh(-0.5 * (d * pauli("x") + e * pauli("z")))
    vecs = vecs.astype(complex)
    for k in range(2):
        pivot = vecs[np.argmax(np.abs(vecs[:, k])), k]
        vecs[:, k] *= abs(pivot) / pivot
    g, x = vecs[:, 0], vecs[:, 1]
    return np.outer(g, x.conj()), np.outer(x, x.conj())


def build_lindblads(params: ModelParams, layout: HilbertLayout | None = None) -> LindbladSet:
    """Relaxation ``sqrt(2 gamma_z) sigma_-`` and dephasing
    ``sqrt(2 gamma_xy) sigma_+ sigma_-`` per qubit, then ``sqrt(2 gamma_b) b``
    when the layout contains the readout mode."""
    lay = layout or full_layout(params)
    out: LindbladSet = []
    for j in range(params.n_qubits):
        lower, proj = qubit_ladder(params, j)
        out.append(Lindblad(f"z{j}", math.sqrt(2 * params.gamma_z) * embed(lower, j, lay), params.gamma_z))
        out.append(Lindblad(f"xy{j}", math.sqrt(2 * params.gamma_xy) * embed(proj, j, lay), params.gamma_xy))
    if "B" in lay.labels:
        b = embed(annihilation(lay.dims[lay.index("B")]), "B", lay)
        out.append(Lindblad("b", math.sqrt(2 * params.gamma_b) * b, params.gamma_b))
    return out


def chain_parts(params: ModelParams) -> tuple[np.ndarray, list[np.ndarray]]:
    """Static part of the driven chain and the per-qubit ``-sigma^z_j / 2``
    operators multiplying ``eps_j(t)``."""
    lay = qubit_layout(params)
    n = params.n_qubits
    sz = [embed(pauli("z"), j, lay) for j in range(n)]
    h = np.zeros((lay.dim, lay.dim), dtype=complex)
    for j in range(n):
        h -= 0.5 * (params.delta[j] * embed(pauli("x"), j, lay) + params.eps[j] * sz[j])
    bonds = [(j, j + 1) for j in range(n - 1)]
    if params.chain_boundary == "periodic" and n > 2:
        bonds.append((n - 1, 0))
    for j, k in bonds:
        h += params.g_qq * (sz[j] @ sz[k])
    return h, [-0.5 * s for s in sz]


def drive_signal(params: ModelParams, t):
    """Common off-resonant drive ``drive_amp * sin(drive_freq * t)``."""
    return params.drive_amp * np.sin(params.drive_freq * np.asarray(t, dtype=float))


def build_chain_hamiltonian(params: ModelParams, t: float, noise_samples: Sequence[float]) -> np.ndarray:
    """Noisy driven chain; ``noise_samples[j]`` is the realized
    ``sqrt(2 D) xi_j(t)`` for this step.  Static biases ``params.eps`` add to
    the drive (set ``eps = 0`` for the bias-free chain)."""
    noise = np.asarray(noise_samples, dtype=float)
    if noise.shape != (params.n_qubits,):
        raise ValueError(f"need {params.n_qubits} noise samples, got shape {noise.shape}")
    h, zs = chain_parts(params)
    drive = float(drive_signal(params, t))
    for j, z in enumerate(zs):
        h = h + (drive + noise[j]) * z
    return h


def white_noise(rng: np.random.Generator, shape, dt: float, D: float) -> np.ndarray:
    """Samples of ``sqrt(2D) xi(t)`` on a grid of step ``dt``.

    Each sample is Gaussian with variance ``2 D / dt`` so the time integral
    over one step has variance ``2 D dt``.
    """
    return rng.standard_normal(shape) * math.sqrt(2.0 * D / dt)


def _detuning(params: ModelParams, j: int) -> float:
    d = abs(params.omega_a - params.qubit_splitting(j))
    if d == 0.0:
        raise ZeroDivisionError(
            f"qubit {j} is resonant with mode A; the dispersive reduction is invalid")
    g = params.g_a[j]
    if g and d / abs(g) < 10:
        warnings.warn(f"qubit {j}: detuning/coupling = {d / abs(g):.3g} < 10", DispersiveWarning, stacklevel=3)
    return d


def dispersive_shift(params: ModelParams, j: int) -> float:
    """Photon-number dependent frequency shift ``g_a^2 / |omega_a - splitting|``."""
    return params.g_a[j] ** 2 / _detuning(params, j)


def effective_qubit_coupling(params: ModelParams, j: int = 0) -> float:
    """Vacuum-mediated sigma^x sigma^x coupling ``g_a^2 / (2 detuning)``."""
    return params.g_a[j] ** 2 / (2.0 * _detuning(params, j))
