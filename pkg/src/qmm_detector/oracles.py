"""Closed-form reference solutions used to check the numerical engines."""
from __future__ import annotations

import math

import numpy as np
import scipy.linalg
from scipy.special import gammaln

from .operators import HilbertLayout, annihilation, embed, pauli

__all__ = [
    "coherent_amplitudes",
    "required_levels",
    "displacement_operator",
    "displacement_apply",
    "rabi_layout",
    "vacuum_rabi_state",
    "rwa_hamiltonian",
    "bell_readout_times",
]


def coherent_amplitudes(alpha: complex, levels: int) -> np.ndarray:
    """``exp(-|alpha|^2/2) alpha^n / sqrt(n!)`` for ``n < levels`` (not renormalized)."""
    n = np.arange(levels)
    alpha = complex(alpha)
    if alpha == 0:
        out = np.zeros(levels, dtype=complex)
        out[0] = 1.0
        return out
    logmag = -0.5 * abs(alpha) ** 2 + n * math.log(abs(alpha)) - 0.5 * gammaln(n + 1)
    return np.exp(logmag) * np.exp(1j * n * np.angle(alpha))


def required_levels(alpha: complex) -> int:
    """Smallest truncation with ``M >= |alpha|^2 + 6 sqrt(|alpha|^2 + 1)``."""
    n = abs(alpha) ** 2
    return max(2, math.ceil(n + 6.0 * math.sqrt(n + 1.0)))


def displacement_operator(alpha: complex, levels: int) -> np.ndarray:
    """``expm(alpha a^dag - conj(alpha) a)`` on the truncated space."""
    a = annihilation(levels)
    return scipy.linalg.expm(alpha * a.conj().T - np.conj(alpha) * a)


def displacement_apply(alpha: complex, state: np.ndarray, pad: int = 40, tail_tol: float = 1e-3) -> np.ndarray:
    """Apply ``D(alpha)`` to a single-mode state of ``M`` levels.

    The exponential is taken on ``M + pad`` levels so the truncation wall does
    not reflect amplitude back into the kept levels: the kept amplitudes are
    exact, and the result is not renormalized.  The discarded tail (about
    1e-7 in probability at the minimal truncation) must stay below
    ``tail_tol`` in norm.
    """
    state = np.asarray(state, dtype=complex)
    m = state.shape[0]
    occupied = np.nonzero(np.abs(state) > 1e-9)[0]
    top = int(occupied.max()) if occupied.size else 0
    if m < required_levels(alpha) + top:
        raise ValueError(
            f"truncation {m} too small for |alpha|^2={abs(alpha) ** 2:.3g}; need >= {required_levels(alpha) + top}")
    big = np.zeros(m + pad, dtype=complex)
    big[:m] = state
    out = displacement_operator(alpha, m + pad) @ big
    tail = np.linalg.norm(out[m:])
    if tail > tail_tol:
        raise ValueError(f"displaced state leaks {tail:.2e} beyond {m} levels")
    return out[:m]


def rabi_layout(photon_levels: int = 2) -> HilbertLayout:
    return HilbertLayout.build(2, photon_levels)


def vacuum_rabi_state(g_a: float, t: float, photon_levels: int = 2) -> np.ndarray:
    """Two identical qubits resonantly exchanging one photon with mode A.

    ``cos(sqrt2 g t)|g g>|1> - i sin(sqrt2 g t) (|g e> + |e g>)/sqrt2 |0>``
    on the layout (qubit 1, qubit 2, A) with ``g = |0>`` the qubit ground state.
    The ``-i`` follows from ``exp(-i H t)`` with coupling ``+g``.
    """
    lay = rabi_layout(photon_levels)
    ground, excited = np.array([1, 0], complex), np.array([0, 1], complex)
    one = np.zeros(photon_levels, complex)
    one[1] = 1
    vac = np.zeros(photon_levels, complex)
    vac[0] = 1
    w = math.sqrt(2.0) * g_a * t
    photon = lay.product_state([ground, ground, one])
    bell = (lay.product_state([ground, excited, vac]) + lay.product_state([excited, ground, vac])) / math.sqrt(2.0)
    return math.cos(w) * photon - 1j * math.sin(w) * bell


def rwa_hamiltonian(g_a: float, omega: float = 1.0, photon_levels: int = 2) -> np.ndarray:
    """Resonant rotating-wave model ``omega a^dag a + omega sum|e><e| +
    g sum (a sigma_+ + a^dag sigma_-)``; test scaffolding for the Rabi oracle."""
    lay = rabi_layout(photon_levels)
    a = embed(annihilation(photon_levels), "A", lay)
    h = omega * (a.conj().T @ a)
    for j in range(2):
        up, down = embed(pauli("+"), j, lay), embed(pauli("-"), j, lay)
        h = h + omega * (up @ down) + g_a * (a @ up + a.conj().T @ down)
    return h


def bell_readout_times(g_a: float, n: int | np.ndarray = 0):
    """Times ``(pi/2 + pi n) / (sqrt2 g_a)`` when the photon branch vanishes."""
    if g_a == 0:
        raise ValueError("g_a must be nonzero")
    return (0.5 * math.pi + math.pi * np.asarray(n)) / (math.sqrt(2.0) * abs(g_a))
