"""Dense operator kernel for small composite Hilbert spaces.

Operators and states are plain complex numpy arrays. A :class:`HilbertLayout`
carries the ordered subsystem dimensions (qubits first, then the input mode
``"A"``, then the readout mode ``"B"``) and does the tensor index arithmetic.

Qubit basis convention: ``|0>`` is the sigma^z = +1 eigenstate and ``|1>`` the
sigma^z = -1 eigenstate.  With the qubit Hamiltonian ``-eps/2 sigma^z`` the
state ``|0>`` is the ground state, so the lowering operator ``sigma_-`` maps
``|1> -> |0>``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import Sequence

import numpy as np

__all__ = [
    "HilbertLayout",
    "annihilation",
    "number",
    "pauli",
    "embed",
    "expectation",
    "normalize",
    "basis_state",
    "commutator",
    "is_hermitian",
]


@dataclass(frozen=True)
class HilbertLayout:
    """Ordered tensor-product layout.

    ``labels`` are qubit indices (ints, 0-based) followed by optional mode
    tags ``"A"`` and ``"B"``.
    """

    dims: tuple[int, ...]
    labels: tuple

    def __post_init__(self):
        if len(self.dims) != len(self.labels):
            raise ValueError("dims and labels must have equal length")
        if any(int(d) < 2 for d in self.dims):
            raise ValueError(f"every subsystem dimension must be >= 2, got {self.dims}")
        seen_mode = False
        for lab in self.labels:
            if isinstance(lab, str):
                seen_mode = True
            elif seen_mode:
                raise ValueError("qubits must precede modes in the layout")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("duplicate subsystem labels")

    @classmethod
    def build(cls, n_qubits: int, m_a: int | None = None, m_b: int | None = None) -> "HilbertLayout":
        dims = [2] * n_qubits
        labels: list = list(range(n_qubits))
        if m_a is not None:
            dims.append(m_a)
            labels.append("A")
        if m_b is not None:
            dims.append(m_b)
            labels.append("B")
        return cls(tuple(int(d) for d in dims), tuple(labels))

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims))

    @property
    def n_qubits(self) -> int:
        return sum(1 for lab in self.labels if not isinstance(lab, str))

    def index(self, label) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise ValueError(f"unknown subsystem {label!r}; layout has {self.labels}") from None

    def identity(self) -> np.ndarray:
        return np.eye(self.dim, dtype=complex)

    def product_state(self, factors: Sequence[np.ndarray]) -> np.ndarray:
        """Kronecker product of per-subsystem vectors, in layout order."""
        if len(factors) != len(self.dims):
            raise ValueError("need one factor per subsystem")
        for f, d in zip(factors, self.dims):
            if np.shape(f) != (d,):
                raise ValueError(f"factor of shape {np.shape(f)} does not match dimension {d}")
        return reduce(np.kron, [np.asarray(f, dtype=complex) for f in factors])


def annihilation(levels: int) -> np.ndarray:
    """Truncated ladder operator with ``<n-1|a|n> = sqrt(n)``."""
    if int(levels) != levels or levels < 2:
        raise ValueError(f"levels must be an integer >= 2, got {levels}")
    return np.diag(np.sqrt(np.arange(1, levels, dtype=float)), 1).astype(complex)


def number(levels: int) -> np.ndarray:
    return np.diag(np.arange(levels, dtype=float)).astype(complex)


_PAULI = {
    "i": np.eye(2, dtype=complex),
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
    # sigma_- lowers the energy of -eps/2 sigma^z: |1> -> |0>
    "-": np.array([[0, 1], [0, 0]], dtype=complex),
    "+": np.array([[0, 0], [1, 0]], dtype=complex),
}
_PAULI_ALIASES = {"0": "i", "id": "i", "minus": "-", "plus": "+", "lower": "-", "raise": "+"}


def pauli(axis: str) -> np.ndarray:
    """Return a fresh 2x2 Pauli (or ladder) matrix.

    ``axis`` is one of ``i, x, y, z, +, -`` (``"lower"``/``"raise"`` also
    accepted).  ``sigma_-`` maps the excited state ``|1>`` to ``|0>``.
    """
    key = _PAULI_ALIASES.get(str(axis).lower(), str(axis).lower())
    if key not in _PAULI:
        raise ValueError(f"unknown Pauli axis {axis!r}")
    return _PAULI[key].copy()


def embed(op: np.ndarray, label, layout: HilbertLayout) -> np.ndarray:
    """Lift a single-subsystem operator to the full layout (identity elsewhere)."""
    k = layout.index(label)
    op = np.asarray(op, dtype=complex)
    d = layout.dims[k]
    if op.shape != (d, d):
        raise ValueError(f"operator shape {op.shape} does not match subsystem dimension {d}")
    left = int(np.prod(layout.dims[:k]))
    right = int(np.prod(layout.dims[k + 1:]))
    return np.kron(np.kron(np.eye(left), op), np.eye(right))


def expectation(state: np.ndarray, op: np.ndarray) -> complex:
    """``<psi|O|psi>`` for a state vector, or ``Tr(rho O)`` for a density matrix."""
    state = np.asarray(state)
    op = np.asarray(op)
    if op.ndim != 2 or op.shape[0] != op.shape[1]:
        raise ValueError("operator must be square")
    if state.ndim == 1:
        if state.shape[0] != op.shape[0]:
            raise ValueError(f"state dimension {state.shape[0]} != operator dimension {op.shape[0]}")
        return complex(np.vdot(state, op @ state))
    if state.shape != op.shape:
        raise ValueError(f"density matrix shape {state.shape} != operator shape {op.shape}")
    return complex(np.trace(state @ op))


def normalize(state: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(state)
    if norm == 0:
        raise ValueError("cannot normalize the zero vector")
    return state / norm


def basis_state(dim: int, n: int) -> np.ndarray:
    v = np.zeros(dim, dtype=complex)
    v[n] = 1.0
    return v


def commutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b - b @ a


def is_hermitian(op: np.ndarray, tol: float = 1e-12) -> bool:
    return bool(np.max(np.abs(op - op.conj().T), initial=0.0) < tol)
