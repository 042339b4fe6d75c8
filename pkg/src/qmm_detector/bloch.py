"""Classical-spin dynamics of N dispersively driven qubits.

Each qubit is a Bloch vector ``(s_x, s_y, s_z)`` precessing about ``z`` at
rate ``2 [gamma |alpha(t)|^2 + eta_j(t)]`` and about ``x`` at ``Delta_eff``.
``Delta_eff`` is either fixed or the mean-field value ``kappa * sum_k s^x_k``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np
from scipy import integrate

DriveLike = Union[Callable[[float], float], tuple]


def coherent_photon_number(envelope: DriveLike, t: float) -> float:
    """``[int_0^t f_e]^2`` for a callable envelope or sampled ``(times, values)``."""
    if callable(envelope):
        if t == 0:
            return 0.0
        area, _ = integrate.quad(envelope, 0.0, t, limit=200, epsabs=1e-13, epsrel=1e-12)
    else:
        times, values = (np.asarray(x, dtype=float) for x in envelope)
        keep = times <= t
        ts, vs = times[keep], values[keep]
        if ts.size and ts[-1] < t:
            ts = np.r_[ts, t]
            vs = np.r_[vs, np.interp(t, times, values)]
        area = integrate.trapezoid(vs, ts) if ts.size > 1 else 0.0
    return float(area) ** 2


def bloch_rhs(s: np.ndarray, gammas, alpha_sq: float, noise, delta_eff: float) -> np.ndarray:
    """Time derivative of ``s`` (shape ``(N, 3)``)."""
    s = np.asarray(s, dtype=float)
    w = 2.0 * (np.asarray(gammas) * alpha_sq + np.asarray(noise))
    out = np.empty_like(s)
    out[:, 0] = w * s[:, 1]
    out[:, 1] = -w * s[:, 0] - delta_eff * s[:, 2]
    out[:, 2] = delta_eff * s[:, 1]
    return out


def integrate_bloch(s0, gammas, alpha_sq: Callable[[float], float], eta: np.ndarray, dt: float,
                    delta_eff: float | None = None, kappa: float | None = None) -> np.ndarray:
    """RK4 over ``len(eta)`` steps; ``eta[n]`` (one value per qubit) is held
    constant during step ``n``.  Returns the trajectory ``(steps + 1, N, 3)``.

    Pass ``delta_eff`` for a fixed transverse field, or ``kappa`` to refresh
    ``Delta_eff = kappa * sum_k s^x_k`` at every stage.
    """
    if (delta_eff is None) == (kappa is None):
        raise ValueError("give exactly one of delta_eff or kappa")
    s = np.array(s0, dtype=float)
    eta = np.asarray(eta, dtype=float).reshape(len(eta), s.shape[0])
    traj = np.empty((len(eta) + 1,) + s.shape)
    traj[0] = s

    def f(y, t, e):
        d = delta_eff if kappa is None else kappa * y[:, 0].sum()
        return bloch_rhs(y, gammas, alpha_sq(t), e, d)

    for n, e in enumerate(eta):
        t = n * dt
        k1 = f(s, t, e)
        k2 = f(s + 0.5 * dt * k1, t + 0.5 * dt, e)
        k3 = f(s + 0.5 * dt * k2, t + 0.5 * dt, e)
        k4 = f(s + dt * k3, t + dt, e)
        s = s + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        traj[n + 1] = s
    return traj


def _double_integral_smooth(fn: Callable[[float], float], times: np.ndarray, sub: int = 8) -> np.ndarray:
    """``int_0^t int_0^t' fn`` on the grid, via Simpson on a refined grid."""
    times = np.asarray(times, dtype=float)
    n = len(times) - 1
    if n < 1:
        return np.zeros_like(times)
    fine = np.linspace(times[0], times[-1], n * sub + 1)
    vals = np.array([fn(t) for t in fine])
    inner = np.r_[0.0, integrate.cumulative_simpson(vals, x=fine)]
    outer = np.r_[0.0, integrate.cumulative_simpson(inner, x=fine)]
    return outer[::sub]


def _double_integral_steps(eta: np.ndarray, dt: float) -> np.ndarray:
    """Exact double integral of a piecewise-constant rate (value ``eta[n]`` on
    step ``n``), sampled at the step boundaries.  ``eta`` is ``(steps, ...)``."""
    eta = np.asarray(eta, dtype=float)
    first = np.cumsum(eta, axis=0) * dt
    prev = np.concatenate([np.zeros((1,) + eta.shape[1:]), first[:-1]], axis=0)
    second = np.cumsum(prev * dt + 0.5 * eta * dt * dt, axis=0)
    return np.concatenate([np.zeros((1,) + eta.shape[1:]), second], axis=0)


def perturbative_sz(gamma: float, alpha_sq: Callable[[float], float], eta, delta_eff: float,
                    t, s_x0: float = 1.0, dt: float | None = None) -> np.ndarray:
    """First-order ``s^z`` of one qubit,
    ``-2 Delta_eff s_x(0) int_0^t int_0^t' [gamma |alpha|^2 + eta]``.

    ``t`` is a uniform grid starting at 0 with step ``dt``; ``eta`` is
    ``None`` or one piecewise-constant value per step.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    dt = float(t[1] - t[0]) if dt is None else dt
    total = gamma * _double_integral_smooth(alpha_sq, t) if gamma else np.zeros_like(t)
    if eta is not None:
        total = total + _double_integral_steps(np.asarray(eta)[: len(t) - 1], dt)
    return -2.0 * delta_eff * s_x0 * total


@dataclass
class CollectiveSz:
    """``S^z`` and its two bracketed parts.

    ``coherent_term`` is ``gamma * intint |alpha|^2`` (per qubit) and
    ``noise_term`` is ``(1/N) sum_j intint eta_j``; ``prefactor`` is
    ``-2 Delta_eff s_x(0) N``, so ``sz = prefactor * (coherent + noise)``.
    """

    sz: np.ndarray
    coherent_term: np.ndarray
    noise_term: np.ndarray
    prefactor: float
    n_qubits: int


def collective_sz(gamma: float, alpha_sq: Callable[[float], float], eta: np.ndarray, delta_eff: float,
                  t, s_x0: float = 1.0, dt: float | None = None) -> CollectiveSz:
    """Sum of first-order ``s^z_j`` for identical, identically coupled qubits.

    ``eta`` has shape ``(steps, N)``; the per-qubit noise enters the integrand
    alongside ``gamma |alpha|^2`` exactly as in the single-qubit solution.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    dt = float(t[1] - t[0]) if dt is None else dt
    eta = np.asarray(eta, dtype=float)
    n = eta.shape[1]
    coherent = gamma * _double_integral_smooth(alpha_sq, t) if gamma else np.zeros_like(t)
    noise = _double_integral_steps(eta[: len(t) - 1], dt).mean(axis=1)
    pref = -2.0 * delta_eff * s_x0 * n
    return CollectiveSz(pref * (coherent + noise), coherent, noise, pref, n)


def mean_field_kappa(g_a: float, detuning: float) -> float:
    """``g_a^2 / (2 detuning)``, the vacuum-mediated coupling constant."""
    return g_a ** 2 / (2.0 * detuning)
