import math

import numpy as np
import pytest

from qmm_detector.bloch import (bloch_rhs, coherent_photon_number, collective_sz, integrate_bloch, mean_field_kappa,
                                perturbative_sz)


def test_coherent_photon_number_callable_and_sampled():
    env = lambda t: 0.1 * np.cos(0.2 * t)
    t = 7.0
    exact = (0.1 / 0.2 * math.sin(0.2 * t)) ** 2
    assert coherent_photon_number(env, t) == pytest.approx(exact, rel=1e-10)
    grid = np.linspace(0, 10, 4001)
    assert coherent_photon_number((grid, env(grid)), t) == pytest.approx(exact, rel=1e-5)
    assert coherent_photon_number(env, 0.0) == 0.0


def test_rhs_preserves_length():
    s = np.array([[0.6, 0.0, 0.8], [1.0, 0.0, 0.0]])
    d = bloch_rhs(s, [0.1, 0.2], 2.0, [0.05, -0.03], 0.3)
    assert np.allclose(np.sum(s * d, axis=1), 0)


def test_integration_conserves_norm_and_precesses():
    steps, dt = 2000, 0.01
    eta = np.zeros((steps, 1))
    traj = integrate_bloch([[1.0, 0.0, 0.0]], [0.5], lambda t: 1.0, eta, dt, delta_eff=0.0)
    t = np.arange(steps + 1) * dt
    # pure z-precession at rate 2 gamma |alpha|^2 = 1
    assert np.allclose(traj[:, 0, 0], np.cos(t), atol=1e-9)
    assert np.allclose(traj[:, 0, 1], -np.sin(t), atol=1e-9)
    assert np.allclose(np.linalg.norm(traj[:, 0], axis=1), 1.0, atol=1e-10)
    with pytest.raises(ValueError):
        integrate_bloch([[1.0, 0, 0]], [0.1], lambda t: 0.0, eta, dt)


def test_mean_field_mode_uses_total_sx():
    steps, dt = 200, 0.01
    eta = np.zeros((steps, 2))
    s0 = [[1.0, 0.0, 0.0], [1.0, 0.0, 0.0]]
    fixed = integrate_bloch(s0, [0.2, 0.2], lambda t: 1.0, eta, dt, delta_eff=0.2)
    mf = integrate_bloch(s0, [0.2, 0.2], lambda t: 1.0, eta, dt, kappa=0.1)
    # kappa * sum s_x = 0.2 initially, then shrinks
    assert np.allclose(fixed[:5], mf[:5], atol=1e-6)
    assert not np.allclose(fixed[-1], mf[-1], atol=1e-6)


def test_perturbative_smooth_part():
    # constant |alpha|^2: double integral is t^2 / 2
    t = np.linspace(0, 2, 41)
    sz = perturbative_sz(0.1, lambda s: 3.0, None, 0.05, t)
    assert np.allclose(sz, -2 * 0.05 * 0.1 * 3.0 * t ** 2 / 2, rtol=1e-10, atol=1e-15)


def test_perturbative_step_noise_exact():
    dt = 0.1
    eta = np.array([1.0, -2.0, 0.5])
    t = np.arange(4) * dt
    sz = perturbative_sz(0.0, lambda s: 0.0, eta, 1.0, t)
    # integrate the piecewise-constant rate by hand
    first = np.r_[0, np.cumsum(eta) * dt]
    second = [0.0]
    for n in range(3):
        second.append(second[-1] + first[n] * dt + 0.5 * eta[n] * dt ** 2)
    assert np.allclose(sz, -2 * np.array(second))


def test_collective_split_and_linearity():
    rng = np.random.default_rng(0)
    t = np.linspace(0, 5, 101)
    eta = rng.normal(size=(100, 8))
    res = collective_sz(0.02, lambda s: 1.5, eta, 0.1, t)
    single = sum(perturbative_sz(0.02, lambda s: 1.5, eta[:, j], 0.1, t) for j in range(8))
    assert np.allclose(res.sz, single)
    assert res.prefactor == pytest.approx(-2 * 0.1 * 8)
    assert np.allclose(res.sz, res.prefactor * (res.coherent_term + res.noise_term))


def test_mean_field_kappa():
    assert mean_field_kappa(0.01, 0.5) == pytest.approx(1e-4)


def test_resonant_drive_matches_coherent_photon_number():
    # f(t) = 2 f_e cos(omega_a t) on mode A is, in the rotating frame, a displacement by -i int f_e
    from qmm_detector.models import ModelParams, full_hamiltonian, full_layout
    from qmm_detector.operators import annihilation, basis_state, embed
    from qmm_detector.qsd import QSDStepper

    fe, wa, t_end = 0.002, 0.5, 200.0
    p = ModelParams(n_qubits=1, g_a=0, g_b=0, omega_a=wa, m_a=8, m_b=2, gamma_z=0, gamma_xy=0, gamma_b=0,
                    f_envelope=lambda t: 2 * fe * math.cos(wa * t))
    lay = full_layout(p)
    dt = 2 * math.pi / 200
    st = QSDStepper(full_hamiltonian(p), [], dt, method="exp")
    psi = lay.product_state([basis_state(2, 0), basis_state(8, 0), basis_state(2, 0)])
    steps = int(round(t_end / dt))
    for n in range(steps):
        psi, _ = st.step(psi, n * dt, np.zeros(0))
    a = embed(annihilation(8), "A", lay)
    n_a = np.vdot(psi, a.conj().T @ a @ psi).real
    assert n_a == pytest.approx(coherent_photon_number(lambda t: fe, steps * dt), rel=0.02)
    assert coherent_photon_number(lambda t: 0.0, 5.0) == 0.0
    assert coherent_photon_number(lambda t: 0.3, 2.0) == pytest.approx(0.36)
