import math
import warnings

import numpy as np
import pytest

from qmm_detector.models import (DispersiveWarning, ModelParams, build_chain_hamiltonian, build_full_hamiltonian,
                                 build_lindblads, chain_parts, dispersive_shift, drive_signal,
                                 effective_qubit_coupling, full_hamiltonian, full_layout, qubit_layout,
                                 white_noise)
from qmm_detector.operators import basis_state, is_hermitian, pauli


def test_params_broadcast_and_defaults():
    p = ModelParams(n_qubits=3, eps=[1.0, 1.1, 0.9])
    assert p.eps == (1.0, 1.1, 0.9)
    assert p.g_a == (0.01,) * 3
    assert p.gamma_b == pytest.approx(1e-3 * p.omega_b)
    with pytest.raises(ValueError):
        ModelParams(n_qubits=2, eps=[1, 2, 3])
    with pytest.raises(ValueError):
        ModelParams(gamma_z=-1)
    with pytest.raises(ValueError):
        ModelParams(m_a=1)


def test_full_hamiltonian_shape_and_hermiticity():
    p = ModelParams(m_a=8, m_b=6)
    h = build_full_hamiltonian(p)
    assert h.shape == (192, 192)
    assert is_hermitian(h)
    assert full_hamiltonian(p).is_static


def test_uncoupled_spectrum_is_sum_of_parts():
    p = ModelParams(n_qubits=2, g_a=0, g_b=0, m_a=3, m_b=3, delta=0)
    ev = np.linalg.eigvalsh(build_full_hamiltonian(p))
    qubit = [-1.0, 0.0, 0.0, 1.0]  # -(s1 + s2)/2
    modes = [0.5 * (i + j) + 0.5 for i in range(3) for j in range(3)]
    expect = np.sort([q + m for q in qubit for m in modes])
    assert np.allclose(ev, expect)


def test_ground_state_overlap_matches_perturbative_admixture():
    p = ModelParams(m_a=4, m_b=4)
    lay = full_layout(p)
    _, vecs = np.linalg.eigh(build_full_hamiltonian(p))
    g = basis_state(2, 0)
    bare = lay.product_state([g, g, basis_state(4, 0), basis_state(4, 0)])
    admix = 1 - abs(np.vdot(bare, vecs[:, 0])) ** 2
    # each qubit/mode pair mixes in |e, 1> with weight g^2 / (eps + omega)^2
    estimate = 2 * (0.01 ** 2 / 1.5 ** 2) * 2
    assert admix == pytest.approx(estimate, rel=0.02)


def test_envelopes_make_hamiltonian_time_dependent():
    p = ModelParams(m_a=3, m_b=3, f_envelope=lambda t: 0.1 * math.cos(t))
    h = full_hamiltonian(p)
    assert not h.is_static
    assert not np.allclose(h(0.0), h(1.0))
    assert np.allclose(h(math.pi / 2), h.static)


def test_lindblads_labels_and_rates():
    p = ModelParams(gamma_z=2e-3, gamma_xy=1e-3, m_a=3, m_b=3)
    lind = build_lindblads(p)
    assert [l.label for l in lind] == ["z0", "xy0", "z1", "xy1", "b"]
    lay = full_layout(p)
    e = basis_state(2, 1)
    g = basis_state(2, 0)
    v = basis_state(3, 0)
    excited = lay.product_state([e, g, v, v])
    # rate of leaving the excited state: <L^dag L> = 2 gamma_z
    z0 = lind[0].op
    assert np.vdot(excited, z0.conj().T @ z0 @ excited).real == pytest.approx(4e-3)
    assert len(build_lindblads(p, qubit_layout(p))) == 4


def test_energy_basis_dissipator_lowers_energy():
    p = ModelParams(n_qubits=1, eps=0.0, delta=1.0, gamma_z=1e-3, g_a=0, g_b=0)
    lay = qubit_layout(p)
    h = -0.5 * pauli("x")
    ev, vecs = np.linalg.eigh(h)
    low = build_lindblads(p, lay)[0].op / math.sqrt(2e-3)
    # lowering takes the upper eigenstate to the lower one
    out = low @ vecs[:, 1]
    assert abs(np.vdot(vecs[:, 0], out)) == pytest.approx(1.0)
    assert np.allclose(low @ vecs[:, 0], 0)
    comp = build_lindblads(p.with_(dissipator_basis="computational"), lay)[0].op / math.sqrt(2e-3)
    assert np.allclose(comp, pauli("-"))


def test_chain_hamiltonian():
    p = ModelParams(n_qubits=3, eps=0.0, delta=1.0, g_qq=0.05, drive_amp=0.1, drive_freq=0.8)
    t = 1.3
    h = build_chain_hamiltonian(p, t, [0.2, 0.0, -0.1])
    h0, zs = chain_parts(p)
    d = 0.1 * math.sin(0.8 * t)
    assert np.allclose(h, h0 + (d + 0.2) * zs[0] + d * zs[1] + (d - 0.1) * zs[2])
    assert is_hermitian(h)
    with pytest.raises(ValueError):
        build_chain_hamiltonian(p, t, [0.0, 0.0])
    assert drive_signal(p, math.pi / 1.6) == pytest.approx(0.1)


def test_periodic_chain_adds_closing_bond():
    p = ModelParams(n_qubits=3, eps=0.0, delta=0.0, g_qq=1.0)
    open_h, _ = chain_parts(p)
    ring_h, _ = chain_parts(p.with_(chain_boundary="periodic"))
    # all spins up: open chain has two bonds, the ring three
    assert open_h[0, 0].real == pytest.approx(2.0)
    assert ring_h[0, 0].real == pytest.approx(3.0)


def test_white_noise_variance():
    rng = np.random.default_rng(0)
    x = white_noise(rng, 200_000, 0.01, 0.002)
    assert np.var(x) == pytest.approx(2 * 0.002 / 0.01, rel=0.02)


def test_dispersive_shift_and_warnings():
    p = ModelParams(omega_a=0.5, g_a=0.01)
    assert dispersive_shift(p, 0) == pytest.approx(1e-4 / 0.5)
    assert effective_qubit_coupling(p) == pytest.approx(1e-4)
    with pytest.raises(ZeroDivisionError):
        dispersive_shift(ModelParams(omega_a=1.0), 0)
    with pytest.warns(DispersiveWarning):
        dispersive_shift(ModelParams(omega_a=0.95, g_a=0.01), 0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        dispersive_shift(p, 1)


def test_zero_rates_give_zero_operators_and_norms():
    p = ModelParams(gamma_z=0, gamma_xy=0, gamma_b=0, m_a=3, m_b=3)
    assert all(not np.any(l.op) for l in build_lindblads(p))
    d = ModelParams(m_a=3, m_b=3)
    lz = build_lindblads(d)[0].op
    assert np.linalg.norm(lz, 2) ** 2 == pytest.approx(2e-3)


def test_chain_spectra():
    p = ModelParams(n_qubits=2, eps=0.0, delta=0.6, g_qq=0.0, drive_amp=0.0)
    ev = np.linalg.eigvalsh(build_chain_hamiltonian(p, 0.0, [0.0, 0.0]))
    assert np.allclose(ev, [-0.6, 0.0, 0.0, 0.6])
    p = ModelParams(n_qubits=2, eps=[1.0, 0.7], delta=0.0, g_qq=0.2, drive_amp=0.0)
    ev = np.linalg.eigvalsh(build_chain_hamiltonian(p, 0.0, [0.0, 0.0]))
    expect = [-(s1 * 1.0 + s2 * 0.7) / 2 + 0.2 * s1 * s2 for s1 in (1, -1) for s2 in (1, -1)]
    assert np.allclose(ev, np.sort(expect))


def test_noise_mean_and_increment_variance():
    rng = np.random.default_rng(11)
    dt, D, n = 0.01, 0.002, 100_000
    x = white_noise(rng, n, dt, D)
    sigma = math.sqrt(2 * D / dt) / math.sqrt(n)
    assert abs(x.mean()) < 3 * sigma
    assert np.var(x * dt) == pytest.approx(2 * D * dt, rel=0.02)


def test_constant_input_drive_displaces_mode():
    from qmm_detector.operators import annihilation, embed
    from qmm_detector.qsd import QSDStepper

    f0 = 0.01
    p = ModelParams(n_qubits=1, g_a=0, g_b=0, m_a=6, m_b=2, gamma_z=0, gamma_xy=0, gamma_b=0,
                    f_envelope=f0)
    lay = full_layout(p)
    h = full_hamiltonian(p)
    assert not h.is_static
    a = embed(annihilation(6), "A", lay)
    x = a + a.conj().T
    st = QSDStepper(h, [], TWO_PI_200, method="exp")
    psi = lay.product_state([basis_state(2, 0), basis_state(6, 0), basis_state(2, 0)])
    vals = []
    steps = int(round(4 * 2 * math.pi / 0.5 / TWO_PI_200))  # four oscillator periods
    for n in range(steps):
        psi, _ = st.step(psi, n * st.dt, np.zeros(0))
        vals.append(np.vdot(psi, x @ psi).real)
    # the mode oscillates about the shifted equilibrium -2 f / omega_a
    assert np.mean(vals) == pytest.approx(-2 * f0 / 0.5, rel=0.01)


TWO_PI_200 = 2 * math.pi / 200
