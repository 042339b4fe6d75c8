import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from qmm_detector.operators import annihilation, basis_state, embed, expectation, number, pauli
from qmm_detector.oracles import (bell_readout_times, coherent_amplitudes, displacement_apply, displacement_operator,
                                  rabi_layout, required_levels, rwa_hamiltonian, vacuum_rabi_state)


def test_rabi_state_at_zero_is_photon_branch():
    lay = rabi_layout()
    g = basis_state(2, 0)
    expect = lay.product_state([g, g, basis_state(2, 1)])
    assert np.array_equal(vacuum_rabi_state(0.01, 0.0), expect)


def test_rabi_state_at_first_bell_time():
    ga = 0.01
    t0 = bell_readout_times(ga, 0)
    assert t0 == pytest.approx((math.pi / 2) / (0.01 * math.sqrt(2)))
    assert t0 == pytest.approx(111.0720735, rel=1e-9)
    psi = vacuum_rabi_state(ga, t0)
    lay = rabi_layout()
    n_a = embed(number(2), "A", lay)
    assert expectation(psi, n_a).real < 1e-12
    sz = sum(embed(pauli("z"), j, lay) for j in range(2))
    assert abs(expectation(psi, sz)) < 1e-12
    g, e, v = basis_state(2, 0), basis_state(2, 1), basis_state(2, 0)
    bell = (lay.product_state([g, e, v]) + lay.product_state([e, g, v])) / math.sqrt(2)
    assert abs(np.vdot(bell, psi)) ** 2 == pytest.approx(1.0, abs=1e-12)


def test_bell_times_spacing_and_errors():
    t = bell_readout_times(0.02, np.arange(5))
    assert np.allclose(np.diff(t), math.pi / (math.sqrt(2) * 0.02))
    with pytest.raises(ValueError):
        bell_readout_times(0.0, 0)


@settings(max_examples=40, deadline=None)
@given(st.floats(1e-3, 0.5), st.floats(0, 2000))
def test_rabi_state_normalized(ga, t):
    assert np.linalg.norm(vacuum_rabi_state(ga, t)) == pytest.approx(1.0, abs=1e-12)


def test_rwa_matches_oracle_over_period():
    ga = 0.01
    h = rwa_hamiltonian(ga)
    psi0 = vacuum_rabi_state(ga, 0.0)
    period = math.pi / (math.sqrt(2) * ga)
    for t in np.linspace(0, period, 7):
        psi = scipy.linalg.expm(-1j * h * t) @ psi0
        assert abs(np.vdot(vacuum_rabi_state(ga, t), psi)) ** 2 > 1 - 1e-10


def test_required_levels_rule():
    assert required_levels(0) == 6
    assert required_levels(1.0) == math.ceil(1 + 6 * math.sqrt(2))
    assert required_levels(math.sqrt(5)) == 20


def test_displacement_identity_and_vacuum():
    m = 12
    assert np.allclose(displacement_operator(0, m), np.eye(m))
    alpha = 0.7 - 0.4j
    out = displacement_apply(alpha, basis_state(m, 0))
    assert np.allclose(out, coherent_amplitudes(alpha, m), atol=1e-12)
    assert expectation(out / np.linalg.norm(out), number(m)).real == pytest.approx(abs(alpha) ** 2, rel=1e-6)


def test_displacement_inverse_composition():
    rng = np.random.default_rng(7)
    m = 40
    psi = np.zeros(m, complex)
    psi[:3] = rng.normal(size=3) + 1j * rng.normal(size=3)
    psi /= np.linalg.norm(psi)
    alpha = 1.1 + 0.3j
    out = displacement_apply(-alpha, displacement_apply(alpha, psi))
    assert abs(np.vdot(psi, out)) ** 2 > 1 - 1e-10


def test_displacement_truncation_precondition():
    with pytest.raises(ValueError, match="too small"):
        displacement_apply(2.0, basis_state(8, 0))


def test_coherent_amplitudes_frozen_values():
    c = coherent_amplitudes(1.0, 4)
    e = math.exp(-0.5)
    assert np.allclose(c, [e, e, e / math.sqrt(2), e / math.sqrt(6)])
    phase = coherent_amplitudes(1j, 3)
    assert np.allclose(phase, [e, 1j * e, -e / math.sqrt(2)])
