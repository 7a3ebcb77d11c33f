import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nmq import measures
from nmq.dynamics import (
    RateFunction,
    damped_dephasing_generator,
    dephasing_family,
    dephasing_generator,
    propagate,
)

TWO_PI = 2 * np.pi
IV = (0.0, TWO_PI)


def damped_dephasing_model(gm=None):
    gm = RateFunction.sine(1.0, 1.0, np.pi / 2, 0.5) if gm is None else gm
    return damped_dephasing_generator(1.0, gm, RateFunction.sine())


def test_rhp_sin_dephasing_both_routes(sin_family):
    # g = 2 max(-gamma, 0) and the negative lobe of sin integrates to 2
    for source in (sin_family, sin_family.generator):
        rep = measures.rhp_measure(source, IV)
        assert rep.value == pytest.approx(4.0, rel=1e-6)
    rep = measures.rhp_measure(sin_family, IV)
    assert rep.metadata["exp_normalized"] == pytest.approx(1 - np.exp(-4.0), rel=1e-6)


def test_g_closed_form_damped_dephasing():
    gen = damped_dephasing_model()
    ts = np.linspace(0.01, 6.2, 40)
    gm, gz = 0.5 + np.cos(ts), np.sin(ts)
    expected = 0.5 * (np.abs(gm) - gm) + np.abs(gz) - gz
    g, sing = measures.g_generator_series(gen, ts)
    assert not sing.any()
    assert np.max(np.abs(g - expected)) < 1e-7


def test_rhp_degree_values():
    sin = measures.rhp_degree(dephasing_family(RateFunction.sine(), 0.0, np.linspace(0, TWO_PI, 513)), IV)
    tan = measures.rhp_degree(dephasing_family(RateFunction.tangent(), 0.0, np.linspace(0, TWO_PI, 513)), IV)
    assert sin.value == pytest.approx(0.758, abs=0.01)
    assert tan.value == pytest.approx(0.803, abs=0.01)
    assert sin.metadata["converged"] and tan.metadata["converged"]
    assert 0.0 <= sin.value <= 1.0


def test_tan_rate_is_singular_under_exact():
    fam = dephasing_family(RateFunction.tangent(), 0.0, np.linspace(0, TWO_PI, 513))
    rep = measures.rhp_measure(fam, IV)
    assert rep.value == np.inf
    assert rep.metadata["singular_samples"] > 0


def test_decay_rate_index():
    gen = damped_dephasing_model(RateFunction.constant(1.0))
    assert measures.nm_index(gen, IV) == 1
    assert measures.nm_index(damped_dephasing_model(), IV) == 2
    assert measures.nm_index(dephasing_generator(RateFunction.constant(1.0)), IV) == 0


def test_decay_rate_equals_rhp_for_qubits():
    gen = damped_dephasing_model()
    n_gamma = measures.decay_rate_measure(gen, IV).value
    n_rhp = measures.rhp_measure(gen, IV).value
    assert n_gamma == pytest.approx(n_rhp, rel=1e-6)


def test_blp_sin_dephasing(sin_family):
    rep = measures.blp_measure(sin_family, IV)
    assert rep.value == pytest.approx(1 - np.exp(-4.0), abs=1e-8)
    assert not rep.lower_bound


def test_helstrom_and_k_divisibility_sin(sin_family):
    h = measures.helstrom_measure(sin_family, IV, samples=200)
    assert h.lower_bound
    assert h.value == pytest.approx(1 - np.exp(-4.0), abs=1e-6)
    k1 = measures.k_divisibility_degree(sin_family, IV, k=1, samples=200)
    k2 = measures.k_divisibility_degree(sin_family, IV, k=2, samples=200)
    assert k1.value >= 0.95
    assert k1.value <= k2.value + 1e-12


def test_markovian_family_gives_zero():
    fam = dephasing_family(RateFunction.constant(0.5), 0.0, np.linspace(0, 3, 129))
    iv = (0.0, 3.0)
    assert measures.rhp_measure(fam, iv).value == pytest.approx(0.0, abs=1e-8)
    assert measures.rhp_degree(fam, iv).value == 0.0
    assert measures.blp_measure(fam, iv).value == 0.0


def test_seeded_measures_are_reproducible(sin_family):
    a = measures.helstrom_measure(sin_family, IV, samples=50, seed=7)
    b = measures.helstrom_measure(sin_family, IV, samples=50, seed=7)
    assert a.value == b.value


def test_map_route_agrees_with_generator_on_integrated_family():
    gen = damped_dephasing_model()
    fam = propagate(gen, 0.0, np.linspace(0, TWO_PI, 129))
    gm = measures.g_series(fam, IV, route="map")
    gg, _ = measures.g_generator_series(gen, gm.times)
    assert np.max(np.abs(gm.g - gg)) < 1e-4


@given(st.floats(0.1, 2.0), st.floats(0.5, 2.0), st.floats(-1.0, 1.0))
@settings(max_examples=15, deadline=None)
def test_degree_bounded_and_g_nonnegative(amplitude, frequency, offset):
    rate = RateFunction.sine(amplitude, frequency, 0.0, offset)
    fam = dephasing_family(rate, 0.0, np.linspace(0, 4, 129))
    gs = measures.g_series(fam, (0.0, 4.0))
    assert np.all(gs.g >= 0)
    rep = measures.rhp_degree(fam, (0.0, 4.0), max_intervals=2 ** 11)
    assert 0.0 <= rep.value <= 1.0
    # g = 2 max(-gamma, 0), so N_RHP = 2 int max(-gamma, 0)
    neg = np.linspace(0, 4, 20001)
    expected = 2 * np.trapezoid(np.maximum(-rate(neg), 0.0), neg)
    assert measures.rhp_measure(fam, (0.0, 4.0)).value == pytest.approx(expected, abs=2e-3)


@given(st.floats(0.0, 2.0), st.floats(0.0, 2.0), st.floats(-2.0, 2.0))
@settings(max_examples=10, deadline=None)
def test_nonnegative_constant_rates_are_markovian(gm, gz, omega):
    gen = damped_dephasing_generator(omega, RateFunction.constant(gm), RateFunction.constant(gz))
    iv = (0.0, 2.0)
    assert measures.rhp_measure(gen, iv, intervals=64).value == pytest.approx(0.0, abs=1e-6)
    assert measures.decay_rate_measure(gen, iv, intervals=64).value == 0.0


def test_k_divisibility_tan_dephasing():
    fam = dephasing_family(RateFunction.tangent(), 0.0, np.linspace(0, TWO_PI, 513))
    assert measures.k_divisibility_degree(fam, IV, samples=200).value == pytest.approx(1.0, abs=0.05)


def test_helstrom_dominates_blp_on_shared_seed():
    fam = propagate(damped_dephasing_model(), 0.0, np.linspace(0, TWO_PI, 129))
    blp = measures.blp_measure(fam, IV, seed=1)
    h = measures.helstrom_measure(fam, IV, samples=300, seed=1)
    assert blp.value > 0
    assert h.value >= blp.value - 1e-9
