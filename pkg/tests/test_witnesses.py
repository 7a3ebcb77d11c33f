import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nmq import states, witnesses
from nmq.dynamics import PropagatorFamily, RateFunction, damped_dephasing_generator, dephasing_family, propagate
from nmq.exceptions import ValidationError


def test_find_violations_directions_and_inf():
    ts = np.arange(5.0)
    assert witnesses.find_violations(ts, [3, 2, 2.5, 1, 0], "non-increasing") == [(2.0, 0.5)]
    assert witnesses.find_violations(ts, [0, 1, 0.5, 1, 2], "non-decreasing") == [(2.0, 0.5)]
    assert witnesses.find_violations(ts, [np.inf, np.inf, 1, np.inf, 0], "non-increasing") == [(3.0, np.inf)]
    assert witnesses.find_violations(ts, [1, 1 + 5e-8, 1, 1, 1], "non-increasing") == []


def test_sin_dephasing_violations_in_second_half(sin_family):
    s = witnesses.trace_distance_witness(sin_family, *states.plus_minus_pair())
    times = np.array([t for t, _ in s.violations])
    assert times.size > 0 and np.all(times > np.pi)
    assert s.to_csv("h").startswith("# config_hash=h\nt,value,rate,violation\n")


def test_qfi_routes_agree(sin_family):
    s = witnesses.qfi_flow_witness(sin_family, lambda th: states.pure([1, np.exp(1j * th)]))
    assert s.extra["route_gap"] < 1e-5


def test_discord_fast_path_matches_general_search():
    fam = dephasing_family(RateFunction.constant(0.3), 0.0, [0.0, 1.0])
    rho = witnesses.channels.apply_extended(fam.maps[-1], states.maximally_entangled(2), 2)
    fast, m1 = witnesses.discord(rho, 2)
    rot = np.kron(np.eye(2), np.array([[1, 1], [1, -1]]) / np.sqrt(2))
    slow, m2 = witnesses.discord(rot @ rho @ rot.conj().T, 2)
    assert m1 == "x-state" and m2 == "grid+nelder-mead"
    assert fast == pytest.approx(slow, abs=1e-8)


def test_discord_needs_qubit_ancilla():
    fam = dephasing_family(RateFunction.constant(0.3), 0.0, [0.0, 1.0])
    with pytest.raises(ValidationError):
        witnesses.discord_witness(fam, initial_state=np.eye(6) / 6)


def test_capacity_nonunital_is_lower_bound():
    gen = damped_dephasing_generator(0.0, RateFunction.constant(0.5), RateFunction.constant(0.0))
    fam = propagate(gen, 0.0, np.linspace(0, 2, 17))
    c, q = witnesses.capacity_witness(fam, samples=16)
    assert c.config["lower_bound"] and q.config["lower_bound"]
    assert not c.violations
    assert np.all(c.values >= q.values)


def test_bloch_volume_caveat_for_negative_trace():
    # conjugation by sigma_z flips two Bloch axes, so Tr M = -1
    ts = [0.0, 1.0]
    flip = np.diag([1, -1, -1, 1]).astype(complex)
    fam = PropagatorFamily(0.0, ts, np.array([np.eye(4), flip]))
    s = witnesses.bloch_volume_witness(fam)
    assert s.extra["insensitive_times"].tolist() == [1.0]


def test_entanglement_integral_vanishes_when_monotone():
    fam = dephasing_family(RateFunction.constant(0.4), 0.0, np.linspace(0, 2, 33))
    s = witnesses.entanglement_witness(fam)
    assert abs(s.extra["integral"]) < 1e-12
    assert not s.violations


def test_entanglement_integral_positive_for_sin(sin_family):
    s = witnesses.entanglement_witness(sin_family)
    # log-negativity returns to log 2 after dipping to log(1 + e^-4)
    assert s.extra["integral"] == pytest.approx(2 * (np.log(2) - np.log(1 + np.exp(-4))), rel=1e-6)


def test_flows_match_closed_forms(sin_family, sin_R):
    g, R = np.sin(sin_family.times), sin_R
    plus, minus = states.plus_minus_pair()
    inner = slice(1, -1)  # the capacity flow diverges where R = 1
    c, _ = witnesses.capacity_witness(sin_family)
    flows = [
        (witnesses.trace_distance_witness(sin_family, plus, minus).rates, -2 * g * R),
        (witnesses.fidelity_witness(sin_family, plus, minus).rates, 4 * g * R ** 2),
        (witnesses.entanglement_witness(sin_family).rates, -2 * g * R / (1 + R)),
        (witnesses.qfi_flow_witness(sin_family, lambda th: states.pure([1, np.exp(1j * th)])).rates,
         -4 * g * R ** 2),
        (c.rates[inner], (-g * R * np.log((1 + R) / (1 - np.where(R < 1, R, 0))))[inner]),
    ]
    for got, want in flows:
        assert np.max(np.abs(got - want)) < 1e-8


@given(st.floats(0.0, 1.5), st.floats(0.0, 1.5), st.integers(0, 2 ** 32 - 1))
@settings(max_examples=8, deadline=None)
def test_markovian_qubit_witnesses_are_monotone(gm, gz, seed):
    gen = damped_dephasing_generator(1.0, RateFunction.constant(gm), RateFunction.constant(gz))
    fam = propagate(gen, 0.0, np.linspace(0, 2, 33))
    rng = np.random.default_rng(seed)
    r1, r2 = states.random_state(2, rng), states.random_state(2, rng)
    for s in (witnesses.trace_distance_witness(fam, r1, r2), witnesses.fidelity_witness(fam, r1, r2),
              witnesses.relative_entropy_witness(fam, r1, r2), witnesses.entanglement_witness(fam),
              witnesses.mutual_info_witness(fam), witnesses.bloch_volume_witness(fam)):
        assert not s.violations, s.kind


@pytest.mark.parametrize("rate", [RateFunction.sine(), RateFunction.sine(1.0, 2.0, 0.0, 0.3),
                                  RateFunction.constant(0.4), RateFunction.exponential(1.0, -0.5)])
def test_trace_distance_violation_implies_positive_rhp(rate):
    from nmq import measures
    fam = dephasing_family(rate, 0.0, np.linspace(0, 6, 257))
    s = witnesses.trace_distance_witness(fam, *states.plus_minus_pair())
    n_rhp = measures.rhp_measure(fam, (0.0, 6.0)).value
    if s.violations:
        assert n_rhp > 0
    else:
        assert n_rhp == pytest.approx(0.0, abs=1e-8)
