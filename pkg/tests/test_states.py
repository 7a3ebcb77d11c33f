import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nmq import states
from nmq.exceptions import ValidationError

seeds = st.integers(0, 2 ** 32 - 1)


def test_validate_state_rejects_bad_input():
    with pytest.raises(ValidationError):
        states.validate_state(np.diag([0.7, 0.7]))
    with pytest.raises(ValidationError):
        states.validate_state(np.diag([1.2, -0.2]))


@pytest.mark.parametrize("d", [2, 3, 4])
def test_su_basis_orthonormal(d):
    G = states.su_basis(d)
    gram = np.einsum("iab,jba->ij", G, G)
    assert np.allclose(gram, np.eye(d * d))
    assert np.allclose(G, np.conj(np.transpose(G, (0, 2, 1))))
    assert np.allclose(np.einsum("iaa->i", G[1:]), 0)


@given(st.integers(2, 4), seeds)
@settings(max_examples=20, deadline=None)
def test_bloch_roundtrip(d, seed):
    rho = states.random_state(d, np.random.default_rng(seed))
    assert np.allclose(states.from_bloch(states.to_bloch(rho)), rho)


def test_known_values():
    plus, minus = states.plus_minus_pair()
    assert states.trace_distance(plus, minus) == pytest.approx(1.0)
    assert states.fidelity(plus, minus) == pytest.approx(0.0, abs=1e-14)
    assert states.von_neumann_entropy(np.eye(2) / 2) == pytest.approx(np.log(2))
    assert states.von_neumann_entropy(np.eye(2) / 2, base=2) == pytest.approx(1.0)
    phi = states.maximally_entangled(2)
    assert states.log_negativity(phi, (2, 2)) == pytest.approx(np.log(2))
    assert states.mutual_information(phi, (2, 2)) == pytest.approx(2 * np.log(2))
    assert states.relative_entropy(plus, np.eye(2) / 2) == pytest.approx(np.log(2))
    assert states.relative_entropy(plus, minus) == np.inf


@given(st.integers(2, 4), seeds)
@settings(max_examples=20, deadline=None)
def test_fidelity_and_distance_bounds(d, seed):
    rng = np.random.default_rng(seed)
    a, b = states.random_state(d, rng), states.random_state(d, rng)
    D, F = states.trace_distance(a, b), states.fidelity(a, b)
    assert 1 - np.sqrt(F) <= D + 1e-10
    assert D <= np.sqrt(1 - F) + 1e-10
    assert states.relative_entropy(a, b) >= -1e-12


def test_helstrom_trace_condition():
    with pytest.raises(ValidationError):
        states.HelstromMatrix(0.3, np.eye(2))
    h = states.HelstromMatrix.from_states(0.5, *states.plus_minus_pair())
    assert states.min_fail_probability(h) == pytest.approx(0.0, abs=1e-14)
    h = states.HelstromMatrix.from_states(0.5, np.eye(2) / 2, np.eye(2) / 2)
    assert states.min_fail_probability(h) == pytest.approx(0.5)
