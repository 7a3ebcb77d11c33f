import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nmq import linalg
from nmq.exceptions import ValidationError

from conftest import random_hermitian


def test_vec_is_column_stacking():
    A = np.array([[1, 2], [3, 4]])
    assert np.array_equal(linalg.vec(A), [1, 3, 2, 4])
    assert np.array_equal(linalg.devec(linalg.vec(A), 2), A)


@given(st.integers(1, 4), st.integers(0, 2 ** 32 - 1))
@settings(max_examples=25, deadline=None)
def test_vec_kron_identity(d, seed):
    rng = np.random.default_rng(seed)
    A, X, B = (rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d)) for _ in range(3))
    assert np.allclose(linalg.vec(A @ X @ B), np.kron(B.T, A) @ linalg.vec(X))


@pytest.mark.parametrize("d", [1, 2, 3])
def test_commutation_matrix(d):
    rng = np.random.default_rng(d)
    A, B = rng.normal(size=(d, d)), rng.normal(size=(d, d))
    P = linalg.commutation_matrix(d)
    assert np.allclose(P @ linalg.vec(A), linalg.vec(A.T))
    assert np.allclose(P @ np.kron(A, B) @ P, np.kron(B, A))


@given(st.integers(2, 5), st.integers(0, 2 ** 32 - 1))
@settings(max_examples=25, deadline=None)
def test_trace_norm_routes_agree(n, seed):
    rng = np.random.default_rng(seed)
    H = random_hermitian(n, rng)
    ref = np.sum(np.linalg.svd(H, compute_uv=False))
    assert linalg.trace_norm(H) == pytest.approx(ref, rel=1e-12)
    assert linalg.trace_norm_hermitian_batch(H[None])[0] == pytest.approx(ref, rel=1e-12)


def test_trace_norm_nonhermitian():
    assert linalg.trace_norm(np.array([[0, 2], [0, 0]])) == pytest.approx(2.0)


def test_partial_trace_and_transpose_of_product():
    rng = np.random.default_rng(0)
    A = random_hermitian(2, rng)
    B = random_hermitian(3, rng)
    M = np.kron(A, B)
    assert np.allclose(linalg.partial_trace(M, (2, 3), 0), A * np.trace(B))
    assert np.allclose(linalg.partial_trace(M, (2, 3), 1), B * np.trace(A))
    assert np.allclose(linalg.partial_transpose(M, (2, 3), 1), np.kron(A, B.T))
    assert np.allclose(linalg.partial_transpose(M, (2, 3), 0), np.kron(A.T, B))


def test_psd_eigh_clips_and_rejects():
    w, _ = linalg.psd_eigh(np.diag([1.0, -1e-12]))
    assert w[0] == 0.0
    with pytest.raises(ValidationError):
        linalg.psd_eigh(np.diag([1.0, -1e-3]))


def test_hermitize_rejects_nonhermitian():
    with pytest.raises(ValidationError):
        linalg.hermitize(np.array([[0, 1], [0, 0]]))
