"""Dense complex linear algebra used throughout the package.

Vectorization follows the column-stacking convention: for a 2x2 matrix
``[[a, b], [c, d]]`` the vector is ``(a, c, b, d)``.  With this convention

    vec(A X B) = (B^T kron A) vec(X)

and every superoperator in the package acts on column-stacked states.
"""

from typing import Sequence, Tuple, Union

import numpy as np

from nmq.exceptions import NotHermitianError, ValidationError

HERMITIAN_RTOL = 1e-10

Subsystem = Union[int, str]


def as_matrix(M, name: str = "matrix") -> np.ndarray:
    """Return ``M`` as a finite 2-d complex array, raising on bad input."""
    A = np.asarray(M, dtype=complex)
    if A.ndim != 2 or A.shape[0] < 1 or A.shape[1] < 1:
        raise ValidationError(f"{name} must be a non-empty 2-d array, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValidationError(f"{name} has non-finite entries")
    return A


def _square(M, name="matrix") -> np.ndarray:
    A = as_matrix(M, name)
    if A.shape[0] != A.shape[1]:
        raise ValidationError(f"{name} must be square, got shape {A.shape}")
    return A


def dagger(M: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(M, -1, -2))


def is_hermitian(M, rtol: float = HERMITIAN_RTOL) -> bool:
    A = np.asarray(M, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        return False
    scale = max(np.linalg.norm(A), 1.0)
    return bool(np.linalg.norm(A - A.conj().T) <= rtol * scale)


def hermitize(M, rtol: float = HERMITIAN_RTOL) -> np.ndarray:
    """Symmetrize ``M`` to ``(M + M^dagger)/2``; reject it if it is not nearly Hermitian."""
    A = _square(M)
    scale = max(np.linalg.norm(A), 1.0)
    defect = np.linalg.norm(A - A.conj().T)
    if defect > rtol * scale:
        raise NotHermitianError(f"matrix is not Hermitian (||M - M^dagger|| = {defect:.3e})")
    return 0.5 * (A + A.conj().T)


def hermitian_eig(M, rtol: float = HERMITIAN_RTOL) -> Tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a Hermitian matrix, eigenvalues ascending."""
    return np.linalg.eigh(hermitize(M, rtol))


def svd(M) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Singular value decomposition ``M = U diag(s) V^dagger``.

    Returns ``(U, s, V)`` with singular values in descending order.
    """
    A = as_matrix(M)
    U, s, Vh = np.linalg.svd(A)
    return U, s, Vh.conj().T


def trace_norm(M) -> float:
    """Sum of the singular values of a square matrix.

    Hermitian inputs go through ``eigvalsh`` (sum of absolute eigenvalues),
    anything else through the SVD.
    """
    A = _square(M)
    if is_hermitian(A):
        w = np.linalg.eigvalsh(0.5 * (A + A.conj().T))
        return float(np.sum(np.abs(w)))
    return float(np.sum(np.linalg.svd(A, compute_uv=False)))


def trace_norm_hermitian_batch(stack: np.ndarray) -> np.ndarray:
    """Trace norms of a stack of Hermitian matrices with shape ``(..., n, n)``.

    No validation; callers guarantee Hermiticity up to roundoff.
    """
    S = np.asarray(stack)
    S = 0.5 * (S + dagger(S))
    return np.sum(np.abs(np.linalg.eigvalsh(S)), axis=-1)


def vec(M) -> np.ndarray:
    """Column-stack a matrix into a 1-d vector."""
    A = np.asarray(M)
    if A.ndim != 2:
        raise ValidationError(f"vec expects a 2-d array, got shape {A.shape}")
    return A.reshape(-1, order="F")


def devec(v, rows: int, cols: int = None) -> np.ndarray:
    """Inverse of :func:`vec`; ``cols`` defaults to ``rows``."""
    cols = rows if cols is None else cols
    x = np.asarray(v)
    if x.size != rows * cols:
        raise ValidationError(f"cannot reshape vector of length {x.size} into {rows}x{cols}")
    return x.reshape((rows, cols), order="F")


def kron(A, B) -> np.ndarray:
    return np.kron(as_matrix(A, "A"), as_matrix(B, "B"))


def commutation_matrix(d: int) -> np.ndarray:
    """The d^2 x d^2 permutation ``P`` with ``P vec(A) = vec(A^T)``.

    It also satisfies ``P (A kron B) P = B kron A`` for d x d matrices.
    """
    if d < 1:
        raise ValidationError("dimension must be positive")
    P = np.zeros((d * d, d * d))
    for i in range(d):
        for j in range(d):
            # vec index of entry (i, j) is i + j*d
            P[j + i * d, i + j * d] = 1.0
    return P


def swap_2_3(d: int) -> np.ndarray:
    """Permutation exchanging the 2nd and 3rd factors of a d x d x d x d space.

    Equals ``I_d kron P kron I_d`` with ``P`` the commutation matrix.
    """
    if d < 2:
        raise ValidationError(f"swap_2_3 requires d >= 2, got {d}")
    eye = np.eye(d)
    return np.kron(np.kron(eye, commutation_matrix(d)), eye)


def _subsystem_index(which: Subsystem) -> int:
    if which in (0, "A", "a"):
        return 0
    if which in (1, "B", "b"):
        return 1
    raise ValidationError(f"subsystem must be 0/'A' or 1/'B', got {which!r}")


def _check_bipartite(M, dims) -> Tuple[np.ndarray, int, int]:
    A = _square(M)
    dA, dB = (int(d) for d in dims)
    if dA < 1 or dB < 1 or A.shape[0] != dA * dB:
        raise ValidationError(f"matrix of size {A.shape[0]} does not match dims {tuple(dims)}")
    return A, dA, dB


def partial_trace(M, dims: Sequence[int], keep: Subsystem = 0) -> np.ndarray:
    """Trace out one factor of a bipartite operator and return the kept one."""
    A, dA, dB = _check_bipartite(M, dims)
    T = A.reshape(dA, dB, dA, dB)
    if _subsystem_index(keep) == 0:
        return np.einsum("ijkj->ik", T)
    return np.einsum("ijil->jl", T)


def partial_transpose(M, dims: Sequence[int], subsystem: Subsystem = 1) -> np.ndarray:
    """Transpose one factor of a bipartite operator in the computational basis."""
    A, dA, dB = _check_bipartite(M, dims)
    T = A.reshape(dA, dB, dA, dB)
    if _subsystem_index(subsystem) == 0:
        T = T.transpose(2, 1, 0, 3)
    else:
        T = T.transpose(0, 3, 2, 1)
    return T.reshape(dA * dB, dA * dB)


def psd_eigh(rho, neg_tol: float = 1e-9, zero_tol: float = 1e-14) -> Tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a positive semidefinite matrix with clipping.

    Eigenvalues in ``[-neg_tol, zero_tol]`` are set to exactly zero; anything
    more negative raises :class:`ValidationError`.
    """
    w, V = hermitian_eig(rho)
    if w[0] < -neg_tol:
        raise ValidationError(f"matrix is not positive semidefinite (min eigenvalue {w[0]:.3e})")
    w = np.where(w <= zero_tol, 0.0, w)
    return w, V


def psd_sqrt(rho) -> np.ndarray:
    w, V = psd_eigh(rho)
    return (V * np.sqrt(w)) @ V.conj().T
