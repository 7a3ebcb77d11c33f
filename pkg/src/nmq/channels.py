"""Dynamical maps as superoperators.

A superoperator for a d-level system is a d^2 x d^2 complex matrix ``E`` with
``vec(E(rho)) = E @ vec(rho)`` (column stacking).  Choi matrices are built
from the normalized maximally entangled state, so a trace-preserving map has a
trace-one Choi matrix and is completely positive iff that matrix is positive
semidefinite, equivalently iff its trace norm equals one.
"""

from typing import Iterable, List, Sequence

import numpy as np

from nmq import linalg
from nmq.exceptions import SingularMap, ValidationError
from nmq.states import maximally_entangled

CP_TOL = 1e-9
TP_TOL = 1e-9
SINGULAR_RTOL = 1e-12
REGULARIZATION_EPS = (1e-6, 1e-7, 1e-8)

STRATEGIES = ("exact", "regularized", "pseudo", "auto")


def superop_dim(E) -> int:
    """System dimension d of a d^2 x d^2 superoperator."""
    A = np.asarray(E)
    n = A.shape[-1]
    d = int(round(np.sqrt(n)))
    if A.shape[-2:] != (n, n) or d * d != n:
        raise ValidationError(f"superoperator must be d^2 x d^2, got shape {A.shape}")
    return d


def identity_map(d: int) -> np.ndarray:
    return np.eye(d * d, dtype=complex)


def kraus_to_superop(kraus: Iterable) -> np.ndarray:
    """``sum_k conj(K_k) kron K_k``."""
    kraus = [np.asarray(K, dtype=complex) for K in kraus]
    return sum(np.kron(K.conj(), K) for K in kraus)


def unitary_superop(U) -> np.ndarray:
    return kraus_to_superop([U])


def apply(E, rho) -> np.ndarray:
    """``devec(E vec(rho))``."""
    d = superop_dim(E)
    R = np.asarray(rho, dtype=complex)
    if R.shape != (d, d):
        raise ValidationError(f"operator of shape {R.shape} does not match map dimension {d}")
    return linalg.devec(np.asarray(E) @ linalg.vec(R), d)


def apply_batch(maps: np.ndarray, rho) -> np.ndarray:
    """Apply a stack of superoperators ``(N, d^2, d^2)`` to one operator; returns ``(N, d, d)``."""
    maps = np.asarray(maps)
    d = superop_dim(maps)
    out = maps @ linalg.vec(np.asarray(rho, dtype=complex))
    return np.swapaxes(out.reshape(maps.shape[:-2] + (d, d)), -1, -2)


def _as_tensor(maps: np.ndarray, d: int) -> np.ndarray:
    # T[..., i', j', i, j] = E[..., i' + j' d, i + j d]
    shape = maps.shape[:-2] + (d, d, d, d)
    return np.asarray(maps).reshape(shape).swapaxes(-1, -2).swapaxes(-3, -4)


def apply_extended(E, X, ancilla_dim: int) -> np.ndarray:
    """``(E kron id_k)(X)`` for an operator X on system (first) x ancilla (second).

    ``E`` may also be a stack of maps ``(N, d^2, d^2)``; the result then has
    shape ``(N, d k, d k)``.
    """
    E = np.asarray(E)
    d = superop_dim(E)
    k = int(ancilla_dim)
    X = np.asarray(X, dtype=complex)
    if X.shape != (d * k, d * k):
        raise ValidationError(f"operator of shape {X.shape} does not match dims ({d}, {k})")
    T = _as_tensor(E, d)
    Xt = X.reshape(d, k, d, k)
    out = np.einsum("...pqij,iajb->...paqb", T, Xt)
    return out.reshape(E.shape[:-2] + (d * k, d * k))


def compose(E2, E1) -> np.ndarray:
    """The map ``E2 o E1`` (apply E1 first)."""
    A, B = np.asarray(E2), np.asarray(E1)
    if A.shape != B.shape:
        raise ValidationError("cannot compose maps of different dimensions")
    return A @ B


# ---------------------------------------------------------------------------
# Choi matrices and positivity
# ---------------------------------------------------------------------------

def choi_of(E) -> np.ndarray:
    """Choi matrix ``(E kron id)(|Phi><Phi|)`` via the vec / swap construction.

    Builds ``U_{2<->3} (E kron I_{d^2}) U_{2<->3} vec(|Phi><Phi|)`` and
    devectorizes it.  Cost grows as d^8; :func:`choi_batch` is the fast path.
    """
    E = linalg.as_matrix(E, "superoperator")
    d = superop_dim(E)
    U = linalg.swap_2_3(d)
    big = U @ np.kron(E, np.eye(d * d)) @ U
    return linalg.devec(big @ linalg.vec(maximally_entangled(d)), d * d)


def choi_batch(maps) -> np.ndarray:
    """Choi matrices of a single map or a stack of maps by index reshuffling."""
    maps = np.asarray(maps, dtype=complex)
    d = superop_dim(maps)
    # C[i, a, j, b] = E[i + j d, a + b d] / d
    T = _as_tensor(maps, d)
    C = np.swapaxes(T, -3, -2) / d
    return C.reshape(maps.shape[:-2] + (d * d, d * d))


def choi_trace_norm(maps) -> np.ndarray:
    """Trace norm of the Choi matrix for each map in a stack."""
    return linalg.trace_norm_hermitian_batch(choi_batch(maps))


def choi_to_superop(choi) -> np.ndarray:
    C = linalg.as_matrix(choi, "choi")
    d = int(round(np.sqrt(C.shape[0])))
    T = C.reshape(d, d, d, d) * d  # [i, a, j, b]
    # E[i + j d, a + b d] = T[i, a, j, b]; C-order reshape of E is [j, i, b, a]
    return T.transpose(2, 0, 3, 1).reshape(d * d, d * d)


def choi_to_kraus(choi, tol: float = 1e-12) -> List[np.ndarray]:
    """Kraus operators from the eigen-decomposition of a PSD Choi matrix."""
    C = linalg.hermitize(choi)
    d = int(round(np.sqrt(C.shape[0])))
    w, V = np.linalg.eigh(C)
    if w[0] < -1e-9:
        raise ValidationError(f"Choi matrix is not PSD (min eigenvalue {w[0]:.3e})")
    return [np.sqrt(d * lam) * V[:, k].reshape(d, d) for k, lam in enumerate(w) if lam > tol]


def is_cp(E, tol: float = CP_TOL) -> bool:
    """Complete positivity: smallest Choi eigenvalue >= -tol."""
    C = linalg.hermitize(choi_batch(E))
    return bool(np.linalg.eigvalsh(C)[0] >= -tol)


def cp_defect(E) -> float:
    """``||Choi(E)||_1 - 1`` clipped at zero; zero iff E is CP (for TP maps)."""
    return float(max(linalg.trace_norm(choi_batch(E)) - 1.0, 0.0))


def is_tp(E, tol: float = TP_TOL) -> bool:
    """``vec(I)^dagger E == vec(I)^dagger`` within ``tol``."""
    E = np.asarray(E)
    d = superop_dim(E)
    v = linalg.vec(np.eye(d))
    return bool(np.max(np.abs(v @ E - v)) <= tol)


# ---------------------------------------------------------------------------
# Inverses and intermediate maps
# ---------------------------------------------------------------------------

def _singular_threshold(E: np.ndarray) -> float:
    n = E.shape[-1]
    smax = np.linalg.norm(E, 2)
    return SINGULAR_RTOL * smax ** n


def inverse(E, time=None) -> np.ndarray:
    """Exact inverse; raises :class:`SingularMap` below the relative determinant threshold."""
    E = linalg.as_matrix(E, "superoperator")
    det = abs(np.linalg.det(E))
    if det < _singular_threshold(E):
        raise SingularMap(det, time)
    return np.linalg.inv(E)


def regularized_inverse(E, eps: float) -> np.ndarray:
    """``(eps I + E)^{-1}``."""
    if eps <= 0:
        raise ValidationError("regularization eps must be positive")
    E = linalg.as_matrix(E, "superoperator")
    return np.linalg.inv(eps * np.eye(E.shape[0]) + E)


def pseudo_inverse(E) -> np.ndarray:
    return np.linalg.pinv(linalg.as_matrix(E, "superoperator"))


def richardson(values: Sequence, steps: Sequence[float]):
    """Polynomial extrapolation of ``values(step)`` to ``step = 0``.

    Lagrange interpolation through the given points evaluated at zero; works
    for scalars and arrays alike.
    """
    steps = [float(s) for s in steps]
    total = 0.0
    for i, (v, si) in enumerate(zip(values, steps)):
        w = 1.0
        for j, sj in enumerate(steps):
            if j != i:
                w *= (0.0 - sj) / (si - sj)
        total = total + w * np.asarray(v)
    return total


def intermediate_map(E_t, E_t1, strategy: str = "auto", eps: float = None, time=None) -> np.ndarray:
    """``E(t, t1) = E(t, t0) E(t1, t0)^{-1}``.

    Strategies:
        exact        matrix inverse, raising :class:`SingularMap`.
        regularized  ``(eps I + E)^{-1}`` for a single eps (default 1e-8).
        pseudo       Moore-Penrose pseudo-inverse.
        auto         exact, falling back to a three-point Richardson
                     extrapolation over regularized inverses with
                     eps in {1e-6, 1e-7, 1e-8}.
    """
    A = np.asarray(E_t, dtype=complex)
    B = np.asarray(E_t1, dtype=complex)
    if A.shape != B.shape:
        raise ValidationError("maps have different dimensions")
    if strategy == "exact":
        return A @ inverse(B, time)
    if strategy == "regularized":
        return A @ regularized_inverse(B, 1e-8 if eps is None else eps)
    if strategy == "pseudo":
        return A @ pseudo_inverse(B)
    if strategy == "auto":
        try:
            return A @ inverse(B, time)
        except SingularMap:
            vals = [A @ regularized_inverse(B, e) for e in REGULARIZATION_EPS]
            return richardson(vals, REGULARIZATION_EPS)
    raise ValidationError(f"unknown inverse strategy {strategy!r}; expected one of {STRATEGIES}")


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def matrix_to_pairs(M) -> list:
    """Row-major nested list of ``[re, im]`` pairs."""
    A = np.asarray(M, dtype=complex)
    return [[[float(z.real), float(z.imag)] for z in row] for row in A]


def matrix_from_pairs(data) -> np.ndarray:
    """Accepts nested lists whose entries are numbers or ``[re, im]`` pairs."""
    rows = []
    for row in data:
        out = []
        for z in row:
            if isinstance(z, (list, tuple)):
                if len(z) != 2:
                    raise ValidationError(f"complex entry must be [re, im], got {z!r}")
                out.append(complex(float(z[0]), float(z[1])))
            else:
                out.append(complex(z))
        rows.append(out)
    return linalg.as_matrix(np.array(rows, dtype=complex))


def superop_to_json(E, kind: str = "superoperator") -> dict:
    if kind == "choi":
        d = int(round(np.sqrt(np.asarray(E).shape[0])))
    else:
        d = superop_dim(E)
    return {"kind": kind, "dim": d, "matrix": matrix_to_pairs(E)}


def superop_from_json(doc: dict) -> np.ndarray:
    M = matrix_from_pairs(doc["matrix"])
    d = int(doc["dim"])
    if M.shape != (d * d, d * d):
        raise ValidationError(f"matrix shape {M.shape} inconsistent with dim {d}")
    return M
