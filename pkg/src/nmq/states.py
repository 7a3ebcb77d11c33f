"""Quantum states, distinguishability measures and entropies.

Density matrices are plain complex numpy arrays.  Entropic quantities use the
natural logarithm unless a ``base`` is given.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from nmq import linalg
from nmq.exceptions import ValidationError

TRACE_TOL = 1e-9
NEG_EIG_TOL = 1e-9
# relative-entropy support test
KERNEL_TOL = 1e-12
SUPPORT_WEIGHT_TOL = 1e-10


def validate_state(rho, name: str = "rho") -> np.ndarray:
    """Check the density-matrix invariants and return a symmetrized copy."""
    A = linalg.as_matrix(rho, name)
    if A.shape[0] != A.shape[1]:
        raise ValidationError(f"{name} must be square")
    A = linalg.hermitize(A)
    tr = np.trace(A).real
    if abs(tr - 1.0) > TRACE_TOL:
        raise ValidationError(f"{name} has trace {tr!r}, expected 1")
    w = np.linalg.eigvalsh(A)
    if w[0] < -NEG_EIG_TOL:
        raise ValidationError(f"{name} has negative eigenvalue {w[0]:.3e}")
    return A


def ket(*amplitudes) -> np.ndarray:
    v = np.asarray(amplitudes, dtype=complex).ravel()
    return v / np.linalg.norm(v)


def pure(psi) -> np.ndarray:
    """Projector onto a (not necessarily normalized) state vector."""
    v = np.asarray(psi, dtype=complex).ravel()
    v = v / np.linalg.norm(v)
    return np.outer(v, v.conj())


def maximally_mixed(d: int) -> np.ndarray:
    return np.eye(d, dtype=complex) / d


def maximally_entangled(d: int) -> np.ndarray:
    """|Phi><Phi| with |Phi> = sum_n |n>|n> / sqrt(d), system first."""
    v = np.eye(d, dtype=complex).reshape(-1) / np.sqrt(d)
    return np.outer(v, v.conj())


def plus_minus_pair():
    """The |+><+|, |-><-| qubit pair used by the dephasing examples."""
    return pure([1, 1]), pure([1, -1])


def random_pure_state(d: int, rng: np.random.Generator) -> np.ndarray:
    z = rng.normal(size=d) + 1j * rng.normal(size=d)
    return pure(z)


def random_state(d: int, rng: np.random.Generator, rank: Optional[int] = None) -> np.ndarray:
    """Random density matrix from the induced (Ginibre) measure."""
    rank = d if rank is None else rank
    G = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    rho = G @ G.conj().T
    return rho / np.trace(rho).real


def _log(x, base):
    out = np.log(x)
    return out if base is None else out / np.log(base)


# ---------------------------------------------------------------------------
# Operator bases and Bloch coordinates
# ---------------------------------------------------------------------------

def su_basis(d: int) -> np.ndarray:
    """Orthonormal Hermitian operator basis ``G_0 = I/sqrt(d), G_1..G_{d^2-1}``.

    ``G_1..`` are the generalized Gell-Mann matrices scaled to unit
    Hilbert-Schmidt norm: all symmetric off-diagonal ones, then all
    antisymmetric ones, then the diagonal ones.  For ``d = 2`` this is
    ``(I, sigma_x, sigma_y, sigma_z) / sqrt(2)``.

    Returns an array of shape ``(d*d, d, d)``.
    """
    if d < 2:
        raise ValidationError(f"su_basis requires d >= 2, got {d}")
    basis = [np.eye(d, dtype=complex) / np.sqrt(d)]
    sym, asym = [], []
    for j in range(d):
        for k in range(j + 1, d):
            S = np.zeros((d, d), dtype=complex)
            S[j, k] = S[k, j] = 1 / np.sqrt(2)
            sym.append(S)
            A = np.zeros((d, d), dtype=complex)
            A[j, k] = -1j / np.sqrt(2)
            A[k, j] = 1j / np.sqrt(2)
            asym.append(A)
    diag = []
    for l in range(1, d):
        D = np.zeros((d, d), dtype=complex)
        D[np.arange(l), np.arange(l)] = 1.0
        D[l, l] = -l
        diag.append(D / np.sqrt(l * (l + 1)))
    basis.extend(sym + asym + diag)
    return np.array(basis)


def to_bloch(rho) -> np.ndarray:
    """Coordinates ``r_j = Tr(G_j rho)``, j >= 1, in the :func:`su_basis`."""
    A = linalg.as_matrix(rho)
    G = su_basis(A.shape[0])[1:]
    return np.einsum("jab,ba->j", G, A).real


def from_bloch(r) -> np.ndarray:
    """Rebuild ``rho = I/d + sum_j r_j G_j``; d is inferred from ``len(r) = d^2 - 1``."""
    r = np.asarray(r, dtype=float)
    d = int(round(np.sqrt(r.size + 1)))
    if d * d - 1 != r.size:
        raise ValidationError(f"Bloch vector length {r.size} is not d^2 - 1")
    G = su_basis(d)[1:]
    return np.eye(d, dtype=complex) / d + np.einsum("j,jab->ab", r, G)


# ---------------------------------------------------------------------------
# Discrimination
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HelstromMatrix:
    """``delta = q rho1 - (1 - q) rho2`` for a prior ``q`` on ``rho1``."""

    q: float
    delta: np.ndarray

    def __post_init__(self):
        if not 0.0 <= self.q <= 1.0:
            raise ValidationError(f"prior q must lie in [0, 1], got {self.q}")
        delta = linalg.hermitize(self.delta)
        tr = np.trace(delta).real
        if abs(tr - (2 * self.q - 1)) > 1e-8:
            raise ValidationError(f"Tr(delta) = {tr!r} but 2q - 1 = {2 * self.q - 1!r}")
        object.__setattr__(self, "delta", delta)

    @classmethod
    def from_states(cls, q: float, rho1, rho2) -> "HelstromMatrix":
        rho1 = validate_state(rho1, "rho1")
        rho2 = validate_state(rho2, "rho2")
        if rho1.shape != rho2.shape:
            raise ValidationError("states have different dimensions")
        return cls(q, q * rho1 - (1 - q) * rho2)


def min_fail_probability(h: HelstromMatrix) -> float:
    """Minimum average error of one-shot discrimination, ``(1 - ||delta||_1) / 2``."""
    p = 0.5 * (1.0 - linalg.trace_norm(h.delta))
    return float(min(max(p, 0.0), 0.5))


def trace_distance(rho1, rho2) -> float:
    A, B = np.asarray(rho1, dtype=complex), np.asarray(rho2, dtype=complex)
    if A.shape != B.shape:
        raise ValidationError("states have different dimensions")
    return 0.5 * linalg.trace_norm(A - B)


def fidelity(rho1, rho2) -> float:
    """Uhlmann fidelity ``||sqrt(rho1) sqrt(rho2)||_1^2`` (squared convention)."""
    A, B = np.asarray(rho1, dtype=complex), np.asarray(rho2, dtype=complex)
    if A.shape != B.shape:
        raise ValidationError("states have different dimensions")
    s = np.linalg.svd(linalg.psd_sqrt(A) @ linalg.psd_sqrt(B), compute_uv=False)
    return float(min(np.sum(s) ** 2, 1.0))


def bures_distance(rho1, rho2) -> float:
    F = fidelity(rho1, rho2)
    return float(np.sqrt(max(2.0 * (1.0 - np.sqrt(F)), 0.0)))


# ---------------------------------------------------------------------------
# Entropies
# ---------------------------------------------------------------------------

def entropy_from_spectrum(w, base: Optional[float] = None) -> float:
    w = np.asarray(w, dtype=float)
    w = w[w > 0]
    return float(-np.sum(w * _log(w, base)))


def von_neumann_entropy(rho, base: Optional[float] = None) -> float:
    w, _ = linalg.psd_eigh(rho, neg_tol=NEG_EIG_TOL)
    return entropy_from_spectrum(w, base)


def relative_entropy(rho1, rho2, base: Optional[float] = None) -> float:
    """``Tr(rho1 log rho1) - Tr(rho1 log rho2)``; ``inf`` when supp(rho1) is not in supp(rho2)."""
    A, B = np.asarray(rho1, dtype=complex), np.asarray(rho2, dtype=complex)
    if A.shape != B.shape:
        raise ValidationError("states have different dimensions")
    w1, _ = linalg.psd_eigh(A, neg_tol=NEG_EIG_TOL)
    w2, V2 = linalg.psd_eigh(B, neg_tol=NEG_EIG_TOL)
    # weight of rho1 along each eigenvector of rho2
    weights = np.einsum("ak,ab,bk->k", V2.conj(), A, V2).real
    kernel = w2 < KERNEL_TOL
    if np.any(weights[kernel] > SUPPORT_WEIGHT_TOL):
        return float("inf")
    pos1 = w1[w1 > 0]
    first = np.sum(pos1 * _log(pos1, base))
    second = np.sum(weights[~kernel] * _log(w2[~kernel], base))
    return float(max(first - second, 0.0))


def mutual_information(rho_sa, dims, base: Optional[float] = None) -> float:
    """``S(rho_S) + S(rho_A) - S(rho_SA)`` for a bipartite state."""
    rho_s = linalg.partial_trace(rho_sa, dims, keep=0)
    rho_a = linalg.partial_trace(rho_sa, dims, keep=1)
    return (
        von_neumann_entropy(rho_s, base)
        + von_neumann_entropy(rho_a, base)
        - von_neumann_entropy(rho_sa, base)
    )


def log_negativity(rho_sa, dims, subsystem=1, base: Optional[float] = None) -> float:
    """``log ||rho^{T_A}||_1`` with the partial transpose on ``subsystem`` (default: the ancilla)."""
    pt = linalg.partial_transpose(rho_sa, dims, subsystem)
    return float(_log(linalg.trace_norm(pt), base))
