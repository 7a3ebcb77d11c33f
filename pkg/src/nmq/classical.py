"""Classical stochastic processes: stochastic matrices, divisibility and L1 contraction.

Probabilities are column vectors and a transition matrix acts on the left, so
``T[x2, x1] = T(x2 | x1)`` and every column sums to one.
"""

import csv
import io
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from nmq.exceptions import SingularMap, ValidationError

STOCHASTIC_TOL = 1e-10
SINGULAR_RTOL = 1e-12


def _real_square(T, name="T") -> np.ndarray:
    A = np.asarray(T, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] < 1:
        raise ValidationError(f"{name} must be a non-empty square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValidationError(f"{name} has non-finite entries")
    return A


def column_sums_ok(T, tol: float = STOCHASTIC_TOL) -> bool:
    A = _real_square(T)
    return bool(np.all(np.abs(A.sum(axis=0) - 1.0) <= tol))


def is_stochastic(T, tol: float = STOCHASTIC_TOL) -> bool:
    """Nonnegative entries (down to ``-tol``) and unit column sums."""
    A = _real_square(T)
    return bool(np.all(A >= -tol) and column_sums_ok(A, tol))


def classical_intermediate(T20, T10, time=None) -> np.ndarray:
    """``T(t2, t1) = T(t2, t0) T(t1, t0)^{-1}``; raises :class:`SingularMap` when T10 is singular."""
    A = _real_square(T20, "T20")
    B = _real_square(T10, "T10")
    if A.shape != B.shape:
        raise ValidationError("transition matrices have different sizes")
    det = abs(np.linalg.det(B))
    n = B.shape[0]
    if det < SINGULAR_RTOL * np.linalg.norm(B, 2) ** n:
        raise SingularMap(det, time)
    return A @ np.linalg.inv(B)


@dataclass(frozen=True, eq=False)
class TransitionFamily:
    """Transition matrices ``T(t_k, t0)`` on an ascending grid starting at ``t0``.

    ``intermediates`` optionally stores two-time matrices ``T(t_j, t_i)``
    keyed by ``(i, j)`` grid indices.  When present they are used instead of
    inverting the one-time matrices (needed when those are singular, as in
    fully mixing processes).
    """

    times: np.ndarray
    matrices: np.ndarray
    intermediates: Dict[Tuple[int, int], np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        mats = np.asarray(self.matrices, dtype=float)
        if times.ndim != 1 or times.size < 1 or np.any(np.diff(times) <= 0):
            raise ValidationError("times must be a non-empty strictly increasing 1-d array")
        if mats.ndim != 3 or mats.shape[0] != times.size or mats.shape[1] != mats.shape[2]:
            raise ValidationError(f"expected {times.size} square matrices, got shape {mats.shape}")
        if np.max(np.abs(mats[0] - np.eye(mats.shape[1]))) > STOCHASTIC_TOL:
            raise ValidationError("T(t0, t0) must be the identity")
        for t, M in zip(times, mats):
            if not column_sums_ok(M):
                raise ValidationError(f"matrix at t = {t!r} does not have unit column sums")
        inter = {}
        for key, M in dict(self.intermediates).items():
            i, j = (int(k) for k in key)
            if not 0 <= i < j < times.size:
                raise ValidationError(f"intermediate key {key!r} is not an ordered pair of grid indices")
            inter[(i, j)] = _real_square(M, "intermediate")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "matrices", mats)
        object.__setattr__(self, "intermediates", inter)

    @property
    def size(self) -> int:
        return self.matrices.shape[1]

    def intermediate(self, i: int, j: int) -> np.ndarray:
        """``T(t_j, t_i)`` from the stored table or by inversion."""
        if (i, j) in self.intermediates:
            return self.intermediates[(i, j)]
        return classical_intermediate(self.matrices[j], self.matrices[i], self.times[i])


@dataclass
class DivisibilityReport:
    divisible: bool
    violations: List[Tuple[float, float, float]]
    singular: List[Tuple[float, float]]
    composition_defect: float

    def to_json(self) -> dict:
        return {
            "divisible": self.divisible,
            "violations": [{"t1": a, "t2": b, "min_entry": m} for a, b, m in self.violations],
            "singular": [{"t1": a, "t2": b} for a, b in self.singular],
            "composition_defect": self.composition_defect,
        }


def is_divisible(fam: TransitionFamily, tol: float = STOCHASTIC_TOL) -> DivisibilityReport:
    """Check that every consecutive intermediate matrix is stochastic.

    ``composition_defect`` is the largest deviation of
    ``T(t_{k+1}, t_k) T(t_k, t0)`` from ``T(t_{k+1}, t0)``.  Pairs whose
    intermediate cannot be formed are listed in ``singular`` and make the
    report non-divisible.
    """
    violations, singular = [], []
    defect = 0.0
    for k in range(len(fam.times) - 1):
        t1, t2 = float(fam.times[k]), float(fam.times[k + 1])
        try:
            T = fam.intermediate(k, k + 1)
        except SingularMap:
            singular.append((t1, t2))
            continue
        defect = max(defect, float(np.max(np.abs(T @ fam.matrices[k] - fam.matrices[k + 1]))))
        m = float(T.min())
        if m < -tol or not column_sums_ok(T, tol):
            violations.append((t1, t2, m))
    return DivisibilityReport(not violations and not singular, violations, singular, defect)


@dataclass
class ContractionReport:
    contractive: bool
    max_ratio: float
    witness: Optional[np.ndarray]
    trials: int


def l1_contraction_check(T, trials: int = 1000, seed: int = 0, tol: float = 1e-12) -> ContractionReport:
    """Probe ``||T v||_1 <= ||v||_1``.

    Basis vectors are tried first (for a matrix with unit column sums a
    negative entry shows up on the corresponding basis vector), then
    differences of random probability vectors and random real vectors.
    ``witness`` is the first vector with ``||T v||_1 > ||v||_1 + tol``.
    """
    A = _real_square(T)
    n = A.shape[0]
    rng = np.random.default_rng(seed)
    probes = [np.eye(n)]
    if trials > 0:
        p = rng.dirichlet(np.ones(n), size=(trials, 2))
        probes.append(p[:, 0] - p[:, 1])
        probes.append(rng.normal(size=(trials, n)))
    V = np.concatenate(probes)
    before = np.abs(V).sum(axis=1)
    after = np.abs(V @ A.T).sum(axis=1)
    keep = before > 0
    ratios = np.where(keep, after / np.where(keep, before, 1.0), 0.0)
    bad = np.nonzero(after > before + tol)[0]
    witness = V[bad[0]].copy() if bad.size else None
    return ContractionReport(bad.size == 0, float(ratios.max()), witness, int(V.shape[0]))


# ---------------------------------------------------------------------------
# Divisible but non-Markovian three-time example
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ThreeTimeProcess:
    """Joint distribution ``joint[x3, x2, x1]`` of a binary process at three times."""

    joint: np.ndarray
    times: Tuple[float, float, float]

    def marginal(self, which: int) -> np.ndarray:
        """One-time marginal at time index 1, 2 or 3."""
        axes = {3: (1, 2), 2: (0, 2), 1: (0, 1)}[which]
        return self.joint.sum(axis=axes)

    def conditional(self, x3: int, x2: int, x1: int) -> float:
        """``P(x3, t3 | x2, t2; x1, t1)``."""
        denom = self.joint[:, x2, x1].sum()
        if denom == 0:
            raise ValidationError("conditioning event has zero probability")
        return float(self.joint[x3, x2, x1] / denom)

    def pair_marginal(self, later: int, earlier: int) -> np.ndarray:
        """Two-time joint ``P[x_later, x_earlier]``."""
        axes = {1: 2, 2: 1, 3: 0}
        keep = sorted((axes[later], axes[earlier]))
        drop = tuple(a for a in range(3) if a not in keep)
        pair = self.joint.sum(axis=drop)
        return pair.T if axes[later] > axes[earlier] else pair

    def transition(self, later: int, earlier: int) -> np.ndarray:
        """Two-time conditional ``T[x_later, x_earlier]``."""
        pair = self.pair_marginal(later, earlier)
        return pair / pair.sum(axis=0, keepdims=True)


def counterexample_fixture():
    """A process whose two-time statistics look Markovian but are not.

    The four configurations ``(x1, x2, x3)`` with ``x3 = 1 - (x1 xor x2)``
    each have probability 1/4.  Every two-time transition matrix is the
    uniform ``[[1/2, 1/2], [1/2, 1/2]]``, so the transition family is
    divisible, yet ``x3`` is a deterministic function of ``(x1, x2)``.

    Returns ``(process, family)``; the family lives on the three process
    times with ``t1`` as the initial time.
    """
    joint = np.zeros((2, 2, 2))
    for x1, x2, x3 in [(1, 0, 0), (0, 1, 0), (0, 0, 1), (1, 1, 1)]:
        joint[x3, x2, x1] = 0.25
    proc = ThreeTimeProcess(joint, (1.0, 2.0, 3.0))
    fam = TransitionFamily(
        np.array(proc.times),
        np.array([np.eye(2), proc.transition(2, 1), proc.transition(3, 1)]),
        intermediates={(0, 1): proc.transition(2, 1), (1, 2): proc.transition(3, 2)},
    )
    return proc, fam


# ---------------------------------------------------------------------------
# CSV input
# ---------------------------------------------------------------------------

def read_transition_csv(text: str) -> TransitionFamily:
    """Parse a family written as blocks of ``t,<time>`` followed by n matrix rows.

    Blank lines and lines starting with ``#`` are ignored.
    """
    times, mats, current = [], [], None
    for row in csv.reader(io.StringIO(text)):
        row = [c.strip() for c in row]
        if not row or not any(row) or row[0].startswith("#"):
            continue
        if row[0].lower() == "t":
            if len(row) < 2:
                raise ValidationError("time header needs a value: 't,<time>'")
            current = []
            times.append(float(row[1]))
            mats.append(current)
            continue
        if current is None:
            raise ValidationError("matrix row before the first 't,<time>' header")
        current.append([float(c) for c in row if c != ""])
    if not mats:
        raise ValidationError("no transition matrices found")
    try:
        arr = np.array(mats, dtype=float)
    except ValueError as exc:
        raise ValidationError(f"ragged transition matrices: {exc}") from None
    return TransitionFamily(np.array(times), arr)
