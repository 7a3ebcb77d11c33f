"""Witnesses of non-Markovianity: quantities that are monotone under divisible dynamics.

Each witness evaluates a scalar on the evolved states of a propagator family,
records its time derivative and lists the steps where the quantity moves
against its Markovian direction by more than ``MONO_TOL``.
"""

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np
from scipy.optimize import minimize

from nmq import channels, linalg
from nmq.channels import richardson
from nmq.dynamics import SIGMA_X, SIGMA_Y, SIGMA_Z, PropagatorFamily, affine_representation
from nmq.exceptions import ValidationError
from nmq.io import csv_text
from nmq.measures import G_EPS, SIGMA_STEPS, trace_distance_series
from nmq.states import (
    fidelity,
    maximally_entangled,
    maximally_mixed,
    random_state,
    relative_entropy,
    validate_state,
)

MONO_TOL = 1e-7
NON_INCREASING = "non-increasing"
NON_DECREASING = "non-decreasing"
QFI_STEPS = (1e-3, 5e-4)
SLD_SUPPORT_TOL = 1e-10
UNITAL_TOL = 1e-9
X_STATE_TOL = 1e-12
DISCORD_GRID = 16
DISCORD_MAXITER = 200
CAPACITY_SAMPLES = 64


@dataclass
class WitnessSeries:
    """A monotone quantity along a family and the steps that break monotonicity.

    ``rates`` is the time derivative of ``values``; ``extra`` holds
    witness-specific companions (second route, integral quantities,
    caveats).
    """

    kind: str
    times: np.ndarray
    values: np.ndarray
    direction: str
    violations: List[Tuple[float, float]]
    config: dict = field(default_factory=dict)
    rates: Optional[np.ndarray] = None
    extra: dict = field(default_factory=dict)

    @property
    def violation_mask(self) -> np.ndarray:
        mask = np.zeros(self.times.size, dtype=bool)
        hit = {float(t) for t, _ in self.violations}
        for i, t in enumerate(self.times):
            mask[i] = float(t) in hit
        return mask

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "direction": self.direction,
            "violation_count": len(self.violations),
            "violations": [{"t": t, "magnitude": m} for t, m in self.violations],
            "config": self.config,
            "extra": self.extra,
            "times": self.times,
            "values": self.values,
            "rates": self.rates,
        }

    def to_csv(self, config_digest: Optional[str] = None) -> str:
        rates = self.rates if self.rates is not None else np.full(self.times.size, np.nan)
        rows = zip(self.times, self.values, rates, self.violation_mask)
        return csv_text(["t", "value", "rate", "violation"], rows, config_digest)


def find_violations(times, values, direction: str, tol: float = MONO_TOL) -> List[Tuple[float, float]]:
    """Steps ``k -> k+1`` where the series moves against ``direction`` by more than ``tol``.

    Infinite values are allowed: ``inf -> inf`` is no change and
    ``finite -> inf`` is an infinite increase.
    """
    if direction not in (NON_INCREASING, NON_DECREASING):
        raise ValidationError(f"unknown direction {direction!r}")
    v = np.asarray(values, dtype=float)
    with np.errstate(invalid="ignore"):
        inc = np.diff(v)
    same_inf = np.isinf(v[1:]) & (v[1:] == v[:-1])
    inc = np.where(same_inf, 0.0, inc)
    if direction == NON_DECREASING:
        inc = -inc
    out = []
    for k in np.nonzero(np.nan_to_num(inc, nan=0.0, posinf=np.inf) > tol)[0]:
        out.append((float(times[k + 1]), float(inc[k])))
    return out


def _window(fam: PropagatorFamily, interval) -> np.ndarray:
    if interval is None:
        return np.arange(len(fam))
    idx = fam.window(interval)
    if idx.size < 1:
        raise ValidationError(f"interval {tuple(interval)} contains no grid points")
    return idx


def time_derivative(fam: PropagatorFamily, fn: Callable[[np.ndarray], np.ndarray], times, values) -> np.ndarray:
    """``d fn(E(t)) / dt`` at the given times.

    With an evaluator: centered differences extrapolated in the squared step,
    one-sided extrapolation where ``t - h`` would precede ``t0``.  Otherwise
    ``numpy.gradient`` on the grid.
    """
    times = np.asarray(times, dtype=float)
    if fam.evaluator is None:
        if times.size < 2:
            return np.zeros(times.size)
        with np.errstate(invalid="ignore"):
            return np.gradient(np.asarray(values, dtype=float), times)
    out = np.empty(times.size)
    fwd = times - SIGMA_STEPS[0] < fam.t0
    with np.errstate(invalid="ignore"):
        if np.any(~fwd):
            tc = times[~fwd]
            vals = []
            for h in SIGMA_STEPS:
                up = fn(fam.maps_at(tc + h))
                down = fn(fam.maps_at(tc - h))
                vals.append((up - down) / (2 * h))
            out[~fwd] = richardson(vals, [h * h for h in SIGMA_STEPS])
        if np.any(fwd):
            tf = times[fwd]
            base = np.asarray(values, dtype=float)[fwd]
            vals = [(fn(fam.maps_at(tf + e)) - base) / e for e in G_EPS]
            out[fwd] = richardson(vals, G_EPS)
    return out


def _build(kind, fam, interval, fn, direction, config, derivative=True, extra=None) -> WitnessSeries:
    idx = _window(fam, interval)
    ts = fam.times[idx]
    values = np.asarray(fn(fam.maps[idx]), dtype=float)
    rates = time_derivative(fam, fn, ts, values) if derivative else None
    viol = find_violations(ts, values, direction)
    return WitnessSeries(kind, ts, values, direction, viol, config, rates, dict(extra or {}))


def _log(x, base):
    out = np.log(x)
    return out if base is None else out / np.log(base)


def _entropy_batch(rhos: np.ndarray, base=None) -> np.ndarray:
    """von Neumann entropies of a stack of density matrices (small negative eigenvalues clipped)."""
    w = np.linalg.eigvalsh(0.5 * (rhos + linalg.dagger(rhos)))
    w = np.where(w > 0, w, 1.0)
    return -np.sum(np.where(w < 1.0, w * _log(w, base), 0.0), axis=-1)


def _ptrace_batch(rhos: np.ndarray, dA: int, dB: int, keep: int) -> np.ndarray:
    T = rhos.reshape(rhos.shape[:-2] + (dA, dB, dA, dB))
    if keep == 0:
        return np.einsum("...ijkj->...ik", T)
    return np.einsum("...ijil->...jl", T)


# ---------------------------------------------------------------------------
# Distinguishability witnesses
# ---------------------------------------------------------------------------

def trace_distance_witness(fam: PropagatorFamily, rho1, rho2, interval=None) -> WitnessSeries:
    """``D_1[E(rho1), E(rho2)]``; non-increasing under P-divisible dynamics."""
    r1, r2 = validate_state(rho1, "rho1"), validate_state(rho2, "rho2")
    fn = lambda maps: trace_distance_series(maps, r1, r2)  # noqa: E731
    return _build("trace_distance", fam, interval, fn, NON_INCREASING, {"states": _pair_config(r1, r2)})


def _pair_config(r1, r2) -> list:
    return [channels.matrix_to_pairs(r1), channels.matrix_to_pairs(r2)]


def fidelity_witness(fam: PropagatorFamily, rho1, rho2, interval=None) -> WitnessSeries:
    """Uhlmann fidelity of the evolved pair; non-decreasing."""
    r1, r2 = validate_state(rho1, "rho1"), validate_state(rho2, "rho2")

    def fn(maps):
        a, b = channels.apply_batch(maps, r1), channels.apply_batch(maps, r2)
        return np.array([fidelity(x, y) for x, y in zip(a, b)])

    return _build("fidelity", fam, interval, fn, NON_DECREASING, {"states": _pair_config(r1, r2)})


def relative_entropy_witness(fam: PropagatorFamily, rho1, rho2, interval=None, base=None) -> WitnessSeries:
    """``S[E(rho1) || E(rho2)]``; non-increasing, ``inf`` allowed."""
    r1, r2 = validate_state(rho1, "rho1"), validate_state(rho2, "rho2")

    def fn(maps):
        a, b = channels.apply_batch(maps, r1), channels.apply_batch(maps, r2)
        return np.array([relative_entropy(x, y, base) for x, y in zip(a, b)])

    return _build("relative_entropy", fam, interval, fn, NON_INCREASING,
                  {"states": _pair_config(r1, r2), "log_base": base})


# ---------------------------------------------------------------------------
# Quantum Fisher information
# ---------------------------------------------------------------------------

def qfi_sld(rho, drho) -> Tuple[float, bool]:
    """QFI ``sum_{ij} 2 |<i|drho|j>|^2 / (l_i + l_j)`` over pairs with ``l_i + l_j > tol``.

    This solves ``(L rho + rho L) / 2 = drho`` in the eigenbasis of rho,
    restricted to its support.  Returns ``(qfi, rank_deficient)``.
    """
    w, V = linalg.psd_eigh(rho)
    D = V.conj().T @ np.asarray(drho, dtype=complex) @ V
    S = w[:, None] + w[None, :]
    mask = S > SLD_SUPPORT_TOL
    val = float(np.sum(2.0 * np.abs(D[mask]) ** 2 / S[mask]))
    return val, bool(np.any(w <= SLD_SUPPORT_TOL))


def qfi_bures(rho_minus, rho, rho_plus, delta: float) -> float:
    """``4 [D_B^2(rho, rho_+) + D_B^2(rho, rho_-)] / (2 delta^2)`` with ``D_B^2 = 2 (1 - sqrt F)``."""
    s = (1.0 - np.sqrt(fidelity(rho, rho_plus))) + (1.0 - np.sqrt(fidelity(rho, rho_minus)))
    return 4.0 * s / delta ** 2


def qfi_flow_witness(fam: PropagatorFamily, state_family: Callable[[float], np.ndarray], theta: float = 0.0,
                     interval=None) -> WitnessSeries:
    """QFI of ``E(rho_theta)`` with respect to theta, and its flow ``dQFI/dt``.

    The SLD route is the reported series; the Bures route (symmetric steps,
    extrapolated in the squared step) is kept in ``extra["qfi_bures"]`` for
    cross-checking.  Non-increasing under divisible dynamics.
    """
    rho0 = validate_state(state_family(theta), "rho_theta")
    sides = {h: (validate_state(state_family(theta - h)), validate_state(state_family(theta + h)))
             for h in QFI_STEPS}
    drho0 = richardson([(sides[h][1] - sides[h][0]) / (2 * h) for h in QFI_STEPS], [h * h for h in QFI_STEPS])
    flags = {"rank_deficient": False}

    def fn(maps):
        rhos = channels.apply_batch(maps, rho0)
        drhos = channels.apply_batch(maps, drho0)
        out = np.empty(len(maps))
        for i, (r, dr) in enumerate(zip(rhos, drhos)):
            out[i], deficient = qfi_sld(r, dr)
            flags["rank_deficient"] |= deficient
        return out

    series = _build("qfi", fam, interval, fn, NON_INCREASING, {"theta": float(theta), "steps": list(QFI_STEPS)})
    maps = fam.maps[_window(fam, interval)]
    rhos = channels.apply_batch(maps, rho0)
    bures = []
    for h in QFI_STEPS:
        lo, hi = channels.apply_batch(maps, sides[h][0]), channels.apply_batch(maps, sides[h][1])
        bures.append(np.array([qfi_bures(a, r, b, h) for a, r, b in zip(lo, rhos, hi)]))
    qb = richardson(bures, [h * h for h in QFI_STEPS])
    series.extra.update({"qfi_bures": qb, "route_gap": float(np.max(np.abs(qb - series.values)))})
    series.config["rank_deficient"] = flags["rank_deficient"]
    return series


# ---------------------------------------------------------------------------
# Capacities and Bloch volume
# ---------------------------------------------------------------------------

def _is_unital(maps: np.ndarray, d: int) -> bool:
    v = linalg.vec(np.eye(d))
    return bool(np.max(np.abs(maps @ v - v)) <= UNITAL_TOL)


def _purification(rho: np.ndarray) -> np.ndarray:
    w, V = linalg.psd_eigh(rho)
    d = rho.shape[0]
    psi = np.zeros(d * d, dtype=complex)
    for i in range(d):
        psi += np.sqrt(w[i]) * np.kron(V[:, i], np.eye(d)[i])
    return np.outer(psi, psi.conj())


def _capacity_terms(maps: np.ndarray, rho: np.ndarray, base) -> Tuple[np.ndarray, np.ndarray]:
    d = rho.shape[0]
    rho_sa = channels.apply_extended(maps, _purification(rho), d)
    s_out = _entropy_batch(_ptrace_batch(rho_sa, d, d, 0), base)
    s_joint = _entropy_batch(rho_sa, base)
    s_in = _entropy_batch(rho[None], base)[0]
    return s_in + s_out - s_joint, s_out - s_joint


def capacity_witness(fam: PropagatorFamily, interval=None, samples: int = CAPACITY_SAMPLES, seed: int = 0,
                     base=None) -> Tuple[WitnessSeries, WitnessSeries]:
    """Entanglement-assisted classical capacity ``C_ea`` and quantum capacity
    proxy ``Q`` (coherent information), each maximized over the input.

    Unital qubit families use the maximally mixed input (optimal there);
    otherwise the maximum over a fixed seeded set of inputs (always including
    the maximally mixed state) is reported and flagged as a lower bound.
    """
    d = fam.dim
    idx = _window(fam, interval)
    unital_qubit = d == 2 and _is_unital(fam.maps[idx], d)
    inputs = [maximally_mixed(d)]
    if not unital_qubit:
        rng = np.random.default_rng(seed)
        inputs += [random_state(d, rng) for _ in range(int(samples))]
    config = {"inputs": "maximally_mixed" if unital_qubit else "sampled", "samples": 0 if unital_qubit else int(samples),
              "seed": int(seed), "lower_bound": not unital_qubit, "log_base": base}

    def both(maps):
        terms = [_capacity_terms(maps, r, base) for r in inputs]
        return np.max([t[0] for t in terms], axis=0), np.max([t[1] for t in terms], axis=0)

    c_ea = _build("capacity_ea", fam, interval, lambda m: both(m)[0], NON_INCREASING, dict(config))
    q = _build("capacity_q", fam, interval, lambda m: both(m)[1], NON_INCREASING, dict(config))
    return c_ea, q


def bloch_volume_witness(fam: PropagatorFamily, interval=None) -> WitnessSeries:
    """``|det M(t, t0)|`` of the affine Bloch representation; non-increasing.

    Times where ``Tr M <= 0`` are listed in ``extra["insensitive_times"]``:
    the volume can miss non-Markovian behaviour there.
    """
    def fn(maps):
        return np.array([abs(np.linalg.det(affine_representation(E)[0])) for E in maps])

    series = _build("bloch_volume", fam, interval, fn, NON_INCREASING, {})
    idx = _window(fam, interval)
    traces = np.array([np.trace(affine_representation(E)[0]) for E in fam.maps[idx]])
    series.extra["insensitive_times"] = fam.times[idx][traces <= 0]
    return series


# ---------------------------------------------------------------------------
# Correlations with an ancilla
# ---------------------------------------------------------------------------

def _initial_bipartite(fam: PropagatorFamily, initial_state) -> Tuple[np.ndarray, int]:
    d = fam.dim
    if initial_state is None:
        return maximally_entangled(d), d
    rho = validate_state(initial_state, "initial_state")
    k = rho.shape[0] // d
    if k * d != rho.shape[0]:
        raise ValidationError(f"initial state of size {rho.shape[0]} is not system ({d}) x ancilla")
    return rho, k


def entanglement_witness(fam: PropagatorFamily, interval=None, initial_state=None, base=None) -> WitnessSeries:
    """Logarithmic negativity of ``(E kron id)(rho_SA)`` (default ``|Phi><Phi|``); non-increasing.

    ``extra["integral"]`` is ``Delta E + sum_k |E_{k+1} - E_k|``, which
    vanishes for divisible dynamics.
    """
    rho, k = _initial_bipartite(fam, initial_state)
    d = fam.dim

    def fn(maps):
        out = channels.apply_extended(maps, rho, k)
        pt = np.array([linalg.partial_transpose(x, (d, k), 1) for x in out])
        return _log(linalg.trace_norm_hermitian_batch(pt), base)

    series = _build("entanglement", fam, interval, fn, NON_INCREASING, {"ancilla_dim": k, "log_base": base})
    v = series.values
    series.extra["integral"] = float(v[-1] - v[0] + np.sum(np.abs(np.diff(v))))
    return series


def mutual_info_witness(fam: PropagatorFamily, interval=None, initial_state=None, base=None) -> WitnessSeries:
    """Quantum mutual information of ``(E kron id)(rho_SA)``; non-increasing."""
    rho, k = _initial_bipartite(fam, initial_state)
    d = fam.dim

    def fn(maps):
        out = channels.apply_extended(maps, rho, k)
        return (_entropy_batch(_ptrace_batch(out, d, k, 0), base) + _entropy_batch(_ptrace_batch(out, d, k, 1), base)
                - _entropy_batch(out, base))

    return _build("mutual_information", fam, interval, fn, NON_INCREASING, {"ancilla_dim": k, "log_base": base})


def _projectors(n: np.ndarray) -> np.ndarray:
    """Projectors ``(I +- n.sigma)/2`` for unit vectors ``n`` of shape (..., 3); shape (..., 2, 2, 2)."""
    ns = np.einsum("...i,iab->...ab", n, np.array([SIGMA_X, SIGMA_Y, SIGMA_Z]))
    eye = np.eye(2)
    return np.stack([0.5 * (eye + ns), 0.5 * (eye - ns)], axis=-3)


def conditional_entropy_after(rho_sa: np.ndarray, d: int, n: np.ndarray, base=None) -> np.ndarray:
    """``sum_j p_j S(rho_{S|j})`` for projective ancilla measurements along each ``n``."""
    n = np.atleast_2d(n)
    P = _projectors(n)  # (m, 2, 2, 2)
    T = rho_sa.reshape(d, 2, d, 2)
    cond = np.einsum("iajb,mkba->mkij", T, P)
    p = np.real(np.einsum("mkii->mk", cond))
    safe = np.where(p > 1e-15, p, 1.0)
    s = _entropy_batch(cond / safe[..., None, None], base)
    return np.sum(np.where(p > 1e-15, p * s, 0.0), axis=-1)


def _is_x_state(rho: np.ndarray) -> bool:
    if rho.shape != (4, 4):
        return False
    mask = np.ones((4, 4), dtype=bool)
    mask[np.arange(4), np.arange(4)] = False
    mask[np.arange(4), 3 - np.arange(4)] = False
    return bool(np.max(np.abs(rho[mask])) <= X_STATE_TOL)


def discord(rho_sa, d: int, grid: int = DISCORD_GRID, maxiter: int = DISCORD_MAXITER, base=None) -> Tuple[float, str]:
    """Ancilla-side discord restricted to projective qubit measurements.

    ``S(rho_A) - S(rho_SA) + min_n sum_j p_j S(rho_{S|j})``.  Two-qubit
    X-states use the ``sigma_z`` / ``sigma_x`` candidates; other states use a
    Bloch-angle grid followed by Nelder-Mead.  Returns ``(value, method)``.
    """
    rho = np.asarray(rho_sa, dtype=complex)
    s_a = _entropy_batch(_ptrace_batch(rho[None], d, 2, 1), base)[0]
    s_sa = _entropy_batch(rho[None], base)[0]
    if d == 2 and _is_x_state(rho):
        cands = np.array([[0.0, 0.0, 1.0], [1.0, 0.0, 0.0]])
        best = float(np.min(conditional_entropy_after(rho, d, cands, base)))
        method = "x-state"
    else:
        th = np.linspace(0.0, np.pi / 2, grid)
        ph = np.linspace(0.0, 2 * np.pi, grid, endpoint=False)
        TH, PH = np.meshgrid(th, ph, indexing="ij")
        n = np.stack([np.sin(TH) * np.cos(PH), np.sin(TH) * np.sin(PH), np.cos(TH)], axis=-1).reshape(-1, 3)
        vals = conditional_entropy_after(rho, d, n, base)
        i = int(np.argmin(vals))
        x0 = np.array([TH.ravel()[i], PH.ravel()[i]])

        def f(x):
            v = np.array([np.sin(x[0]) * np.cos(x[1]), np.sin(x[0]) * np.sin(x[1]), np.cos(x[0])])
            return float(conditional_entropy_after(rho, d, v, base)[0])

        res = minimize(f, x0, method="Nelder-Mead", options={"maxiter": int(maxiter), "xatol": 1e-9, "fatol": 1e-14})
        best = min(float(vals[i]), float(res.fun))
        method = "grid+nelder-mead"
    return max(float(s_a - s_sa + best), 0.0), method


def discord_witness(fam: PropagatorFamily, interval=None, initial_state=None, grid: int = DISCORD_GRID,
                    maxiter: int = DISCORD_MAXITER, base=None) -> WitnessSeries:
    """Ancilla-side discord of ``(E kron id)(rho_SA)``; non-increasing as long as the ancilla is static.

    Needs a qubit ancilla (the default ``|Phi>`` input therefore needs a
    qubit system).
    """
    rho, k = _initial_bipartite(fam, initial_state)
    if k != 2:
        raise ValidationError("discord witness supports a qubit ancilla only")
    d = fam.dim
    methods = set()

    def fn(maps):
        out = channels.apply_extended(maps, rho, k)
        vals = []
        for x in out:
            v, m = discord(x, d, grid, maxiter, base)
            methods.add(m)
            vals.append(v)
        return np.array(vals)

    series = _build("discord", fam, interval, fn, NON_INCREASING,
                    {"ancilla_dim": k, "grid": int(grid), "maxiter": int(maxiter), "log_base": base,
                     "measurements": "projective"})
    series.config["methods"] = sorted(methods)
    return series
