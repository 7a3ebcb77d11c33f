"""Quantifiers of non-Markovianity.

Divisibility-based measures work with ``g(t)``, the right derivative of the
Choi trace norm of the intermediate map ``E(t + eps, t)``.  Two routes are
available: through a propagator family (``route="map"``) or directly through
a generator (``route="generator"``).  Distinguishability-based measures
(BLP, Helstrom, k-divisibility) look at the increments of trace norms of
evolved Helstrom matrices.
"""

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple, Union

import numpy as np
from scipy.integrate import simpson
from scipy.optimize import minimize

from nmq import channels, linalg
from nmq.channels import richardson
from nmq.dynamics import SIGMA_X, SIGMA_Y, SIGMA_Z, GKSLGenerator, PropagatorFamily, canonical_form
from nmq.exceptions import ValidationError
from nmq.io import csv_text, ordered_map
from nmq.states import pure

G_EPS = (1e-4, 5e-5, 2.5e-5)
SIGMA_STEPS = (1e-4, 5e-5)
THETA_IND = 1e-8
DEFAULT_INTERVALS = 512
DEGREE_RTOL = 1e-6
DEGREE_MAX_INTERVALS = 2 ** 15
# per-step changes of a trace norm below this are treated as roundoff
INCREMENT_TOL = 1e-10
RATIO_FLOOR = 1e-9
BLP_GRID = 24
BLP_MAXITER = 200
DEFAULT_SAMPLES = 2000
Q_GRID = tuple(np.round(np.linspace(0.1, 0.9, 9), 10))
CHUNK = 128

Source = Union[PropagatorFamily, GKSLGenerator]


@dataclass
class MeasureReport:
    """Outcome of a measure evaluation.

    ``trace`` holds per-time samples (always including ``"t"``);
    ``metadata`` holds optimizer settings, seeds and best witnesses.
    """

    kind: str
    interval: Tuple[float, float]
    value: float
    normalized: Optional[float] = None
    trace: Dict[str, np.ndarray] = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)
    lower_bound: bool = False

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "interval": [float(self.interval[0]), float(self.interval[1])],
            "value": self.value,
            "normalized": self.normalized,
            "lower_bound": self.lower_bound,
            "metadata": self.metadata,
            "trace": {k: np.asarray(v) for k, v in self.trace.items()},
        }

    def trace_csv(self, config_digest: Optional[str] = None) -> str:
        keys = ["t"] + sorted(k for k in self.trace if k != "t")
        cols = [np.asarray(self.trace[k]) for k in keys]
        return csv_text(keys, zip(*cols), config_digest)


# ---------------------------------------------------------------------------
# g(t)
# ---------------------------------------------------------------------------

@dataclass
class GSeries:
    times: np.ndarray
    g: np.ndarray
    singular: np.ndarray
    route: str

    @property
    def gbar(self) -> np.ndarray:
        """``tanh(g)``, with singular samples counted as 1."""
        return np.where(self.singular, 1.0, np.tanh(np.where(self.singular, 0.0, self.g)))


def _g_from_excess(excess: List[np.ndarray]) -> np.ndarray:
    vals = [ex / e for ex, e in zip(excess, G_EPS)]
    return np.maximum(richardson(vals, G_EPS), 0.0)


def g_generator_series(gen: GKSLGenerator, times) -> Tuple[np.ndarray, np.ndarray]:
    """``g = lim_{eps -> 0+} (||(1 + eps L_t kron 1)(|Phi><Phi|)||_1 - 1) / eps``.

    The limit is taken in closed form.  With ``X = (L_t kron 1)(|Phi><Phi|)``
    and ``Q`` the projector orthogonal to ``|Phi>``, the one-sided derivative
    of the trace norm at the rank-one state is ``||Q X Q||_1 - Tr(Q X Q)``,
    twice the weight of the negative eigenvalues of ``Q X Q``.  Finite
    differences of the first-order map would pick up a spurious
    ``O(eps ||H||^2)`` excess when a rate is small compared with the
    Hamiltonian.

    Times inside a rate pole-exclusion zone are singular and get ``g = inf``.
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    sing = gen.singular_times(times)
    g = np.full(times.shape, np.inf)
    ok = ~sing
    if np.any(ok):
        L = gen.liouvillian_batch(times[ok])
        d = gen.dim
        X = channels.choi_batch(L)
        Q = np.eye(d * d) - channels.choi_batch(np.eye(d * d))
        QXQ = Q @ X @ Q
        w = np.linalg.eigvalsh(0.5 * (QXQ + np.conj(np.swapaxes(QXQ, -1, -2))))
        g[ok] = np.maximum(-2.0 * np.sum(np.minimum(w, 0.0), axis=-1), 0.0)
    return g, sing


def _singular_mask(B: np.ndarray) -> np.ndarray:
    n = B.shape[-1]
    det = np.abs(np.linalg.det(B))
    smax = np.linalg.norm(B, 2, axis=(-2, -1))
    return det < channels.SINGULAR_RTOL * smax ** n


def _intermediate_stack(A: np.ndarray, B: np.ndarray, sing: np.ndarray, strategy: str) -> np.ndarray:
    """``A_i B_i^{-1}`` for non-singular ``B_i``; singular rows follow ``strategy``
    (left as NaN under ``exact``)."""
    out = np.full(A.shape, np.nan, dtype=complex)
    ok = ~sing
    if np.any(ok):
        out[ok] = A[ok] @ np.linalg.inv(B[ok])
    if strategy != "exact":
        for i in np.nonzero(sing)[0]:
            out[i] = channels.intermediate_map(A[i], B[i], strategy)
    return out


def g_map_series(fam: PropagatorFamily, times, strategy: str = "exact") -> Tuple[np.ndarray, np.ndarray]:
    """``g`` from the Choi trace norm of ``E(t + eps, t)`` extrapolated to eps = 0.

    Needs a family evaluator.  Under the ``exact`` strategy, times where
    ``E(t, t0)`` is singular are flagged and get ``g = inf``; other
    strategies replace the inverse at those times only.
    """
    if strategy not in channels.STRATEGIES:
        raise ValidationError(f"unknown inverse strategy {strategy!r}")
    if fam.evaluator is None:
        raise ValidationError("map route at arbitrary times needs a family evaluator")
    times = np.atleast_1d(np.asarray(times, dtype=float))
    E_t = fam.maps_at(times)
    sing = _singular_mask(E_t)
    flagged = sing if strategy == "exact" else np.zeros_like(sing)
    ok = ~flagged
    g = np.full(times.shape, np.inf)
    if np.any(ok):
        excess = []
        for e in G_EPS:
            inter = _intermediate_stack(fam.maps_at(times[ok] + e), E_t[ok], sing[ok], strategy)
            excess.append(channels.choi_trace_norm(inter) - 1.0)
        g[ok] = _g_from_excess(excess)
    return g, flagged


def _g_map_grid(fam: PropagatorFamily, idx: np.ndarray, strategy: str) -> Tuple[np.ndarray, np.ndarray]:
    """Forward differences on the stored grid (families without an evaluator)."""
    n = len(fam)
    if n < 2:
        raise ValidationError("need at least two grid points")
    g = np.empty(idx.size)
    sing = np.zeros(idx.size, dtype=bool)
    for out, k in enumerate(idx):
        a, b = (k, k + 1) if k + 1 < n else (k - 1, k)
        try:
            inter = channels.intermediate_map(fam.maps[b], fam.maps[a], "exact", time=fam.times[a])
        except Exception:
            if strategy == "exact":
                g[out], sing[out] = np.inf, True
                continue
            inter = channels.intermediate_map(fam.maps[b], fam.maps[a], strategy)
        dt = fam.times[b] - fam.times[a]
        g[out] = max((channels.choi_trace_norm(inter) - 1.0) / dt, 0.0)
    return g, sing


def _resolve_route(source: Source, route: str) -> str:
    if route == "auto":
        return "generator" if isinstance(source, GKSLGenerator) else "map"
    if route not in ("map", "generator"):
        raise ValidationError(f"unknown route {route!r}; expected 'map', 'generator' or 'auto'")
    if route == "map" and isinstance(source, GKSLGenerator):
        raise ValidationError("the map route needs a propagator family")
    if route == "generator" and isinstance(source, PropagatorFamily) and source.generator is None:
        raise ValidationError("family has no generator attached; use the map route")
    return route


def _sampler(source: Source, route: str, strategy: str) -> Optional[Callable]:
    """Function ``times -> (g, singular)``, or ``None`` when only grid values exist."""
    route = _resolve_route(source, route)
    if route == "generator":
        gen = source if isinstance(source, GKSLGenerator) else source.generator
        return lambda ts: g_generator_series(gen, ts)
    if source.evaluator is None:
        return None
    return lambda ts: g_map_series(source, ts, strategy)


def g_function(source: Source, t: float, route: str = "auto", strategy: str = "exact") -> float:
    """``g(t)``; ``inf`` at a singular instant."""
    sampler = _sampler(source, route, strategy)
    if sampler is None:
        idx = np.nonzero(np.isclose(source.times, t, rtol=0, atol=1e-12))[0]
        if idx.size == 0:
            raise ValidationError("family has no evaluator; t must be a grid time")
        g, _ = _g_map_grid(source, idx, strategy)
        return float(g[0])
    g, _ = sampler(np.array([t], dtype=float))
    return float(g[0])


def _interval_grid(source: Source, interval, intervals: int) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    if isinstance(source, PropagatorFamily):
        if interval is None:
            interval = (source.times[0], source.times[-1])
        idx = source.window(interval)
        if idx.size < 2:
            raise ValidationError(f"interval {tuple(interval)} contains fewer than two grid points")
        return source.times[idx], idx
    if interval is None:
        raise ValidationError("an interval is required for generator sources")
    ta, tb = (float(x) for x in interval)
    if not ta < tb:
        raise ValidationError("interval must satisfy t_a < t_b")
    return np.linspace(ta, tb, int(intervals) + 1), None


def g_series(source: Source, interval=None, route: str = "auto", strategy: str = "exact",
             intervals: int = DEFAULT_INTERVALS) -> GSeries:
    """``g`` on the family grid inside ``interval`` (or a uniform grid for generators)."""
    route_r = _resolve_route(source, route)
    ts, idx = _interval_grid(source, interval, intervals)
    sampler = _sampler(source, route_r, strategy)
    if sampler is None:
        g, sing = _g_map_grid(source, idx, strategy)
        return GSeries(ts, g, sing, "map-grid")
    g, sing = sampler(ts)
    return GSeries(ts, g, sing, route_r)


def _interval_of(ts) -> Tuple[float, float]:
    return float(ts[0]), float(ts[-1])


def rhp_measure(source: Source, interval=None, route: str = "auto", strategy: str = "exact",
                intervals: int = DEFAULT_INTERVALS) -> MeasureReport:
    """``N_RHP = int_I g dt`` by composite Simpson; ``inf`` if any sample is singular."""
    gs = g_series(source, interval, route, strategy, intervals)
    if np.any(gs.singular):
        value = float("inf")
    else:
        value = max(float(simpson(gs.g, x=gs.times)), 0.0)
    meta = {
        "route": gs.route,
        "strategy": strategy,
        "singular_samples": int(np.sum(gs.singular)),
        "exp_normalized": 1.0 - np.exp(-value),
        "rational_normalized": 1.0 if np.isinf(value) else value / (1.0 + value),
    }
    return MeasureReport("rhp", _interval_of(gs.times), value, None,
                         {"t": gs.times, "g": gs.g, "gbar": gs.gbar, "singular": gs.singular}, meta)


# -- normalized degree --------------------------------------------------------

def _classes(gbar: np.ndarray, sing: np.ndarray) -> np.ndarray:
    return np.where(sing, 2, np.where(gbar > THETA_IND, 1, 0))


def _bar(g: np.ndarray, sing: np.ndarray) -> np.ndarray:
    return np.where(sing, 1.0, np.tanh(np.where(sing, 0.0, g)))


def _locate_breaks(sampler, left, right, cls_left, v_left, v_right, iters=60):
    """Vectorized bisection for the point where the class of the left end stops holding."""
    a, b = left.copy(), right.copy()
    va, vb = v_left.copy(), v_right.copy()
    for _ in range(iters):
        active = (b - a) > 1e-12 * np.maximum(1.0, np.abs(a))
        if not np.any(active):
            break
        m = 0.5 * (a[active] + b[active])
        g, s = sampler(m)
        vm = _bar(g, s)
        same = _classes(vm, s) == cls_left[active]
        ia = np.nonzero(active)[0]
        a[ia[same]], va[ia[same]] = m[same], vm[same]
        b[ia[~same]], vb[ia[~same]] = m[~same], vm[~same]
    return 0.5 * (a + b), va, vb


def _degree_parts(ts, vals, cls, sampler) -> Tuple[float, float]:
    """``(int gbar, support length)`` with class changes located by bisection."""
    num = 0.0
    sup = 0.0
    edges = np.nonzero(cls[1:] != cls[:-1])[0]
    starts = np.concatenate([[0], edges + 1])
    ends = np.concatenate([edges, [ts.size - 1]])
    for s, e in zip(starts, ends):
        if e == s:
            continue
        length = ts[e] - ts[s]
        num += length if cls[s] == 2 else float(simpson(vals[s:e + 1], x=ts[s:e + 1]))
        if cls[s]:
            sup += length
    if edges.size:
        if sampler is None:
            tstar = 0.5 * (ts[edges] + ts[edges + 1])
            va, vb = vals[edges], vals[edges + 1]
        else:
            tstar, va, vb = _locate_breaks(sampler, ts[edges], ts[edges + 1], cls[edges],
                                           vals[edges], vals[edges + 1])
        for k, tk, x, y in zip(edges, tstar, va, vb):
            for lo, hi, c, v1, v2 in ((ts[k], tk, cls[k], vals[k], x), (tk, ts[k + 1], cls[k + 1], y, vals[k + 1])):
                length = hi - lo
                num += length if c == 2 else 0.5 * length * (v1 + v2)
                if c:
                    sup += length
    return num, sup


def rhp_degree(source: Source, interval=None, route: str = "auto", strategy: str = "exact",
               intervals: int = DEFAULT_INTERVALS, rtol: float = DEGREE_RTOL,
               max_intervals: int = DEGREE_MAX_INTERVALS) -> MeasureReport:
    """Normalized degree ``int_I tanh(g) / |{t in I : tanh(g) > theta}|`` in [0, 1].

    Singular instants count with ``tanh(g) = 1``.  The integrals are
    composite Simpson on smooth pieces; the points where the integrand
    switches between zero, positive and singular are located by bisection.
    The grid is doubled until the degree changes by less than ``rtol``
    (relative) or ``max_intervals`` is reached.  An empty support gives 0.
    """
    route_r = _resolve_route(source, route)
    ts, idx = _interval_grid(source, interval, intervals)
    sampler = _sampler(source, route_r, strategy)
    if sampler is None:
        g, sing = _g_map_grid(source, idx, strategy)
    else:
        g, sing = sampler(ts)
    history = []
    converged = False
    while True:
        vals = _bar(g, sing)
        num, sup = _degree_parts(ts, vals, _classes(vals, sing), sampler)
        degree = min(max(num / sup, 0.0), 1.0) if sup > 0 else 0.0
        history.append({"intervals": int(ts.size - 1), "degree": degree})
        if len(history) > 1:
            prev = history[-2]["degree"]
            if abs(degree - prev) <= rtol * max(abs(degree), 1e-300) or degree == prev:
                converged = True
                break
        if sampler is None or ts.size - 1 >= max_intervals:
            break
        mids = 0.5 * (ts[:-1] + ts[1:])
        gm, sm = sampler(mids)
        ts = np.insert(ts, np.arange(1, ts.size), mids)
        g = np.insert(g, np.arange(1, g.size), gm)
        sing = np.insert(sing, np.arange(1, sing.size), sm)
    route_name = "map-grid" if sampler is None else route_r
    meta = {
        "route": route_name,
        "strategy": strategy,
        "theta": THETA_IND,
        "converged": converged,
        "refinement": history,
        "numerator": num,
        "support_length": sup,
        "singular_samples": int(np.sum(sing)),
    }
    return MeasureReport("rhp_degree", _interval_of(ts), degree, degree,
                         {"t": ts, "g": g, "gbar": vals, "singular": sing}, meta)


# -- canonical decay rates ----------------------------------------------------

def _decay_rates(gen: GKSLGenerator, interval, intervals: int):
    ts, _ = _interval_grid(gen, interval, intervals)
    sing = gen.singular_times(ts)
    n = gen.dim ** 2 - 1
    rates = np.full((ts.size, n), np.nan)
    for i, t in enumerate(ts):
        if not sing[i]:
            rates[i] = canonical_form(gen, t).rates
    fj = np.where(sing[:, None], np.inf, np.maximum(-np.nan_to_num(rates), 0.0))
    return ts, sing, rates, fj


def decay_rate_measure(gen: GKSLGenerator, interval, intervals: int = DEFAULT_INTERVALS) -> MeasureReport:
    """``N_gamma = int_I sum_j max(-gamma_j, 0) dt`` over the canonical decay rates.

    Rates are labelled by their sorted position (descending) at each time;
    ``F_j`` integrates each slot separately and the non-Markovianity index
    counts the slots with ``F_j > theta``.
    """
    ts, sing, rates, fj = _decay_rates(gen, interval, intervals)
    if np.any(sing):
        F = np.full(fj.shape[1], np.inf)
        value = float("inf")
    else:
        F = np.array([max(float(simpson(fj[:, j], x=ts)), 0.0) for j in range(fj.shape[1])])
        value = float(max(simpson(fj.sum(axis=1), x=ts), 0.0))
    trace = {"t": ts, "f": fj.sum(axis=1)}
    for j in range(fj.shape[1]):
        trace[f"f_{j + 1}"] = fj[:, j]
        trace[f"gamma_{j + 1}"] = rates[:, j]
    meta = {
        "F": F,
        "index": int(np.sum(F > THETA_IND)),
        "theta": THETA_IND,
        "singular_samples": int(np.sum(sing)),
    }
    return MeasureReport("decay_rate", _interval_of(ts), value, None, trace, meta)


def nm_index(gen: GKSLGenerator, interval, intervals: int = DEFAULT_INTERVALS) -> int:
    """Number of canonical decay channels that are negative on a set of positive measure."""
    return decay_rate_measure(gen, interval, intervals).metadata["index"]


# ---------------------------------------------------------------------------
# Distinguishability-based measures
# ---------------------------------------------------------------------------

def _positive_part(norms: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Sums of increments above / below ``INCREMENT_TOL`` along the last axis."""
    inc = np.diff(norms, axis=-1)
    pos = np.where(inc > INCREMENT_TOL, inc, 0.0).sum(axis=-1)
    neg = np.where(inc < -INCREMENT_TOL, inc, 0.0).sum(axis=-1)
    return pos, neg


def _window(fam: PropagatorFamily, interval) -> np.ndarray:
    if interval is None:
        interval = (fam.times[0], fam.times[-1])
    idx = fam.window(interval)
    if idx.size < 2:
        raise ValidationError(f"interval {tuple(interval)} contains fewer than two grid points")
    return idx


def trace_distance_series(maps: np.ndarray, rho1, rho2) -> np.ndarray:
    """``D_1`` between the images of two states under each map of a stack."""
    delta = np.asarray(rho1, dtype=complex) - np.asarray(rho2, dtype=complex)
    return 0.5 * linalg.trace_norm_hermitian_batch(channels.apply_batch(maps, delta))


def blp_sigma(fam: PropagatorFamily, rho1, rho2, t: float) -> float:
    """``sigma(t) = dD_1/dt`` for the pair evolved by the family.

    With an evaluator: centered differences over ``SIGMA_STEPS`` extrapolated
    in the squared step (one-sided extrapolation at ``t0``).  Without one:
    second-order differences on the grid.
    """
    if fam.evaluator is None:
        D = trace_distance_series(fam.maps, rho1, rho2)
        k = int(np.argmin(np.abs(fam.times - t)))
        return float(np.gradient(D, fam.times)[k])
    if t - SIGMA_STEPS[0] < fam.t0:
        base = trace_distance_series(fam.maps_at([t]), rho1, rho2)[0]
        vals = [(trace_distance_series(fam.maps_at([t + e]), rho1, rho2)[0] - base) / e for e in G_EPS]
        return float(richardson(vals, G_EPS))
    vals = []
    for h in SIGMA_STEPS:
        D = trace_distance_series(fam.maps_at([t - h, t + h]), rho1, rho2)
        vals.append((D[1] - D[0]) / (2 * h))
    return float(richardson(vals, [h * h for h in SIGMA_STEPS]))


def _bloch_unit(theta, phi) -> np.ndarray:
    return np.array([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)])


def blp_measure(fam: PropagatorFamily, interval=None, grid: int = BLP_GRID, maxiter: int = BLP_MAXITER,
                samples: int = DEFAULT_SAMPLES, seed: int = 0) -> MeasureReport:
    """``N_BLP = max over pairs of the total increase of D_1`` on the grid.

    The increase is accumulated as the sum of positive one-step increments of
    ``D_1`` (exact for piecewise monotone behaviour between grid points).
    Qubits: antipodal pure pairs on a ``grid x grid`` Bloch-angle grid plus
    the ``|+>, |->`` pair, refined by Nelder-Mead.  Larger dimensions: random
    pure pairs, reported as a lower bound.
    """
    idx = _window(fam, interval)
    maps = fam.maps[idx]
    ts = fam.times[idx]
    d = fam.dim
    meta = {"seed": int(seed)}
    if d == 2:
        S = np.array([channels.apply_batch(maps, s) for s in (SIGMA_X, SIGMA_Y, SIGMA_Z)])

        def scores(n):
            X = np.einsum("ci,inab->cnab", np.atleast_2d(n), S)
            return _positive_part(0.5 * linalg.trace_norm_hermitian_batch(X))[0]

        th = (np.arange(grid) + 0.5) * np.pi / grid
        ph = np.arange(grid) * 2 * np.pi / grid
        TH, PH = np.meshgrid(th, ph, indexing="ij")
        angles = np.concatenate([np.stack([TH.ravel(), PH.ravel()], axis=1), [[np.pi / 2, 0.0]]])
        n_vecs = _bloch_unit(angles[:, 0], angles[:, 1]).T
        sc = scores(n_vecs)
        best = int(np.argmax(sc))
        start, best_val = angles[best], float(sc[best])
        res = minimize(lambda x: -scores(_bloch_unit(x[0], x[1]))[0], start, method="Nelder-Mead",
                       options={"maxiter": int(maxiter), "xatol": 1e-8, "fatol": 1e-14})
        if -res.fun > best_val:
            start, best_val = res.x, float(-res.fun)
        n_best = _bloch_unit(*start)
        rho1 = 0.5 * (np.eye(2) + n_best[0] * SIGMA_X + n_best[1] * SIGMA_Y + n_best[2] * SIGMA_Z)
        rho2 = np.eye(2) - rho1
        meta.update({"grid": int(grid), "maxiter": int(maxiter), "nelder_mead_evaluations": int(res.nfev),
                     "best_bloch_angles": [float(start[0]), float(start[1])]})
        lower = False
    else:
        rng = np.random.default_rng(seed)
        z = rng.normal(size=(samples, 2, d)) + 1j * rng.normal(size=(samples, 2, d))
        z /= np.linalg.norm(z, axis=-1, keepdims=True)
        P = np.einsum("cka,ckb->ckab", z, z.conj())
        delta = P[:, 0] - P[:, 1]
        norms = _evolved_norms(maps, delta, d, 1)
        sc = _positive_part(0.5 * norms)[0]
        best = int(np.argmax(sc))
        best_val = float(sc[best])
        rho1, rho2 = P[best, 0], P[best, 1]
        meta.update({"samples": int(samples)})
        lower = True
    D = trace_distance_series(maps, rho1, rho2)
    sigma = np.gradient(D, ts) if ts.size > 1 else np.zeros_like(D)
    meta["best_states"] = [channels.matrix_to_pairs(rho1), channels.matrix_to_pairs(rho2)]
    return MeasureReport("blp", _interval_of(ts), best_val, None, {"t": ts, "D1": D, "sigma": sigma}, meta, lower)


def _evolved_norms(maps: np.ndarray, X: np.ndarray, d: int, k: int, workers=None) -> np.ndarray:
    """``||(E(t) kron id_k)(X_c)||_1`` for every candidate ``c`` and every map; shape ``(C, N)``."""
    T = channels._as_tensor(maps, d)
    chunks = [X[i:i + CHUNK] for i in range(0, X.shape[0], CHUNK)]

    def run(Xc):
        Xt = Xc.reshape(Xc.shape[0], d, k, d, k)
        out = np.einsum("npqij,ciajb->cnpaqb", T, Xt).reshape(Xc.shape[0], maps.shape[0], d * k, d * k)
        return linalg.trace_norm_hermitian_batch(out)

    parts = ordered_map(run, chunks, workers)
    return np.concatenate(parts) if parts else np.zeros((0, maps.shape[0]))


def _random_helstrom(rng: np.random.Generator, n: int, dim: int) -> Tuple[np.ndarray, np.ndarray]:
    q = rng.choice(np.asarray(Q_GRID), size=n)
    z = rng.normal(size=(n, 2, dim)) + 1j * rng.normal(size=(n, 2, dim))
    z /= np.linalg.norm(z, axis=-1, keepdims=True)
    P = np.einsum("cka,ckb->ckab", z, z.conj())
    return q, q[:, None, None] * P[:, 0] - (1 - q)[:, None, None] * P[:, 1]


def _embed(X: np.ndarray, d: int, k_from: int, k_to: int) -> np.ndarray:
    """Place operators on ``d x k_from`` into ``d x k_to`` (ancilla subspace of the first basis vectors)."""
    if k_from == k_to:
        return X
    c = X.shape[0]
    out = np.zeros((c, d, k_to, d, k_to), dtype=complex)
    out[:, :, :k_from, :, :k_from] = X.reshape(c, d, k_from, d, k_from)
    return out.reshape(c, d * k_to, d * k_to)


def _explicit_candidates(d: int, k: int, candidates) -> Tuple[np.ndarray, np.ndarray]:
    """Built-in ``|+>, |->`` (qubits) plus user triples ``(q, rho1, rho2)`` embedded into ``d x k``."""
    items = []
    if d == 2:
        items.append((0.5, pure([1, 1]), pure([1, -1])))
    items.extend(candidates or [])
    qs, Xs = [], []
    for q, r1, r2 in items:
        r1, r2 = np.asarray(r1, dtype=complex), np.asarray(r2, dtype=complex)
        X = (q * r1 - (1 - q) * r2)[None]
        if X.shape[-1] == d:
            X = _embed(X, d, 1, k)
        elif X.shape[-1] != d * k:
            raise ValidationError(f"candidate of size {X.shape[-1]} fits neither d = {d} nor d*k = {d * k}")
        qs.append(q)
        Xs.append(X[0])
    if not Xs:
        return np.zeros(0), np.zeros((0, d * k, d * k), dtype=complex)
    return np.array(qs, dtype=float), np.array(Xs)


def helstrom_measure(fam: PropagatorFamily, interval=None, ancilla_dim: Optional[int] = None,
                     samples: int = DEFAULT_SAMPLES, seed: int = 0, candidates=None,
                     workers=None) -> MeasureReport:
    """Sampled lower bound on ``N_H``: the largest total increase of
    ``||(E kron id)(q rho1 - (1 - q) rho2)||_1`` over random pure pairs on
    system x ancilla and priors ``q`` from a fixed grid.

    ``candidates`` adds explicit ``(q, rho1, rho2)`` triples (system-only
    states are embedded with the ancilla in ``|0>``); for qubits the
    ``|+>, |->`` pair with ``q = 1/2`` is always included.
    """
    idx = _window(fam, interval)
    maps, ts, d = fam.maps[idx], fam.times[idx], fam.dim
    k = d if ancilla_dim is None else int(ancilla_dim)
    if k < 1:
        raise ValidationError("ancilla dimension must be at least 1")
    q_fix, X_fix = _explicit_candidates(d, k, candidates)
    q_rnd, X_rnd = _random_helstrom(np.random.default_rng(seed), int(samples), d * k)
    qs = np.concatenate([q_fix, q_rnd])
    X = np.concatenate([X_fix, X_rnd])
    norms = _evolved_norms(maps, X, d, k, workers)
    pos, _ = _positive_part(norms)
    best = int(np.argmax(pos)) if pos.size else 0
    meta = {
        "seed": int(seed),
        "samples": int(samples),
        "explicit_candidates": int(X_fix.shape[0]),
        "ancilla_dim": k,
        "q_grid": list(Q_GRID),
        "best_q": float(qs[best]) if qs.size else None,
        "best_candidate": best,
        "best_matrix": channels.matrix_to_pairs(X[best]) if X.shape[0] else None,
    }
    value = float(pos[best]) if pos.size else 0.0
    trace = {"t": ts, "norm": norms[best] if pos.size else np.zeros(ts.size)}
    return MeasureReport("helstrom", _interval_of(ts), value, None, trace, meta, True)


def k_divisibility_degree(fam: PropagatorFamily, interval=None, k: int = 1, samples: int = DEFAULT_SAMPLES,
                          seed: int = 0, candidates=None, workers=None) -> MeasureReport:
    """Sampled ``sup N+ / |N-|`` for Helstrom matrices with a ``k``-level ancilla.

    Candidate sets are nested: level ``j <= k`` contributes ``samples``
    random matrices on ``d x j`` (seeded by ``(seed, j)``), so the values for
    ``k = 1, 2, ...`` on the same seed are non-decreasing.  Level 1 also
    holds the explicit candidates (``|+>, |->`` for qubits).  A candidate
    with ``|N-|`` below a small floor scores 0 (the ``0/0 = 0`` convention).
    """
    k = int(k)
    if k < 1:
        raise ValidationError("k must be at least 1")
    idx = _window(fam, interval)
    maps, ts, d = fam.maps[idx], fam.times[idx], fam.dim
    levels = []
    best = (0.0, None, None)
    raw_max = 0.0
    for j in range(1, k + 1):
        q, X = _random_helstrom(np.random.default_rng([int(seed), j]), int(samples), d * j)
        if j == 1:
            q_fix, X_fix = _explicit_candidates(d, 1, candidates)
            q, X = np.concatenate([q_fix, q]), np.concatenate([X_fix, X])
        norms = _evolved_norms(maps, X, d, j, workers)
        pos, neg = _positive_part(norms)
        ratio = np.where(np.abs(neg) > RATIO_FLOOR, pos / np.where(np.abs(neg) > RATIO_FLOOR, -neg, 1.0), 0.0)
        i = int(np.argmax(ratio))
        raw_max = max(raw_max, float(ratio[i]))
        if ratio[i] > best[0]:
            best = (float(ratio[i]), j, norms[i])
        levels.append(min(best[0], 1.0))
    value = min(best[0], 1.0)
    meta = {
        "seed": int(seed),
        "samples_per_level": int(samples),
        "k": k,
        "level_values": levels,
        "best_level": best[1],
        "raw_max_ratio": raw_max,
        "q_grid": list(Q_GRID),
    }
    trace = {"t": ts, "norm": best[2] if best[2] is not None else np.zeros(ts.size)}
    return MeasureReport("k_divisibility", _interval_of(ts), value, value, trace, meta, True)
