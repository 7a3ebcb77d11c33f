"""Time-dependent GKSL generators and the propagator families they produce."""

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from nmq import channels, linalg
from nmq.exceptions import RatePoleError, StepUnderflowError, ValidationError
from nmq.states import su_basis

TANGENT_POLE_HALFWIDTH = 1e-3
FAMILY_TP_TOL = 1e-7
FAMILY_ID_TOL = 1e-9


# ---------------------------------------------------------------------------
# Rate functions
# ---------------------------------------------------------------------------

RATE_KINDS = ("constant", "sine", "tangent", "exponential", "table")

_RATE_DEFAULTS = {
    "constant": {"value": 0.0},
    "sine": {"amplitude": 1.0, "frequency": 1.0, "phase": 0.0, "offset": 0.0},
    "tangent": {"amplitude": 1.0, "pole_halfwidth": TANGENT_POLE_HALFWIDTH},
    "exponential": {"a": 1.0, "b": -1.0},
    "table": {"times": [0.0, 1.0], "values": [0.0, 0.0]},
}


@dataclass(frozen=True)
class RateFunction:
    """A scalar decay rate gamma(t).

    Kinds and their parameters:

    - ``constant``: ``value``
    - ``sine``: ``offset + amplitude * sin(frequency * t + phase)``
    - ``tangent``: ``amplitude * tan(t)``; raises :class:`RatePoleError`
      within ``pole_halfwidth`` of a pole
    - ``exponential``: ``a * exp(b * t)``
    - ``table``: piecewise-linear interpolation of ``(times, values)``
    """

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in RATE_KINDS:
            raise ValidationError(f"unknown rate kind {self.kind!r}; expected one of {RATE_KINDS}")
        merged = dict(_RATE_DEFAULTS[self.kind])
        unknown = set(self.params) - set(merged)
        if unknown:
            raise ValidationError(f"unknown parameters {sorted(unknown)} for rate kind {self.kind!r}")
        merged.update(self.params)
        if self.kind == "table":
            ts = np.asarray(merged["times"], dtype=float)
            vs = np.asarray(merged["values"], dtype=float)
            if ts.ndim != 1 or ts.shape != vs.shape or ts.size < 2:
                raise ValidationError("table rate needs equally long 'times' and 'values' (>= 2 points)")
            if np.any(np.diff(ts) <= 0):
                raise ValidationError("table rate times must be strictly increasing")
            merged["times"] = [float(x) for x in ts]
            merged["values"] = [float(x) for x in vs]
        else:
            merged = {k: float(v) for k, v in merged.items()}
        object.__setattr__(self, "params", merged)

    # constructors -----------------------------------------------------------
    @classmethod
    def constant(cls, value: float) -> "RateFunction":
        return cls("constant", {"value": value})

    @classmethod
    def sine(cls, amplitude=1.0, frequency=1.0, phase=0.0, offset=0.0) -> "RateFunction":
        return cls("sine", {"amplitude": amplitude, "frequency": frequency, "phase": phase, "offset": offset})

    @classmethod
    def tangent(cls, amplitude=1.0, pole_halfwidth=TANGENT_POLE_HALFWIDTH) -> "RateFunction":
        return cls("tangent", {"amplitude": amplitude, "pole_halfwidth": pole_halfwidth})

    @classmethod
    def exponential(cls, a: float, b: float) -> "RateFunction":
        return cls("exponential", {"a": a, "b": b})

    @classmethod
    def table(cls, times, values) -> "RateFunction":
        return cls("table", {"times": list(times), "values": list(values)})

    @classmethod
    def from_dict(cls, doc: dict) -> "RateFunction":
        if "kind" not in doc:
            raise ValidationError("rate specification needs a 'kind'")
        return cls(doc["kind"], dict(doc.get("params", {})))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": dict(self.params)}

    # evaluation -------------------------------------------------------------
    def nearest_pole(self, t):
        """Nearest pole of a tangent rate (``pi/2 + k pi``); ``None`` for other kinds."""
        if self.kind != "tangent":
            return None
        t = np.asarray(t, dtype=float)
        return np.pi / 2 + np.pi * np.round((t - np.pi / 2) / np.pi)

    def in_pole_zone(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.kind != "tangent":
            return np.zeros(t.shape, dtype=bool)
        return np.abs(t - self.nearest_pole(t)) < self.params["pole_halfwidth"]

    def __call__(self, t):
        t_arr = np.asarray(t, dtype=float)
        p = self.params
        if self.kind == "constant":
            out = np.full(t_arr.shape, p["value"])
        elif self.kind == "sine":
            out = p["offset"] + p["amplitude"] * np.sin(p["frequency"] * t_arr + p["phase"])
        elif self.kind == "tangent":
            bad = self.in_pole_zone(t_arr)
            if np.any(bad):
                tb = t_arr[bad].ravel()[0] if t_arr.ndim else float(t_arr)
                raise RatePoleError(tb, float(self.nearest_pole(tb)))
            out = p["amplitude"] * np.tan(t_arr)
        elif self.kind == "exponential":
            out = p["a"] * np.exp(p["b"] * t_arr)
        else:
            out = np.interp(t_arr, p["times"], p["values"])
        return float(out) if np.ndim(t) == 0 else out

    def antiderivative(self, t):
        """A primitive of the rate.  For ``tangent`` this is ``-A ln|cos t|``,
        continued across the poles."""
        t = np.asarray(t, dtype=float)
        p = self.params
        if self.kind == "constant":
            return p["value"] * t
        if self.kind == "sine":
            w = p["frequency"]
            if w == 0.0:
                return (p["offset"] + p["amplitude"] * np.sin(p["phase"])) * t
            return p["offset"] * t - p["amplitude"] / w * np.cos(w * t + p["phase"])
        if self.kind == "tangent":
            with np.errstate(divide="ignore"):
                return -p["amplitude"] * np.log(np.abs(np.cos(t)))
        if self.kind == "exponential":
            if p["b"] == 0.0:
                return p["a"] * t
            return p["a"] / p["b"] * np.exp(p["b"] * t)
        ts = np.asarray(p["times"])
        vs = np.asarray(p["values"])
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (vs[1:] + vs[:-1]) * np.diff(ts))])

        def prim(x):
            if x <= ts[0]:
                return vs[0] * (x - ts[0])
            if x >= ts[-1]:
                return cum[-1] + vs[-1] * (x - ts[-1])
            k = np.searchsorted(ts, x, side="right") - 1
            h = x - ts[k]
            slope = (vs[k + 1] - vs[k]) / (ts[k + 1] - ts[k])
            return cum[k] + vs[k] * h + 0.5 * slope * h * h

        return np.vectorize(prim, otypes=[float])(t)

    def integral(self, t0: float, t1):
        return self.antiderivative(t1) - self.antiderivative(t0)

    def decay_factor(self, t0: float, t):
        """``R(t) = exp(-2 int_{t0}^{t} gamma)``.

        For ``tangent`` this is ``|cos t / cos t0|^(2A)``, which stays finite
        (and vanishes) at the poles.
        """
        t = np.asarray(t, dtype=float)
        if self.kind == "tangent":
            A = self.params["amplitude"]
            ratio = np.abs(np.cos(t) / np.cos(t0))
            return ratio ** (2 * A)
        return np.exp(-2.0 * self.integral(t0, t))


# ---------------------------------------------------------------------------
# Generators
# ---------------------------------------------------------------------------

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
SIGMA_PLUS = np.array([[0, 1], [0, 0]], dtype=complex)
SIGMA_MINUS = np.array([[0, 0], [1, 0]], dtype=complex)

_NAMED = {
    "sigma_x": SIGMA_X,
    "sigma_y": SIGMA_Y,
    "sigma_z": SIGMA_Z,
    "sigma_plus": SIGMA_PLUS,
    "sigma_minus": SIGMA_MINUS,
}


def named_operator(name: str, dim: int = 2) -> np.ndarray:
    """Operator aliases used by model files: Pauli matrices, ladder operators, identity."""
    if name == "identity":
        return np.eye(dim, dtype=complex)
    if name in _NAMED:
        if dim != 2:
            raise ValidationError(f"operator {name!r} is only defined for dim = 2")
        return _NAMED[name].copy()
    raise ValidationError(f"unknown operator name {name!r}")


@dataclass(frozen=True)
class Dissipator:
    rate: RateFunction
    operator: np.ndarray


Hamiltonian = Union[None, np.ndarray, Callable[[float], np.ndarray]]


@dataclass(frozen=True, eq=False)
class GKSLGenerator:
    """``L_t(rho) = -i[H(t), rho] + sum_k gamma_k(t) (V rho V^dag - {V^dag V, rho}/2)``.

    ``hamiltonian`` is ``None`` (zero), a constant matrix, or a callable of t.
    """

    dim: int
    hamiltonian: Hamiltonian = None
    dissipators: Tuple[Dissipator, ...] = ()

    def __post_init__(self):
        if self.dim < 1:
            raise ValidationError("dimension must be positive")
        if self.hamiltonian is not None and not callable(self.hamiltonian):
            H = linalg.hermitize(self.hamiltonian)
            if H.shape != (self.dim, self.dim):
                raise ValidationError(f"Hamiltonian shape {H.shape} does not match dim {self.dim}")
            object.__setattr__(self, "hamiltonian", H)
        diss = []
        for item in self.dissipators:
            if not isinstance(item, Dissipator):
                item = Dissipator(*item)
            V = linalg.as_matrix(item.operator, "dissipator operator")
            if V.shape != (self.dim, self.dim):
                raise ValidationError(f"dissipator shape {V.shape} does not match dim {self.dim}")
            diss.append(Dissipator(item.rate, V))
        object.__setattr__(self, "dissipators", tuple(diss))
        object.__setattr__(self, "_parts", None)

    def hamiltonian_at(self, t: float) -> np.ndarray:
        if self.hamiltonian is None:
            return np.zeros((self.dim, self.dim), dtype=complex)
        if callable(self.hamiltonian):
            H = linalg.as_matrix(self.hamiltonian(t), "H(t)")
            return linalg.hermitize(H)
        return self.hamiltonian

    def rates(self, t) -> np.ndarray:
        """Rates at ``t`` (scalar) or at each entry of an array, shape ``(..., K)``."""
        vals = [np.asarray(D.rate(t), dtype=float) for D in self.dissipators]
        if not vals:
            return np.zeros(np.shape(t) + (0,))
        return np.stack(vals, axis=-1)

    def singular_times(self, times) -> np.ndarray:
        """Mask of times at which some rate is inside a pole-exclusion zone."""
        times = np.asarray(times, dtype=float)
        mask = np.zeros(times.shape, dtype=bool)
        for D in self.dissipators:
            mask |= D.rate.in_pole_zone(times)
        return mask

    def _superop_parts(self):
        if self._parts is None:
            d = self.dim
            eye = np.eye(d)
            Ds = []
            for D in self.dissipators:
                V = D.operator
                VdV = V.conj().T @ V
                Ds.append(np.kron(V.conj(), V) - 0.5 * np.kron(eye, VdV) - 0.5 * np.kron(VdV.T, eye))
            object.__setattr__(self, "_parts", np.array(Ds).reshape(len(Ds), d * d, d * d))
        return self._parts

    def liouvillian(self, t: float) -> np.ndarray:
        return liouvillian_superop(self, t)

    def liouvillian_batch(self, times) -> np.ndarray:
        """Stack of Liouvillians ``(N, d^2, d^2)`` for an array of times."""
        times = np.atleast_1d(np.asarray(times, dtype=float))
        parts = self._superop_parts()
        out = np.einsum("nk,kab->nab", self.rates(times), parts) if len(parts) else np.zeros(
            (times.size, self.dim ** 2, self.dim ** 2), dtype=complex)
        out = out.astype(complex)
        if callable(self.hamiltonian):
            for n, t in enumerate(times):
                out[n] += _hamiltonian_superop(self.hamiltonian_at(t))
        elif self.hamiltonian is not None:
            out += _hamiltonian_superop(self.hamiltonian)
        return out


def _hamiltonian_superop(H: np.ndarray) -> np.ndarray:
    eye = np.eye(H.shape[0])
    return -1j * (np.kron(eye, H) - np.kron(H.T, eye))


def liouvillian_superop(gen: GKSLGenerator, t: float) -> np.ndarray:
    """Matrix of ``L_t`` acting on column-stacked states.

    ``-i (I kron H - H^T kron I) + sum_k gamma_k(t) [conj(V) kron V
    - I kron (V^dag V)/2 - (V^dag V)^T kron I / 2]``.
    """
    L = _hamiltonian_superop(gen.hamiltonian_at(t))
    parts = gen._superop_parts()
    if len(parts):
        L = L + np.tensordot(gen.rates(float(t)), parts, axes=1)
    return L


def apply_generator(gen: GKSLGenerator, t: float, rho) -> np.ndarray:
    """Direct commutator / anticommutator evaluation of ``L_t(rho)``."""
    rho = np.asarray(rho, dtype=complex)
    H = gen.hamiltonian_at(t)
    out = -1j * (H @ rho - rho @ H)
    for D, g in zip(gen.dissipators, gen.rates(float(t))):
        V = D.operator
        VdV = V.conj().T @ V
        out = out + g * (V @ rho @ V.conj().T - 0.5 * (VdV @ rho + rho @ VdV))
    return out


def dephasing_generator(rate: RateFunction) -> GKSLGenerator:
    """Qubit pure dephasing ``gamma(t) (sigma_z rho sigma_z - rho)``."""
    return GKSLGenerator(2, None, (Dissipator(rate, SIGMA_Z),))


def damped_dephasing_generator(omega: float, gamma_minus: RateFunction, gamma_z: RateFunction) -> GKSLGenerator:
    """Qubit with ``H = omega sigma_z``, decay through sigma_- and dephasing through sigma_z."""
    return GKSLGenerator(
        2,
        omega * SIGMA_Z,
        (Dissipator(gamma_minus, SIGMA_MINUS), Dissipator(gamma_z, SIGMA_Z)),
    )


def is_pure_dephasing(gen: GKSLGenerator) -> bool:
    if gen.dim != 2 or len(gen.dissipators) != 1 or callable(gen.hamiltonian):
        return False
    if gen.hamiltonian is not None and np.any(np.abs(gen.hamiltonian) > 0):
        return False
    return bool(np.allclose(gen.dissipators[0].operator, SIGMA_Z, atol=0.0, rtol=0.0))


# ---------------------------------------------------------------------------
# Propagator families
# ---------------------------------------------------------------------------

PROVENANCES = ("integrated", "analytic", "collision", "external")


@dataclass(frozen=True, eq=False)
class PropagatorFamily:
    """Maps ``E(t_k, t0)`` on an ascending grid starting at ``t0``.

    ``evaluator``, when present, returns ``E(t, t0)`` for an array of
    arbitrary times (shape ``(N, d^2, d^2)``); measures use it for
    off-grid derivatives.  ``generator`` records the source of integrated
    families.
    """

    t0: float
    times: np.ndarray
    maps: np.ndarray
    provenance: str = "external"
    evaluator: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, repr=False)
    generator: Optional[GKSLGenerator] = field(default=None, repr=False)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        maps = np.asarray(self.maps, dtype=complex)
        if self.provenance not in PROVENANCES:
            raise ValidationError(f"unknown provenance {self.provenance!r}")
        if times.ndim != 1 or times.size < 1:
            raise ValidationError("family needs a non-empty 1-d time grid")
        if np.any(np.diff(times) <= 0):
            raise ValidationError("family grid must be strictly increasing")
        if abs(times[0] - self.t0) > 1e-12 * max(1.0, abs(self.t0)):
            raise ValidationError("family grid must start at t0")
        if maps.ndim != 3 or maps.shape[0] != times.size:
            raise ValidationError(f"expected {times.size} maps, got array of shape {maps.shape}")
        d = channels.superop_dim(maps)
        if np.max(np.abs(maps[0] - np.eye(d * d))) > FAMILY_ID_TOL:
            raise ValidationError("E(t0, t0) must be the identity map")
        v = linalg.vec(np.eye(d))
        tp_defect = np.max(np.abs(np.einsum("a,nab->nb", v, maps) - v), axis=1)
        if np.any(tp_defect > FAMILY_TP_TOL):
            k = int(np.argmax(tp_defect))
            raise ValidationError(f"map at t = {times[k]!r} is not trace preserving (defect {tp_defect[k]:.3e})")
        times.setflags(write=False)
        maps.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "maps", maps)

    @property
    def dim(self) -> int:
        return channels.superop_dim(self.maps)

    def __len__(self):
        return self.times.size

    def maps_at(self, times) -> np.ndarray:
        """``E(t, t0)`` for each requested time, using the evaluator off-grid."""
        times = np.atleast_1d(np.asarray(times, dtype=float))
        idx = np.searchsorted(self.times, times)
        idx_c = np.clip(idx, 0, len(self) - 1)
        on_grid = np.abs(self.times[idx_c] - times) <= 1e-13 * np.maximum(1.0, np.abs(times))
        if np.all(on_grid):
            return self.maps[idx_c]
        if self.evaluator is None:
            raise ValidationError("family has no evaluator; only grid times are available")
        out = np.empty((times.size,) + self.maps.shape[1:], dtype=complex)
        out[on_grid] = self.maps[idx_c[on_grid]]
        out[~on_grid] = self.evaluator(times[~on_grid])
        return out

    def window(self, interval) -> np.ndarray:
        """Indices of grid times inside ``[t_a, t_b]`` (inclusive, roundoff tolerant)."""
        ta, tb = interval
        slack = 1e-12 * max(1.0, abs(ta), abs(tb))
        return np.nonzero((self.times >= ta - slack) & (self.times <= tb + slack))[0]

    def diagnostics(self) -> List[dict]:
        d = self.dim
        v = linalg.vec(np.eye(d))
        rows = []
        for t, E in zip(self.times, self.maps):
            rows.append({
                "t": float(t),
                "tp_defect": float(np.max(np.abs(v @ E - v))),
                "cp_defect": channels.cp_defect(E),
            })
        return rows

    def to_json(self) -> dict:
        return {
            "provenance": self.provenance,
            "t0": float(self.t0),
            "dim": self.dim,
            "times": [float(t) for t in self.times],
            "maps": [channels.superop_to_json(E) for E in self.maps],
            "diagnostics": self.diagnostics(),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "PropagatorFamily":
        maps = np.array([channels.superop_from_json(m) for m in doc["maps"]])
        return cls(float(doc["t0"]), np.asarray(doc["times"], dtype=float), maps, "external")


def _rk4_batch(gen: GKSLGenerator, t_start, t_end, E: np.ndarray, n: int) -> np.ndarray:
    """``n`` RK4 steps from each ``t_start[i]`` to ``t_end[i]`` for a stack of maps."""
    t_start = np.atleast_1d(np.asarray(t_start, dtype=float))
    h = (np.atleast_1d(np.asarray(t_end, dtype=float)) - t_start) / n
    m = t_start.size
    hb = h[:, None, None]
    for j in range(n):
        t = t_start + j * h
        L = gen.liouvillian_batch(np.concatenate([t, t + 0.5 * h, t + h])).reshape((3, m) + E.shape[1:])
        k1 = L[0] @ E
        k2 = L[1] @ (E + 0.5 * hb * k1)
        k3 = L[1] @ (E + 0.5 * hb * k2)
        k4 = L[2] @ (E + hb * k3)
        E = E + (hb / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return E


def _rk4(gen: GKSLGenerator, t_start: float, t_end: float, E: np.ndarray, n: int) -> np.ndarray:
    return _rk4_batch(gen, [t_start], [t_end], E[None], n)[0]


def propagate(
    gen: GKSLGenerator,
    t0: float,
    grid: Sequence[float],
    substeps: int = 8,
    tol: float = 1e-10,
    max_halvings: int = 10,
) -> PropagatorFamily:
    """Integrate ``dE/dt = L_t E`` with ``E(t0) = I`` by classical RK4.

    Each grid interval is integrated with ``substeps`` steps and again with
    twice as many; the step keeps halving until the two results agree within
    ``tol`` (max-abs).  The finer result is stored.

    Raises:
        StepUnderflowError: no agreement after ``max_halvings`` halvings.
        RatePoleError: a rate was evaluated inside a pole-exclusion zone.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 1 or abs(grid[0] - t0) > 1e-12 * max(1.0, abs(t0)):
        raise ValidationError("grid must be 1-d and start at t0")
    if np.any(np.diff(grid) <= 0):
        raise ValidationError("grid must be strictly increasing")
    d2 = gen.dim ** 2
    E = np.eye(d2, dtype=complex)
    maps = [E]
    for a, b in zip(grid[:-1], grid[1:]):
        n = substeps
        coarse = _rk4(gen, a, b, E, n)
        for _ in range(max_halvings + 1):
            fine = _rk4(gen, a, b, E, 2 * n)
            if np.max(np.abs(fine - coarse)) <= tol:
                break
            coarse, n = fine, 2 * n
        else:
            raise StepUnderflowError(f"RK4 did not converge on [{a!r}, {b!r}] with {2 * n} steps")
        E = fine
        maps.append(E)

    times_ref = grid.copy()
    maps_ref = np.array(maps)
    h_ref = (grid[-1] - grid[0]) / max(len(grid) - 1, 1) / substeps if len(grid) > 1 else 1e-2

    def evaluator(ts):
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        k = np.clip(np.searchsorted(times_ref, ts, side="right") - 1, 0, len(times_ref) - 1)
        span = ts - times_ref[k]
        steps = max(1, int(np.ceil(np.max(np.abs(span), initial=0.0) / h_ref)))
        return _rk4_batch(gen, times_ref[k], ts, maps_ref[k], steps)

    return PropagatorFamily(float(t0), grid, maps_ref, "integrated", evaluator, gen)


def dephasing_superop(R) -> np.ndarray:
    """``diag(1, R, R, 1)`` (stacked when R is an array)."""
    R = np.atleast_1d(np.asarray(R, dtype=float))
    out = np.zeros((R.size, 4, 4), dtype=complex)
    out[:, 0, 0] = out[:, 3, 3] = 1.0
    out[:, 1, 1] = out[:, 2, 2] = R
    return out


def dephasing_family(rate: RateFunction, t0: float, grid: Sequence[float]) -> PropagatorFamily:
    """Closed-form qubit dephasing family ``E(t, t0) = diag(1, R, R, 1)``.

    ``R(t) = exp(-2 int_{t0}^t gamma)`` from the rate's antiderivative, so
    tangent rates pass through their poles with ``R = 0`` there.
    """
    grid = np.asarray(grid, dtype=float)

    def evaluator(ts):
        return dephasing_superop(rate.decay_factor(t0, np.atleast_1d(ts)))

    return PropagatorFamily(float(t0), grid, evaluator(grid), "analytic", evaluator, dephasing_generator(rate))


def semigroup_family(L, t0: float, grid: Sequence[float]) -> PropagatorFamily:
    """``E(t, t0) = exp(L (t - t0))`` for a constant Liouvillian matrix."""
    from scipy.linalg import expm

    L = np.asarray(L, dtype=complex)
    grid = np.asarray(grid, dtype=float)

    def evaluator(ts):
        return np.array([expm(L * (t - t0)) for t in np.atleast_1d(ts)])

    return PropagatorFamily(float(t0), grid, evaluator(grid), "analytic", evaluator)


# ---------------------------------------------------------------------------
# Canonical form
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CanonicalForm:
    """Generator at one time rewritten with orthonormal jump operators.

    ``rates`` are sorted in descending order, ``operators[j]`` is the jump
    operator of ``rates[j]`` and ``coefficients[j]`` its expansion in the
    traceless part of the basis.  ``hamiltonian`` includes the correction
    absorbed from the identity components of the original jump operators.
    """

    time: float
    rates: np.ndarray
    operators: np.ndarray
    coefficients: np.ndarray
    hamiltonian: np.ndarray

    def generator(self) -> GKSLGenerator:
        diss = tuple(Dissipator(RateFunction.constant(g), L) for g, L in zip(self.rates, self.operators))
        return GKSLGenerator(self.hamiltonian.shape[0], self.hamiltonian, diss)


def _fix_phase(v: np.ndarray) -> np.ndarray:
    k = int(np.argmax(np.abs(v) > 1e-12))
    z = v[k]
    return v * (abs(z) / z) if abs(z) > 0 else v


def canonical_form(gen: GKSLGenerator, t: float, basis: Optional[np.ndarray] = None) -> CanonicalForm:
    """Canonical decay rates and operators of ``L_t``.

    Jump operators are expanded in an orthonormal Hermitian basis
    (``G_0 = I/sqrt(d)`` first; default :func:`nmq.states.su_basis`), the
    traceless block of the coefficient matrix is diagonalized, and the
    identity components are folded into the Hamiltonian.  Ties between rates
    are ordered by the lexicographic order of the coefficient vectors.
    """
    d = gen.dim
    G = su_basis(d) if basis is None else np.asarray(basis, dtype=complex)
    if G.shape != (d * d, d, d):
        raise ValidationError(f"basis must have shape {(d * d, d, d)}")
    rates = gen.rates(float(t))
    c = np.zeros((d * d, d * d), dtype=complex)
    for g, D in zip(rates, gen.dissipators):
        v = np.einsum("mba,ba->m", G.conj(), D.operator)
        c += g * np.outer(v, v.conj())
    block = 0.5 * (c[1:, 1:] + c[1:, 1:].conj().T)
    w, U = np.linalg.eigh(block)
    cols = [_fix_phase(U[:, j]) for j in range(U.shape[1])]

    def key(j):
        vec = cols[j]
        return (-round(float(w[j]), 12),) + tuple(
            x for z in vec for x in (round(float(z.real), 12), round(float(z.imag), 12)))

    order = sorted(range(len(w)), key=key)
    coeffs = np.array([cols[j] for j in order])
    ops = np.einsum("jm,mab->jab", coeffs, G[1:])
    H = gen.hamiltonian_at(t) - np.einsum("m,mab->ab", c[1:, 0].imag, G[1:]) / np.sqrt(d)
    return CanonicalForm(float(t), w[order], ops, coeffs, 0.5 * (H + H.conj().T))


# ---------------------------------------------------------------------------
# Collisional model
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CollisionModel:
    """Repeated collisions of a system with fresh copies of an environment state.

    ``unitary`` acts on system (first factor) x environment.  The family
    starts at ``t0`` and advances by one collision at each of ``times``.
    """

    system_dim: int
    env_dim: int
    unitary: np.ndarray
    env_state: np.ndarray
    times: Sequence[float]
    t0: float = 0.0

    def __post_init__(self):
        U = linalg.as_matrix(self.unitary, "collision unitary")
        n = self.system_dim * self.env_dim
        if U.shape != (n, n):
            raise ValidationError(f"collision unitary must be {n}x{n}, got {U.shape}")
        if np.max(np.abs(U.conj().T @ U - np.eye(n))) > 1e-10:
            raise ValidationError("collision operator is not unitary")
        from nmq.states import validate_state

        rho_e = validate_state(self.env_state, "env_state")
        if rho_e.shape != (self.env_dim, self.env_dim):
            raise ValidationError("environment state has the wrong dimension")
        times = np.asarray(self.times, dtype=float)
        if times.ndim != 1 or np.any(np.diff(np.concatenate([[self.t0], times])) <= 0):
            raise ValidationError("collision times must be strictly increasing and after t0")
        object.__setattr__(self, "unitary", U)
        object.__setattr__(self, "env_state", rho_e)
        object.__setattr__(self, "times", times)

    def kraus(self) -> List[np.ndarray]:
        """``K_ij = sqrt(p_j) <phi_i| U |phi_j>`` with ``rho_E = sum_j p_j |phi_j><phi_j|``."""
        d, de = self.system_dim, self.env_dim
        p, phi = np.linalg.eigh(self.env_state)
        U4 = self.unitary.reshape(d, de, d, de)
        ops = []
        for j in range(de):
            if p[j] <= 1e-14:
                continue
            for i in range(de):
                K = np.einsum("e,aebf,f->ab", phi[:, i].conj(), U4, phi[:, j])
                ops.append(np.sqrt(p[j]) * K)
        return ops

    def collision_map(self) -> np.ndarray:
        return channels.kraus_to_superop(self.kraus())


def collision_propagate(model: CollisionModel) -> PropagatorFamily:
    """Family of concatenated collision maps ``E(t_n, t0) = E_coll^n``."""
    step = model.collision_map()
    d2 = model.system_dim ** 2
    maps = [np.eye(d2, dtype=complex)]
    for _ in model.times:
        maps.append(step @ maps[-1])
    grid = np.concatenate([[model.t0], model.times])
    return PropagatorFamily(float(model.t0), grid, np.array(maps), "collision")


# ---------------------------------------------------------------------------
# Bloch-space representation
# ---------------------------------------------------------------------------

def affine_representation(E) -> Tuple[np.ndarray, np.ndarray]:
    """``r -> M r + c`` with ``M_ij = Tr[G_i E(G_j)]`` and ``c_i = Tr[G_i E(I)] / d``."""
    E = np.asarray(E, dtype=complex)
    d = channels.superop_dim(E)
    G = su_basis(d)[1:]
    images = np.array([channels.apply(E, Gj) for Gj in G])
    M = np.einsum("iab,jba->ij", G, images)
    c = np.einsum("iab,ba->i", G, channels.apply(E, np.eye(d))) / d
    scale = max(1.0, np.max(np.abs(M)))
    if np.max(np.abs(M.imag)) > 1e-10 * scale or np.max(np.abs(c.imag), initial=0.0) > 1e-10 * scale:
        raise ValidationError("map does not preserve Hermiticity; no real affine representation")
    return M.real, c.real
