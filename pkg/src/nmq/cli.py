"""Command-line driver: parse a JSON run configuration, build the dynamics,
run measures or witnesses and write deterministic reports.

Exit codes: 0 ok, 1 configuration or validation error, 2 singular map under
the exact inverse strategy, 3 numeric failure.
"""

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from nmq import channels, classical, measures, witnesses
from nmq.dynamics import (
    GKSLGenerator,
    Dissipator,
    PropagatorFamily,
    RateFunction,
    damped_dephasing_generator,
    dephasing_family,
    dephasing_generator,
    is_pure_dephasing,
    named_operator,
    propagate,
)
from nmq.exceptions import NMQError, RatePoleError, SingularMap, StepUnderflowError, ValidationError
from nmq.io import config_hash, csv_text, dumps
from nmq.states import maximally_mixed, plus_minus_pair, pure

EXIT_OK, EXIT_CONFIG, EXIT_SINGULAR, EXIT_NUMERIC = 0, 1, 2, 3
FORMATS = ("csv", "json", "both")
INVERSE_CHOICES = ("exact", "regularized", "pseudo")
MEASURES = ("rhp", "rhp_degree", "decay_rate", "blp", "helstrom", "k_divisibility")
WITNESSES = ("trace_distance", "fidelity", "relative_entropy", "qfi", "capacity", "bloch_volume",
             "entanglement", "mutual_information", "discord")
REPRO_CASES = ("sin", "tan", "exACH", "dephasing-const")
MIN_GRID = 16
DEFAULT_BUDGET = measures.DEFAULT_SAMPLES
DEFAULT_MAXITER = measures.BLP_MAXITER


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

@dataclass
class RunConfig:
    """Everything a run depends on; hashed into every output file."""

    model: Optional[dict] = None
    family_path: Optional[str] = None
    transitions_path: Optional[str] = None
    interval: Tuple[float, float] = (0.0, 2 * np.pi)
    grid: int = 512
    measures: List[str] = field(default_factory=lambda: ["rhp", "rhp_degree"])
    witnesses: List[str] = field(default_factory=lambda: ["trace_distance"])
    budget: int = DEFAULT_BUDGET
    maxiter: int = DEFAULT_MAXITER
    k: int = 1
    seed: int = 0
    inverse: str = "exact"
    out: Optional[str] = None
    format: str = "both"
    log_base: Optional[float] = None

    def __post_init__(self):
        a, b = (float(x) for x in self.interval)
        if not a < b:
            raise ValidationError(f"interval must satisfy t_a < t_b, got [{a}, {b}]")
        self.interval = (a, b)
        self.grid = int(self.grid)
        if self.grid < MIN_GRID:
            raise ValidationError(f"grid size must be at least {MIN_GRID}, got {self.grid}")
        if self.format not in FORMATS:
            raise ValidationError(f"format must be one of {FORMATS}")
        if self.inverse not in INVERSE_CHOICES:
            raise ValidationError(f"inverse strategy must be one of {INVERSE_CHOICES}")
        for name in self.measures:
            if name not in MEASURES:
                raise ValidationError(f"unknown measure {name!r}; choose from {MEASURES}")
        for name in self.witnesses:
            if name not in WITNESSES:
                raise ValidationError(f"unknown witness {name!r}; choose from {WITNESSES}")
        self.seed, self.budget, self.maxiter, self.k = int(self.seed), int(self.budget), int(self.maxiter), int(self.k)
        if self.budget < 1 or self.maxiter < 1 or self.k < 1:
            raise ValidationError("budget, maxiter and k must be positive")

    def hashed(self) -> dict:
        """The part of the configuration that determines results (output location excluded)."""
        return {
            "model": self.model, "family_path": self.family_path, "transitions_path": self.transitions_path,
            "interval": list(self.interval), "grid": self.grid, "measures": list(self.measures),
            "witnesses": list(self.witnesses), "budget": self.budget, "maxiter": self.maxiter, "k": self.k,
            "seed": self.seed, "inverse": self.inverse, "log_base": self.log_base,
        }

    @property
    def digest(self) -> str:
        return config_hash(self.hashed())


_FIELDS = {"model", "family_path", "transitions_path", "interval", "grid", "measures", "witnesses", "budget",
           "maxiter", "k", "seed", "inverse", "out", "format", "log_base"}


def load_config(args) -> RunConfig:
    doc = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        try:
            doc = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot read config {path}: {exc}") from None
        if not isinstance(doc, dict):
            raise ValidationError("config must be a JSON object")
        unknown = set(doc) - _FIELDS
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        base = path.parent
        for key in ("family_path", "transitions_path"):
            if doc.get(key):
                doc[key] = str((base / doc[key]).resolve()) if not Path(doc[key]).is_absolute() else doc[key]
        if isinstance(doc.get("model"), str):
            model_path = base / doc["model"]
            try:
                doc["model"] = json.loads(model_path.read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise ValidationError(f"cannot read model {model_path}: {exc}") from None
    for flag, key in (("seed", "seed"), ("out", "out"), ("format", "format"), ("inverse", "inverse"),
                      ("budget", "budget")):
        value = getattr(args, flag, None)
        if value is not None:
            doc[key] = value
    try:
        return RunConfig(**doc)
    except TypeError as exc:
        raise ValidationError(str(exc)) from None


def parse_operator(item, dim: int) -> np.ndarray:
    """A named alias (``sigma_x``, ..., ``identity``), a real matrix, or ``[re, im]`` pairs."""
    if isinstance(item, str):
        return named_operator(item, dim)
    arr = np.asarray(item)
    if arr.ndim == 3 and arr.shape[-1] == 2:
        return channels.matrix_from_pairs(item)
    if arr.ndim == 2:
        return arr.astype(complex)
    raise ValidationError(f"cannot parse operator {item!r}")


def build_generator(model: dict) -> GKSLGenerator:
    """Build a generator from ``{dim, hamiltonian, dissipators: [{rate, operator}]}``.

    ``hamiltonian`` may be omitted, ``"zero"``, a named operator, a matrix, or
    ``{"operator": ..., "scale": w}``.
    """
    if not isinstance(model, dict):
        raise ValidationError("model must be a JSON object")
    dim = int(model.get("dim", 2))
    h = model.get("hamiltonian")
    if h is None or h == "zero":
        H = None
    elif isinstance(h, dict):
        H = float(h.get("scale", 1.0)) * parse_operator(h["operator"], dim)
    else:
        H = parse_operator(h, dim)
    diss = []
    for item in model.get("dissipators", []):
        try:
            diss.append(Dissipator(RateFunction.from_dict(item["rate"]), parse_operator(item["operator"], dim)))
        except KeyError as exc:
            raise ValidationError(f"dissipator entry is missing {exc}") from None
    return GKSLGenerator(dim, H, tuple(diss))


def build_dynamics(cfg: RunConfig) -> Tuple[PropagatorFamily, Optional[GKSLGenerator]]:
    """Family on a uniform grid over the interval (analytic for pure dephasing)."""
    if cfg.family_path:
        try:
            doc = json.loads(Path(cfg.family_path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot read family {cfg.family_path}: {exc}") from None
        return PropagatorFamily.from_json(doc), None
    if cfg.model is None:
        raise ValidationError("config needs a model or a family_path")
    gen = build_generator(cfg.model)
    grid = np.linspace(cfg.interval[0], cfg.interval[1], cfg.grid + 1)
    if is_pure_dephasing(gen):
        return dephasing_family(gen.dissipators[0].rate, grid[0], grid), gen
    return propagate(gen, grid[0], grid), gen


def default_pair(d: int):
    """Initial pair for the distinguishability witnesses."""
    if d == 2:
        return plus_minus_pair()
    return pure(np.eye(d)[0]), pure(np.eye(d)[1])


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------

class Writer:
    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.digest = cfg.digest
        self.dir = Path(cfg.out) if cfg.out else None
        if self.dir is not None:
            self.dir.mkdir(parents=True, exist_ok=True)
        self.written: List[str] = []

    def json(self, name: str, payload: dict):
        if self.dir is None or self.cfg.format == "csv":
            return
        doc = {"config_hash": self.digest, "config": self.cfg.hashed(), **payload}
        self._write(f"{name}.json", dumps(doc))

    def csv(self, name: str, text: str):
        if self.dir is None or self.cfg.format == "json":
            return
        self._write(f"{name}.csv", text)

    def _write(self, filename: str, text: str):
        path = self.dir / filename
        path.write_text(text, encoding="utf-8", newline="\n")
        self.written.append(str(path))


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_evolve(cfg: RunConfig) -> int:
    fam, _ = build_dynamics(cfg)
    out = Writer(cfg)
    out.json("family", {"family": fam.to_json()})
    rows = [(r["t"], r["tp_defect"], r["cp_defect"]) for r in fam.diagnostics()]
    out.csv("family_diagnostics", csv_text(["t", "tp_defect", "cp_defect"], rows, out.digest))
    worst_tp = max(r[1] for r in rows)
    worst_cp = max(r[2] for r in rows)
    print(f"evolved {len(fam)} maps (dim {fam.dim}, {fam.provenance}); max TP defect {worst_tp:.3e}, "
          f"max CP defect {worst_cp:.3e}")
    return EXIT_OK


def run_measure(name: str, cfg: RunConfig, fam: PropagatorFamily, gen: Optional[GKSLGenerator]):
    iv = cfg.interval
    if name == "rhp":
        return measures.rhp_measure(fam, iv, strategy=cfg.inverse)
    if name == "rhp_degree":
        return measures.rhp_degree(fam, iv, strategy=cfg.inverse)
    if name == "decay_rate":
        if gen is None:
            raise ValidationError("decay_rate needs a generator model, not a stored family")
        return measures.decay_rate_measure(gen, iv, intervals=cfg.grid)
    if name == "blp":
        return measures.blp_measure(fam, iv, maxiter=cfg.maxiter, samples=cfg.budget, seed=cfg.seed)
    if name == "helstrom":
        return measures.helstrom_measure(fam, iv, samples=cfg.budget, seed=cfg.seed)
    return measures.k_divisibility_degree(fam, iv, k=cfg.k, samples=cfg.budget, seed=cfg.seed)


def cmd_measure(cfg: RunConfig) -> int:
    fam, gen = build_dynamics(cfg)
    out = Writer(cfg)
    singular = False
    summary = {}
    for name in cfg.measures:
        rep = run_measure(name, cfg, fam, gen)
        out.json(f"measure_{name}", {"report": rep.to_json()})
        out.csv(f"measure_{name}", rep.trace_csv(out.digest))
        singular |= cfg.inverse == "exact" and rep.metadata.get("singular_samples", 0) > 0
        summary[name] = {"value": rep.value, "normalized": rep.normalized, "lower_bound": rep.lower_bound}
        flag = " (lower bound)" if rep.lower_bound else ""
        print(f"{name}: {float(rep.value)!r}{flag}")
    out.json("measures_summary", {"measures": summary, "singular": singular})
    if singular:
        print("singular intermediate maps encountered under the exact inverse strategy", file=sys.stderr)
        return EXIT_SINGULAR
    return EXIT_OK


def run_witness(name: str, cfg: RunConfig, fam: PropagatorFamily) -> List[witnesses.WitnessSeries]:
    iv, base = cfg.interval, cfg.log_base
    rho1, rho2 = default_pair(fam.dim)
    if name == "trace_distance":
        return [witnesses.trace_distance_witness(fam, rho1, rho2, iv)]
    if name == "fidelity":
        return [witnesses.fidelity_witness(fam, rho1, rho2, iv)]
    if name == "relative_entropy":
        return [witnesses.relative_entropy_witness(fam, rho1, maximally_mixed(fam.dim), iv, base)]
    if name == "qfi":
        ket0 = np.eye(fam.dim)[0]
        ket1 = np.eye(fam.dim)[1]
        return [witnesses.qfi_flow_witness(fam, lambda th: pure((ket0 + np.exp(1j * th) * ket1) / np.sqrt(2)), 0.0,
                                           iv)]
    if name == "capacity":
        return list(witnesses.capacity_witness(fam, iv, samples=min(cfg.budget, witnesses.CAPACITY_SAMPLES),
                                               seed=cfg.seed, base=base))
    if name == "bloch_volume":
        return [witnesses.bloch_volume_witness(fam, iv)]
    if name == "entanglement":
        return [witnesses.entanglement_witness(fam, iv, base=base)]
    if name == "mutual_information":
        return [witnesses.mutual_info_witness(fam, iv, base=base)]
    return [witnesses.discord_witness(fam, iv, maxiter=cfg.maxiter, base=base)]


def cmd_witness(cfg: RunConfig) -> int:
    fam, _ = build_dynamics(cfg)
    out = Writer(cfg)
    counts = {}
    for name in cfg.witnesses:
        for series in run_witness(name, cfg, fam):
            out.json(f"witness_{series.kind}", {"series": series.to_json()})
            out.csv(f"witness_{series.kind}", series.to_csv(out.digest))
            counts[series.kind] = len(series.violations)
            print(f"{series.kind}: {len(series.violations)} violations")
    out.json("witnesses_summary", {"violation_counts": counts})
    return EXIT_OK


def cmd_classical(cfg: RunConfig) -> int:
    if not cfg.transitions_path:
        raise ValidationError("config needs transitions_path (CSV of transition matrices)")
    try:
        text = Path(cfg.transitions_path).read_text()
    except OSError as exc:
        raise ValidationError(f"cannot read {cfg.transitions_path}: {exc}") from None
    fam = classical.read_transition_csv(text)
    rep = classical.is_divisible(fam)
    contraction = []
    for k in range(len(fam.times) - 1):
        try:
            T = fam.intermediate(k, k + 1)
        except SingularMap:
            continue
        c = classical.l1_contraction_check(T, trials=cfg.budget, seed=cfg.seed)
        contraction.append({"t1": float(fam.times[k]), "t2": float(fam.times[k + 1]),
                            "contractive": c.contractive, "max_ratio": c.max_ratio})
    out = Writer(cfg)
    out.json("classical", {"divisibility": rep.to_json(), "contraction": contraction})
    print(f"divisible: {rep.divisible}; violations: {len(rep.violations)}; singular pairs: {len(rep.singular)}")
    if rep.singular and cfg.inverse == "exact":
        return EXIT_SINGULAR
    return EXIT_OK


# ---------------------------------------------------------------------------
# Reproduction cases
# ---------------------------------------------------------------------------

def _line(label: str, ok: bool, detail: str) -> dict:
    print(f"[{'PASS' if ok else 'FAIL'}] {label}: {detail}")
    return {"check": label, "pass": bool(ok), "detail": detail}


def _repro_degree(rate: RateFunction, target: float) -> List[dict]:
    grid = np.linspace(0.0, 2 * np.pi, measures.DEFAULT_INTERVALS + 1)
    fam = dephasing_family(rate, 0.0, grid)
    rep = measures.rhp_degree(fam, (0.0, 2 * np.pi), route="map")
    return [_line("RHP degree", abs(rep.value - target) <= 0.01, f"{rep.value:.6f} (target {target} +- 0.01)")]


def _route_gap(source_fam, gen, interval) -> float:
    gm = measures.g_series(source_fam, interval, route="map")
    gg = measures.g_generator_series(gen, gm.times)[0]
    return float(np.max(np.abs(gm.g - gg)))


def _repro_sin() -> List[dict]:
    lines = _repro_degree(RateFunction.sine(), 0.758)
    grid = np.linspace(0.0, 2 * np.pi, measures.DEFAULT_INTERVALS + 1)
    fam = dephasing_family(RateFunction.sine(), 0.0, grid)
    gap = _route_gap(fam, fam.generator, (0.0, 2 * np.pi))
    lines.append(_line("route agreement", gap <= 1e-4, f"max |g_map - g_gen| = {gap:.3e}"))
    return lines


def _repro_damped_dephasing() -> List[dict]:
    gen = damped_dephasing_generator(1.0, RateFunction.sine(1.0, 1.0, np.pi / 2, 0.5), RateFunction.sine())
    iv = (0.0, 2 * np.pi)
    grid = np.linspace(iv[0], iv[1], measures.DEFAULT_INTERVALS + 1)
    fam = propagate(gen, 0.0, grid)
    gap = _route_gap(fam, gen, iv)
    n_rhp = measures.rhp_measure(gen, iv).value
    n_gamma = measures.decay_rate_measure(gen, iv).value
    rel = abs(n_gamma - (gen.dim / 2) * n_rhp) / max(abs(n_rhp), 1e-300)
    return [
        _line("route agreement", gap <= 1e-4, f"max |g_map - g_gen| = {gap:.3e}"),
        _line("decay-rate proportionality", rel <= 1e-6, f"N_gamma = {n_gamma:.10f}, N_RHP = {n_rhp:.10f}, rel {rel:.2e}"),
    ]


def _repro_const() -> List[dict]:
    iv = (0.0, 2 * np.pi)
    grid = np.linspace(iv[0], iv[1], measures.DEFAULT_INTERVALS + 1)
    fam = dephasing_family(RateFunction.constant(1.0), 0.0, grid)
    lines = []
    reports = [
        measures.rhp_measure(fam, iv),
        measures.rhp_degree(fam, iv),
        measures.decay_rate_measure(dephasing_generator(RateFunction.constant(1.0)), iv),
        measures.blp_measure(fam, iv, samples=200),
        measures.helstrom_measure(fam, iv, samples=200),
        measures.k_divisibility_degree(fam, iv, samples=200),
    ]
    for rep in reports:
        lines.append(_line(f"{rep.kind} = 0", abs(rep.value) <= 1e-6, f"{rep.value:.3e}"))
    rho1, rho2 = plus_minus_pair()
    series = [
        witnesses.trace_distance_witness(fam, rho1, rho2),
        witnesses.fidelity_witness(fam, rho1, rho2),
        witnesses.relative_entropy_witness(fam, rho1, maximally_mixed(2)),
        witnesses.qfi_flow_witness(fam, lambda th: pure([1, np.exp(1j * th)])),
        *witnesses.capacity_witness(fam),
        witnesses.bloch_volume_witness(fam),
        witnesses.entanglement_witness(fam),
        witnesses.mutual_info_witness(fam),
        witnesses.discord_witness(fam),
    ]
    for s in series:
        lines.append(_line(f"{s.kind} monotone", not s.violations, f"{len(s.violations)} violations"))
    return lines


def cmd_repro(case: str, cfg: RunConfig) -> int:
    if case == "sin":
        lines = _repro_sin()
    elif case == "tan":
        lines = _repro_degree(RateFunction.tangent(), 0.803)
    elif case == "exACH":
        lines = _repro_damped_dephasing()
    else:
        lines = _repro_const()
    out = Writer(cfg)
    out.json(f"repro_{case}", {"case": case, "checks": lines})
    return EXIT_OK if all(x["pass"] for x in lines) else EXIT_NUMERIC


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--out", help="output directory (nothing is written without it)")
    common.add_argument("--seed", type=int, help="random seed (default 0)")
    common.add_argument("--format", choices=FORMATS, help="output formats (default both)")
    common.add_argument("--inverse", choices=INVERSE_CHOICES, help="inverse strategy for intermediate maps")
    common.add_argument("--budget", type=int, help="sample budget for randomized optimizers")
    parser = argparse.ArgumentParser(prog="nmq", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("evolve", parents=[common], help="propagate a model and dump the maps")
    sub.add_parser("measure", parents=[common], help="evaluate non-Markovianity measures")
    sub.add_parser("witness", parents=[common], help="evaluate monotonicity witnesses")
    sub.add_parser("classical", parents=[common], help="divisibility checks for a classical transition family")
    rp = sub.add_parser("repro", parents=[common], help="reproduce reference numbers with pass/fail lines")
    rp.add_argument("case", choices=REPRO_CASES)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
        if args.command == "evolve":
            return cmd_evolve(cfg)
        if args.command == "measure":
            return cmd_measure(cfg)
        if args.command == "witness":
            return cmd_witness(cfg)
        if args.command == "classical":
            return cmd_classical(cfg)
        return cmd_repro(args.case, cfg)
    except SingularMap as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SINGULAR
    except ValidationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (StepUnderflowError, RatePoleError, NMQError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
