"""Acceptance criteria 1-10.  Each test prints one PASS/FAIL line and asserts it."""

import filecmp
import json
import time

import numpy as np
import pytest
from scipy.linalg import expm

from nmq import channels, classical, cli, measures, states, witnesses
from nmq.dynamics import (
    CollisionModel,
    Dissipator,
    GKSLGenerator,
    RateFunction,
    collision_propagate,
    damped_dephasing_generator,
    dephasing_family,
    dephasing_generator,
    propagate,
)

from conftest import fibonacci_sphere, random_cptp, random_hermitian

TWO_PI = 2 * np.pi
IV = (0.0, TWO_PI)
GRID = np.linspace(0.0, TWO_PI, 513)


@pytest.fixture
def report(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}")
        return ok
    return emit


def damped_dephasing_model():
    return damped_dephasing_generator(1.0, RateFunction.sine(1.0, 1.0, np.pi / 2, 0.5), RateFunction.sine())


def test_criterion_01_rhp_degree(report):
    results = {}
    for name, rate, target in (("sin", RateFunction.sine(), 0.758), ("tan", RateFunction.tangent(), 0.803)):
        start = time.perf_counter()
        rep = measures.rhp_degree(dephasing_family(rate, 0.0, GRID), IV)
        results[name] = (rep.value, target, time.perf_counter() - start)
    ok = all(abs(v - t) <= 0.01 and dt < 10.0 for v, t, dt in results.values())
    detail = "; ".join(f"{k}: D = {v:.6f} (target {t} +- 0.01, {dt:.2f} s)" for k, (v, t, dt) in results.items())
    assert report(1, ok, detail)


def test_criterion_02_route_agreement(report):
    gaps = {}
    sin_gen = dephasing_generator(RateFunction.sine())
    fam = dephasing_family(RateFunction.sine(), 0.0, GRID)
    gm = measures.g_series(fam, IV, route="map")
    gaps["sin"] = np.max(np.abs(gm.g - measures.g_generator_series(sin_gen, gm.times)[0]))
    gen = damped_dephasing_model()
    fam = propagate(gen, 0.0, GRID)
    gm = measures.g_series(fam, IV, route="map")
    gaps["damped dephasing"] = np.max(np.abs(gm.g - measures.g_generator_series(gen, gm.times)[0]))
    ok = all(g <= 1e-4 for g in gaps.values())
    assert report(2, ok, "; ".join(f"{k}: max |g_map - g_gen| = {v:.2e}" for k, v in gaps.items()))


def _relative_entropy_closed(R):
    with np.errstate(divide="ignore"):
        return np.where(R < 1, R * np.log((1 + R) / np.where(R < 1, 1 - R, 1.0)), np.inf)


def _c_ea_closed(R):
    a, b = (1 + R) / 2, (1 - R) / 2
    return 2 * np.log(2) + a * np.log(a) + np.where(b > 0, b * np.log(np.where(b > 0, b, 1.0)), 0.0)


def _gap(got, want):
    got, want = np.asarray(got, dtype=float), np.asarray(want, dtype=float)
    both_inf = np.isinf(got) & np.isinf(want) & (np.sign(got) == np.sign(want))
    diff = np.where(both_inf, 0.0, np.abs(np.where(both_inf, 0.0, got) - np.where(both_inf, 0.0, want)))
    return float(np.max(np.nan_to_num(diff, nan=np.inf)))


def test_criterion_03_closed_forms(report):
    fam = dephasing_family(RateFunction.sine(), 0.0, np.linspace(0.0, TWO_PI, 512))
    R = np.exp(-2 * (1 - np.cos(fam.times)))
    plus, minus = states.plus_minus_pair()
    c_ea, q = witnesses.capacity_witness(fam)
    cea = _c_ea_closed(R)
    gaps = {
        "D1": _gap(witnesses.trace_distance_witness(fam, plus, minus).values, R),
        "F": _gap(witnesses.fidelity_witness(fam, plus, minus).values, 1 - R ** 2),
        "S_rel": _gap(witnesses.relative_entropy_witness(fam, plus, minus).values, _relative_entropy_closed(R)),
        "QFI": _gap(witnesses.qfi_flow_witness(fam, lambda th: states.pure([1, np.exp(1j * th)])).values, R ** 2),
        "|det M|": _gap(witnesses.bloch_volume_witness(fam).values, R ** 2),
        "E_N": _gap(witnesses.entanglement_witness(fam).values, np.log(1 + R)),
        "C_ea": _gap(c_ea.values, cea),
        "Q": _gap(q.values, cea - np.log(2)),
        "discord": _gap(witnesses.discord_witness(fam).values, cea - np.log(2)),
        "I": _gap(witnesses.mutual_info_witness(fam).values, cea),
    }
    ok = all(g <= 1e-8 for g in gaps.values())
    worst = max(gaps, key=gaps.get)
    assert report(3, ok, f"max error {gaps[worst]:.2e} ({worst}); " + ", ".join(f"{k} {v:.1e}" for k, v in gaps.items()))


def test_criterion_04_proportionality(report):
    rels = {}
    for name, gen in (("damped dephasing", damped_dephasing_model()), ("dephasing", dephasing_generator(RateFunction.sine()))):
        n_gamma = measures.decay_rate_measure(gen, IV).value
        n_rhp = measures.rhp_measure(gen, IV).value
        rels[name] = abs(n_gamma - gen.dim / 2 * n_rhp) / abs(n_rhp)
    ok = all(r <= 1e-6 for r in rels.values())
    assert report(4, ok, "; ".join(f"{k}: relative gap {v:.2e}" for k, v in rels.items()))


def _qutrit_generator():
    rng = np.random.default_rng(11)
    H = random_hermitian(3, rng)
    ops = [rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3)) for _ in range(2)]
    ops = [V / np.linalg.norm(V) for V in ops]
    return GKSLGenerator(3, 0.3 * H, tuple(Dissipator(RateFunction.constant(g), V) for g, V in zip((0.2, 0.05), ops)))


def _null_checks(fam, gen, iv):
    d = fam.dim
    values = {
        "rhp": measures.rhp_measure(fam, iv).value,
        "rhp_degree": measures.rhp_degree(fam, iv).value,
        "decay_rate": measures.decay_rate_measure(gen, iv).value,
        "blp": measures.blp_measure(fam, iv, samples=200).value,
        "helstrom": measures.helstrom_measure(fam, iv, samples=200).value,
        "k_div": measures.k_divisibility_degree(fam, iv, samples=200).value,
    }
    r1, r2 = states.pure(np.eye(d)[0]), states.pure(np.eye(d)[1])
    ket = lambda th: states.pure((np.eye(d)[0] + np.exp(1j * th) * np.eye(d)[1]) / np.sqrt(2))  # noqa: E731
    series = [
        witnesses.trace_distance_witness(fam, r1, r2, iv),
        witnesses.fidelity_witness(fam, r1, r2, iv),
        witnesses.relative_entropy_witness(fam, ket(0.3), states.maximally_mixed(d), iv),
        witnesses.qfi_flow_witness(fam, ket, 0.0, iv),
        *witnesses.capacity_witness(fam, iv, samples=8),
        witnesses.bloch_volume_witness(fam, iv),
        witnesses.entanglement_witness(fam, iv),
        witnesses.mutual_info_witness(fam, iv),
    ]
    if d == 2:
        series.append(witnesses.discord_witness(fam, iv))
    else:
        psi = np.zeros(2 * d)
        psi[[0, 3, 4]] = 1 / np.sqrt(3)  # |0,0> + |1,1> + |2,0>
        series.append(witnesses.discord_witness(fam, iv, initial_state=states.pure(psi)))
    violations = {s.kind: len(s.violations) for s in series}
    return values, violations


def test_criterion_05_markovian_null_suite(report):
    iv = (0.0, 3.0)
    grid = np.linspace(*iv, 129)
    models = {
        "qubit": damped_dephasing_generator(1.0, RateFunction.constant(0.4), RateFunction.constant(0.25)),
        "qutrit": _qutrit_generator(),
    }
    worst_value, total_violations, bad = 0.0, 0, []
    for name, gen in models.items():
        values, violations = _null_checks(propagate(gen, 0.0, grid), gen, iv)
        for k, v in values.items():
            worst_value = max(worst_value, abs(v))
            if abs(v) > 1e-6:
                bad.append(f"{name}.{k}={v:.2e}")
        for k, n in violations.items():
            total_violations += n
            if n:
                bad.append(f"{name}.{k}: {n} violations")
    rng = np.random.default_rng(4)
    cp_ok = True
    for d in (2, 3):
        U = expm(-1j * 0.15 * random_hermitian(2 * d, rng))
        fam = collision_propagate(CollisionModel(d, 2, U, np.diag([0.7, 0.3]), np.arange(1, 11) * 0.1))
        for k in range(len(fam) - 1):
            cp_ok &= channels.is_cp(channels.intermediate_map(fam.maps[k + 1], fam.maps[k], "exact"))
    ok = worst_value <= 1e-6 and total_violations == 0 and cp_ok
    detail = (f"max |measure| = {worst_value:.2e}, witness violations = {total_violations}, "
              f"collision intermediates CP = {cp_ok}" + (f" [{'; '.join(bad)}]" if bad else ""))
    assert report(5, ok, detail)


def test_criterion_06_discrimination_oracle(report):
    rng = np.random.default_rng(6)
    n = fibonacci_sphere(9998)
    sig = np.array([[[0, 1], [1, 0]], [[0, -1j], [1j, 0]], [[1, 0], [0, -1]]])
    effects = 0.5 * (np.eye(2) + np.einsum("ni,iab->nab", n, sig))
    effects = np.concatenate([effects, [np.zeros((2, 2)), np.eye(2)]])
    worst = 0.0
    for _ in range(50):
        q = rng.uniform()
        h = states.HelstromMatrix.from_states(q, states.random_state(2, rng), states.random_state(2, rng))
        # P_fail(Pi) = q Tr[rho1 (I - Pi)] + (1 - q) Tr[rho2 Pi] = q - Tr[delta Pi]
        brute = np.min(q - np.einsum("ab,nba->n", h.delta, effects).real)
        worst = max(worst, abs(brute - states.min_fail_probability(h)))
    assert report(6, worst <= 1e-3, f"max |P_fail - brute force| over 50 matrices = {worst:.2e} (10^4 effects)")


def test_criterion_07_contraction(report):
    rng = np.random.default_rng(7)
    violations, worst = 0, -np.inf
    for i in range(100):
        d = 2 if i < 50 else 3
        E = random_cptp(d, rng, n_kraus=int(rng.integers(1, d * d + 1)))
        for _ in range(100):
            X = random_hermitian(d, rng)
            Y = random_hermitian(d * d, rng)
            for gain in (
                np.linalg.norm(channels.apply(E, X), "nuc") - np.linalg.norm(X, "nuc"),
                np.linalg.norm(channels.apply_extended(E, Y, d), "nuc") - np.linalg.norm(Y, "nuc"),
            ):
                worst = max(worst, gain)
                violations += gain > 1e-10
    assert report(7, violations == 0, f"{violations} violations; largest norm increase {worst:.2e}")


def test_criterion_08_classical_fixture(report):
    proc, fam = classical.counterexample_fixture()
    divisible = classical.is_divisible(fam).divisible
    p1, p0 = proc.conditional(1, 0, 0), proc.conditional(1, 0, 1)
    ok = divisible and p1 == 1.0 and p0 == 0.0
    assert report(8, ok, f"divisible = {divisible}, P(1|0;0) = {p1}, P(1|0;1) = {p0}")


def test_criterion_09_k_divisibility(report, sin_family):
    k1 = measures.k_divisibility_degree(sin_family, IV, k=1)
    k2 = measures.k_divisibility_degree(sin_family, IV, k=2)
    shared = k2.metadata["level_values"][0]
    ok = k1.value >= 0.95 and k1.value <= k2.value and shared == k1.value
    assert report(9, ok, f"D_ND(1) = {k1.value:.6f}, D_ND(2) = {k2.value:.6f}, level-1 value reused = {shared == k1.value}")


def test_criterion_10_determinism(report, tmp_path):
    model = {"dim": 2, "hamiltonian": "sigma_z",
             "dissipators": [{"rate": {"kind": "sine", "params": {"offset": 0.2}}, "operator": "sigma_minus"},
                             {"rate": {"kind": "sine", "params": {}}, "operator": "sigma_z"}]}
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"model": model, "grid": 64, "budget": 100,
                               "measures": ["rhp", "blp", "helstrom", "k_divisibility"],
                               "witnesses": ["trace_distance", "capacity", "discord"]}))
    outs = []
    for run in ("a", "b"):
        out = tmp_path / run
        for cmd in ("measure", "witness"):
            assert cli.main([cmd, "--config", str(cfg), "--out", str(out), "--seed", "3", "--format", "json"]) == 0
        outs.append(out)
    names = sorted(p.name for p in outs[0].iterdir())
    match, mismatch, errors = filecmp.cmpfiles(outs[0], outs[1], names, shallow=False)
    ok = not mismatch and not errors and len(match) == len(names) > 0
    assert report(10, ok, f"{len(match)}/{len(names)} JSON reports byte-identical")
