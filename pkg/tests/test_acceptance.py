"""Acceptance suite: one PASS/FAIL line per criterion.

Run directly (``python tests/test_acceptance.py``) or under pytest, where the
lines are collected and printed in the terminal summary. Criteria that cannot
be met as stated are still checked literally and marked xfail(strict=True), so
they show up as FAIL here and would flag loudly if they ever started passing.
"""

from __future__ import annotations

import functools
import itertools
import json
import math
import os
import sys
import tempfile
import time
import warnings
from collections import Counter
from pathlib import Path

import numpy as np
import pytest
from scipy.optimize import minimize

from gpnforecast.cli import main as cli_main
from gpnforecast.evaluation import MetricError, leaderboard, mape, rmse
from gpnforecast.features import (FEATURE_NAMES, FeatureMatrix, fit_schema, inverse_scale,
                                  is_weekend, raw_feature_matrix, scale_numeric, transform)
from gpnforecast.genre_qoe import (TYPE_SHARES, TYPE_VOCABULARY, GameType, SensitivityTable,
                                   build_lattice, qoe, qos, reachable, type_distribution)
from gpnforecast.models import ModelConfig, fit, fit_stepwise, fit_svr, split, split_indices
from gpnforecast.models.mlp import init_params, loss_and_grads
from gpnforecast.models.stepwise import CollinearityWarning
from gpnforecast.models.svr import kkt_violations, rbf_kernel
from gpnforecast.synth import (FEATURE_ANCHORS, QUANTILE_LEVELS, SynthConfig, catalog_type_map,
                               designated_reason, generate, write_corpus)
from gpnforecast.warehouse import clean, ingest_files

RESULTS: dict[int, str] = {}


def _corpus(n: int, seed: int):
    cfg = SynthConfig(n=n, seed=seed)
    facts, rejects = clean(generate(cfg))
    assert not rejects
    return facts, catalog_type_map(cfg)


def _july(facts):
    return [f for f in facts if (f.session_start.year, f.session_start.month) == (2020, 7)]


# --------------------------------------------------------------------------


def criterion_1():
    r = rmse([110, 180], [100, 200])
    m = mape([110, 180], [100, 200])
    try:
        mape([1, 2], [0, 2])
        raised = False
    except MetricError as exc:
        raised = "zero values" in str(exc)
    ok = abs(r - math.sqrt(250)) <= 1e-9 and abs(m - 10) <= 1e-9 and raised
    return ok, f"rmse={r:.12f} mape={m:.12f}% zero-actual raises={raised}"


def criterion_2():
    t0 = time.perf_counter()
    facts, tm = _corpus(50_000, 20200701)
    raw = raw_feature_matrix(facts)
    worst = []
    for j, name in enumerate(FEATURE_NAMES):
        col = raw[:, j]
        col = col[~np.isnan(col)]
        anchors = FEATURE_ANCHORS[name]
        for level, target in zip(QUANTILE_LEVELS[:-1], anchors[:-1]):
            got = float(np.percentile(col, 100 * level))
            tol = 1.0 if target < 20 else 0.05 * target
            worst.append((abs(got - target) / tol, f"{name} p{int(100 * level)}"))
        top = anchors[-1]
        if not 0.95 * top <= col.max() <= top:
            worst.append((math.inf, f"{name} max {col.max():g} vs {top:g}"))
    weekend = float(np.mean([is_weekend(f.session_start) for f in facts]))
    shares = {t.name: p for t, p in type_distribution(facts, tm)}
    share_err = max(abs(shares.get(k, 0.0) - v) for k, v in TYPE_SHARES.items())
    elapsed = time.perf_counter() - t0
    ratio, where = max(worst)
    ok = ratio <= 1 and abs(weekend - 0.482) <= 0.02 and share_err <= 0.5 and elapsed < 60
    return ok, (f"worst anchor {where} at {ratio:.2f} of tolerance; weekend={weekend:.4f}; "
                f"max type-share error {share_err:.3f} pp; {elapsed:.1f}s")


def criterion_3(tmp: Path):
    cfg = SynthConfig(n=5000, seed=33, inject_rejects=0.05)
    records = generate(cfg)
    path = tmp / "injected.csv"
    write_corpus(path, records)
    parsed, rejects = ingest_files([path])
    facts, more = clean(parsed)
    rejects += more
    injected = sum(designated_reason(r) is not None for r in records)
    hits = sum(designated_reason(records[int(r.source.rsplit(":", 1)[1]) - 2]) is r.reason
               for r in rejects)
    clean_ok = all(designated_reason(records[int(f.source.rsplit(":", 1)[1]) - 2]) is None
                   for f in facts)
    ok = (len(facts) + len(rejects) == len(records) and hits == injected == len(rejects)
          and clean_ok)
    by_reason = dict(sorted(Counter(r.reason.value for r in rejects).items()))
    return ok, (f"{len(facts)} facts + {len(rejects)} rejects = {len(records)} rows; "
                f"{hits}/{injected} injected violations in their designated reason {by_reason}")


def criterion_4():
    facts, tm = _corpus(5000, 44)
    ref = _july(facts)
    schema = fit_schema(ref)
    raw = raw_feature_matrix(ref)
    cells = scale_numeric(raw, schema)
    in_range = bool(np.all((cells >= 0) & (cells <= 1)))
    ok_mask = ~np.isnan(raw)
    err = float(np.max(np.abs(inverse_scale(cells, schema)[ok_mask] - raw[ok_mask])
                       / np.maximum(1.0, np.abs(raw[ok_mask]))))
    days = {}
    for f in facts:
        days.setdefault(f.session_start.weekday(), f)
    m = transform([days[d] for d in range(7)], schema, tm)
    weekend = [int(v) for v in m.column("WEEKEND")]
    ok = in_range and err <= 1e-9 and weekend == [0, 0, 0, 0, 1, 1, 1] and len(days) == 7
    return ok, (f"{cells.size} fit-partition cells in [0,1]: {in_range}; max round-trip error "
                f"{err:.2e}; weekend Mon..Sun = {weekend}")


def criterion_5():
    t0 = time.perf_counter()
    clean_runs = coef_runs = both = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        X = rng.standard_normal((200, 4))
        y = 3 * X[:, 0] + rng.standard_normal(200)
        m = FeatureMatrix(("x1", "noise1", "noise2", "noise3"), X, y, "planted")
        model, select = fit_stepwise(m, alpha=0.05)
        exact = select == ["x1"]
        close = abs(model.arrays["coef"][0] - 3) <= 0.05 * 3
        clean_runs += exact
        coef_runs += close
        both += exact and close
    elapsed = time.perf_counter() - t0
    ok = both >= 95 and elapsed < 60
    return ok, (f"noise fully eliminated in {clean_runs}/100 runs, coefficient within 5% in "
                f"{coef_runs}/100, both in {both}/100 (need >= 95; three null features are all "
                f"dropped at alpha 0.05 with probability about 0.95^3 = 0.857); {elapsed:.1f}s")


@functools.lru_cache(maxsize=None)
def _ordering_runs():
    """RF and stepwise on both target units for three seeds; reused by criterion 7."""
    runs = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CollinearityWarning)
        for seed in (1, 2, 3):
            facts, tm = _corpus(6000, 100 + seed)
            schema = fit_schema(_july(facts))
            train, test = split(transform(facts, schema, tm), 0.6, seed)
            row = {}
            for target in ("identity", "log"):
                tr = train.with_target(target)
                rf = fit(tr, ModelConfig("random-forest", seed=seed))
                sw = fit(tr, ModelConfig("stepwise-regression", seed=seed))
                report = leaderboard([("All", rf), ("All", sw)], test)
                row[target] = {r.algorithm: r for r in report.rows}
            runs.append((seed, row))
    return runs


def criterion_6():
    t0 = time.perf_counter()
    runs = _ordering_runs()
    parts, ok = [], True
    for seed, row in runs:
        for target, unit in (("identity", "ms"), ("log", "ln(ms)")):
            rf, sw = row[target]["Random Forest"].mape, row[target]["Stepwise Regression"].mape
            ok &= rf < sw
            parts.append(f"s{seed} {unit}: RF {rf:.2f}% < SR {sw:.2f}%")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 600
    return ok, "; ".join(parts) + f"; {elapsed:.0f}s"


def criterion_7():
    parts, ok = [], True
    for seed, row in _ordering_runs():
        log_ms = row["log"]["Random Forest"].mape_ms
        raw_ms = row["identity"]["Random Forest"].mape
        ok &= log_ms <= raw_ms
        parts.append(f"s{seed}: log-target {log_ms:.2f}% <= raw {raw_ms:.2f}%")
    return ok, "; ".join(parts)


def criterion_8():
    worst = 0.0
    h = 1e-6
    for draw in range(10):
        rng = np.random.default_rng(800 + draw)
        X = rng.standard_normal((16, 2))
        y = rng.standard_normal(16)
        params = [rng.standard_normal(p.shape) for p in init_params([2, 2, 1], rng)]
        _, grads = loss_and_grads(params, X, y)
        for p, g in zip(params, grads):
            for idx in np.ndindex(p.shape):
                old = p[idx]
                p[idx] = old + h
                up = loss_and_grads(params, X, y)[0]
                p[idx] = old - h
                down = loss_and_grads(params, X, y)[0]
                p[idx] = old
                num = (up - down) / (2 * h)
                scale = max(abs(num), abs(g[idx]))
                rel = 0.0 if scale < 1e-8 else abs(num - g[idx]) / scale
                worst = max(worst, rel)
    return worst <= 1e-4, f"worst relative gradient error over 10 draws x 9 parameters: {worst:.2e}"


def _dense_dual(X, y, C, eps, gamma):
    K = rbf_kernel(X, X, gamma)
    n = len(y)
    res = minimize(
        lambda z: 0.5 * (z[:n] - z[n:]) @ K @ (z[:n] - z[n:]) + eps * z.sum() - y @ (z[:n] - z[n:]),
        np.zeros(2 * n), method="SLSQP", bounds=[(0, C)] * (2 * n),
        constraints=[{"type": "eq", "fun": lambda z: z[:n].sum() - z[n:].sum()}],
        options={"ftol": 1e-12, "maxiter": 1000})
    return res.x[:n] - res.x[n:]


def criterion_9():
    facts, tm = _corpus(2000, 99)
    schema = fit_schema(_july(facts))
    m = transform(facts, schema, tm)
    idx = np.random.default_rng(9).choice(len(m), 200, replace=False)
    sub = m.take(np.sort(idx))
    model = fit_svr(sub, ModelConfig("svr"))
    kkt = kkt_violations(model, sub.X, sub.target, tol=1e-3)
    X = np.array([[0.0], [1.0], [2.0]])
    y = np.array([0.0, 1.0, 2.0])
    toy = fit_svr(FeatureMatrix(("x",), X, y, "toy"), ModelConfig("svr", {"tol": 1e-6}))
    dense = _dense_dual(X, y, 5.0, 0.1, toy.arrays["gamma"][0])
    dual_err = float(np.max(np.abs(toy.arrays["alpha"] - toy.arrays["alpha_star"] - dense)))
    worst = max(kkt.values())
    ok = worst <= 1e-3 and dual_err <= 1e-3
    return ok, (f"200-row KKT worst violation {worst:.2e} "
                f"({model.metadata['n_support']} support vectors); toy dual vs dense QP {dual_err:.2e}")


def criterion_10():
    facts, tm = _corpus(55_517, 10)
    m = transform(facts, fit_schema(_july(facts)), tm)
    a_train, a_test = split_indices(len(m), 0.6, seed=10)
    b_train, b_test = split_indices(len(m), 0.6, seed=10)
    ok = (len(m) == 55_517 and len(a_train) == 33_310 and len(a_test) == 22_207
          and np.array_equal(a_train, b_train) and np.array_equal(a_test, b_test)
          and len(np.intersect1d(a_train, a_test)) == 0)
    return ok, f"{len(m)} rows -> {len(a_train)} train / {len(a_test)} test; repeat identical"


def criterion_11():
    types = [GameType.parse(n) for n in TYPE_VOCABULARY if n != "OTHER"]
    edges = set(build_lattice(types))
    oracle = {(a, b) for a in types for b in types if a.genres < b.genres
              and not any(a.genres < c.genres < b.genres for c in types)}
    closure = reachable(sorted(edges, key=lambda e: (e[0].name, e[1].name)))
    leq = {(a, b) for a, b in closure} | {(a, a) for a in types}
    axioms = True
    for a, b in itertools.product(types, repeat=2):
        axioms &= ((a, b) in leq) == (a <= b)
        if (a, b) in leq and (b, a) in leq:
            axioms &= a == b
    for a, b, c in itertools.product(types, repeat=3):
        if (a, b) in leq and (b, c) in leq:
            axioms &= (a, c) in leq
    ok = len(types) == 22 and edges == oracle and axioms
    return ok, f"{len(types)} types, {len(edges)} cover edges, oracle match {edges == oracle}, axioms {axioms}"


def criterion_12():
    q = qos([80, 120], 100, 1)
    oracle_ok = abs(q - 0.7797) <= 1e-4
    lin = (qoe(0.5, 4).qoe == 2.0 and qoe(0.3, 1).qoe == 0.3
           and math.isclose(qoe(0.25, 3).qoe, qoe(0.5, 3).qoe / 2))
    range_ok = True
    for bad in (0.99, 5.01, -1):
        try:
            qoe(0.5, bad)
            range_ok = False
        except ValueError:
            pass
    rng = np.random.default_rng(12)
    si = SensitivityTable.default()
    agree = 0
    for _ in range(1000):
        gtype = GameType.parse(TYPE_VOCABULARY[rng.integers(len(TYPE_VOCABULARY))])
        a = rng.lognormal(4.5, 0.6, rng.integers(1, 30))
        b = rng.lognormal(4.5, 0.6, rng.integers(1, 30))
        qa, qb = qos(a), qos(b)
        ea, eb = qoe(qa, si[gtype]).qoe, qoe(qb, si[gtype]).qoe
        agree += (qa < qb) == (ea < eb) and (qa > qb) == (ea > eb)
    ok = oracle_ok and lin and range_ok and agree == 1000
    return ok, (f"qos({{80,120}}) = {q:.4f} vs oracle 0.7797 (sample-std variant "
                f"{qos([80, 120], ddof=1):.5f}); linearity {lin}; SI range checks {range_ok}; "
                f"ranking invariance {agree}/1000")


def criterion_13(tmp: Path):
    cfg = {"synth": {"n": 1500, "seed": 13, "inject_rejects": 0.01},
           "models": [{"algorithm": "stepwise-regression", "features": "all"},
                      {"algorithm": "random-forest", "features": "all",
                       "params": {"n_estimators": 60}},
                      {"algorithm": "random-forest", "features": "select",
                       "params": {"n_estimators": 60}},
                      {"algorithm": "mlp", "features": "select", "params": {"epochs": 5}},
                      {"algorithm": "svr", "features": "all"}]}
    trees = []
    cwd = os.getcwd()
    try:
        for name in ("a", "b"):
            d = tmp / name
            d.mkdir()
            (d / "cfg.json").write_text(json.dumps(cfg))
            os.chdir(d)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                code = cli_main(["--config", "cfg.json", "run"])
            if code != 0:
                return False, f"pipeline run {name} exited {code}"
            trees.append({str(p.relative_to(d)): p.read_bytes()
                          for p in sorted(d.rglob("*")) if p.is_file()})
    finally:
        os.chdir(cwd)
    a, b = trees
    diff = sorted(k for k in a.keys() | b.keys() if a.get(k) != b.get(k))
    n_models = sum(k.endswith(".npz") for k in a)
    n_reports = sum(k.startswith("report") for k in a)
    return not diff and n_models == 5, (f"{len(a)} files compared ({n_models} model artifacts, "
                                        f"{n_reports} report files); differing: {diff or 'none'}")


CRITERIA = [
    (1, "metric oracles", criterion_1, None),
    (2, "synthetic fidelity", criterion_2, None),
    (3, "cleaning partition", criterion_3, None),
    (4, "transform correctness", criterion_4, None),
    (5, "stepwise elimination", criterion_5,
     "95/100 exceeds the joint keep rate of three null features at alpha 0.05"),
    (6, "model ordering", criterion_6, None),
    (7, "log-target benefit", criterion_7, None),
    (8, "MLP gradient check", criterion_8, None),
    (9, "SVR KKT audit", criterion_9, None),
    (10, "split exactness", criterion_10, None),
    (11, "lattice correctness", criterion_11, None),
    (12, "QoE algebra", criterion_12,
     "the 0.7797 oracle matches neither population nor sample std within 1e-4"),
    (13, "end-to-end determinism", criterion_13, None),
]


def _run(num, title, func, tmp: Path | None):
    args = (tmp,) if func.__code__.co_argcount else ()
    ok, detail = func(*args)
    line = f"[{'PASS' if ok else 'FAIL'}] AC{num:<2} {title}: {detail}"
    RESULTS[num] = line
    print(line)
    return ok, detail


@pytest.mark.parametrize(
    "num,title,func",
    [pytest.param(n, t, f, id=f"AC{n:02d}",
                  marks=[pytest.mark.xfail(strict=True, reason=why)] if why else [])
     for n, t, f, why in CRITERIA])
def test_criterion(num, title, func, tmp_path):
    ok, detail = _run(num, title, func, tmp_path)
    assert ok, detail


def main() -> int:
    failures = 0
    for num, title, func, _ in CRITERIA:
        with tempfile.TemporaryDirectory() as tmp:
            ok, _ = _run(num, title, func, Path(tmp))
        failures += not ok
    print(f"{len(CRITERIA) - failures}/{len(CRITERIA)} criteria pass")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
