"""Acceptance criteria 1-11 at their stated scales.

Each test records a one-line verdict that the terminal summary prints. Every
Monte Carlo run goes through an ``ExperimentConfig`` so that criterion 11 can
rerun the same configs and compare CSV bytes.
"""
import math

import numpy as np
import pytest

from crwsim import oracle
from crwsim.experiments import ExperimentConfig, parse_grid, run
from crwsim.graphs import make_graph
from crwsim.nbtree import RootedTree, nb_cluster_trajectory
from crwsim.rng import rng_stream

REPS = 100_000
SEED = 2024

SMALL = ["path:2", "path:3", "path:4", "path:5", "cycle:3", "cycle:4", "cycle:5", "cycle:6", "cycle:7",
         "cycle:8", "star:4", "complete:2", "complete:3", "bintree:2"]
TIMES = "0.25,1,4"
# ten instances x three times x two methods = 60 calibration checks
CALIBRATION = ["path:3", "path:5", "cycle:4", "cycle:6", "cycle:8", "star:4", "complete:2", "complete:3",
               "bintree:2", "path:4"]

_RUNS = []


def _run(**kw):
    cfg = ExperimentConfig(**kw)
    report = run(cfg)
    _RUNS.append((cfg, report.csv))
    return report


def test_criterion_01_duality_exact(record_criterion):
    worst = 0.0
    for spec in SMALL:
        g = make_graph(spec)
        for v in range(g.n_vertices):
            worst = max(worst, float(np.max(oracle.duality_gap(g, v, parse_grid(TIMES)))))
        rep = _run(command="duality", graph=spec, t=TIMES)
        assert rep.passed
    ok = worst <= 1e-8
    record_criterion(1, ok, f"max duality gap {worst:.2e} over {len(SMALL)} instances, all vertices (tol 1e-8)")
    assert ok


def test_criterion_02_calibration(record_criterion):
    inside = total = 0
    misses = []
    for spec in CALIBRATION:
        exact = oracle.crw_exact_pt(make_graph(spec), 0, parse_grid(TIMES))
        for method in ("direct", "dual"):
            rep = _run(command="estimate", graph=spec, method=method, t=TIMES, reps=REPS, seed=SEED)
            for row, p in zip(rep.csv.split("\r\n")[1:-1], exact):
                t, est, lo, hi, *_ = row.split(",")
                hit = float(lo) <= p <= float(hi)
                inside += hit
                total += 1
                if not hit:
                    misses.append(f"{spec}/{method}/t={t}")
    frac = inside / total
    ok = frac >= 0.95
    record_criterion(2, ok, f"{inside}/{total} oracle values inside 99% CI ({frac:.1%}; need >= 95%)"
                     + (f"; misses {', '.join(misses)}" if misses else ""))
    assert ok


def test_criterion_03_branching(record_criterion):
    from crwsim.dual import comparison_walk_series

    grid = np.array([0.5, 1.0, 2.0, 5.0])
    worst_z = worst_ode = 0.0
    ok = True
    for D in (1, 2, 3):
        closed = 1 / (1 + D * grid)
        s = comparison_walk_series(D, grid, REPS, SEED + D)
        z = np.abs(s.estimate - closed) / s.se
        worst_z = max(worst_z, float(z.max()))
        ok &= bool(np.all(z <= 3))
        rep = _run(command="oracle", chain=f"branching:{D}", t="0.5,1,2,5")
        ode = max(c["estimate"] for c in rep.checks)
        worst_ode = max(worst_ode, ode)
        ok &= rep.passed
    record_criterion(3, ok, f"MC max |z| {worst_z:.2f} (need <= 3); ODE max error {worst_ode:.1e} (need <= 1e-6)")
    assert ok


def test_criterion_04_regular_tree_lower_bound(record_criterion):
    rep = _run(command="verify-bounds", graph="regtree:3", method="dual", t="log:0.1:100:15", reps=REPS, seed=SEED)
    rows = [c for c in rep.checks if c["bound"] == "bounded_degree"]
    ok = len(rows) == 15 and all(c["pass"] for c in rows)
    margin = min((c["estimate"] - c["bound_value"]) / max(c["se"], 1e-300) for c in rows)
    record_criterion(4, ok, f"15 log-grid times in [0.1, 100]; min (p_hat - 1/(1+3t))/SE = {margin:.1f} "
                     f"(need >= -3); cap_hit {rep.replicates['cap_hit']:.1e}")
    assert ok


def test_criterion_05_gw_t_log_t(record_criterion):
    rep = _run(command="verify-bounds", graph="gw:geom:0.5", method="dual", t="log:10:100:10", reps=REPS, seed=SEED)
    row = next(c for c in rep.checks if c["bound"] == "gw_t_log_t")
    ok = row["pass"] and row["estimate"] > 0
    record_criterion(5, ok, f"inf over [10,100] of p_hat t log t = {row['estimate']:.4f} at t={row['t']:.1f}, "
                     f"lower CI edge {row['ci_low']:.4f} (need > 0)")
    assert ok


def test_criterion_06_comparator(record_criterion):
    details = []
    ok = True
    for spec in ("line", "gw:geom:0.5"):
        rep = _run(command="verify-bounds", graph=spec, method="dual", t="5,20,50", reps=REPS, seed=SEED)
        rows = [c for c in rep.checks if c["bound"] == "comparator_a1"]
        ok &= len(rows) == 3 and all(c["pass"] for c in rows)
        details.append(spec + ": " + ", ".join(f"t={c['t']:g} {c['estimate']:.4f}<={c['bound_value']:.4f}"
                                               for c in rows))
        if spec == "line":
            est = np.array([c["estimate"] for c in rows])
            t = np.array([c["t"] for c in rows])
            fitted = float(np.sqrt(t[-1]) * est[-1])
    # reported only: Z's dual is the rate-2 walk, whose constant is 1/sqrt(2 pi)
    asym = oracle.constant_rate_asymptote(2.0)
    finite = math.sqrt(50) * oracle.constant_rate_survival_bessel(2.0, 50.0)
    record_criterion(6, ok, "; ".join(details) + f"; sqrt(t) p_hat on Z at t=50: {fitted:.4f} "
                     f"(exact at t=50 {finite:.4f}, limit 1/sqrt(2 pi) = {asym:.4f}, stated 1/(2 sqrt(pi)) = "
                     f"{1 / (2 * math.sqrt(math.pi)):.4f}, not asserted)")
    assert ok


def test_criterion_07_return_time_tail(record_criterion):
    rep = _run(command="verify-bounds", graph="regtree:3:12", method="oracle", sigma="1:3,1:5,2:8", reps=REPS,
               seed=SEED)
    degree = [c for c in rep.checks if c["bound"].startswith("sigma_tail_degree")]
    general = [c for c in rep.checks if c["bound"].startswith("sigma_tail_general")]
    ok = len(degree) == 3 and all(c["pass"] for c in degree)
    text = ", ".join(f"{c['bound'][18:-1]}: {c['estimate']:.4f}<={c['bound_value']:.4f}" for c in degree)
    gen = ", ".join(f"{c['bound_value']:.4f}{'' if c['pass'] else '(FAIL)'}" for c in general)
    record_criterion(7, ok, f"P(sigma_t > u) vs degree form: {text}; general form bounds {gen}")
    assert ok


def test_criterion_08_martingale_doob(record_criterion):
    parts = []
    ok = True
    # the size's jump chain is the same +-1 walk on any tree, so each graph gets its own seed
    for seed, spec in enumerate(("regtree:3", "gw:geom:0.5"), SEED):
        rep = _run(command="martingale", graph=spec, n_jumps=1000, reps=REPS, seed=seed)
        rows = {c["t"]: c for c in rep.checks}
        for i in (10, 100, 1000):
            c = rows[i]
            ok &= c["pass"]
            parts.append(f"{spec} i={i}: {c['estimate']:.3f}+-{c['se']:.3f}")
        n, b = 30, 2
        doob = _run(command="martingale", graph=spec, n_jumps=n * n, thresholds=str(b * n), reps=REPS, seed=seed + 10)
        c = next(c for c in doob.checks if c["bound"].startswith("doob"))
        ok &= c["pass"]
        parts.append(f"{spec} P(sup>{b * n})={c['estimate']:.4f}<={c['bound_value']:.4f}+3SE")
    record_criterion(8, ok, "; ".join(parts))
    assert ok


def test_criterion_09_rate_identity(record_criterion):
    # most clusters die early; keep sampling until enough trajectories run the full 10^3 steps
    steps, wanted = 1000, 25
    audited = attempts = 0
    for planted, start in ((True, 0), (False, 1)):
        base = make_graph("bintree")
        full = i = 0
        while full < wanted:
            tree = RootedTree(base.fresh(), planted=planted)
            tree.children(0)
            # raises InvariantViolation at the first audited state with r_plus != r_minus
            sizes = nb_cluster_trajectory(tree, start, steps, rng_stream(SEED + planted, i))
            audited += len(sizes)
            full += len(sizes) == steps + 1
            i += 1
        attempts += i
    record_criterion(9, True, f"r_plus = r_minus at all {audited} audited states of {attempts} trajectories, "
                     f"{wanted} planted-root and {wanted} off-root ones running the full {steps} steps")


def test_criterion_10_nb_reduction(record_criterion):
    rep = _run(command="nb-compare", graph="bintree:6", T=4.0, t="4", reps=10_000, seed=SEED)
    mean, ks = rep.checks
    e = rep.extra
    ok = rep.passed
    record_criterion(10, ok, f"mean X_T full {e['mean_full']:.4f} vs zap {e['mean_zap']:.4f} "
                     f"(|diff| {mean['estimate']:.4f} <= 3 pooled SE {mean['bound_value']:.4f}); "
                     f"KS {ks['estimate']:.4f} < {ks['bound_value']:.4f}")
    assert ok


def test_criterion_11_determinism(record_criterion):
    from crwsim.dual import comparison_walk_series

    runs = list(_RUNS)
    if not runs:
        pytest.skip("runs only after the other acceptance criteria in the same session")
    mismatched = [cfg.command + ":" + cfg.graph for cfg, csv in runs if run(cfg).csv.encode() != csv.encode()]
    grid = np.array([0.5, 1.0, 2.0, 5.0])
    a = comparison_walk_series(2, grid, REPS, SEED + 2).to_csv()
    b = comparison_walk_series(2, grid, REPS, SEED + 2).to_csv()
    if a.encode() != b.encode():
        mismatched.append("branching:2")
    ok = not mismatched
    record_criterion(11, ok, f"{len(runs) + 1} configs rerun, identical CSV bytes"
                     if ok else f"mismatch in {mismatched}")
    assert ok
