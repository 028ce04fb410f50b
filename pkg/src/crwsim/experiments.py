"""Experiment configuration and the runner behind the command line.

A run is fully described by an :class:`ExperimentConfig`; its plain-text
``key=value`` form round-trips exactly and is embedded in every JSON
summary, so any reported number can be regenerated from its summary.
"""
import dataclasses
import json
import time
from dataclasses import dataclass, field

import numpy as np

from . import bounds, crw, dual, nbtree, oracle
from .graphs import ConfigurationError, FiniteGraph, LazyTree, make_graph
from .stats import ExactSeries, write_csv

SCHEMA_VERSION = 1
COMMANDS = ("estimate", "verify-bounds", "duality", "nb-compare", "oracle", "martingale")
METHODS = ("direct", "dual", "oracle", "nb_full", "nb_zap", "nb_dual")
DUALITY_TOL = 1e-8


@dataclass
class ExperimentConfig:
    command: str = "estimate"
    graph: str = "cycle:8"
    v: int = 0
    method: str = "dual"
    t: str = "1"
    reps: int = 10000
    seed: int = 0
    size_cap: int = dual.DEFAULT_SIZE_CAP
    radius: int = 0
    level: float = 0.99
    fixed_tree: bool = False
    tree_seed: int = 0
    planted: bool = False
    T: float = 4.0
    n_jumps: int = 1000
    thresholds: str = ""
    sigma: str = ""
    chain: str = ""
    output: str = ""
    summary: str = ""
    samples: str = ""

    def validate(self):
        if self.command not in COMMANDS:
            raise ConfigurationError(f"unknown command {self.command!r}; choose from {', '.join(COMMANDS)}")
        if self.method not in METHODS:
            raise ConfigurationError(f"unknown method {self.method!r}; choose from {', '.join(METHODS)}")
        if self.reps < 1:
            raise ConfigurationError("reps must be >= 1")
        if not 0 < self.level < 1:
            raise ConfigurationError("level must lie in (0, 1)")
        return self

    def to_text(self):
        lines = []
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            lines.append(f"{f.name}={repr(value) if isinstance(value, float) else value}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text, base=None):
        """Parse ``key=value`` lines (``#`` starts a comment) over ``base`` or the defaults."""
        values = dataclasses.asdict(base) if base is not None else {}
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigurationError(f"line {lineno}: expected key=value, got {raw!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in types:
                raise ConfigurationError(f"line {lineno}: unknown key {key!r}")
            values[key] = _convert(types[key], value, key)
        return cls(**values)

    @classmethod
    def load(cls, path, base=None):
        with open(path) as fh:
            return cls.from_text(fh.read(), base)

    def as_dict(self):
        return dataclasses.asdict(self)


def _convert(kind, value, key):
    try:
        if kind in (bool, "bool"):
            if value.lower() in ("1", "true", "yes", "on"):
                return True
            if value.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        if kind in (int, "int"):
            return int(float(value)) if "e" in value.lower() else int(value)
        if kind in (float, "float"):
            return float(value)
    except ValueError:
        raise ConfigurationError(f"{key}: cannot parse {value!r}") from None
    return value


def parse_grid(spec):
    """``linear:a:b:n``, ``log:a:b:n`` or a comma list such as ``0.25,1,4``."""
    spec = str(spec).strip()
    try:
        if spec.startswith(("linear:", "log:")):
            kind, a, b, n = spec.split(":")
            a, b, n = float(a), float(b), int(n)
            if n < 1 or b < a:
                raise ValueError
            if kind == "linear":
                return np.linspace(a, b, n)
            if a <= 0:
                raise ConfigurationError("log grids need a positive start")
            return np.geomspace(a, b, n)
        grid = np.array([float(x) for x in spec.split(",") if x.strip()])
    except ValueError:
        raise ConfigurationError(f"cannot parse time grid {spec!r}; use linear:a:b:n, log:a:b:n or a,b,c") from None
    if len(grid) == 0 or np.any(np.diff(grid) <= 0) or np.any(grid < 0):
        raise ConfigurationError(f"time grid {spec!r} must be nonempty, nonnegative and strictly increasing")
    return grid


def parse_pairs(spec):
    """``t:u,t:u`` into a list of float pairs."""
    out = []
    for item in filter(None, (s.strip() for s in spec.split(","))):
        try:
            t, u = (float(x) for x in item.split(":"))
        except ValueError:
            raise ConfigurationError(f"cannot parse pair {item!r}; expected t:u") from None
        out.append((t, u))
    return out


def _ints(spec):
    try:
        return [int(x) for x in spec.split(",") if x.strip()]
    except ValueError:
        raise ConfigurationError(f"cannot parse integer list {spec!r}") from None


@dataclass
class Report:
    config: ExperimentConfig
    csv: str
    checks: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)
    replicates: dict = field(default_factory=dict)
    elapsed: float = 0.0
    samples: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(c["pass"] for c in self.checks)

    def summary(self):
        return {
            "schema_version": SCHEMA_VERSION,
            "command": self.config.command,
            "config": self.config.as_dict(),
            "config_text": self.config.to_text(),
            "checks": self.checks,
            "passed": self.passed,
            "replicates": self.replicates,
            "extra": self.extra,
            "wall_clock_s": self.elapsed,
        }

    def write(self):
        cfg = self.config
        if cfg.output:
            with open(cfg.output, "w", newline="") as fh:
                fh.write(self.csv)
        if cfg.summary:
            with open(cfg.summary, "w") as fh:
                json.dump(self.summary(), fh, indent=2, sort_keys=True, default=_json_default)
                fh.write("\n")
        for suffix, values in self.samples.items():
            with open(f"{cfg.samples}.{suffix}.txt", "w") as fh:
                fh.writelines(f"{x!r}\n" for x in values)


def _json_default(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(type(x))


# ----------------------------------------------------------------- graphs

def _graph(cfg):
    g = make_graph(cfg.graph, cfg.tree_seed)
    if cfg.method == "direct" and isinstance(g, LazyTree):
        if cfg.radius <= 0:
            raise ConfigurationError("direct estimation on an infinite graph needs --radius R for a finite window")
        if g.kind == "line":
            g = make_graph(f"line:{cfg.radius}")
        elif g.kind == "regular_tree":
            g = make_graph(f"regtree:{g.branching}:{cfg.radius}")
        elif g.kind == "binary_tree":
            g = make_graph(f"bintree:{cfg.radius}")
        else:
            raise ConfigurationError("direct estimation is not available on Galton-Watson trees; use --method dual")
    return g


def _max_degree(g):
    """Degree bound ``D`` of the graph, or ``None`` for unbounded (Galton-Watson) trees."""
    if isinstance(g, FiniteGraph):
        if g.nominal_degree is not None:
            return int(np.max(g.nominal_degree))
        return g.max_degree
    if g.kind == "gw_lazy":
        return None
    return g.branching


def _series(cfg, g, grid):
    if cfg.method == "direct":
        return crw.crw_occupancy_series(g, cfg.v, grid, cfg.reps, cfg.seed, cfg.level)
    if cfg.method == "dual":
        return dual.survival_series(g, cfg.v, grid, cfg.reps, cfg.seed, cfg.size_cap, cfg.fixed_tree, cfg.level)
    if cfg.method == "oracle":
        return ExactSeries(grid, oracle.crw_exact_pt(g, cfg.v, grid))
    if cfg.method in ("nb_full", "nb_zap"):
        if cfg.v != 0:
            raise ConfigurationError("non-backtracking estimates are for the root (v=0)")
        model = "full_nb" if cfg.method == "nb_full" else "zap"
        res = nbtree.root_occupation(model, g, max(cfg.T, grid[-1]), cfg.reps, cfg.seed, grid, cfg.planted,
                                     cfg.level)
        return res.occupancy, res
    if cfg.method == "nb_dual":
        return nbtree.nb_dual_survival(nbtree.RootedTree(g, cfg.planted), grid, cfg.reps, cfg.seed,
                                       cfg.fixed_tree, cfg.level)
    raise ConfigurationError(f"method {cfg.method!r} does not produce a series")


# --------------------------------------------------------------- commands

def _estimate(cfg, report):
    g = _graph(cfg)
    out = _series(cfg, g, parse_grid(cfg.t))
    series, res = out if isinstance(out, tuple) else (out, None)
    if res is not None:
        report.samples["X_T"] = res.X.tolist()
        report.extra["X_T_mean"] = res.mean
        report.extra["X_T_se"] = res.se
    report.csv = series.to_csv()
    report.replicates = {"requested": cfg.reps, "cap_hit": getattr(series, "cap_hit", 0.0)}
    if getattr(series, "cap_biased", False):
        report.extra["cap_biased"] = True
    return series


def _verify_bounds(cfg, report):
    g = _graph(cfg)
    grid = parse_grid(cfg.t)
    D = _max_degree(g)
    checks = []
    sigma_pairs = parse_pairs(cfg.sigma)
    csv_parts = []
    if cfg.method in ("direct", "dual"):
        series = _series(cfg, g, grid)
        csv_parts.append(series.to_csv())
        if D is not None:
            checks += bounds.check_series("bounded_degree", series, bounds.lower_bound_bounded_degree(D, series.t),
                                          "lower")
        if isinstance(make_graph(cfg.graph, cfg.tree_seed), LazyTree):
            pos = series.t > 0
            comp = np.ones_like(series.t)
            comp[pos] = oracle.constant_rate_survival(1.0, series.t[pos])
            checks += bounds.check_series("comparator_a1", series, comp, "upper")
        if D is None:
            checks.append(_gw_form_check(series))
        report.replicates = {"requested": cfg.reps, "cap_hit": getattr(series, "cap_hit", 0.0)}
    if sigma_pairs:
        checks += _sigma_checks(cfg, g, D, sigma_pairs, report)
    if not checks:
        raise ConfigurationError("nothing to verify: use --method direct|dual and/or --sigma t:u,...")
    report.checks = [c.row() if isinstance(c, bounds.BoundCheck) else c for c in checks]
    report.csv = "".join(csv_parts) if csv_parts else write_csv([(r["t"], r["estimate"], r["ci_low"], r["ci_high"],
                                                                   cfg.reps, "sigma", 0.0) for r in report.checks])


def _gw_form_check(series):
    # C (t log t)^-1 with C unquantified: only the positivity of inf p t log t is testable
    mask = series.t > 1
    if not mask.any():
        raise ConfigurationError("the Galton-Watson check needs grid times above 1")
    lo, _ = series.ci
    scaled = series.estimate[mask] * series.t[mask] * np.log(series.t[mask])
    scaled_lo = lo[mask] * series.t[mask] * np.log(series.t[mask])
    i = int(np.argmin(scaled))
    return {"bound": "gw_t_log_t", "t": float(series.t[mask][i]), "bound_value": 0.0,
            "estimate": float(scaled[i]), "ci_low": float(scaled_lo.min()), "ci_high": float(scaled[i]),
            "se": float(series.se[mask][i] * series.t[mask][i] * np.log(series.t[mask][i])), "kind": "positive",
            "pass": bool(scaled_lo.min() > 0)}


def _sigma_checks(cfg, g, D, pairs, report):
    if not isinstance(g, FiniteGraph):
        raise ConfigurationError("return-time checks simulate the walk directly; give a window such as regtree:3:12")
    if D is None:
        raise ConfigurationError("return-time checks need a bounded degree")
    starts = sorted({t for t, _ in pairs})
    horizon = max(u for _, u in pairs)
    occ_grid = np.linspace(0.0, horizon, 161)
    samples, occ = crw.sigma_samples(g, cfg.v, starts, horizon, cfg.reps, cfg.seed, grid=occ_grid, level=cfg.level)
    by_start = dict(zip(starts, samples))
    integral = bounds.OccupancyIntegral.from_series(occ)
    checks = []
    for t, u in pairs:
        p, se = by_start[t].tail(u)
        lo, hi = _wilson_pair(p, cfg.reps, cfg.level)
        checks.append(bounds.BoundCheck(f"sigma_tail_degree(t={t:g},u={u:g})", u,
                                        bounds.sigma_tail_bound_degree(D, t, u), p, lo, hi, se, "upper"))
        checks.append(bounds.BoundCheck(f"sigma_tail_general(t={t:g},u={u:g})", u,
                                        bounds.sigma_tail_bound_general(t, integral(t, u)), p, lo, hi, se, "upper"))
    report.extra["sigma_censored"] = {f"{t:g}": float(by_start[t].censored.mean()) for t in starts}
    return checks


def _wilson_pair(p, n, level):
    from .stats import wilson_interval

    lo, hi = wilson_interval(round(p * n), n, level)
    return float(lo), float(hi)


def _duality(cfg, report):
    g = make_graph(cfg.graph)
    grid = parse_grid(cfg.t)
    a = np.atleast_1d(oracle.crw_exact_pt(g, cfg.v, grid))
    b = np.atleast_1d(oracle.cluster_exact_survival(g, cfg.v, grid))
    gap = np.abs(a - b)
    if np.any(gap > 1e-6):
        raise oracle.ModelFault(f"duality gap {gap.max():.3e} exceeds 1e-6")
    report.csv = write_csv(zip(grid.tolist(), a.tolist(), b.tolist(), gap.tolist()),
                           header=("t", "crw_exact", "cluster_exact", "gap"))
    report.checks = [{"bound": "duality_gap", "t": float(t), "bound_value": DUALITY_TOL, "estimate": float(d),
                      "kind": "upper", "pass": bool(d <= DUALITY_TOL)} for t, d in zip(grid, gap)]


def _nb_compare(cfg, report):
    g = make_graph(cfg.graph)
    grid = parse_grid(cfg.t) if cfg.t else None
    if grid is not None and grid[-1] > cfg.T:
        grid = np.array([cfg.T])
    full = nbtree.root_occupation("full_nb", g, cfg.T, cfg.reps, cfg.seed, grid, cfg.planted, cfg.level)
    zap = nbtree.root_occupation("zap", g, cfg.T, cfg.reps, cfg.seed + 1, grid, cfg.planted, cfg.level)
    cmp = nbtree.compare_models(full, zap)
    report.csv = write_csv(list(full.occupancy.rows()) + list(zap.occupancy.rows()))
    report.samples = {"full_nb": full.X.tolist(), "zap": zap.X.tolist()}
    report.checks = [
        {"bound": "mean_X_T", "t": cfg.T, "bound_value": 3 * cmp.pooled_se,
         "estimate": abs(cmp.mean_full - cmp.mean_zap), "kind": "upper", "pass": bool(cmp.means_agree)},
        {"bound": "ks_X_T", "t": cfg.T, "bound_value": cmp.ks_critical, "estimate": cmp.ks, "kind": "upper",
         "pass": bool(cmp.ks_pass)},
    ]
    report.extra = dataclasses.asdict(cmp)
    report.replicates = {"requested": cfg.reps, "per_model": cfg.reps}


def _oracle(cfg, report):
    grid = parse_grid(cfg.t)
    if cfg.chain:
        kind, _, arg = cfg.chain.partition(":")
        try:
            rate = float(arg)
        except ValueError:
            raise ConfigurationError(f"cannot parse chain {cfg.chain!r}; use branching:D or constant:a") from None
        if kind == "branching":
            values = oracle.branching_survival(rate, grid)
            closed = 1.0 / (1.0 + rate * grid)
        elif kind == "constant":
            values = oracle.constant_rate_survival(rate, grid)
            closed = oracle.constant_rate_survival_bessel(rate, grid)
            report.extra["asymptote"] = oracle.constant_rate_asymptote(rate)
        else:
            raise ConfigurationError(f"unknown chain {kind!r}; use branching:D or constant:a")
        values = np.atleast_1d(values)
        diff = np.abs(values - np.atleast_1d(closed))
        report.checks = [{"bound": f"{kind}_closed_form", "t": float(t), "bound_value": 1e-6, "estimate": float(d),
                          "kind": "upper", "pass": bool(d <= 1e-6)} for t, d in zip(grid, diff)]
        report.csv = ExactSeries(grid, values, f"oracle_{kind}").to_csv()
        return
    g = make_graph(cfg.graph)
    report.csv = ExactSeries(grid, oracle.crw_exact_pt(g, cfg.v, grid)).to_csv()


def _martingale(cfg, report):
    g = make_graph(cfg.graph, cfg.tree_seed)
    thresholds = _ints(cfg.thresholds)
    m = dual.martingale_trace(g, cfg.v, cfg.n_jumps, cfg.reps, cfg.seed, thresholds, fixed_tree=cfg.fixed_tree)
    report.csv = write_csv(zip(m.indices.tolist(), m.mean.tolist(), m.se.tolist()),
                           header=("jump", "mean_size", "se"))
    checks = []
    for i, mean, se in zip(m.indices, m.mean, m.se):
        checks.append({"bound": "martingale_mean", "t": int(i), "bound_value": 1.0, "estimate": float(mean),
                       "se": float(se), "kind": "equal", "pass": bool(abs(mean - 1.0) <= 3 * se + 1e-12)})
    for thr, p, se in zip(m.thresholds, m.exceed, m.exceed_se):
        checks.append({"bound": f"doob_sup_gt_{int(thr)}", "t": cfg.n_jumps, "bound_value": 1.0 / thr,
                       "estimate": float(p), "se": float(se), "kind": "upper", "pass": bool(p <= 1.0 / thr + 3 * se)})
    report.checks = checks
    report.replicates = {"requested": cfg.reps}


_RUNNERS = {"estimate": _estimate, "verify-bounds": _verify_bounds, "duality": _duality,
            "nb-compare": _nb_compare, "oracle": _oracle, "martingale": _martingale}


def run(cfg):
    """Run one experiment and return its :class:`Report` (nothing is written)."""
    cfg.validate()
    report = Report(cfg, "")
    start = time.perf_counter()
    _RUNNERS[cfg.command](cfg, report)
    report.elapsed = time.perf_counter() - start
    return report
