import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from crwsim.dual import (boundary_recount, cluster_init, cluster_run_until, cluster_step, comparison_walk_series,
                         jump_trace, martingale_trace, survival_series, truncated_lifetime)
from crwsim.graphs import ConfigurationError, GraphUsageError, make_graph
from crwsim.oracle import cluster_exact_survival, constant_rate_survival_bessel
from crwsim.rng import rng_stream
from crwsim.stats import EstimateSeries

SEED = 777


def test_init_singleton():
    g = make_graph("regtree:3")
    s = cluster_init(g, 0)
    assert s.members == {0} and s.boundary_out == 3 and s.rate == 6


def test_line_rate_is_four_until_absorbed():
    g = make_graph("line")
    s = cluster_init(g, 0)
    rng = rng_stream(SEED, 0)
    while s.members and s.jump_count < 200:
        assert s.rate == 4
        cluster_step(s, g, rng)


@settings(max_examples=30)
@given(seed=st.integers(0, 2**32), spec=st.sampled_from(["cycle:7", "bintree:3", "regtree:3", "gw:geom:0.5"]))
def test_skip_free_and_boundary_invariant(seed, spec):
    g = make_graph(spec, tree_seed=seed)
    s = cluster_init(g, 0)
    rng = rng_stream(seed, 2)
    prev = 1
    for _ in range(300):
        if not s.members or s.boundary_out == 0:
            break
        cluster_step(s, g, rng)
        assert abs(s.size - prev) == 1
        assert s.boundary_out == boundary_recount(s, g)
        if s.members and not g.is_finite:
            # a nonempty cluster on an infinite tree always has a boundary
            assert s.boundary_out >= 1
        prev = s.size


def test_rate_bounded_by_degree_times_size():
    g = make_graph("regtree:3")
    s = cluster_init(g, 0)
    rng = rng_stream(SEED, 3)
    for _ in range(500):
        if not s.members:
            break
        assert s.boundary_out <= 3 * s.size
        cluster_step(s, g, rng)


def test_absorbed_cluster_step_raises():
    g = make_graph("complete:2")
    s = cluster_init(g, 0)
    s.members.clear()
    with pytest.raises(GraphUsageError):
        cluster_step(s, g, rng_stream(1, 0))


def test_full_graph_is_frozen():
    g = make_graph("complete:2")
    s = cluster_init(g, 0)
    s.members.add(1)
    s.outside = {0: 0, 1: 0}
    s.boundary_out = 0
    cluster_step(s, g, rng_stream(1, 0))
    assert s.clock == np.inf and s.size == 2


def test_python_stepper_matches_oracle():
    g = make_graph("cycle:5")
    reps, t = 4000, 1.0
    alive = sum(bool(cluster_run_until(cluster_init(g, 0), g, rng_stream(SEED, i), t).members) for i in range(reps))
    p = cluster_exact_survival(g, 0, t)
    assert abs(alive / reps - p) < 4 * np.sqrt(p * (1 - p) / reps)


def test_jump_trace_padding():
    g = make_graph("line")
    absorbed = 0
    for i in range(20):
        tr = jump_trace(g, 0, 30, rng_stream(SEED, i))
        assert len(tr) == 31 and tr.sizes[0] == 1
        hit = np.flatnonzero(tr.sizes == 0)
        if len(hit):
            absorbed += 1
            assert np.all(tr.sizes[hit[0]:] == 0)
            assert len(jump_trace(g, 0, 30, rng_stream(SEED, i), padded=False)) == hit[0] + 1
    assert absorbed > 0


def test_jump_trace_stops_on_full_graph():
    g = make_graph("complete:2")
    sizes = [jump_trace(g, 0, 20, rng_stream(SEED, i)).sizes for i in range(20)]
    # K_2 from {0}: the first jump either fills the graph (frozen) or absorbs (padded)
    assert all((len(s) == 2 and s[1] == 2) or (len(s) == 21 and s[1] == 0) for s in sizes)


@pytest.mark.parametrize("spec,v", [("cycle:6", 0), ("star:4", 0), ("star:4", 2), ("path:5", 1), ("bintree:2", 3)])
def test_kernel_matches_oracle(spec, v):
    g = make_graph(spec)
    grid = np.array([0.25, 1.0, 4.0])
    s = survival_series(g, v, grid, 20_000, SEED)
    lo, hi = s.ci
    exact = cluster_exact_survival(g, v, grid)
    assert np.all((lo <= exact) & (exact <= hi))
    assert s.cap_hit == 0


def test_line_matches_bessel():
    # on Z the size is a +-1 walk at rate 2 each way
    grid = np.array([1.0, 5.0, 20.0])
    s = survival_series(make_graph("line"), 0, grid, 20_000, SEED)
    lo, hi = s.ci
    exact = constant_rate_survival_bessel(2.0, grid)
    assert np.all((lo <= exact) & (exact <= hi))


def test_size_cap_counts_as_alive():
    s = survival_series(make_graph("regtree:3"), 0, [1.0, 50.0], 2000, SEED, size_cap=3)
    assert s.cap_hit > 0.01 and s.cap_biased
    uncapped = survival_series(make_graph("regtree:3"), 0, [1.0, 50.0], 2000, SEED)
    assert np.all(s.estimate >= uncapped.estimate)


def test_annealed_vs_quenched_gw():
    g = make_graph("gw:geom:0.5", tree_seed=4)
    a = survival_series(g, 0, [1.0, 10.0], 5000, SEED)
    q = survival_series(g, 0, [1.0, 10.0], 5000, SEED, fixed_tree=True)
    assert a.meta["fixed_tree"] is False and q.meta["fixed_tree"] is True
    assert not np.array_equal(a.successes, q.successes)


def test_lazy_target_must_be_root():
    with pytest.raises(ConfigurationError):
        survival_series(make_graph("regtree:3"), 2, [1.0], 10, 1)


def test_martingale_mean_one():
    m = martingale_trace(make_graph("regtree:3"), 0, 100, 20_000, SEED, thresholds=[5, 20])
    assert list(m.indices) == [0, 1, 10, 100]
    assert m.mean[0] == 1.0
    assert np.all(np.abs(m.mean - 1.0) <= 4 * m.se + 1e-12)
    assert m.exceed[0] >= m.exceed[1]


def test_martingale_first_jump_distribution():
    # size after one jump is 0 or 2 with equal chance
    m = martingale_trace(make_graph("cycle:9"), 0, 1, 10_000, SEED)
    assert m.mean[-1] == pytest.approx(1.0, abs=4 * m.se[-1])


def test_martingale_record_errors():
    with pytest.raises(ConfigurationError):
        martingale_trace(make_graph("cycle:5"), 0, 10, 10, 1, record=[11])
    with pytest.raises(ConfigurationError):
        martingale_trace(make_graph("cycle:5"), 0, 0, 10, 1)


@pytest.mark.parametrize("D", [1, 3])
def test_comparison_walk(D):
    grid = np.array([0.5, 2.0])
    s = comparison_walk_series(D, grid, 20_000, SEED)
    exact = 1 / (1 + D * grid)
    assert np.all(np.abs(s.estimate - exact) <= 4 * np.sqrt(exact * (1 - exact) / 20_000))


def test_truncated_lifetime_of_exponential():
    t = np.linspace(0.0, 10.0, 2001)
    s = EstimateSeries(t, np.round(np.exp(-t) * 10**6).astype(int), 10**6, "oracle")
    assert truncated_lifetime(s)[-1] == pytest.approx(1 - np.exp(-10.0), abs=1e-4)


def test_truncated_lifetime_adds_origin():
    s = EstimateSeries([1.0, 2.0], [10, 10], 10, "x")
    assert np.allclose(truncated_lifetime(s), [1.0, 2.0])
