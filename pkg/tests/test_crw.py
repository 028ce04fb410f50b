import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from crwsim.crw import (apply_ring, crw_init, crw_occupancy_series, crw_step, ring_stream, run_stream,
                        run_until, sigma_samples, window_agreement)
from crwsim.graphs import ConfigurationError, make_graph
from crwsim.oracle import crw_exact_from, crw_exact_pt
from crwsim.rng import rng_stream

SEED = 20240611


def test_init_all():
    g = make_graph("cycle:8")
    s = crw_init(g)
    assert s.occupied == set(range(8)) and s.total_rate == 16 and s.clock == 0.0


def test_init_subset_rate():
    g = make_graph("star:4")
    s = crw_init(g, {0, 2})
    assert s.total_rate == 3 + 1


def test_init_errors():
    g = make_graph("cycle:4")
    with pytest.raises(ConfigurationError):
        crw_init(g, set())
    with pytest.raises(ConfigurationError):
        crw_init(make_graph("regtree:3"))


def test_ring_on_empty_vertex_is_noop():
    g = make_graph("path:3")
    s = crw_init(g, {0})
    assert not apply_ring(s, g, 1, 2)
    assert s.occupied == {0}


def test_coalescence_on_ring():
    g = make_graph("path:3")
    s = crw_init(g, {0, 1})
    assert apply_ring(s, g, 0, 1)
    assert s.occupied == {1} and s.total_rate == 2


@settings(max_examples=30)
@given(seed=st.integers(0, 2**32), n=st.integers(3, 9))
def test_stepper_rate_bookkeeping(seed, n):
    g = make_graph(f"cycle:{n}")
    s = crw_init(g)
    rng = rng_stream(seed, 0)
    last = s.clock
    while len(s.occupied) > 1:
        crw_step(s, g, rng)
        assert s.total_rate == s.recount_rate(g)
        assert s.clock >= last
        last = s.clock


@settings(max_examples=25)
@given(seed=st.integers(0, 2**32), extra=st.sets(st.integers(0, 6), max_size=4))
def test_monotone_coupling(seed, extra):
    # the same ring stream from a smaller initial set stays inside the larger configuration
    g = make_graph("bintree:2")
    small = {0} | set(extra)
    big = small | {3, 5}
    stream = ring_stream(g, 3.0, rng_stream(seed, 1))
    a, b = crw_init(g, small), crw_init(g, big)
    for occ_a, occ_b in zip(run_stream(a, g, stream), run_stream(b, g, stream)):
        assert occ_a <= occ_b


def test_run_until_time_zero_unchanged():
    g = make_graph("cycle:5")
    s = run_until(crw_init(g), g, rng_stream(1, 0), 0.0)
    assert len(s.occupied) == 5


def test_python_stepper_matches_oracle():
    g = make_graph("path:4")
    reps, t = 4000, 1.0
    hits = sum(1 in run_until(crw_init(g), g, rng_stream(SEED, i), t).occupied for i in range(reps))
    p = crw_exact_pt(g, 1, t)
    assert abs(hits / reps - p) < 4 * np.sqrt(p * (1 - p) / reps)


@pytest.mark.parametrize("spec,v", [("cycle:8", 0), ("star:4", 1), ("complete:3", 2), ("bintree:2", 0)])
def test_kernel_matches_oracle(spec, v):
    g = make_graph(spec)
    grid = np.array([0.25, 1.0, 4.0])
    s = crw_occupancy_series(g, v, grid, 20_000, SEED)
    lo, hi = s.ci
    exact = crw_exact_pt(g, v, grid)
    assert np.all((lo <= exact) & (exact <= hi))


def test_kernel_from_subset():
    g = make_graph("path:5")
    grid = np.array([0.5, 2.0])
    s = crw_occupancy_series(g, 4, grid, 20_000, SEED, initial={0, 1})
    lo, hi = s.ci
    exact = crw_exact_from(g, [0, 1], 4, grid)
    assert np.all((lo <= exact) & (exact <= hi))


def test_series_time_zero_is_one():
    s = crw_occupancy_series(make_graph("cycle:6"), 0, [0.0, 1.0], 100, 1)
    assert s.estimate[0] == 1.0


def test_series_deterministic():
    g = make_graph("regtree:3:4")
    a = crw_occupancy_series(g, 0, [1.0, 2.0], 3000, 5).to_csv()
    b = crw_occupancy_series(g, 0, [1.0, 2.0], 3000, 5).to_csv()
    assert a == b


def test_series_worker_count_invariant(monkeypatch):
    g = make_graph("cycle:10")
    monkeypatch.setenv("CRWSIM_WORKERS", "1")
    a = crw_occupancy_series(g, 0, [1.0, 3.0], 4000, 9).to_csv()
    monkeypatch.setenv("CRWSIM_WORKERS", "4")
    b = crw_occupancy_series(g, 0, [1.0, 3.0], 4000, 9).to_csv()
    assert a == b


def test_sigma_samples_basic():
    g = make_graph("cycle:6")
    samples = sigma_samples(g, 0, 1.0, 5.0, 2000, SEED)
    assert np.all(samples.sigma >= 1.0) and np.all(samples.sigma <= 5.0)
    p0, _ = samples.tail(1.0)
    exact_occupied = crw_exact_pt(g, 0, 1.0)
    assert abs((1 - p0) - exact_occupied) < 4 * np.sqrt(exact_occupied * (1 - exact_occupied) / 2000)
    with pytest.raises(ConfigurationError):
        samples.tail(6.0)


def test_sigma_tail_monotone_and_grid():
    g = make_graph("regtree:3:4")
    (s1, s2), series = sigma_samples(g, 0, [2.0, 1.0], 6.0, 2000, SEED, grid=[1.0, 2.0])
    assert s1.t == 2.0 and s2.t == 1.0
    tails = [s2.tail(u)[0] for u in (1.0, 2.0, 4.0, 6.0)]
    assert all(a >= b for a, b in zip(tails, tails[1:]))
    # window starts are occupancy events of the same trajectories
    assert 1 - s2.tail(1.0)[0] == series.estimate[0]
    assert 1 - s1.tail(2.0)[0] == series.estimate[1]


def test_window_agreement():
    a = crw_occupancy_series(make_graph("line:20"), 0, [1.0, 2.0], 20_000, 1)
    b = crw_occupancy_series(make_graph("line:40"), 0, [1.0, 2.0], 20_000, 2)
    assert window_agreement(a, a).all()
    assert np.all(np.abs(a.estimate - b.estimate) <= 3 * np.sqrt(a.se**2 + b.se**2))


def test_infinite_graph_rejected():
    with pytest.raises(ConfigurationError):
        crw_occupancy_series(make_graph("line"), 0, [1.0], 10, 1)
