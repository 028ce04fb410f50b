import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from crwsim.rng import child_key, key_uniform, mix64, replicate_key, replicate_keys, rng_stream
from crwsim.stats import EstimateSeries, ExactSeries, ks_critical, wilson_interval, write_csv
from crwsim.workers import fan_out, worker_count


@given(seed=st.integers(0, 2**63), i=st.integers(0, 10**6))
def test_replicate_key_vector_matches_scalar(seed, i):
    assert int(replicate_keys(seed, 1, start=i)[0]) == replicate_key(seed, i)


def test_streams_reproducible_and_distinct():
    a = rng_stream(42, 3).random(5)
    assert np.array_equal(a, rng_stream(42, 3).random(5))
    assert not np.array_equal(a, rng_stream(42, 4).random(5))
    assert not np.array_equal(a, rng_stream(43, 3).random(5))


def test_keys_unique():
    keys = replicate_keys(7, 100_000)
    assert len(np.unique(keys)) == len(keys)


def test_child_keys_and_uniforms():
    k = mix64(5)
    kids = [child_key(k, j) for j in range(1000)]
    assert len(set(kids)) == 1000
    u = np.array([key_uniform(x) for x in kids])
    assert np.all((u > 0) & (u < 1))
    assert abs(u.mean() - 0.5) < 0.05


def test_fan_out_order_independent_of_workers(monkeypatch):
    keys = replicate_keys(1, 1000)
    one = np.concatenate(fan_out(lambda k: k.copy(), keys, workers=1))
    four = np.concatenate(fan_out(lambda k: k.copy(), keys, workers=4))
    assert np.array_equal(one, four)
    monkeypatch.setenv("CRWSIM_WORKERS", "3")
    assert worker_count() == 3


@given(n=st.integers(1, 5000), frac=st.floats(0, 1))
def test_wilson_contains_point(n, frac):
    k = round(frac * n)
    lo, hi = wilson_interval(k, n)
    assert 0 <= lo <= k / n <= hi <= 1


def test_wilson_coverage():
    rng = np.random.default_rng(0)
    p, n, trials = 0.3, 400, 4000
    k = rng.binomial(n, p, trials)
    lo, hi = wilson_interval(k, n, level=0.95)
    cover = np.mean((lo <= p) & (p <= hi))
    assert 0.93 <= cover <= 0.97


def test_ks_critical_value():
    assert ks_critical(10_000, 10_000) == pytest.approx(1.6276 * math.sqrt(2 / 10_000), rel=1e-3)


def test_csv_layout(tmp_path):
    s = EstimateSeries([0.5, 1.0], [3, 10], 10, "direct")
    text = s.to_csv(tmp_path / "a.csv")
    lines = text.split("\r\n")
    assert lines[0] == "t,estimate,ci_low,ci_high,replicates,method,cap_hit"
    assert lines[1].startswith("0.5,0.3,")
    assert (tmp_path / "a.csv").read_bytes() == text.encode()
    rows = EstimateSeries.read_csv(tmp_path / "a.csv")
    assert rows[1]["estimate"] == 1.0 and rows[1]["method"] == "direct"


def test_exact_series_zero_width():
    text = ExactSeries([1.0], [0.25]).to_csv()
    assert text.split("\r\n")[1] == "1.0,0.25,0.25,0.25,0,oracle,0.0"


def test_write_csv_custom_header():
    assert write_csv([(1, "x")], header=("a", "b")) == "a,b\r\n1,x\r\n"


@pytest.mark.parametrize("theta", [0.05, 0.5, 0.9])
def test_wilson_99_calibration(theta):
    rng = np.random.default_rng(int(theta * 100))
    k = rng.binomial(2000, theta, 1000)
    lo, hi = wilson_interval(k, 2000)
    assert 0.98 <= np.mean((lo <= theta) & (theta <= hi)) <= 1.0
