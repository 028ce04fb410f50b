import numpy as np
import pytest
from scipy import sparse

from crwsim.graphs import ConfigurationError, make_graph
from crwsim.oracle import (ModelFault, StateSpaceTooLarge, TruncationError, branching_survival,
                           cluster_exact_survival, cluster_generator, constant_rate_asymptote,
                           constant_rate_survival, constant_rate_survival_bessel, crw_exact_from,
                           crw_exact_pt, crw_generator, duality_gap, forward_distribution, k2_closed_form)

TIMES = np.array([0.25, 1.0, 4.0])


def test_k2_closed_form():
    g = make_graph("complete:2")
    assert np.allclose(crw_exact_pt(g, 0, TIMES), k2_closed_form(TIMES), atol=1e-12)
    assert np.allclose(cluster_exact_survival(g, 0, TIMES), k2_closed_form(TIMES), atol=1e-12)


def test_time_zero_everything_occupied():
    g = make_graph("cycle:5")
    assert crw_exact_pt(g, 2, 0.0) == pytest.approx(1.0)
    assert cluster_exact_survival(g, 2, 0.0) == pytest.approx(1.0)


@pytest.mark.parametrize("spec", ["path:4", "cycle:5", "star:4", "complete:3", "bintree:2"])
def test_generators_conservative(spec):
    g = make_graph(spec)
    for q in (crw_generator(g), cluster_generator(g)):
        assert np.allclose(np.asarray(q.sum(axis=1)).ravel(), 0.0, atol=1e-12)
        off = q - sparse.diags(q.diagonal())
        assert off.min() >= 0


def test_single_particle_stationary():
    # a lone walker's occupation of v tends to 1/n on a regular graph
    g = make_graph("cycle:6")
    assert crw_exact_from(g, [0], 3, 200.0) == pytest.approx(1 / 6, abs=1e-9)


def test_forward_distribution_sums_to_one():
    g = make_graph("path:4")
    p0 = np.zeros(16)
    p0[15] = 1.0
    d = forward_distribution(crw_generator(g), p0, [0.5, 3.0])
    assert np.allclose(d.sum(axis=1), 1.0)
    assert d[:, 0].max() == 0.0


@pytest.mark.parametrize("spec", ["path:3", "cycle:7", "star:4", "bintree:2"])
def test_duality_gap_tiny(spec):
    assert np.max(duality_gap(make_graph(spec), 0, TIMES)) <= 1e-8


def test_duality_gap_fault():
    with pytest.raises(ModelFault):
        duality_gap(make_graph("path:3"), 0, [1.0], fault_tol=-1.0)


def test_state_space_limit():
    with pytest.raises(StateSpaceTooLarge):
        crw_exact_pt(make_graph("cycle:13"), 0, 1.0)


def test_infinite_graph_rejected():
    with pytest.raises(ConfigurationError):
        crw_exact_pt(make_graph("line"), 0, 1.0)


@pytest.mark.parametrize("D", [1, 2, 3])
def test_branching_closed_form(D):
    t = np.array([0.5, 1.0, 2.0, 5.0])
    assert np.allclose(branching_survival(D, t), 1 / (1 + D * t), atol=1e-6)


def test_branching_leak_detected():
    with pytest.raises(TruncationError):
        branching_survival(3, 5.0, K=8)
    _, leak = branching_survival(1, 1.0, return_leak=True)
    assert leak < 1e-10


@pytest.mark.parametrize("a", [0.5, 1.0, 2.0])
def test_constant_rate_bessel(a):
    t = np.array([0.1, 1.0, 5.0, 20.0])
    assert np.allclose(constant_rate_survival(a, t), constant_rate_survival_bessel(a, t), atol=1e-8)


def test_constant_rate_asymptote():
    t = 1e6
    assert np.sqrt(t) * constant_rate_survival_bessel(2.0, t) == pytest.approx(constant_rate_asymptote(2.0), rel=1e-3)
    assert constant_rate_asymptote(2.0) == pytest.approx(1 / np.sqrt(2 * np.pi))


def test_bad_rates():
    with pytest.raises(ConfigurationError):
        branching_survival(0, 1.0)
    with pytest.raises(ConfigurationError):
        constant_rate_survival(-1, 1.0)


def test_oracle_bitwise_reproducible():
    t = np.array([0.5, 1.0, 2.0, 5.0])
    first = branching_survival(2, t)
    np.random.random(7)  # disturb numpy's global state between calls
    assert np.array_equal(first, branching_survival(2, t))
    g = make_graph("cycle:8")
    assert np.array_equal(crw_exact_pt(g, 0, t), crw_exact_pt(g, 0, t))
