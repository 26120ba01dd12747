import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fixtures import random_network, random_swing
from losslim.analysis import (
    GainMatrix,
    aggregate_by_cluster,
    closed_loop,
    compare_lumped,
    ensemble_average,
    jensen_report,
    network_gains,
    optimal_controller,
    subblock_gains,
)
from losslim.errors import InfeasibleSizing, NonpositiveInertia, NonzeroFeedthrough
from losslim.lossless import SQRT2
from losslim.netgen import EnsembleConfig, generate_network
from losslim.numlin import StateSpace, h2_norm, hinf_norm
from losslim.swing import build_statespace, permute_generators, swing_model

SMALL = EnsembleConfig(n_clusters=3, total_buses=12, seed=5)
SMALL_FIXED = EnsembleConfig(n_clusters=3, total_buses=12, fixed_cluster_sizes=(4, 4, 4))


@pytest.fixture(scope="module")
def small_net():
    return generate_network(SMALL)


def test_single_generator_h2_gain():
    plant = build_statespace([1.0], np.zeros((1, 0))).sys
    g = subblock_gains(plant, optimal_controller(plant, "H2"), "H2")
    assert g.values.shape == (1, 1)
    assert g.values[0, 0] == pytest.approx(SQRT2, rel=1e-12)


def test_two_generator_consistency_identity():
    model = build_statespace([6.0, 3.0], np.array([[1.0], [-1.0]]))
    K = optimal_controller(model.sys, "H2")
    g = subblock_gains(model.sys, K, "H2")
    total = h2_norm(closed_loop(model.sys, K)) ** 2
    assert np.sum(g.values**2) == pytest.approx(total, rel=1e-8)
    assert total == pytest.approx(1.0, rel=1e-12)


@settings(max_examples=10, deadline=None)
@given(n=st.integers(1, 8), seed=st.integers(0, 2**32 - 1))
def test_consistency_identity_property(n, seed):
    model, _ = random_swing(np.random.default_rng(seed), n)
    K = optimal_controller(model.sys, "H2")
    g = subblock_gains(model.sys, K, "H2")
    assert np.sum(g.values**2) == pytest.approx(h2_norm(closed_loop(model.sys, K)) ** 2, rel=1e-8)


def test_hinf_gains_diagonal_and_monotone(small_net):
    g = network_gains(small_net, "Hinf")
    np.testing.assert_allclose(np.diag(g.values), SQRT2, atol=1e-3)
    model = swing_model(small_net)
    full = hinf_norm(closed_loop(model.sys, optimal_controller(model.sys, "Hinf")))
    assert np.all(g.values <= full * (1 + 1e-6))


@settings(max_examples=5, deadline=None)
@given(n=st.integers(1, 6), seed=st.integers(0, 2**32 - 1))
def test_hinf_diagonal_property(n, seed):
    model, _ = random_swing(np.random.default_rng(seed), n)
    g = subblock_gains(model.sys, optimal_controller(model.sys, "Hinf"), "Hinf")
    np.testing.assert_allclose(np.diag(g.values), SQRT2, atol=1e-3)


def test_static_controller_makes_h2_gains_infinite(small_net):
    with pytest.raises(NonzeroFeedthrough):
        network_gains(small_net, "H2", controller="static_hinf")


def test_metric_names():
    assert GainMatrix(np.eye(1), "h-inf").metric == "Hinf"
    assert GainMatrix(np.eye(1), "h2").metric == "H2"
    with pytest.raises(ValueError):
        GainMatrix(np.eye(1), "H3")


def test_gain_matrix_validation():
    with pytest.raises(ValueError):
        GainMatrix(-np.eye(2), "H2")
    with pytest.raises(ValueError):
        GainMatrix(np.ones((2, 3)), "H2")
    g = GainMatrix(np.array([[1.0, np.e]]).repeat(2, 0), "H2", [4, 7], [0, 1])
    np.testing.assert_allclose(g.log().values, [[0.0, 1.0], [0.0, 1.0]])
    assert g.cluster_boundaries == [0, 1, 2]


@pytest.mark.parametrize("metric", ["H2", "Hinf"])
def test_permutation_equivariance(metric):
    model, _ = random_swing(np.random.default_rng(30), 5)
    perm = [3, 0, 4, 1, 2]
    permuted = permute_generators(model, perm)
    g = subblock_gains(model.sys, optimal_controller(model.sys, metric), metric)
    gp = subblock_gains(permuted.sys, optimal_controller(permuted.sys, metric), metric)
    np.testing.assert_allclose(gp.values, g.permuted(perm).values, rtol=1e-6)


@pytest.mark.parametrize("metric", ["H2", "Hinf"])
def test_threads_do_not_change_results(small_net, metric):
    a = network_gains(small_net, metric, threads=1).values
    b = network_gains(small_net, metric, threads=3).values
    assert np.array_equal(a, b)


def test_scaling_law_full_norm():
    model, _ = random_swing(np.random.default_rng(31), 4)
    alpha = 7.0
    scaled = build_statespace(alpha * np.diag(model.M), model.L)
    n1 = h2_norm(closed_loop(model.sys, optimal_controller(model.sys, "H2")))
    n2 = h2_norm(closed_loop(scaled.sys, optimal_controller(scaled.sys, "H2")))
    assert n2 == pytest.approx(n1 / np.sqrt(alpha), rel=1e-10)


def test_ensemble_single_run_matches_network():
    res = ensemble_average(SMALL_FIXED, 1, "H2")
    direct = network_gains(generate_network(SMALL_FIXED), "H2")
    np.testing.assert_array_equal(res.gains.values, direct.values)
    assert res.seeds == [0] and res.resampled == 0


def test_ensemble_repeated_seed_equals_single():
    res = ensemble_average(SMALL_FIXED, 2, "H2", seeds=[3, 3])
    single = network_gains(generate_network(EnsembleConfig(
        n_clusters=3, total_buses=12, fixed_cluster_sizes=(4, 4, 4), seed=3)), "H2")
    np.testing.assert_allclose(res.gains.values, single.values, rtol=1e-15)


def test_ensemble_requires_fixed_sizes():
    with pytest.raises(ValueError):
        ensemble_average(SMALL, 2, "H2")


def test_ensemble_resamples_failed_sizing(monkeypatch):
    import losslim.analysis as analysis

    real = analysis.generate_network

    def flaky(cfg):
        if cfg.seed == 1:
            raise InfeasibleSizing("forced")
        return real(cfg)

    monkeypatch.setattr(analysis, "generate_network", flaky)
    res = ensemble_average(SMALL_FIXED, 2, "H2")
    assert res.seeds == [0, 2] and res.resampled == 1


def test_ensemble_gives_up_after_max_resamples():
    cfg = EnsembleConfig(n_clusters=3, total_buses=12, fixed_cluster_sizes=(4, 4, 4),
                         max_sizing_iterations=1)
    with pytest.raises(InfeasibleSizing):
        ensemble_average(cfg, 1, "H2", max_resamples=3)


def test_jensen_examples():
    r = jensen_report([1.0, 1.0, 1.0])
    assert r["gap"] == 0.0
    r = jensen_report([6.0, 3.0])
    assert r["lhs"] == pytest.approx(0.5)
    assert r["rhs"] == pytest.approx(4 / 9)
    assert r["gap"] == pytest.approx(0.5 - 4 / 9)
    r = jensen_report([6.0, 3.0, 0.006])
    assert r["gap"] > 0.95 * (1 / 0.006)
    with pytest.raises(NonpositiveInertia):
        jensen_report([1.0, -1.0])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(1e-3, 1e3), min_size=1, max_size=20))
def test_jensen_gap_nonnegative(M):
    r = jensen_report(M)
    assert r["gap"] >= -1e-12 * r["lhs"]
    assert r["heterogeneity_index"] >= -1e-12 * r["lhs"]


def test_aggregate_h2_is_block_norm(small_net):
    g = network_gains(small_net, "H2")
    agg = aggregate_by_cluster(g)
    model = swing_model(small_net)
    cl = closed_loop(model.sys, optimal_controller(model.sys, "H2"))
    p = m = model.sys.m
    c0 = [k for k, c in enumerate(g.clusters) if c == agg.bus_ids[0]]
    rows = c0 + [p + k for k in c0]
    cols = c0 + [m + k for k in c0]
    block = StateSpace(cl.A, cl.B[:, cols], cl.C[rows, :], cl.D[np.ix_(rows, cols)])
    assert agg.values[0, 0] == pytest.approx(h2_norm(block), rel=1e-8)


def test_compare_lumped(small_net):
    cmp = compare_lumped(small_net, "Hinf")
    assert cmp.limit_lumped <= cmp.limit_full
    v = cmp.lumped_gains.values
    np.testing.assert_allclose(np.diag(v), SQRT2, atol=1e-3)
    assert np.round(np.diag(v), 1).tolist() == [1.4] * v.shape[0]
    np.testing.assert_allclose(v, v.T, atol=1e-6)
    np.testing.assert_allclose(np.diag(cmp.full_gains.values), SQRT2, atol=1e-3)


def test_network_gains_labels():
    net = random_network(np.random.default_rng(32), 3, 2)
    g = network_gains(net, "H2")
    assert g.bus_ids == [0, 1, 2]
    assert g.clusters == [0, 0, 0]
