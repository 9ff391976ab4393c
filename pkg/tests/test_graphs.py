import heapq
import itertools

import numpy as np
import pytest

from sparseface.classify import SoftScores
from sparseface.graphs import (
    PairwiseGaussianStats,
    ThickenedGraphPair,
    TreeGraph,
    boost_thicken,
    chow_liu,
    cross_expectation,
    discriminative_edge_weights,
    discriminative_tree_pair,
    fit_pairwise_stats,
    gaussian_mutual_information,
    infer_class,
    llr,
    load_pairs,
    mwst,
    reject_outlier,
    save_pairs,
    tree_log_density,
)

# ---------------------------------------------------------------------------
# oracles


def prufer_to_edges(seq, m):
    """Decode a Prufer sequence into the edges of its labeled tree."""
    degree = [1] * m
    for v in seq:
        degree[v] += 1
    heap = [i for i in range(m) if degree[i] == 1]
    heapq.heapify(heap)
    edges = []
    for v in seq:
        leaf = heapq.heappop(heap)
        edges.append((min(leaf, v), max(leaf, v)))
        degree[v] -= 1
        if degree[v] == 1:
            heapq.heappush(heap, v)
    u, v = heapq.heappop(heap), heapq.heappop(heap)
    edges.append((min(u, v), max(u, v)))
    return edges


def all_spanning_trees(m):
    if m == 2:
        yield [(0, 1)]
        return
    for seq in itertools.product(range(m), repeat=m - 2):
        yield prufer_to_edges(seq, m)


def tree_weight(edges, weights):
    return sum(weights[u, v] for u, v in edges)


def random_stats(m, seed, n=60):
    rng = np.random.default_rng(seed)
    mix = rng.standard_normal((m, m)) * 0.6 + np.eye(m)
    samples = rng.standard_normal((n, m)) @ mix + rng.uniform(-2, 2, size=m)
    return fit_pairwise_stats(samples)


def sample_bivariate(mean_u, mean_v, var_u, var_v, rho, n, rng):
    z1 = rng.standard_normal(n)
    z2 = rho * z1 + np.sqrt(1 - rho * rho) * rng.standard_normal(n)
    return mean_u + np.sqrt(var_u) * z1, mean_v + np.sqrt(var_v) * z2


# ---------------------------------------------------------------------------
# fit_pairwise_stats


def test_stats_perfectly_correlated_pair_clamps():
    stats = fit_pairwise_stats([[0.0, 0.0], [2.0, 2.0]])
    np.testing.assert_allclose(stats.mean, [1.0, 1.0])
    assert stats.corr[0, 1] == pytest.approx(0.999)
    assert stats.corr[0, 0] == 1.0


def test_stats_independent_samples_have_small_correlation():
    rng = np.random.default_rng(0)
    stats = fit_pairwise_stats(rng.standard_normal((10000, 4)))
    off = stats.corr[~np.eye(4, dtype=bool)]
    assert np.all(np.abs(off) < 0.05)


def test_stats_all_weight_on_one_sample_gives_ridge_variance():
    stats = fit_pairwise_stats([[1.0, 2.0], [3.0, 4.0]], weights=[1.0, 0.0])
    np.testing.assert_allclose(stats.var, 1e-6)
    np.testing.assert_allclose(stats.mean, [1.0, 2.0])


def test_stats_rejects_single_sample():
    with pytest.raises(ValueError):
        fit_pairwise_stats([[1.0, 2.0]])


def test_stats_rejects_bad_weights():
    with pytest.raises(ValueError):
        fit_pairwise_stats([[0.0], [1.0]], weights=[0.0, 0.0])
    with pytest.raises(ValueError):
        fit_pairwise_stats([[0.0], [1.0]], weights=[1.0, -1.0])


# ---------------------------------------------------------------------------
# mwst


def test_mwst_three_node_forced_optimum():
    w = np.zeros((3, 3))
    w[0, 1] = w[1, 0] = 3.0
    w[0, 2] = w[2, 0] = 1.0
    w[1, 2] = w[2, 1] = 2.0
    assert mwst(3, w) == [(0, 1), (1, 2)]


def test_mwst_all_negative_prunes_to_empty():
    w = -np.ones((4, 4))
    assert mwst(4, w) == []
    assert len(mwst(4, w, prune=False)) == 3


def test_mwst_matches_exhaustive_enumeration():
    m = 6
    for seed in range(50):
        rng = np.random.default_rng(seed)
        w = rng.standard_normal((m, m))
        w = (w + w.T) / 2
        tree = mwst(m, w, prune=False)
        best = max(tree_weight(e, w) for e in all_spanning_trees(m))
        assert tree_weight(tree, w) == pytest.approx(best, abs=1e-10)


def test_mwst_single_node():
    assert mwst(1, np.zeros((1, 1))) == []


# ---------------------------------------------------------------------------
# chow_liu


def test_chow_liu_three_node_brute_force():
    corr = np.eye(3)
    corr[0, 1] = corr[1, 0] = 0.9
    corr[1, 2] = corr[2, 1] = 0.8
    corr[0, 2] = corr[2, 0] = 0.72
    stats = PairwiseGaussianStats(
        mean=np.zeros(3), var=np.ones(3), corr=corr, weight_total=3.0
    )
    tree = chow_liu(stats)
    assert sorted(map(tuple, tree.edges.tolist())) == [(0, 1), (1, 2)]


def test_chow_liu_diagonal_correlation_empty():
    stats = PairwiseGaussianStats(
        mean=np.zeros(4), var=np.ones(4), corr=np.eye(4), weight_total=4.0
    )
    assert len(chow_liu(stats).edges) == 0


def test_gaussian_mi_formula_value():
    # -0.5 ln(1 - 0.81) = -0.5 ln(0.19)
    assert gaussian_mutual_information(0.9) == pytest.approx(0.83037, abs=1e-4)


def test_gaussian_mi_matches_monte_carlo():
    rng = np.random.default_rng(1)
    rho = 0.9
    xu, xv = sample_bivariate(0.0, 0.0, 1.0, 1.0, rho, 400000, rng)
    # direct MC estimate of E[log p(u,v) - log p(u) - log p(v)]
    one_minus = 1 - rho * rho
    phi = (
        -0.5 * np.log(one_minus)
        - rho * rho / (2 * one_minus) * (xu * xu + xv * xv)
        + rho / one_minus * xu * xv
    )
    assert phi.mean() == pytest.approx(gaussian_mutual_information(rho), abs=0.01)


def test_chow_liu_exhaustive_on_random_six_node_stats():
    for seed in range(50):
        stats = random_stats(6, seed)
        mi = gaussian_mutual_information(stats.corr)
        np.fill_diagonal(mi, 0.0)
        tree = chow_liu(stats)
        best = max(tree_weight(e, mi) for e in all_spanning_trees(6))
        assert tree_weight([tuple(e) for e in tree.edges.tolist()], mi) == pytest.approx(
            best, abs=1e-10
        )


# ---------------------------------------------------------------------------
# discriminative pair


def test_discriminative_identical_stats_gives_empty_trees():
    stats = random_stats(5, 3)
    p_tree, q_tree = discriminative_tree_pair(stats, stats)
    assert len(p_tree.edges) == 0
    assert len(q_tree.edges) == 0


def test_discriminative_pair_attains_exhaustive_optimum():
    for seed in range(50):
        stats_p = random_stats(5, 2 * seed)
        stats_q = random_stats(5, 2 * seed + 1)
        wp, wq = discriminative_edge_weights(stats_p, stats_q)
        for weights in (wp, wq):
            tree = mwst(5, weights, prune=False)
            best = max(tree_weight(e, weights) for e in all_spanning_trees(5))
            assert tree_weight(tree, weights) == pytest.approx(best, abs=1e-10)
        # the pruned pair can only improve on the unpruned optimum
        p_tree, q_tree = discriminative_tree_pair(stats_p, stats_q)
        best_p = max(tree_weight(e, wp) for e in all_spanning_trees(5))
        got_p = tree_weight([tuple(e) for e in p_tree.edges.tolist()], wp)
        assert got_p >= best_p - 1e-10


def test_cross_expectation_matches_monte_carlo():
    rng = np.random.default_rng(7)
    n = 1_000_000
    for trial in range(20):
        stats_p = random_stats(3, 100 + 2 * trial)
        stats_q = random_stats(3, 101 + 2 * trial)
        closed = cross_expectation(stats_p, stats_q)
        u, v = 0, 1 if trial % 2 == 0 else 2
        xu, xv = sample_bivariate(
            stats_q.mean[u],
            stats_q.mean[v],
            stats_q.var[u],
            stats_q.var[v],
            stats_q.corr[u, v],
            n,
            rng,
        )
        rho = stats_p.corr[u, v]
        zu = (xu - stats_p.mean[u]) / np.sqrt(stats_p.var[u])
        zv = (xv - stats_p.mean[v]) / np.sqrt(stats_p.var[v])
        one_minus = 1 - rho * rho
        phi = (
            -0.5 * np.log(one_minus)
            - rho * rho / (2 * one_minus) * (zu * zu + zv * zv)
            + rho / one_minus * zu * zv
        )
        se = phi.std() / np.sqrt(n)
        assert abs(phi.mean() - closed[u, v]) < 3 * se + 1e-12


def test_cross_expectation_with_q_equal_p_is_mutual_information():
    stats = random_stats(4, 11)
    closed = cross_expectation(stats, stats)
    mi = gaussian_mutual_information(stats.corr)
    np.fill_diagonal(mi, 0.0)
    np.testing.assert_allclose(closed, mi, atol=1e-10)


def test_discriminative_rejects_dimension_mismatch():
    with pytest.raises(ValueError):
        discriminative_tree_pair(random_stats(3, 0), random_stats(4, 1))


# ---------------------------------------------------------------------------
# tree_log_density


def test_density_no_edges_is_product_of_univariates():
    stats = random_stats(3, 20)
    tree = TreeGraph.from_stats(stats, [])
    x = np.array([0.3, -1.0, 2.0])
    expect = sum(
        -0.5 * (np.log(2 * np.pi * stats.var[i]) + (x[i] - stats.mean[i]) ** 2 / stats.var[i])
        for i in range(3)
    )
    assert tree_log_density(tree, x) == pytest.approx(expect, abs=1e-12)


def test_density_two_nodes_matches_bivariate_closed_form():
    stats = random_stats(2, 21)
    tree = TreeGraph.from_stats(stats, [(0, 1)])
    rho = stats.corr[0, 1]
    cov = np.array(
        [
            [stats.var[0], rho * np.sqrt(stats.var[0] * stats.var[1])],
            [rho * np.sqrt(stats.var[0] * stats.var[1]), stats.var[1]],
        ]
    )
    inv = np.linalg.inv(cov)
    _, logdet = np.linalg.slogdet(cov)
    for x in (np.array([0.0, 0.0]), np.array([1.5, -2.0]), np.array([-0.3, 0.7])):
        d = x - stats.mean
        expect = -np.log(2 * np.pi) - 0.5 * logdet - 0.5 * d @ inv @ d
        assert tree_log_density(tree, x) == pytest.approx(expect, abs=1e-9)


def mc_normalization(tree, seed, n=1_000_000):
    """Importance-sampled integral of exp(tree_log_density)."""
    rng = np.random.default_rng(seed)
    scale = np.sqrt(tree.node_vars) * 2.0
    x = tree.node_means + scale * rng.standard_normal((n, tree.m))
    log_q = (
        -0.5 * (np.log(2 * np.pi * scale**2) + ((x - tree.node_means) / scale) ** 2)
    ).sum(axis=1)
    log_p = tree_log_density(tree, x)
    return np.exp(log_p - log_q).mean()


def test_density_normalizes_on_chain_and_star():
    corr = np.eye(3)
    corr[0, 1] = corr[1, 0] = 0.6
    corr[1, 2] = corr[2, 1] = -0.4
    corr[0, 2] = corr[2, 0] = 0.3
    stats = PairwiseGaussianStats(
        mean=np.array([0.5, -1.0, 2.0]),
        var=np.array([1.0, 2.0, 0.5]),
        corr=corr,
        weight_total=10.0,
    )
    chain = TreeGraph.from_stats(stats, [(0, 1), (1, 2)])
    star = TreeGraph.from_stats(stats, [(0, 1), (0, 2)])
    assert mc_normalization(chain, seed=5) == pytest.approx(1.0, abs=0.02)
    assert mc_normalization(star, seed=6) == pytest.approx(1.0, abs=0.02)


def test_density_batch_matches_single():
    stats = random_stats(4, 22)
    tree = chow_liu(stats)
    rng = np.random.default_rng(23)
    batch = rng.standard_normal((10, 4))
    vals = tree_log_density(tree, batch)
    for i in range(10):
        assert vals[i] == pytest.approx(tree_log_density(tree, batch[i]), abs=1e-12)


# ---------------------------------------------------------------------------
# boosting fixtures


def separable_classes(m=10, n=200, seed=0, gap=2.0):
    rng = np.random.default_rng(seed)
    shift = np.zeros(m)
    shift[: m // 2] = gap
    xp = rng.standard_normal((n, m)) + shift
    xq = rng.standard_normal((n, m)) - shift
    return xp, xq


def test_boost_single_round_equals_uniform_pair():
    xp, xq = separable_classes(m=6, n=80, seed=1, gap=0.8)
    pair = boost_thicken(xp, xq, rounds=1)
    assert len(pair.rounds) == 1
    stats_p = fit_pairwise_stats(xp)
    stats_q = fit_pairwise_stats(xq)
    p_tree, q_tree = discriminative_tree_pair(stats_p, stats_q)
    got_p, got_q, beta = pair.rounds[0]
    assert got_p.edge_set == p_tree.edge_set
    assert got_q.edge_set == q_tree.edge_set
    np.testing.assert_allclose(got_p.node_means, p_tree.node_means)
    assert beta >= 0.0
    assert pair.union_edges_p == p_tree.edge_set


def test_boost_separable_fixture_accuracy():
    xp, xq = separable_classes(seed=2)
    pair = boost_thicken(xp, xq, rounds=5)
    assert all(e < 0.5 for e in pair.round_errors)
    x = np.vstack([xp, xq])
    y = np.concatenate([np.ones(200), -np.ones(200)])
    errors = []
    for t in range(1, len(pair.rounds) + 1):
        prefix = ThickenedGraphPair(pair.m, pair.rounds[:t], pair.round_errors[:t])
        score = llr(prefix, x)
        pred = np.where(score > 0, 1.0, -1.0)
        errors.append(float(np.mean(pred != y)))
    assert all(a >= b - 1e-12 for a, b in zip(errors, errors[1:]))
    assert 1.0 - errors[-1] >= 0.95
    assert len(pair.rounds) <= 5


def test_boost_union_is_superset_of_each_round():
    xp, xq = separable_classes(m=8, n=60, seed=3, gap=0.6)
    pair = boost_thicken(xp, xq, rounds=4)
    for p_tree, q_tree, _ in pair.rounds:
        assert p_tree.edge_set <= pair.union_edges_p
        assert q_tree.edge_set <= pair.union_edges_q


def test_boost_block_slices_round_one_is_disjoint_forest():
    xp, xq = separable_classes(m=8, n=120, seed=4, gap=1.0)
    slices = [slice(0, 4), slice(4, 8)]
    pair = boost_thicken(xp, xq, rounds=1, block_slices=slices)
    p_tree, q_tree, _ = pair.rounds[0]
    for u, v in p_tree.edge_set | q_tree.edge_set:
        assert (u < 4) == (v < 4)  # no cross-slice edges in round 1


def test_boost_rejects_bad_input():
    xp, xq = separable_classes(m=4, n=10, seed=5)
    with pytest.raises(ValueError):
        boost_thicken(xp, xq, rounds=0)
    with pytest.raises(ValueError):
        boost_thicken(xp[:0], xq, rounds=1)


# ---------------------------------------------------------------------------
# llr / infer_class / reject_outlier


def test_llr_identical_trees_zero():
    stats = random_stats(4, 30)
    tree = chow_liu(stats)
    pair = ThickenedGraphPair(4, [(tree, tree, 1.0)], [0.1])
    rng = np.random.default_rng(31)
    for _ in range(5):
        assert llr(pair, rng.standard_normal(4)) == pytest.approx(0.0, abs=1e-12)


def test_llr_single_round_is_density_difference():
    stats_p = random_stats(3, 32)
    stats_q = random_stats(3, 33)
    p_tree, q_tree = discriminative_tree_pair(stats_p, stats_q)
    pair = ThickenedGraphPair(3, [(p_tree, q_tree, 1.0)], [0.2])
    x = np.array([0.1, -0.5, 1.0])
    expect = tree_log_density(p_tree, x) - tree_log_density(q_tree, x)
    assert llr(pair, x) == pytest.approx(expect, abs=1e-12)


def test_llr_antisymmetric_under_role_swap():
    xp, xq = separable_classes(m=6, n=100, seed=6, gap=0.7)
    fwd = boost_thicken(xp, xq, rounds=1)
    rev = boost_thicken(xq, xp, rounds=1)
    rng = np.random.default_rng(7)
    for _ in range(10):
        x = rng.standard_normal(6)
        assert llr(fwd, x) == pytest.approx(-llr(rev, x), abs=1e-9)


def test_llr_positive_on_p_class_draws():
    xp, xq = separable_classes(seed=8)
    pair = boost_thicken(xp, xq, rounds=3)
    rng = np.random.default_rng(9)
    shift = np.zeros(10)
    shift[:5] = 2.0
    draws = rng.standard_normal((1000, 10)) + shift
    assert np.mean(llr(pair, draws) > 0) >= 0.95


def test_infer_class_forced_decision():
    stats = random_stats(3, 40)
    tree = chow_liu(stats)
    zero_pair = ThickenedGraphPair(3, [(tree, tree, 1.0)], [0.1])
    stats_p = random_stats(3, 41)
    stats_q = random_stats(3, 42)
    strong = ThickenedGraphPair(
        3, [discriminative_tree_pair(stats_p, stats_q) + (1.0,)], [0.1]
    )
    x = stats_p.mean  # near the p-class center, llr should be positive
    scores = infer_class([strong, zero_pair], x)
    if llr(strong, x) > 0:
        assert scores.decision == 1


def test_infer_class_tie_to_lowest():
    stats = random_stats(3, 43)
    tree = chow_liu(stats)
    pair = ThickenedGraphPair(3, [(tree, tree, 1.0)], [0.1])
    scores = infer_class([pair, pair, pair], np.zeros(3))
    assert scores.decision == 1


def test_infer_class_five_class_fixture_accuracy():
    rng = np.random.default_rng(50)
    m, n_train, n_test, k = 8, 150, 40, 5
    centers = rng.uniform(-3, 3, size=(k, m))
    train = {c: rng.standard_normal((n_train, m)) + centers[c] for c in range(k)}
    pairs = []
    for c in range(k):
        xp = train[c]
        xq = np.vstack([train[o] for o in range(k) if o != c])
        pairs.append(boost_thicken(xp, xq, rounds=3))
    correct = 0
    total = 0
    for c in range(k):
        tests = rng.standard_normal((n_test, m)) + centers[c]
        for x in tests:
            total += 1
            correct += infer_class(pairs, x).decision == c + 1
    assert correct / total >= 0.9


def test_infer_class_per_pair_features():
    stats_p = random_stats(3, 60)
    stats_q = random_stats(3, 61)
    pair3 = ThickenedGraphPair(
        3, [discriminative_tree_pair(stats_p, stats_q) + (1.0,)], [0.1]
    )
    stats_p4 = random_stats(4, 62)
    stats_q4 = random_stats(4, 63)
    pair4 = ThickenedGraphPair(
        4, [discriminative_tree_pair(stats_p4, stats_q4) + (1.0,)], [0.1]
    )
    scores = infer_class([pair3, pair4], [np.zeros(3), np.zeros(4)])
    assert scores.per_class.shape == (2,)
    with pytest.raises(ValueError):
        infer_class([pair3, pair4], np.zeros(3))


def test_reject_outlier_thresholds():
    assert reject_outlier(SoftScores(np.array([0.2, 0.1]), 1), 0.5) is True
    assert reject_outlier(SoftScores(np.array([0.7, 0.1]), 1), 0.5) is False
    assert reject_outlier(SoftScores(np.array([-5.0, -9.0]), 1), float("-inf")) is False


def test_beta_rescaling_preserves_decision():
    rng = np.random.default_rng(70)
    pairs = []
    for c in range(3):
        xp = rng.standard_normal((80, 5)) + c
        xq = rng.standard_normal((80, 5)) - 1.0
        pairs.append(boost_thicken(xp, xq, rounds=2))
    x = rng.standard_normal(5) + 1.5
    base = infer_class(pairs, x)
    scaled_pairs = [
        ThickenedGraphPair(p.m, [(pt, qt, 3.7 * b) for pt, qt, b in p.rounds], p.round_errors)
        for p in pairs
    ]
    assert infer_class(scaled_pairs, x).decision == base.decision


def test_pair_serialization_roundtrip(tmp_path):
    xp, xq = separable_classes(m=6, n=60, seed=90, gap=0.8)
    pair_a = boost_thicken(xp, xq, rounds=3)
    pair_b = boost_thicken(xq, xp, rounds=2)
    path = tmp_path / "pairs.bin"
    save_pairs(path, [pair_a, pair_b])
    back = load_pairs(path)
    assert len(back) == 2
    rng = np.random.default_rng(91)
    for orig, copy in zip([pair_a, pair_b], back):
        assert orig.union_edges_p == copy.union_edges_p
        assert orig.round_errors == pytest.approx(copy.round_errors)
        for x in rng.standard_normal((5, 6)):
            assert llr(copy, x) == pytest.approx(llr(orig, x), abs=1e-12)
