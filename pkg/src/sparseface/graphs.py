"""Tree-structured Gaussian models over local sparse features.

Covers the full graph pipeline: weighted pairwise Gaussian statistics,
maximum-weight spanning trees, generative (Chow-Liu) and discriminative
structure learning, boosting-based graph thickening, and likelihood-ratio
classification with outlier rejection.

Edge weights for the discriminative pair come from the decoupled
objectives: for the p-side tree every candidate edge (u, v) is scored by

    w_p(u, v) = E_p[phi_uv] - E_q[phi_uv],
    phi_uv(x) = log[ p_uv(x_u, x_v) / (p_u(x_u) p_v(x_v)) ],

where p_* are the Gaussian pairwise fits of the p-class samples. The first
expectation is the Gaussian mutual information; the second has a closed
form because phi_uv is a quadratic in x (see cross_expectation).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import container
from .classify import SoftScores

VAR_RIDGE = 1e-6
CORR_CLAMP = 0.999
LOG_2PI = float(np.log(2.0 * np.pi))

# Floor on the boosting error so a perfect weak learner keeps a finite
# round weight.
EPS_FLOOR = 1e-10


@dataclass
class PairwiseGaussianStats:
    """Weighted first- and second-order statistics of a sample set."""

    mean: np.ndarray
    var: np.ndarray
    corr: np.ndarray
    weight_total: float

    @property
    def m(self):
        return self.mean.shape[0]


def fit_pairwise_stats(samples, weights=None):
    """Weighted means, ridged variances, and clamped correlations.

    The variance ridge keeps bivariate terms nonsingular when features are
    exactly constant across samples; correlations are clamped to +-0.999.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("need at least 2 samples of equal dimension")
    n = x.shape[0]
    if weights is None:
        w = np.full(n, 1.0 / n)
    else:
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != (n,) or np.any(w < 0) or w.sum() <= 0:
            raise ValueError("weights must be nonnegative and not all zero")
    total = float(w.sum())
    wn = w / total

    mean = wn @ x
    centered = x - mean
    cov = centered.T @ (centered * wn[:, None])
    var = np.diag(cov).copy() + VAR_RIDGE
    denom = np.sqrt(np.outer(var, var))
    corr = np.clip(cov / denom, -CORR_CLAMP, CORR_CLAMP)
    corr = (corr + corr.T) / 2.0
    np.fill_diagonal(corr, 1.0)
    return PairwiseGaussianStats(mean=mean, var=var, corr=corr, weight_total=total)


# ---------------------------------------------------------------------------
# Spanning trees


def mwst(m, weight, prune=True):
    """Maximum-weight spanning tree by Kruskal with union-find.

    `weight` is an (m, m) matrix or a callable on 0-based node pairs. Ties
    break lexicographically. When `prune` is set, edges of nonpositive
    weight are dropped afterward, so the result may be a forest.
    """
    if m < 1:
        raise ValueError("need at least one node")
    if callable(weight):
        wfun = weight
    else:
        mat = np.asarray(weight, dtype=np.float64)
        wfun = lambda u, v: float(mat[u, v])

    edges = [(u, v, wfun(u, v)) for u in range(m) for v in range(u + 1, m)]
    edges.sort(key=lambda e: (-e[2], e[0], e[1]))

    parent = list(range(m))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    chosen = []
    for u, v, w in edges:
        ru, rv = find(u), find(v)
        if ru != rv:
            parent[ru] = rv
            chosen.append((u, v, w))
            if len(chosen) == m - 1:
                break
    if prune:
        chosen = [e for e in chosen if e[2] > 0.0]
    return sorted((u, v) for u, v, _ in chosen)


def gaussian_mutual_information(rho):
    """Mutual information of a bivariate Gaussian with correlation rho.

    For a matrix argument the (meaningless) diagonal comes back as 0.
    """
    rho = np.asarray(rho, dtype=np.float64)
    rr = rho * rho
    if rr.ndim == 2:
        rr = rr.copy()
        np.fill_diagonal(rr, 0.0)
    return -0.5 * np.log1p(-rr)


def _cross_moments(stats_p, stats_q):
    """q-expectations of z_u^2 and z_u z_v with z standardized by p.

    When q is p these are exactly 1 and corr (no rounding), which is what
    makes identical-statistics edge weights cancel to exact zeros.
    """
    if stats_p.m != stats_q.m:
        raise ValueError("node counts differ")
    dmu = stats_q.mean - stats_p.mean
    z2 = (stats_q.var + dmu * dmu) / stats_p.var
    outer_p = np.sqrt(np.outer(stats_p.var, stats_p.var))
    outer_q = np.sqrt(np.outer(stats_q.var, stats_q.var))
    zcross = stats_q.corr * (outer_q / outer_p) + np.outer(dmu, dmu) / outer_p
    return z2, zcross


def _rho_factors(rho):
    one_minus = 1.0 - rho * rho
    np.fill_diagonal(one_minus, 1.0)  # diagonal entries are discarded anyway
    half_sq = (rho * rho) / (2.0 * one_minus)
    lin = rho / one_minus
    return one_minus, half_sq, lin


def cross_expectation(stats_p, stats_q):
    """E under q of log[p_uv / (p_u p_v)] for every node pair, closed form.

    Writing z_u = (x_u - mu_u) / sigma_u in p's parameters,

        phi_uv = -0.5 log(1 - rho^2)
                 - rho^2 / (2 (1 - rho^2)) (z_u^2 + z_v^2)
                 + rho / (1 - rho^2) z_u z_v,

    and the q-expectations of z_u^2 and z_u z_v follow from q's moments.
    Setting q = p recovers the mutual information.
    """
    z2, zcross = _cross_moments(stats_p, stats_q)
    rho = stats_p.corr
    one_minus, half_sq, lin = _rho_factors(rho)
    out = -0.5 * np.log(one_minus) - half_sq * (z2[:, None] + z2[None, :]) + lin * zcross
    np.fill_diagonal(out, 0.0)
    return out


def discriminative_edge_weights(stats_p, stats_q):
    """Edge-weight matrices of the decoupled discriminative objectives.

    The log terms of E_p[phi] and E_q[phi] cancel analytically, leaving

        w_p(u, v) = half_sq (z2_u + z2_v - 2) - lin (zcross_uv - rho_uv),

    which is exactly zero when the two statistics coincide.
    """

    def one_side(sp, sq):
        z2, zcross = _cross_moments(sp, sq)
        rho = sp.corr
        _, half_sq, lin = _rho_factors(rho)
        w = half_sq * (z2[:, None] + z2[None, :] - 2.0) - lin * (zcross - rho)
        np.fill_diagonal(w, 0.0)
        return w

    return one_side(stats_p, stats_q), one_side(stats_q, stats_p)


# ---------------------------------------------------------------------------
# Tree densities


@dataclass
class TreeGraph:
    """Acyclic pairwise Gaussian model; a forest is allowed.

    Node parameters are univariate (mean, var); each edge carries the
    correlation of its endpoint pair (the bivariate means and variances are
    the node parameters).
    """

    m: int
    edges: np.ndarray  # (E, 2) int64, each row u < v
    node_means: np.ndarray
    node_vars: np.ndarray
    edge_corr: np.ndarray  # (E,)

    def __post_init__(self):
        self.edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        self.edge_corr = np.asarray(self.edge_corr, dtype=np.float64).reshape(-1)
        if len(self.edges) > max(self.m - 1, 0):
            raise ValueError("edge set too large for an acyclic graph")

    @property
    def edge_set(self):
        return {(int(u), int(v)) for u, v in self.edges}

    @property
    def edge_params(self):
        """Per-edge (mean_u, mean_v, var_u, var_v, corr) tuples."""
        out = []
        for (u, v), rho in zip(self.edges, self.edge_corr):
            out.append(
                (
                    self.node_means[u],
                    self.node_means[v],
                    self.node_vars[u],
                    self.node_vars[v],
                    float(rho),
                )
            )
        return out

    @classmethod
    def from_stats(cls, stats, edges):
        edges = np.asarray(sorted(edges), dtype=np.int64).reshape(-1, 2)
        corr = (
            stats.corr[edges[:, 0], edges[:, 1]] if len(edges) else np.zeros(0)
        )
        return cls(
            m=stats.m,
            edges=edges,
            node_means=stats.mean.copy(),
            node_vars=stats.var.copy(),
            edge_corr=corr,
        )


def chow_liu(stats):
    """Best generative tree: spanning tree of maximal pairwise Gaussian MI."""
    weights = gaussian_mutual_information(stats.corr)
    np.fill_diagonal(weights, 0.0)
    edges = mwst(stats.m, weights)
    return TreeGraph.from_stats(stats, edges)


def discriminative_tree_pair(stats_p, stats_q):
    """Jointly score edges for class separation and solve both tree problems.

    The p-tree maximizes total w_p over spanning trees (parameters from the
    p statistics); the q-tree is symmetric. Nonpositive edges are pruned,
    so either side may come back a forest.
    """
    wp, wq = discriminative_edge_weights(stats_p, stats_q)
    p_tree = TreeGraph.from_stats(stats_p, mwst(stats_p.m, wp))
    q_tree = TreeGraph.from_stats(stats_q, mwst(stats_q.m, wq))
    return p_tree, q_tree


def tree_log_density(tree, x):
    """Log density of the tree factorization at x.

    Sum of univariate node log densities plus, per edge, the bivariate
    correction log N2(x_u, x_v) - log N(x_u) - log N(x_v). Accepts a single
    m-vector or an (n, m) batch.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    pts = x[None, :] if single else x
    if pts.shape[1] != tree.m:
        raise ValueError(f"point length {pts.shape[1]} != node count {tree.m}")

    z = (pts - tree.node_means) / np.sqrt(tree.node_vars)
    node_terms = -0.5 * (LOG_2PI + np.log(tree.node_vars) + z * z)
    total = node_terms.sum(axis=1)

    if len(tree.edges):
        u = tree.edges[:, 0]
        v = tree.edges[:, 1]
        rho = tree.edge_corr
        one_minus = 1.0 - rho * rho
        zu, zv = z[:, u], z[:, v]
        total = total + (
            -0.5 * np.log(one_minus)
            - (rho * rho) / (2.0 * one_minus) * (zu * zu + zv * zv)
            + rho / one_minus * zu * zv
        ).sum(axis=1)
    return float(total[0]) if single else total


# ---------------------------------------------------------------------------
# Boosted thickening


@dataclass
class ThickenedGraphPair:
    """Per-round discriminative tree pairs with their boosting weights."""

    m: int
    rounds: list  # of (TreeGraph p-side, TreeGraph q-side, beta)
    round_errors: list = field(default_factory=list)  # weighted error per kept round

    @property
    def union_edges_p(self):
        out = set()
        for p_tree, _, _ in self.rounds:
            out |= p_tree.edge_set
        return out

    @property
    def union_edges_q(self):
        out = set()
        for _, q_tree, _ in self.rounds:
            out |= q_tree.edge_set
        return out


def _sliced_forest_pair(stats_p, stats_q, slices):
    """Learn one discriminative pair per slice and union into forests."""
    wp, wq = discriminative_edge_weights(stats_p, stats_q)
    edges_p, edges_q = [], []
    for sl in slices:
        idx = np.arange(stats_p.m)[sl]
        sub_p = mwst(len(idx), wp[np.ix_(idx, idx)])
        sub_q = mwst(len(idx), wq[np.ix_(idx, idx)])
        edges_p.extend((int(idx[u]), int(idx[v])) for u, v in sub_p)
        edges_q.extend((int(idx[u]), int(idx[v])) for u, v in sub_q)
    return (
        TreeGraph.from_stats(stats_p, edges_p),
        TreeGraph.from_stats(stats_q, edges_q),
    )


def boost_thicken(samples_p, samples_q, rounds, block_slices=None):
    """Discrete AdaBoost over discriminative tree pairs.

    Each round fits weighted statistics per class, learns a tree pair, and
    uses the sign of the pairwise log-likelihood ratio as the weak
    classifier. Rounds stop early once the weighted error reaches 0.5 (the
    round is dropped) or hits zero (kept, with a floored error so the round
    weight stays finite).

    With `block_slices` the first round learns one pair per slice and
    unions them into disjoint forests; later rounds range over the full
    node set, which is what lets thickening discover cross-block edges.
    """
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    xp = np.asarray(samples_p, dtype=np.float64)
    xq = np.asarray(samples_q, dtype=np.float64)
    if xp.ndim != 2 or xq.ndim != 2 or xp.shape[1] != xq.shape[1]:
        raise ValueError("sample sets must be 2-D with matching dimension")
    n_p, n_q = xp.shape[0], xq.shape[0]
    if n_p == 0 or n_q == 0:
        raise ValueError("both sample sets must be nonempty")

    x = np.vstack([xp, xq])
    y = np.concatenate([np.ones(n_p), -np.ones(n_q)])
    w = np.full(n_p + n_q, 1.0 / (n_p + n_q))

    kept = []
    errors = []
    for t in range(rounds):
        stats_p = fit_pairwise_stats(xp, w[:n_p])
        stats_q = fit_pairwise_stats(xq, w[n_p:])
        if t == 0 and block_slices:
            p_tree, q_tree = _sliced_forest_pair(stats_p, stats_q, block_slices)
        else:
            p_tree, q_tree = discriminative_tree_pair(stats_p, stats_q)

        score = tree_log_density(p_tree, x) - tree_log_density(q_tree, x)
        h = np.where(score > 0.0, 1.0, -1.0)
        eps = float(w[h != y].sum())
        if eps >= 0.5:
            break
        beta = 0.5 * np.log((1.0 - eps) / max(eps, EPS_FLOOR))
        kept.append((p_tree, q_tree, beta))
        errors.append(eps)
        if eps == 0.0:
            break
        w = w * np.exp(-beta * y * h)
        w = w / w.sum()

    return ThickenedGraphPair(m=x.shape[1], rounds=kept, round_errors=errors)


def llr(pair, x):
    """Boosted log-likelihood ratio of the thickened pair at x."""
    x = np.asarray(x, dtype=np.float64)
    total = 0.0 if x.ndim == 1 else np.zeros(x.shape[0])
    for p_tree, q_tree, beta in pair.rounds:
        total = total + beta * (tree_log_density(p_tree, x) - tree_log_density(q_tree, x))
    return total


def infer_class(pairs, features):
    """One-versus-all decision: the class whose pair yields the largest LLR.

    `features` is either one concatenated vector shared by every pair or a
    list with one vector per pair (needed when the per-class node counts
    differ).
    """
    if isinstance(features, (list, tuple)):
        if len(features) != len(pairs):
            raise ValueError("need one feature vector per class pair")
        feats = [np.asarray(f, dtype=np.float64) for f in features]
    else:
        feats = [np.asarray(features, dtype=np.float64)] * len(pairs)
    scores = np.zeros(len(pairs))
    for i, (pair, f) in enumerate(zip(pairs, feats)):
        if f.shape[0] != pair.m:
            raise ValueError(f"feature length {f.shape[0]} != node count {pair.m}")
        scores[i] = llr(pair, f)
    return SoftScores(per_class=scores, decision=int(np.argmax(scores)) + 1)


def reject_outlier(scores, delta):
    """True when the best log-likelihood ratio fails to clear delta."""
    return bool(np.max(scores.per_class) <= delta)


# ---------------------------------------------------------------------------
# Serialization


def _tree_entries(tree, prefix):
    return {
        prefix + "m": np.array([tree.m], dtype=np.int64),
        prefix + "edges": tree.edges,
        prefix + "node_means": tree.node_means,
        prefix + "node_vars": tree.node_vars,
        prefix + "edge_corr": tree.edge_corr,
    }


def _tree_from_entries(entries, prefix):
    return TreeGraph(
        m=int(entries[prefix + "m"][0]),
        edges=entries[prefix + "edges"],
        node_means=entries[prefix + "node_means"],
        node_vars=entries[prefix + "node_vars"],
        edge_corr=entries[prefix + "edge_corr"],
    )


def pair_to_entries(pair, prefix=""):
    out = {
        prefix + "m": np.array([pair.m], dtype=np.int64),
        prefix + "betas": np.array([b for _, _, b in pair.rounds]),
        prefix + "errors": np.asarray(pair.round_errors, dtype=np.float64),
    }
    for t, (p_tree, q_tree, _) in enumerate(pair.rounds):
        out.update(_tree_entries(p_tree, f"{prefix}r{t}_p_"))
        out.update(_tree_entries(q_tree, f"{prefix}r{t}_q_"))
    return out


def pair_from_entries(entries, prefix=""):
    betas = entries[prefix + "betas"]
    rounds = []
    for t, beta in enumerate(betas):
        rounds.append(
            (
                _tree_from_entries(entries, f"{prefix}r{t}_p_"),
                _tree_from_entries(entries, f"{prefix}r{t}_q_"),
                float(beta),
            )
        )
    return ThickenedGraphPair(
        m=int(entries[prefix + "m"][0]),
        rounds=rounds,
        round_errors=[float(e) for e in entries[prefix + "errors"]],
    )


def save_pairs(path, pairs):
    entries = {"n_pairs": np.array([len(pairs)], dtype=np.int64)}
    for i, pair in enumerate(pairs):
        entries.update(pair_to_entries(pair, f"c{i}_"))
    container.write_arrays(path, entries)


def load_pairs(path):
    entries = container.read_arrays(path)
    n = int(entries["n_pairs"][0])
    return [pair_from_entries(entries, f"c{i}_") for i in range(n)]
