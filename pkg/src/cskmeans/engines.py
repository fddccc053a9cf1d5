"""Clustering engines: Lloyd K-Means, sparse K-Means with L1/L2 feature
weights, pairwise-constrained variants, and diagonal metric learning.

All engines are deterministic functions of (data, init, constraints, s, cfg).
Constrained assignment processes points in ascending index order, one full
sweep per iteration; a fixed point is declared when a sweep changes nothing.
"""

import math
import warnings
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .data import ConstraintKind, ConstraintSet, DataMatrix, MaxSeparatedPair, max_separated_pair


class NumericalError(Exception):
    """Raised when an engine cannot continue (degenerate scores, etc.)."""


class Algorithm(Enum):
    LKM = "lkm"
    SKM = "skm"
    PCKM = "pckm"
    MPCKM = "mpckm"
    PCSKM = "pcskm"


class WeightRegime(Enum):
    SPARSE_L1L2 = "sparse"
    METRIC_DIAGONAL = "metric"
    UNIFORM = "uniform"


METRIC_WEIGHT_CAP = 1e6  # substitute for a_j when its denominator degenerates
BISECTION_TOL = 1e-8
BISECTION_MAX_STEPS = 200


@dataclass
class FeatureWeights:
    """Per-feature weights with the constraint regime they were fit under."""

    w: np.ndarray
    regime: WeightRegime
    sparsity: float | None = None

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=float)
        if self.regime == WeightRegime.SPARSE_L1L2:
            if np.any(self.w < 0):
                raise ValueError("sparse weights must be nonnegative")
            if np.linalg.norm(self.w) > 1 + 1e-9:
                raise ValueError("sparse weights exceed the unit L2 ball")
            if self.sparsity is not None and np.sum(np.abs(self.w)) > self.sparsity + 1e-6:
                raise ValueError("sparse weights exceed the L1 budget")
        elif self.regime == WeightRegime.METRIC_DIAGONAL:
            if np.any(self.w <= 0):
                raise ValueError("metric weights must be strictly positive")
        elif self.regime == WeightRegime.UNIFORM:
            if np.any(self.w != self.w[0]):
                raise ValueError("uniform weights must all be equal")


@dataclass
class FeatureScores:
    """Per-feature between-cluster scores, optionally penalty-adjusted."""

    gamma: np.ndarray
    penalized: bool
    delta: float | None = None
    sparsity_attained: bool = True


@dataclass
class ConvergenceConfig:
    epsilon: float = 1e-4
    max_outer_iterations: int = 100
    max_lloyd_iterations: int = 300

    def __post_init__(self):
        if self.epsilon <= 0 or self.max_outer_iterations <= 0 or self.max_lloyd_iterations <= 0:
            raise ValueError("convergence parameters must be positive")


@dataclass
class ClusterModel:
    centroids: np.ndarray
    assignment: np.ndarray
    cluster_sizes: np.ndarray
    objective: float
    iterations: int
    objective_history: list = field(default_factory=list)

    @property
    def k(self):
        return self.centroids.shape[0]


def _as_weight_vector(weights, p):
    if weights is None:
        return np.ones(p)
    if isinstance(weights, FeatureWeights):
        w = weights.w
    else:
        w = np.asarray(weights, dtype=float)
    if len(w) != p:
        raise ValueError(f"weight vector has length {len(w)}, expected {p}")
    return w


def _weighted_sq_dists(x, centroids, w):
    """n x K matrix of sum_j w_j (x_ij - m_kj)^2."""
    return np.einsum("nkp,p->nk", (x[:, None, :] - centroids[None, :, :]) ** 2, w)


def assign_lloyd(m: DataMatrix, centroids, weights=None):
    """Nearest-centroid assignment under weighted squared Euclidean distance;
    ties go to the lowest cluster id."""
    x = m.values
    w = _as_weight_vector(weights, m.p)
    return np.argmin(_weighted_sq_dists(x, np.asarray(centroids, float), w), axis=1)


class _PairTerms:
    """Per-constraint feature gaps cached for fast penalty evaluation."""

    def __init__(self, m: DataMatrix, constraints: ConstraintSet):
        x = m.values
        ml = constraints.of_kind(ConstraintKind.MUST_LINK)
        cl = constraints.of_kind(ConstraintKind.CANNOT_LINK)
        self.ml = ml
        self.cl = cl
        self.ml_diff2 = np.array([(x[c.i] - x[c.j]) ** 2 for c in ml]).reshape(len(ml), m.p)
        self.cl_diff2 = np.array([(x[c.i] - x[c.j]) ** 2 for c in cl]).reshape(len(cl), m.p)
        self.ml_cost = np.array([c.cost for c in ml])
        self.cl_cost = np.array([c.cost for c in cl])
        self.pair = max_separated_pair(m) if cl else None
        self.gap = self.pair.per_feature_gap if self.pair is not None else np.zeros(m.p)
        self.partners = [[] for _ in range(m.n)]
        for row, c in enumerate(ml):
            self.partners[c.i].append((True, row, c.j))
            self.partners[c.j].append((True, row, c.i))
        for row, c in enumerate(cl):
            self.partners[c.i].append((False, row, c.j))
            self.partners[c.j].append((False, row, c.i))

    @property
    def empty(self):
        return not (self.ml or self.cl)

    def penalties(self, w):
        """Aggregate violation penalties per constraint under weights w."""
        pen_ml = (self.ml_diff2 @ w) * self.ml_cost if self.ml else np.zeros(0)
        pen_cl = ((self.gap @ w) - self.cl_diff2 @ w) * self.cl_cost if self.cl else np.zeros(0)
        return pen_ml, pen_cl

    def violated(self, assignment):
        """Boolean masks of violated ML and CL constraints."""
        viol_ml = np.array(
            [assignment[c.i] != assignment[c.j] for c in self.ml], dtype=bool
        ).reshape(len(self.ml))
        viol_cl = np.array(
            [assignment[c.i] == assignment[c.j] for c in self.cl], dtype=bool
        ).reshape(len(self.cl))
        return viol_ml, viol_cl


def ml_penalty(x_i, x_i_prime):
    """Per-feature MUST-LINK violation severity: squared coordinate gaps."""
    return (np.asarray(x_i, float) - np.asarray(x_i_prime, float)) ** 2


def cl_penalty(x_i, x_i_prime, pair: MaxSeparatedPair):
    """Per-feature CANNOT-LINK violation severity: how much closer the pair
    is than the maximally separated pair (entries may be negative)."""
    return pair.per_feature_gap - ml_penalty(x_i, x_i_prime)


def _sweep(x, centroids, w, terms: _PairTerms, current):
    """One ascending-order constrained assignment pass. Partners already
    placed this pass (or carrying a previous assignment) contribute their
    violation penalties; unplaced partners contribute nothing."""
    k = centroids.shape[0]
    base = _weighted_sq_dists(x, centroids, w)
    if terms is None or terms.empty:
        return np.argmin(base, axis=1)
    pen_ml, pen_cl = terms.penalties(w)
    work = current.copy()
    ks = np.arange(k)
    for i in range(x.shape[0]):
        cost = base[i].copy()
        for is_ml, row, partner in terms.partners[i]:
            a = work[partner]
            if a < 0:
                continue
            if is_ml:
                cost = cost + pen_ml[row] * (ks != a)
            else:
                cost = cost + pen_cl[row] * (ks == a)
        work[i] = int(np.argmin(cost))
    return work


def assign_pckm(m: DataMatrix, centroids, constraints: ConstraintSet, current_assignment=None, weights=None):
    """Constraint-aware assignment sweep (uniform weights for PCKM, sparse
    weights for PCSKM). Unassigned points carry -1 in current_assignment."""
    x = m.values
    w = _as_weight_vector(weights, m.p)
    current = (
        np.full(m.n, -1, dtype=int)
        if current_assignment is None
        else np.asarray(current_assignment, dtype=int)
    )
    return _sweep(x, np.asarray(centroids, float), w, _PairTerms(m, constraints), current)


def _means_with_repair(x, assignment, k, w, old_centroids):
    """Cluster means; an emptied cluster is re-seeded at the point farthest
    from its stale centroid (weighted metric), keeping K fixed."""
    centroids = old_centroids.copy()
    sizes = np.bincount(assignment, minlength=k)
    taken = set()
    for kk in range(k):
        if sizes[kk] > 0:
            centroids[kk] = x[assignment == kk].mean(axis=0)
    for kk in range(k):
        if sizes[kk] == 0:
            d = ((x - old_centroids[kk]) ** 2) @ w
            order = np.argsort(-d, kind="stable")
            pick = next((int(i) for i in order if int(i) not in taken), None)
            if pick is None:
                raise NumericalError("cannot repair empty cluster: no points left")
            taken.add(pick)
            centroids[kk] = x[pick]
    return centroids, sizes


def _wcss_per_feature(x, assignment, centroids):
    return ((x - centroids[assignment]) ** 2).sum(axis=0)


def _tss_per_feature(x):
    return ((x - x.mean(axis=0)) ** 2).sum(axis=0)


def _penalized_objective(x, assignment, centroids, w, terms):
    """Weighted within-cluster scatter plus violation penalties (pairs
    counted once)."""
    obj = float(_wcss_per_feature(x, assignment, centroids) @ w)
    if terms is not None and not terms.empty:
        pen_ml, pen_cl = terms.penalties(w)
        viol_ml, viol_cl = terms.violated(assignment)
        if len(pen_ml):
            obj += float(pen_ml[viol_ml].sum())
        if len(pen_cl):
            obj += float(pen_cl[viol_cl].sum())
    return obj


def _constrained_lloyd(x, centroids, w, terms, assignment, max_iters):
    """Alternate assignment sweeps and centroid means until a sweep changes
    nothing. Returns (assignment, centroids, iterations, objective history)."""
    k = centroids.shape[0]
    work = np.full(x.shape[0], -1, dtype=int) if assignment is None else assignment.copy()
    prev = None
    history = []
    iterations = 0
    for it in range(1, max_iters + 1):
        new = _sweep(x, centroids, w, terms, work)
        if prev is not None and np.array_equal(new, prev):
            break
        work = new
        centroids, _ = _means_with_repair(x, work, k, w, centroids)
        history.append(_penalized_objective(x, work, centroids, w, terms))
        prev = work.copy()
        iterations = it
    return work, centroids, iterations, history


def run_lkm(m: DataMatrix, init, cfg: ConvergenceConfig = None):
    """Lloyd's K-Means from the given initial centroids."""
    cfg = cfg or ConvergenceConfig()
    if init.k > m.n:
        raise ValueError(f"K={init.k} exceeds point count {m.n}")
    w = np.ones(m.p)
    assignment, centroids, iterations, history = _constrained_lloyd(
        m.values, init.centroids.copy(), w, None, None, cfg.max_lloyd_iterations
    )
    sizes = np.bincount(assignment, minlength=init.k)
    return ClusterModel(centroids, assignment, sizes, history[-1], iterations, history)


def per_feature_bcss(m: DataMatrix, assignment, centroids):
    """gamma_j = total scatter minus within-cluster scatter, per feature."""
    x = m.values
    gamma = _tss_per_feature(x) - _wcss_per_feature(x, np.asarray(assignment, int), np.asarray(centroids, float))
    return FeatureScores(gamma=gamma, penalized=False)


def per_feature_penalized_bcss(m: DataMatrix, assignment, centroids, constraints: ConstraintSet, pair: MaxSeparatedPair = None):
    """gamma'_j: the between-cluster score minus per-feature severities of
    the constraints the assignment violates."""
    terms = _PairTerms(m, constraints)
    if pair is not None:
        terms.pair = pair
        terms.gap = pair.per_feature_gap
    return _penalized_bcss_from_terms(m, np.asarray(assignment, int), np.asarray(centroids, float), terms)


def _penalized_bcss_from_terms(m, assignment, centroids, terms):
    gamma = _tss_per_feature(m.values) - _wcss_per_feature(m.values, assignment, centroids)
    viol_ml, viol_cl = terms.violated(assignment)
    if len(terms.ml):
        gamma = gamma - (terms.ml_cost[viol_ml, None] * terms.ml_diff2[viol_ml]).sum(axis=0)
    if len(terms.cl):
        gamma = gamma - (
            terms.cl_cost[viol_cl, None] * (terms.gap[None, :] - terms.cl_diff2[viol_cl])
        ).sum(axis=0)
    return FeatureScores(gamma=gamma, penalized=True)


def count_violations(assignment, constraints: ConstraintSet):
    """(violated MUST-LINK, violated CANNOT-LINK) under an assignment."""
    assignment = np.asarray(assignment, int)
    ml = [c for c in constraints.of_kind(ConstraintKind.MUST_LINK) if assignment[c.i] != assignment[c.j]]
    cl = [c for c in constraints.of_kind(ConstraintKind.CANNOT_LINK) if assignment[c.i] == assignment[c.j]]
    return ml, cl


def update_weights(scores: FeatureScores, s):
    """Soft-threshold the feature scores and renormalize to the unit L2 ball:
    w_j = (gamma_j - delta)_+ / ||.||_2, with delta = 0 when the L1 budget s
    is already met and otherwise found by bisection so that ||w||_1 = s.

    Features with nonpositive scores get weight 0. When the score vector is
    so degenerate that no delta attains the budget (exact ties at the top),
    the limiting weights are returned and scores.sparsity_attained is
    cleared.
    """
    gamma = np.asarray(scores.gamma, dtype=float)
    p = len(gamma)
    if not 1 <= s <= math.sqrt(p) + 1e-9:
        raise ValueError(f"sparsity s={s} outside [1, sqrt(p)={math.sqrt(p):.4f}]")
    if np.all(gamma <= 0):
        raise NumericalError("no informative signal: all feature scores are nonpositive")

    def weights_at(delta):
        u = np.maximum(gamma - delta, 0.0)
        norm = np.linalg.norm(u)
        return u / norm if norm > 0 else u

    w = weights_at(0.0)
    if np.sum(w) <= s + 1e-12:
        scores.delta = 0.0
        scores.sparsity_attained = True
        return FeatureWeights(w, WeightRegime.SPARSE_L1L2, sparsity=s)

    lo, hi = 0.0, float(gamma.max())
    last_nonzero = lo
    for _ in range(BISECTION_MAX_STEPS):
        mid = 0.5 * (lo + hi)
        u = np.maximum(gamma - mid, 0.0)
        if not np.any(u > 0):
            hi = mid
            continue
        last_nonzero = mid
        l1 = u.sum() / np.linalg.norm(u)
        if abs(l1 - s) <= BISECTION_TOL:
            break
        if l1 > s:
            lo = mid
        else:
            hi = mid
    else:
        mid = last_nonzero
    w = weights_at(mid)
    attained = bool(abs(np.sum(w) - s) <= 1e-6)
    scores.delta = float(mid)
    scores.sparsity_attained = attained
    return FeatureWeights(
        w, WeightRegime.SPARSE_L1L2, sparsity=s if attained else None
    )


def _sparse_engine(m: DataMatrix, init, s, constraints: ConstraintSet, cfg):
    """Shared outer loop of SKM and PCSKM: weighted (constrained) K-Means,
    then a soft-threshold weight refresh, until the weights settle."""
    if init.k > m.n:
        raise ValueError(f"K={init.k} exceeds point count {m.n}")
    x = m.values
    terms = _PairTerms(m, constraints)
    w = np.full(m.p, 1.0 / math.sqrt(m.p))
    centroids = init.centroids.copy()
    assignment = None
    history = []
    scores = None
    outer = 0
    for outer in range(1, cfg.max_outer_iterations + 1):
        assignment, centroids, _, _ = _constrained_lloyd(
            x, centroids, w, terms, assignment, cfg.max_lloyd_iterations
        )
        if terms.empty:
            scores = per_feature_bcss(m, assignment, centroids)
        else:
            scores = _penalized_bcss_from_terms(m, assignment, centroids, terms)
        fw = update_weights(scores, s)
        history.append(float(scores.gamma @ fw.w))
        change = np.sum(np.abs(fw.w - w)) / np.sum(np.abs(w))
        w = fw.w
        if change < cfg.epsilon:
            break
    sizes = np.bincount(assignment, minlength=init.k)
    model = ClusterModel(centroids, assignment, sizes, history[-1], outer, history)
    return model, FeatureWeights(w, WeightRegime.SPARSE_L1L2, sparsity=s if scores.sparsity_attained else None)


def run_skm(m: DataMatrix, init, s, cfg: ConvergenceConfig = None):
    """Sparse K-Means: alternate weighted K-Means with the L1/L2 weight
    update; returns the model and the learned feature weights."""
    return _sparse_engine(m, init, s, ConstraintSet(), cfg or ConvergenceConfig())


def run_pcskm(m: DataMatrix, init, s, constraints: ConstraintSet, cfg: ConvergenceConfig = None):
    """Pairwise-constrained sparse K-Means: the sparse outer loop driven by
    constraint-aware assignment and penalty-adjusted feature scores."""
    return _sparse_engine(m, init, s, constraints, cfg or ConvergenceConfig())


def run_pckm(m: DataMatrix, init, constraints: ConstraintSet, cfg: ConvergenceConfig = None):
    """Pairwise-constrained K-Means with soft constraints and unit costs."""
    cfg = cfg or ConvergenceConfig()
    if init.k > m.n:
        raise ValueError(f"K={init.k} exceeds point count {m.n}")
    w = np.ones(m.p)
    terms = _PairTerms(m, constraints)
    assignment, centroids, iterations, history = _constrained_lloyd(
        m.values, init.centroids.copy(), w, terms, None, cfg.max_lloyd_iterations
    )
    sizes = np.bincount(assignment, minlength=init.k)
    return ClusterModel(centroids, assignment, sizes, history[-1], iterations, history)


def _metric_update(x, assignment, centroids, terms):
    """Diagonal metric refresh: each feature weight is the point count over
    that feature's within-cluster scatter plus violation severities."""
    n = x.shape[0]
    denom = _wcss_per_feature(x, assignment, centroids).copy()
    viol_ml, viol_cl = terms.violated(assignment)
    if len(terms.ml):
        denom += (terms.ml_cost[viol_ml, None] * terms.ml_diff2[viol_ml]).sum(axis=0)
    if len(terms.cl):
        denom += (terms.cl_cost[viol_cl, None] * (terms.gap[None, :] - terms.cl_diff2[viol_cl])).sum(axis=0)
    a = np.empty_like(denom)
    bad = denom <= 0
    if np.any(bad):
        warnings.warn("degenerate metric denominator; capping feature weight", RuntimeWarning)
    a[bad] = METRIC_WEIGHT_CAP
    a[~bad] = n / denom[~bad]
    np.minimum(a, METRIC_WEIGHT_CAP, out=a)
    return a


def run_mpckm(m: DataMatrix, init, constraints: ConstraintSet, cfg: ConvergenceConfig = None):
    """Metric pairwise-constrained K-Means: constrained assignment under a
    learned diagonal metric, refreshed every iteration."""
    cfg = cfg or ConvergenceConfig()
    if init.k > m.n:
        raise ValueError(f"K={init.k} exceeds point count {m.n}")
    x = m.values
    k = init.k
    terms = _PairTerms(m, constraints)
    a = np.ones(m.p)
    centroids = init.centroids.copy()
    work = np.full(m.n, -1, dtype=int)
    prev = None
    history = []
    iterations = 0
    for it in range(1, cfg.max_lloyd_iterations + 1):
        new = _sweep(x, centroids, a, terms, work)
        if prev is not None and np.array_equal(new, prev):
            break
        work = new
        centroids, _ = _means_with_repair(x, work, k, a, centroids)
        a = _metric_update(x, work, centroids, terms)
        history.append(_mpckm_objective(x, work, centroids, a, terms))
        prev = work.copy()
        iterations = it
    sizes = np.bincount(work, minlength=k)
    model = ClusterModel(centroids, work, sizes, history[-1], iterations, history)
    return model, FeatureWeights(a, WeightRegime.METRIC_DIAGONAL)


def _mpckm_objective(x, assignment, centroids, a, terms):
    obj = _penalized_objective(x, assignment, centroids, a, terms)
    return obj - x.shape[0] * float(np.sum(np.log(a)))


def objective_value(m: DataMatrix, model: ClusterModel, weights, constraints, algorithm: Algorithm):
    """Recompute an algorithm's objective from scratch, for audits."""
    x = m.values
    assignment = np.asarray(model.assignment, int)
    centroids = np.asarray(model.centroids, float)
    constraints = constraints if constraints is not None else ConstraintSet()
    terms = _PairTerms(m, constraints)
    if algorithm == Algorithm.LKM:
        return float(_wcss_per_feature(x, assignment, centroids).sum())
    if algorithm == Algorithm.PCKM:
        return _penalized_objective(x, assignment, centroids, np.ones(m.p), terms)
    if algorithm == Algorithm.SKM:
        w = _as_weight_vector(weights, m.p)
        return float(per_feature_bcss(m, assignment, centroids).gamma @ w)
    if algorithm == Algorithm.PCSKM:
        w = _as_weight_vector(weights, m.p)
        return float(_penalized_bcss_from_terms(m, assignment, centroids, terms).gamma @ w)
    if algorithm == Algorithm.MPCKM:
        a = _as_weight_vector(weights, m.p)
        return _mpckm_objective(x, assignment, centroids, a, terms)
    raise ValueError(f"unknown algorithm {algorithm!r}")
