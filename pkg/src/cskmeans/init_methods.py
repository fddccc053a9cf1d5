"""Deterministic centroid initialization: Maximin, density-weighted farthest
point (DKM++ style), outlier-aware farthest point (ROBIN style), and
constraint-driven Seeding."""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .data import ConstraintKind, ConstraintSet, DataMatrix


class InitMethod(Enum):
    MAXIMIN = "maximin"
    DKMPP = "dkmpp"
    ROBIN = "robin"
    SEEDING = "seeding"


ROBIN_OUTLIER_BAND = 0.05  # accepted LOF range is [1 - band, 1 + band]
ROBIN_DEFAULT_MP = 10


@dataclass
class InitResult:
    centroids: np.ndarray
    method: InitMethod
    provenance: list

    def __post_init__(self):
        self.centroids = np.asarray(self.centroids, dtype=float)
        if not np.all(np.isfinite(self.centroids)):
            raise ValueError("initial centroids must be finite")
        k = self.centroids.shape[0]
        for a in range(k):
            for b in range(a + 1, k):
                if np.array_equal(self.centroids[a], self.centroids[b]):
                    raise ValueError(f"initial centroids {a} and {b} coincide")

    @property
    def k(self):
        return self.centroids.shape[0]


def _pairwise_sq_dists(x):
    return np.sum((x[:, None, :] - x[None, :, :]) ** 2, axis=-1)


def _max_norm_index(x):
    norms = np.sum(x * x, axis=1)
    return int(np.argmax(norms))


def _check_k(k, n):
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")


def maximin_init(m: DataMatrix, k):
    """Start from the max-norm point, then repeatedly take the point farthest
    from the chosen set (ties to the smallest index)."""
    _check_k(k, m.n)
    x = m.values
    chosen = [_max_norm_index(x)]
    d2 = _pairwise_sq_dists(x)
    min_d2 = d2[chosen[0]].copy()
    while len(chosen) < k:
        nxt = int(np.argmax(min_d2))
        if min_d2[nxt] <= 0.0:
            raise ValueError(f"only {len(chosen)} distinct points available, need {k}")
        chosen.append(nxt)
        np.minimum(min_d2, d2[nxt], out=min_d2)
    return InitResult(x[chosen], InitMethod.MAXIMIN, [("point", i) for i in chosen])


def _density_scores(x):
    """Gaussian kernel density per point; bandwidth from the mean
    nearest-neighbor distance."""
    d2 = _pairwise_sq_dists(x)
    d = np.sqrt(np.maximum(d2, 0.0))
    np.fill_diagonal(d, np.inf)
    nn = d.min(axis=1)
    sigma = float(np.mean(nn))
    if sigma <= 0.0:
        finite = d[np.isfinite(d)]
        positive = finite[finite > 0]
        if positive.size == 0:
            raise ValueError("all points coincide, density is undefined")
        sigma = float(np.mean(positive))
    np.fill_diagonal(d, 0.0)
    kernel = np.exp(-d2 / (2.0 * sigma * sigma))
    np.fill_diagonal(kernel, 0.0)
    return kernel.sum(axis=1), d2


def dkmpp_init(m: DataMatrix, k):
    """Density-weighted farthest-point traversal: start at the density mode,
    then maximize density * min squared distance to the chosen set."""
    if m.n < 2:
        raise ValueError("dkmpp_init needs at least 2 points")
    _check_k(k, m.n)
    x = m.values
    density, d2 = _density_scores(x)
    chosen = [int(np.argmax(density))]
    min_d2 = d2[chosen[0]].copy()
    while len(chosen) < k:
        score = density * min_d2
        nxt = int(np.argmax(score))
        if score[nxt] <= 0.0:
            raise ValueError(f"only {len(chosen)} distinct points available, need {k}")
        chosen.append(nxt)
        np.minimum(min_d2, d2[nxt], out=min_d2)
    return InitResult(x[chosen], InitMethod.DKMPP, [("point", i) for i in chosen])


def local_outlier_factor(x, mp):
    """Classic LOF over mp neighbors for every point. Scores near 1 mean the
    point sits at the same density as its neighborhood."""
    n = x.shape[0]
    if not 1 <= mp < n:
        raise ValueError(f"mp must be in [1, {n - 1}], got {mp}")
    d = np.sqrt(np.maximum(_pairwise_sq_dists(x), 0.0))
    np.fill_diagonal(d, np.inf)
    sorted_d = np.sort(d, axis=1)
    k_dist = sorted_d[:, mp - 1]
    neighborhoods = [np.flatnonzero(d[i] <= k_dist[i]) for i in range(n)]
    lrd = np.empty(n)
    for i in range(n):
        nb = neighborhoods[i]
        reach = np.maximum(k_dist[nb], d[i, nb])
        total = reach.sum()
        lrd[i] = np.inf if total == 0.0 else len(nb) / total
    lof = np.empty(n)
    for i in range(n):
        nb = neighborhoods[i]
        if np.isinf(lrd[i]):
            # duplicates collapse the density ratio; treat as a plain inlier
            lof[i] = 1.0
        else:
            lof[i] = np.mean(lrd[nb]) / lrd[i]
    return lof


def robin_init(m: DataMatrix, k, mp=ROBIN_DEFAULT_MP):
    """Farthest-point traversal that skips outliers: candidates are visited in
    decreasing distance from the chosen set (seeded by the max-norm point) and
    accepted only while their LOF stays inside the inlier band."""
    _check_k(k, m.n)
    x = m.values
    lof = local_outlier_factor(x, mp)
    in_band = np.abs(lof - 1.0) <= ROBIN_OUTLIER_BAND
    d2 = _pairwise_sq_dists(x)
    ref = _max_norm_index(x)
    chosen = []
    min_d2 = d2[ref].copy()
    while len(chosen) < k:
        candidates = np.flatnonzero(min_d2 > 0.0)
        if candidates.size == 0:
            raise ValueError(f"only {len(chosen)} distinct points available, need {k}")
        order = candidates[np.lexsort((candidates, -min_d2[candidates]))]
        banded = order[in_band[order]]
        if banded.size:
            nxt = int(banded[0])
        else:
            # no candidate passes the band; fall back to the least outlying one
            nxt = int(candidates[np.lexsort((candidates, np.abs(lof[candidates] - 1.0)))][0])
        chosen.append(nxt)
        np.minimum(min_d2, d2[nxt], out=min_d2)
    return InitResult(x[chosen], InitMethod.ROBIN, [("point", i) for i in chosen])


def ml_neighborhoods(constraints: ConstraintSet, n):
    """Transitive closure of MUST-LINK pairs via union-find; returns the
    groups of linked points, largest first (ties by lowest member)."""
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    mentioned = set()
    for c in constraints.of_kind(ConstraintKind.MUST_LINK):
        mentioned.add(c.i)
        mentioned.add(c.j)
        ra, rb = find(c.i), find(c.j)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    groups = {}
    for i in sorted(mentioned):
        groups.setdefault(find(i), []).append(i)
    return sorted(groups.values(), key=lambda g: (-len(g), g[0]))


def seeded_init(m: DataMatrix, k, constraints: ConstraintSet):
    """Seed centroids from MUST-LINK neighborhood means; missing centroids are
    filled maximin-style. With no constraints this reduces to maximin_init."""
    _check_k(k, m.n)
    x = m.values
    groups = ml_neighborhoods(constraints, m.n)
    centroids = []
    provenance = []
    for gid, group in enumerate(groups[:k]):
        centroids.append(x[group].mean(axis=0))
        provenance.append(("neighborhood", gid))
    if len(centroids) < k:
        if centroids:
            stack = np.array(centroids)
            min_d2 = np.min(
                np.sum((x[:, None, :] - stack[None, :, :]) ** 2, axis=-1), axis=1
            )
        else:
            first = _max_norm_index(x)
            centroids.append(x[first].copy())
            provenance.append(("point", first))
            min_d2 = np.sum((x - x[first]) ** 2, axis=1)
        d2 = _pairwise_sq_dists(x)
        while len(centroids) < k:
            nxt = int(np.argmax(min_d2))
            if min_d2[nxt] <= 0.0:
                raise ValueError(f"only {len(centroids)} distinct centroids available, need {k}")
            centroids.append(x[nxt].copy())
            provenance.append(("point", nxt))
            np.minimum(min_d2, d2[nxt], out=min_d2)
    return InitResult(np.array(centroids), InitMethod.SEEDING, provenance)


def run_init(method: InitMethod, m: DataMatrix, k, constraints=None, mp=ROBIN_DEFAULT_MP):
    """Dispatch by method name; constraints are only consulted by SEEDING."""
    if method == InitMethod.MAXIMIN:
        return maximin_init(m, k)
    if method == InitMethod.DKMPP:
        return dkmpp_init(m, k)
    if method == InitMethod.ROBIN:
        return robin_init(m, k, mp=min(mp, m.n - 1))
    if method == InitMethod.SEEDING:
        return seeded_init(m, k, constraints if constraints is not None else ConstraintSet())
    raise ValueError(f"unknown init method {method!r}")
