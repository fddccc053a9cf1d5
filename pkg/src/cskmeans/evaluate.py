"""Cross-validated benchmarking: fold plans, pairwise F-score, constraint
fraction sweeps, sparsity selection, and Wilcoxon signed-rank comparisons."""

import csv
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm, rankdata

from .data import (
    ConstraintSet,
    DataError,
    LabeledDataset,
    build_constraint_pool,
    sample_constraints,
)
from .engines import (
    Algorithm,
    ConvergenceConfig,
    run_lkm,
    run_mpckm,
    run_pckm,
    run_pcskm,
    run_skm,
)
from .init_methods import InitMethod, InitResult, run_init

WILCOXON_EXACT_LIMIT = 12
CONSTRAINT_KINDS = ("both", "ML_only", "CL_only")
SPARSE_ALGORITHMS = (Algorithm.SKM, Algorithm.PCSKM)
CONSTRAINED_ALGORITHMS = (Algorithm.PCKM, Algorithm.MPCKM, Algorithm.PCSKM)

RESULT_COLUMNS = [
    "dataset",
    "algorithm",
    "init",
    "constraint_kind",
    "fraction",
    "run",
    "fold",
    "f_score",
    "chosen_s",
    "seed",
]


def derive_seed(master_seed, *parts):
    """Deterministic sub-seed from the master seed and integer-coded parts
    (role tag, run, fold, fraction in millionths)."""
    entropy = [int(master_seed) & 0xFFFFFFFFFFFFFFFF] + [int(p) for p in parts]
    return int(np.random.SeedSequence(entropy).generate_state(1, np.uint64)[0])


@dataclass
class FoldPlan:
    fold_assignments: np.ndarray
    seed: int
    folds: int

    def test_indices(self, fold_id):
        return np.flatnonzero(self.fold_assignments == fold_id)

    def train_indices(self, fold_id):
        return np.flatnonzero(self.fold_assignments != fold_id)


def make_folds(n, folds, seed):
    """Random partition into folds whose sizes differ by at most one."""
    if folds > n:
        raise ValueError(f"cannot split {n} points into {folds} folds")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    assignments = np.empty(n, dtype=int)
    assignments[perm] = np.arange(n) % folds
    return FoldPlan(assignments, seed, folds)


def _comb2(x):
    return x * (x - 1) // 2


def pairwise_f_score(assignment, labels, test_idx):
    """F-score over unordered test-point pairs: precision and recall of the
    same-cluster relation against the same-class relation."""
    test_idx = np.asarray(list(test_idx), dtype=int)
    if len(test_idx) < 2:
        raise ValueError("need at least 2 test points")
    a = np.asarray(assignment)[test_idx]
    l = np.asarray(labels)[test_idx]
    same_cluster = sum(_comb2(c) for c in np.bincount(a) if c > 1)
    same_class = sum(_comb2(c) for c in np.bincount(l) if c > 1)
    both = 0
    for cluster in np.unique(a):
        sub = l[a == cluster]
        both += sum(_comb2(c) for c in np.bincount(sub) if c > 1)
    if both == 0:
        return 0.0
    precision = both / same_cluster
    recall = both / same_class
    return 2 * precision * recall / (precision + recall)


def wilcoxon_signed_rank(a, b):
    """Two-sided paired signed-rank test. Zero differences are discarded;
    the null distribution is enumerated exactly up to n=12 non-zero pairs and
    normally approximated (tie-corrected) above. Returns (W+, p)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    d = a - b
    d = d[d != 0]
    n = len(d)
    if n == 0:
        return 0.0, 1.0
    ranks = rankdata(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    if n <= WILCOXON_EXACT_LIMIT:
        p = _wilcoxon_exact_p(ranks, w_plus)
    else:
        p = _wilcoxon_normal_p(ranks, w_plus, n)
    return w_plus, float(p)


def _wilcoxon_exact_p(ranks, w_plus):
    # doubled average ranks are integers, so a subset-sum table is exact
    doubled = np.rint(2 * ranks).astype(int)
    total = int(doubled.sum())
    counts = np.zeros(total + 1, dtype=float)
    counts[0] = 1.0
    for r in doubled:
        counts[r:] += counts[: total + 1 - r].copy()  # snapshot: slices overlap
    w2 = int(round(2 * w_plus))
    size = 2.0 ** len(ranks)
    p_le = counts[: w2 + 1].sum() / size
    p_ge = counts[w2:].sum() / size
    return min(1.0, 2.0 * min(p_le, p_ge))


def _wilcoxon_normal_p(ranks, w_plus, n):
    mu = n * (n + 1) / 4.0
    var = n * (n + 1) * (2 * n + 1) / 24.0
    _, tie_counts = np.unique(ranks, return_counts=True)
    var -= np.sum(tie_counts**3 - tie_counts) / 48.0
    z = (w_plus - mu) / math.sqrt(var)
    return min(1.0, 2.0 * float(norm.sf(abs(z))))


def table1_audit(n, folds=10):
    """Floor of the mean constraint-pool size over folds: each fold's pool is
    C(training size, 2) under the size-spread-at-most-one fold rule."""
    if folds < 2:
        raise ValueError("need at least 2 folds")
    base, extra = divmod(n, folds)
    sizes = [base + 1] * extra + [base] * (folds - extra)
    return sum(_comb2(n - size) for size in sizes) // folds


def sparsity_grid(p, start=1.1, step=0.2):
    """The sweep grid {start, start+step, ...} capped at sqrt(p); falls back
    to the single point sqrt(p) when the cap is below start."""
    cap = math.sqrt(p)
    grid = []
    s = start
    while s <= cap + 1e-9:
        grid.append(round(s, 10))
        s += step
    return grid or [cap]


@dataclass
class CurveCell:
    dataset: str
    algorithm: str
    init: str
    constraint_kind: str
    fraction: float
    run: int
    fold: int
    f_score: float
    chosen_s: float | None
    seed: int


class PerformanceCurve:
    """Raw per-(run, fold, fraction) F-scores plus their aggregates."""

    def __init__(self, cells=None):
        self.cells: list[CurveCell] = list(cells) if cells else []

    def add(self, cell):
        self.cells.append(cell)

    def extend(self, other):
        self.cells.extend(other.cells)

    def aggregates(self):
        """Mean/stddev of F per (algorithm, init, kind, fraction)."""
        groups = {}
        for c in self.cells:
            groups.setdefault((c.algorithm, c.init, c.constraint_kind, c.fraction), []).append(c.f_score)
        out = {}
        for key in sorted(groups):
            vals = np.array(groups[key])
            out[key] = {
                "mean_f": float(vals.mean()),
                "std_f": float(vals.std(ddof=1)) if len(vals) > 1 else 0.0,
                "count": len(vals),
            }
        return out

    def mean_f(self, algorithm=None, init=None, kind=None, fraction=None):
        vals = [
            c.f_score
            for c in self.cells
            if (algorithm is None or c.algorithm == algorithm)
            and (init is None or c.init == init)
            and (kind is None or c.constraint_kind == kind)
            and (fraction is None or c.fraction == fraction)
        ]
        if not vals:
            raise ValueError("no cells match the filter")
        return float(np.mean(vals))


def _clustering_assignment(m, algorithm, init_result, constraints, s, cfg):
    if algorithm == Algorithm.LKM:
        return run_lkm(m, init_result, cfg).assignment
    if algorithm == Algorithm.PCKM:
        return run_pckm(m, init_result, constraints, cfg).assignment
    if algorithm == Algorithm.MPCKM:
        return run_mpckm(m, init_result, constraints, cfg)[0].assignment
    if algorithm == Algorithm.SKM:
        return run_skm(m, init_result, s, cfg)[0].assignment
    if algorithm == Algorithm.PCSKM:
        return run_pcskm(m, init_result, s, constraints, cfg)[0].assignment
    raise ValueError(f"unknown algorithm {algorithm!r}")


def sweep_sparsity(ds: LabeledDataset, algorithm, init, constraints, cfg=None, test_idx=None, grid=None, robin_mp=10):
    """Evaluate the sparsity grid and return (best_s, best_f); ties go to the
    smaller s. F is scored on test_idx (all points when omitted)."""
    algorithm = Algorithm(algorithm) if not isinstance(algorithm, Algorithm) else algorithm
    if algorithm not in SPARSE_ALGORITHMS:
        raise ValueError(f"{algorithm.value} has no sparsity parameter")
    if ds.labels is None:
        raise DataError("sweep_sparsity needs a labeled dataset")
    cfg = cfg or ConvergenceConfig()
    if test_idx is None:
        test_idx = np.arange(ds.n)
    if isinstance(init, InitResult):
        init_result = init
    else:
        init_result = run_init(InitMethod(init), ds.matrix, ds.class_count, constraints, mp=robin_mp)
    grid = grid if grid is not None else sparsity_grid(ds.p)
    best_s, best_f = None, -1.0
    for s in grid:
        assignment = _clustering_assignment(ds.matrix, algorithm, init_result, constraints, s, cfg)
        f = pairwise_f_score(assignment, ds.labels, test_idx)
        if f > best_f:
            best_s, best_f = s, f
    return best_s, best_f


def run_cv_experiment(
    ds: LabeledDataset,
    algorithm,
    init,
    kind="both",
    fractions=(0.1,),
    runs=1,
    seed=0,
    cfg=None,
    folds=10,
    grid=None,
    dataset_name="",
    robin_mp=10,
    progress=None,
):
    """Cross-validated benchmark protocol: per run, draw a fold plan; per
    fold, build the constraint pool from training labels only, sample each
    fraction, cluster the whole dataset, and score F on test pairs only.
    Sparse algorithms pick s by sweeping the grid. Deterministic per seed."""
    if ds.labels is None:
        raise DataError("run_cv_experiment needs a labeled dataset")
    algorithm = Algorithm(algorithm) if not isinstance(algorithm, Algorithm) else algorithm
    init = InitMethod(init) if not isinstance(init, InitMethod) else init
    if kind not in CONSTRAINT_KINDS:
        raise ValueError(f"unknown constraint kind {kind!r}")
    cfg = cfg or ConvergenceConfig()
    k = ds.class_count
    curve = PerformanceCurve()
    need_pool = any(f > 0 for f in fractions)
    shared_init = None
    if init != InitMethod.SEEDING:
        shared_init = run_init(init, ds.matrix, k, mp=robin_mp)
    for run_id in range(runs):
        plan = make_folds(ds.n, folds, derive_seed(seed, 0, run_id))
        for fold_id in range(folds):
            test_idx = plan.test_indices(fold_id)
            pool = build_constraint_pool(ds.labels, plan.train_indices(fold_id)) if need_pool else None
            for fraction in fractions:
                sub_seed = derive_seed(seed, 1, run_id, fold_id, int(round(fraction * 1e6)))
                if fraction > 0:
                    constraints = sample_constraints(pool, fraction, kind, sub_seed)
                else:
                    constraints = ConstraintSet()
                init_result = shared_init or run_init(InitMethod.SEEDING, ds.matrix, k, constraints)
                if algorithm in SPARSE_ALGORITHMS:
                    chosen_s, f = sweep_sparsity(
                        ds, algorithm, init_result, constraints, cfg, test_idx=test_idx, grid=grid
                    )
                else:
                    assignment = _clustering_assignment(ds.matrix, algorithm, init_result, constraints, None, cfg)
                    f = pairwise_f_score(assignment, ds.labels, test_idx)
                    chosen_s = None
                curve.add(
                    CurveCell(
                        dataset=dataset_name,
                        algorithm=algorithm.value,
                        init=init.value,
                        constraint_kind=kind,
                        fraction=fraction,
                        run=run_id,
                        fold=fold_id,
                        f_score=f,
                        chosen_s=chosen_s,
                        seed=sub_seed,
                    )
                )
                if progress is not None:
                    progress(curve.cells[-1])
    return curve


def wilcoxon_comparisons(curve: PerformanceCurve, baseline="pcskm"):
    """Paired signed-rank tests of the baseline against every other
    algorithm. A case is the mean F over fractions for one
    (dataset, init, kind) combination; both algorithms must cover it."""
    per_case = {}
    for c in curve.cells:
        key = (c.dataset, c.init, c.constraint_kind)
        per_case.setdefault(c.algorithm, {}).setdefault(key, []).append(c.f_score)
    if baseline not in per_case:
        return []
    base_means = {k: float(np.mean(v)) for k, v in per_case[baseline].items()}
    results = []
    for other, cases in sorted(per_case.items()):
        if other == baseline:
            continue
        shared = sorted(set(base_means) & set(cases))
        if not shared:
            continue
        a = [base_means[k] for k in shared]
        b = [float(np.mean(cases[k])) for k in shared]
        stat, p = wilcoxon_signed_rank(a, b)
        results.append(
            {
                "baseline": baseline,
                "algorithm": other,
                "cases": ["|".join(map(str, k)) for k in shared],
                "statistic": stat,
                "p_value": p,
                "mean_baseline": float(np.mean(a)),
                "mean_other": float(np.mean(b)),
            }
        )
    return results


def write_results_csv(curve: PerformanceCurve, path):
    """Plot-ready per-cell results, one row per (run, fold, fraction)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(RESULT_COLUMNS)
        for c in curve.cells:
            writer.writerow(
                [
                    c.dataset,
                    c.algorithm,
                    c.init,
                    c.constraint_kind,
                    repr(float(c.fraction)),
                    c.run,
                    c.fold,
                    repr(float(c.f_score)),
                    "" if c.chosen_s is None else repr(float(c.chosen_s)),
                    c.seed,
                ]
            )


def write_summary_json(curve: PerformanceCurve, path, extra=None):
    """Per-group means/stddevs plus the Wilcoxon comparison block."""
    summary = {
        "groups": [
            {
                "algorithm": key[0],
                "init": key[1],
                "constraint_kind": key[2],
                "fraction": key[3],
                **stats,
            }
            for key, stats in curve.aggregates().items()
        ],
        "wilcoxon": wilcoxon_comparisons(curve),
    }
    if extra:
        summary.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
