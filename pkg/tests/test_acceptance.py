"""Acceptance gate: one test per criterion, each printing a PASS line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
report. Budgets are asserted where the criterion states one.
"""

import itertools
import math
import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest
import scipy.stats

from cskmeans.cli import main as cli_main
from cskmeans.data import (
    ConstraintSet,
    DataMatrix,
    build_constraint_pool,
    generate_brodinova,
    load_csv,
    sample_constraints,
)
from cskmeans.engines import (
    FeatureScores,
    run_lkm,
    run_pckm,
    run_pcskm,
    run_skm,
    update_weights,
)
from cskmeans.evaluate import (
    make_folds,
    pairwise_f_score,
    run_cv_experiment,
    sparsity_grid,
    table1_audit,
    wilcoxon_signed_rank,
)
from cskmeans.init_methods import InitMethod, dkmpp_init, run_init

REPO = Path(__file__).resolve().parents[1]
IRIS = REPO / "data" / "iris.csv"

TABLE1 = {150: 9045, 351: 49738, 424: 72618, 406: 66576, 120: 5778}


def report(num, message):
    print(f"\nACCEPTANCE {num:>2} PASS: {message}")


def random_instance(rng, max_n=60, max_p=6, max_k=4):
    n = int(rng.integers(8, max_n + 1))
    p = int(rng.integers(1, max_p + 1))
    k = int(rng.integers(2, min(max_k, n) + 1))
    centers = rng.normal(scale=3.0, size=(k, p))
    x = rng.normal(size=(n, p)) + centers[rng.integers(0, k, size=n)]
    return DataMatrix(x), k


def test_c01_table1_reproduction(capsys):
    t0 = time.monotonic()
    for n, expected in TABLE1.items():
        assert table1_audit(n) == expected, f"pool size for n={n}"
    assert cli_main(["audit-table1"] + [str(n) for n in TABLE1]) == 0
    out = capsys.readouterr().out
    for n, expected in TABLE1.items():
        assert f"points={n} folds=10 pool={expected}" in out
    elapsed = time.monotonic() - t0
    assert elapsed < 1.0
    report(1, f"Table 1 pool sizes {list(TABLE1.values())} reproduced exactly ({elapsed:.2f}s)")


def test_c02_constraint_sampling_endpoints():
    t0 = time.monotonic()
    iris = load_csv(str(IRIS), "species")
    plan = make_folds(iris.n, 10, seed=0)
    train = plan.train_indices(0)
    assert len(train) == 135
    pool = build_constraint_pool(iris.labels, train)
    assert len(pool) == 9045
    low = sample_constraints(pool, 0.01, "both", seed=1)
    high = sample_constraints(pool, 0.10, "both", seed=1)
    assert (len(low), len(high)) == (90, 905)
    elapsed = time.monotonic() - t0
    assert elapsed < 1.0
    report(2, f"fisheriris pool 9045 samples to [90, 905] at [1%, 10%] ({elapsed:.2f}s)")


def _grid_search_weights(gamma, s, budget=100_000):
    """Independent oracle: pure grid evaluation of the soft-threshold curve.

    The budget is split into a coarse scan that brackets the L1 crossing and
    a fine grid over that bracket; selection is closest ||w||_1 to s at both
    stages. No bisection is involved.
    """

    def best_index(deltas):
        u = np.maximum(gamma[None, :] - deltas[:, None], 0.0)
        norms = np.linalg.norm(u, axis=1)
        ok = norms > 0
        l1 = np.where(ok, u.sum(axis=1) / np.where(ok, norms, 1.0), np.inf)
        return int(np.argmin(np.abs(l1 - s)))

    u0 = np.maximum(gamma, 0.0)
    w0 = u0 / np.linalg.norm(u0)
    if w0.sum() <= s + 1e-12:
        return w0
    coarse_n = budget // 10
    coarse = np.linspace(0.0, gamma.max(), coarse_n)
    i = best_index(coarse)
    fine = np.linspace(coarse[max(i - 1, 0)], coarse[min(i + 1, coarse_n - 1)], budget - coarse_n)
    u = np.maximum(gamma - fine[best_index(fine)], 0.0)
    return u / np.linalg.norm(u)


def test_c03_weight_update_oracle():
    t0 = time.monotonic()
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(1000):
        p = int(rng.integers(2, 9))
        gamma = rng.uniform(0, 10, size=p)
        s = float(rng.uniform(1.0, math.sqrt(p)))
        scores = FeatureScores(gamma.copy(), False)
        fw = update_weights(scores, s)
        assert np.linalg.norm(fw.w) <= 1 + 1e-9
        assert np.abs(fw.w).sum() <= s + 1e-6
        assert np.all(fw.w >= 0)
        dev = float(np.max(np.abs(fw.w - _grid_search_weights(gamma, s))))
        worst = max(worst, dev)
        assert dev <= 1e-4, f"gamma={gamma} s={s} deviation={dev}"
    elapsed = time.monotonic() - t0
    assert elapsed < 30.0
    report(3, f"1000 weight updates match the 1e5-point grid oracle, worst dev {worst:.1e} ({elapsed:.1f}s)")


def test_c04_monotonicity_suites():
    t0 = time.monotonic()
    rng = np.random.default_rng(1)
    inits = list(InitMethod)
    lloyd_steps = skm_steps = 0
    for trial in range(200):
        m, k = random_instance(rng)
        init = run_init(inits[trial % 4], m, k, ConstraintSet(), mp=min(10, m.n - 1))
        model = run_lkm(m, init)
        h = model.objective_history
        assert all(h[i + 1] <= h[i] + 1e-6 for i in range(len(h) - 1)), "Lloyd objective rose"
        lloyd_steps += len(h)
        s = float(rng.uniform(1.0, math.sqrt(m.p)))
        sparse_model, _ = run_skm(m, init, s)
        g = sparse_model.objective_history
        assert all(g[i + 1] >= g[i] - 1e-6 for i in range(len(g) - 1)), "weighted score fell"
        skm_steps += len(g)
    elapsed = time.monotonic() - t0
    assert elapsed < 60.0
    report(
        4,
        f"200 instances: within-cluster objective non-increasing over {lloyd_steps} Lloyd iterations,"
        f" weighted score non-decreasing over {skm_steps} outer iterations ({elapsed:.1f}s)",
    )


def test_c05_reduction_laws():
    t0 = time.monotonic()
    rng = np.random.default_rng(2)
    checked = 0
    for _ in range(100):
        m, k = random_instance(rng, max_n=30)
        s = float(rng.uniform(1.0, math.sqrt(m.p)))
        for method in InitMethod:
            init = run_init(method, m, k, ConstraintSet(), mp=min(10, m.n - 1))
            a = run_lkm(m, init)
            b = run_pckm(m, init, ConstraintSet())
            assert np.array_equal(a.assignment, b.assignment)
            assert np.array_equal(a.centroids, b.centroids)
            c, wc = run_skm(m, init, s)
            d, wd = run_pcskm(m, init, s, ConstraintSet())
            assert np.array_equal(c.assignment, d.assignment)
            assert np.array_equal(c.centroids, d.centroids)
            assert np.array_equal(wc.w, wd.w)
            checked += 1
    elapsed = time.monotonic() - t0
    assert elapsed < 60.0
    report(5, f"empty-constraint runs identical to unconstrained runs in {checked} instance/init pairs ({elapsed:.1f}s)")


def test_c06_synthetic_feature_selection():
    t0 = time.monotonic()
    fractions = (0.0, 0.01, 0.10)
    worst_ratio = 0.0
    for informative, uninformative in ((5, 5), (3, 7)):
        ds = generate_brodinova(3, 40, informative, uninformative, seed=7)
        uninf = np.array([t == "uninformative" for t in ds.feature_truth])
        init = dkmpp_init(ds.matrix, ds.class_count)
        pool = build_constraint_pool(ds.labels, range(ds.n))
        for fraction in fractions:
            if fraction > 0:
                constraints = sample_constraints(pool, fraction, "both", seed=11)
            else:
                constraints = ConstraintSet()
            for s in sparsity_grid(ds.p):
                for label, runner in (("skm", run_skm), ("pcskm", run_pcskm)):
                    if label == "skm":
                        _, fw = runner(ds.matrix, init, s)
                    else:
                        _, fw = runner(ds.matrix, init, s, constraints)
                    ratio = float(fw.w[uninf].max() / fw.w.max())
                    worst_ratio = max(worst_ratio, ratio)
                    assert ratio < 0.05, (
                        f"{label} {informative}+{uninformative} s={s} fraction={fraction}: "
                        f"uninformative weight ratio {ratio:.3f}"
                    )
    elapsed = time.monotonic() - t0
    assert elapsed < 300.0
    report(
        6,
        f"both synthetic sets: every uninformative weight < 0.05 x max for every s and"
        f" fraction in {{0,1%,10%}}, worst ratio {worst_ratio:.3f} ({elapsed:.1f}s)",
    )


def test_c07_synthetic_performance_ceiling():
    t0 = time.monotonic()
    means = {}
    for informative, uninformative in ((5, 5), (3, 7)):
        ds = generate_brodinova(3, 40, informative, uninformative, seed=7)
        for algo in ("lkm", "skm", "pckm", "mpckm", "pcskm"):
            curve = run_cv_experiment(
                ds, algo, "dkmpp", kind="both", fractions=[0.1], runs=1, seed=13, folds=10
            )
            mean_f = curve.mean_f(algorithm=algo)
            means[(informative, uninformative, algo)] = mean_f
            assert mean_f >= 0.95, f"{algo} on {informative}+{uninformative}: mean F {mean_f:.3f}"
    elapsed = time.monotonic() - t0
    assert elapsed < 300.0
    lowest = min(means.values())
    report(7, f"all five algorithms reach mean F >= 0.95 on both synthetic sets (lowest {lowest:.3f}, {elapsed:.1f}s)")


def test_c08_iris_desk_scale_trend():
    t0 = time.monotonic()
    iris = load_csv(str(IRIS), "species")
    means = {}
    for algo in ("pcskm", "skm", "pckm", "lkm"):
        curve = run_cv_experiment(
            iris, algo, "dkmpp", kind="both", fractions=[0.10], runs=25, seed=17, folds=10,
            dataset_name="fisheriris",
        )
        means[algo] = curve.mean_f(algorithm=algo)
    assert means["pcskm"] >= means["skm"] - 0.02, f"PCSKM {means['pcskm']:.4f} vs SKM {means['skm']:.4f}"
    assert means["pckm"] >= means["lkm"] - 0.02, f"PCKM {means['pckm']:.4f} vs LKM {means['lkm']:.4f}"
    elapsed = time.monotonic() - t0
    assert elapsed < 900.0
    report(
        8,
        "fisheriris 25x10-fold at 10% both-kind constraints:"
        f" PCSKM {means['pcskm']:.4f} >= SKM {means['skm']:.4f} - 0.02,"
        f" PCKM {means['pckm']:.4f} >= LKM {means['lkm']:.4f} - 0.02 ({elapsed:.0f}s)",
    )


def test_c09_f_score_oracle():
    t0 = time.monotonic()
    rng = np.random.default_rng(3)
    for _ in range(500):
        n = int(rng.integers(2, 21))
        assignment = rng.integers(0, 4, size=n)
        labels = rng.integers(0, 3, size=n)
        size = int(rng.integers(2, n + 1))
        test_idx = np.sort(rng.choice(n, size=size, replace=False))
        sc = sl = both = 0
        for i, j in itertools.combinations(test_idx.tolist(), 2):
            same_cluster = assignment[i] == assignment[j]
            same_class = labels[i] == labels[j]
            sc += same_cluster
            sl += same_class
            both += same_cluster and same_class
        if both == 0:
            expected = 0.0
        else:
            precision = both / sc
            recall = both / sl
            expected = 2 * precision * recall / (precision + recall)
        got = pairwise_f_score(assignment, labels, test_idx)
        assert got == expected
    elapsed = time.monotonic() - t0
    assert elapsed < 10.0
    report(9, f"pairwise F equals brute-force pair enumeration on 500 instances exactly ({elapsed:.1f}s)")


def test_c10_wilcoxon_exactness():
    t0 = time.monotonic()
    stat, p = wilcoxon_signed_rank([0.0] * 5, [1.0] * 5)
    assert stat == 0.0 and p == 0.0625
    rng = np.random.default_rng(4)
    cases = 0
    for n in range(1, 11):
        for _ in range(20):
            d = rng.integers(-3, 4, size=n).astype(float)
            a = d
            b = np.zeros(n)
            got_stat, got_p = wilcoxon_signed_rank(a, b)
            nz = d[d != 0]
            if len(nz) == 0:
                assert (got_stat, got_p) == (0.0, 1.0)
                continue
            ranks = scipy.stats.rankdata(np.abs(nz))
            w_plus = ranks[nz > 0].sum()
            sums = np.array(
                [sum(r for r, bit in zip(ranks, bits) if bit)
                 for bits in itertools.product([0, 1], repeat=len(nz))]
            )
            p_le = np.mean(sums <= w_plus + 1e-12)
            p_ge = np.mean(sums >= w_plus - 1e-12)
            expected = min(1.0, 2.0 * min(p_le, p_ge))
            assert got_stat == w_plus
            assert math.isclose(got_p, expected, abs_tol=1e-12)
            cases += 1
    elapsed = time.monotonic() - t0
    assert elapsed < 10.0
    report(10, f"exact branch matches full 2^n enumeration in {cases} cases incl. the p=0.0625 case ({elapsed:.1f}s)")


def test_c11_run_determinism(tmp_path):
    config = tmp_path / "cfg.toml"
    config.write_text(
        """
algorithms = ["lkm", "pckm"]
inits = ["maximin"]
constraint_kinds = ["both"]
fractions = [0.05, 0.1]
runs = 2
folds = 3
master_seed = 23

[dataset]
generator = "brodinova"
seed = 2
params = {clusters = 3, per_cluster = 8, informative = 2, uninformative = 1}
"""
    )
    env = dict(os.environ)
    env["PYTHONPATH"] = str(REPO / "src") + os.pathsep + env.get("PYTHONPATH", "")
    outputs = []
    for sub in ("a", "b"):
        out = tmp_path / sub
        proc = subprocess.run(
            [sys.executable, "-m", "cskmeans.cli", "run", "--config", str(config), "--out", str(out)],
            capture_output=True,
            env=env,
            cwd=REPO,
        )
        assert proc.returncode == 0, proc.stderr.decode()
        outputs.append((out / "results.csv").read_bytes())
    assert outputs[0] == outputs[1]
    report(11, f"two executions produced byte-identical results.csv ({len(outputs[0])} bytes)")
