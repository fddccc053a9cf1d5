"""Batch experiment CLI: cross-validated benchmark runs, weight-profile
exports, dataset generation, and constraint-pool audits.

Exit codes: 0 success, 1 config error, 2 data error, 3 numerical failure.
"""

import argparse
import json
import sys
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

import numpy as np

from . import __version__
from .data import (
    DataError,
    build_constraint_pool,
    contaminate_exponential,
    generate_brodinova,
    load_csv,
    sample_constraints,
    save_dataset,
    standardize,
    subsample_classes,
)
from .engines import (
    Algorithm,
    ConvergenceConfig,
    NumericalError,
    run_mpckm,
    run_pcskm,
    run_skm,
)
from .evaluate import (
    CONSTRAINT_KINDS,
    PerformanceCurve,
    derive_seed,
    run_cv_experiment,
    sparsity_grid,
    table1_audit,
    write_results_csv,
    write_summary_json,
)
from .init_methods import InitMethod, run_init
from .plots import plot_performance_curves, plot_weight_profiles

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3

SEED_RULE = "sub-seed = SeedSequence([master, role, run, fold, fraction*1e6]); roles: 0=folds, 1=constraints, 2=weights"

WEIGHT_ALGORITHMS = ("skm", "pcskm", "mpckm")


class ConfigError(Exception):
    """Raised for malformed or inconsistent experiment configuration."""


@dataclass
class ExperimentConfig:
    """Declarative description of one benchmark grid."""

    dataset: dict
    algorithms: list
    inits: list
    constraint_kinds: list = field(default_factory=lambda: ["both"])
    fractions: list = field(default_factory=lambda: [0.1])
    runs: int = 1
    folds: int = 10
    master_seed: int = 0
    sparsity_grid: list | None = None
    standardize: bool = False
    out_dir: str | None = None

    def validate(self):
        if not isinstance(self.dataset, dict) or not (
            "path" in self.dataset or "generator" in self.dataset
        ):
            raise ConfigError("dataset: must give either 'path' or 'generator'")
        if not self.algorithms:
            raise ConfigError("algorithms: at least one required")
        valid_algos = {a.value for a in Algorithm}
        for i, a in enumerate(self.algorithms):
            if a not in valid_algos:
                raise ConfigError(f"algorithms[{i}]: unknown algorithm {a!r} (choose from {sorted(valid_algos)})")
        if not self.inits:
            raise ConfigError("inits: at least one required")
        valid_inits = {m.value for m in InitMethod}
        for i, m in enumerate(self.inits):
            if m not in valid_inits:
                raise ConfigError(f"inits[{i}]: unknown init {m!r} (choose from {sorted(valid_inits)})")
        for i, k in enumerate(self.constraint_kinds):
            if k not in CONSTRAINT_KINDS:
                raise ConfigError(f"constraint_kinds[{i}]: unknown kind {k!r} (choose from {list(CONSTRAINT_KINDS)})")
        for i, f in enumerate(self.fractions):
            if not (isinstance(f, (int, float)) and 0 < f <= 1):
                raise ConfigError(f"fractions[{i}]: {f!r} outside (0, 1]")
        if self.runs < 1:
            raise ConfigError(f"runs: must be >= 1, got {self.runs}")
        if self.folds < 2:
            raise ConfigError(f"folds: must be >= 2, got {self.folds}")
        if self.sparsity_grid is not None:
            for i, s in enumerate(self.sparsity_grid):
                if not (isinstance(s, (int, float)) and s >= 1):
                    raise ConfigError(f"sparsity_grid[{i}]: {s!r} must be >= 1")
        return self


def load_config(path):
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    if path.suffix == ".toml":
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    elif path.suffix == ".json":
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    else:
        raise ConfigError(f"config must be .toml or .json, got {path.suffix!r}")
    known = set(ExperimentConfig.__dataclass_fields__)
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config fields: {sorted(unknown)}")
    try:
        return ExperimentConfig(**raw).validate()
    except TypeError as e:
        raise ConfigError(str(e)) from None


def _apply_overrides(config, args):
    if getattr(args, "seed", None) is not None:
        config.master_seed = args.seed
    if getattr(args, "out", None) is not None:
        config.out_dir = args.out
    if getattr(args, "standardize", False):
        config.standardize = True
    return config


def _prepare_out_dir(config, force):
    if not config.out_dir:
        raise ConfigError("no output directory: set out_dir in the config or pass --out")
    out = Path(config.out_dir)
    if out.exists() and any(out.iterdir()) and not force:
        raise ConfigError(f"output directory {out} is not empty; pass --force to overwrite")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_dataset(config):
    d = config.dataset
    if "path" in d:
        ds = load_csv(d["path"], d.get("label_column"))
        name = d.get("name") or Path(d["path"]).stem
    else:
        gen = d["generator"]
        params = d.get("params", {})
        seed = d.get("seed", 0)
        if gen == "brodinova":
            ds = generate_brodinova(
                clusters=params.get("clusters", 3),
                per_cluster=params.get("per_cluster", 40),
                informative=params.get("informative", 5),
                uninformative=params.get("uninformative", 5),
                seed=seed,
            )
        else:
            raise ConfigError(f"dataset.generator: unknown generator {gen!r}")
        name = d.get("name") or gen
    if config.standardize:
        ds = standardize(ds)
    return ds, name


def _write_manifest(out, config, command):
    manifest = {
        "command": command,
        "version": __version__,
        "created": datetime.now(timezone.utc).isoformat(),
        "seed_rule": SEED_RULE,
        "config": asdict(config),
    }
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")


def cmd_run(args):
    config = _apply_overrides(load_config(args.config), args)
    out = _prepare_out_dir(config, args.force)
    ds, name = _load_dataset(config)
    if ds.labels is None:
        raise DataError("run requires a labeled dataset (set dataset.label_column)")
    cfg = ConvergenceConfig()
    progress = None
    if args.progress:
        progress = lambda cell: print(
            f"done {cell.algorithm}/{cell.init}/{cell.constraint_kind}"
            f" fraction={cell.fraction:g} run={cell.run} fold={cell.fold} f={cell.f_score:.4f}",
            file=sys.stderr,
        )
    curve = PerformanceCurve()
    for init in config.inits:
        for kind in config.constraint_kinds:
            for algo in config.algorithms:
                curve.extend(
                    run_cv_experiment(
                        ds,
                        algo,
                        init,
                        kind=kind,
                        fractions=config.fractions,
                        runs=config.runs,
                        seed=config.master_seed,
                        cfg=cfg,
                        folds=config.folds,
                        grid=config.sparsity_grid,
                        dataset_name=name,
                        progress=progress,
                    )
                )
    write_results_csv(curve, out / "results.csv")
    write_summary_json(curve, out / "summary.json")
    plot_performance_curves(curve, out / "performance.png")
    _write_manifest(out, config, "run")
    print(f"wrote {out / 'results.csv'} ({len(curve.cells)} cells)")
    return EXIT_OK


def cmd_weights(args):
    config = _apply_overrides(load_config(args.config), args)
    weight_algos = [a for a in config.algorithms if a in WEIGHT_ALGORITHMS]
    if not weight_algos:
        raise ConfigError(f"weights needs at least one of {list(WEIGHT_ALGORITHMS)} in algorithms")
    out = _prepare_out_dir(config, args.force)
    ds, name = _load_dataset(config)
    if ds.labels is None:
        raise DataError("weights requires a labeled dataset")
    cfg = ConvergenceConfig()
    grid = config.sparsity_grid or sparsity_grid(ds.p)
    pool = build_constraint_pool(ds.labels, range(ds.n))
    truth = ds.feature_truth or ["unknown"] * ds.p
    names = ds.feature_names or [f"f{j + 1}" for j in range(ds.p)]
    rows = []
    for init in config.inits:
        for kind in config.constraint_kinds:
            for fraction in config.fractions:
                for algo in weight_algos:
                    acc = np.zeros(ds.p)
                    count = 0
                    n_constraints = 0
                    for run_id in range(config.runs):
                        sub_seed = derive_seed(config.master_seed, 2, run_id, int(round(fraction * 1e6)))
                        constraints = sample_constraints(pool, fraction, kind, sub_seed)
                        n_constraints = len(constraints)
                        init_result = run_init(
                            InitMethod(init), ds.matrix, ds.class_count, constraints, mp=min(10, ds.n - 1)
                        )
                        if algo == "mpckm":
                            _, fw = run_mpckm(ds.matrix, init_result, constraints, cfg)
                            acc += fw.w
                            count += 1
                        else:
                            runner = run_skm if algo == "skm" else run_pcskm
                            for s in grid:
                                if algo == "skm":
                                    _, fw = runner(ds.matrix, init_result, s, cfg)
                                else:
                                    _, fw = runner(ds.matrix, init_result, s, constraints, cfg)
                                acc += fw.w
                                count += 1
                        if args.progress:
                            print(f"done {algo}/{init}/{kind} fraction={fraction:g} run={run_id}", file=sys.stderr)
                    mean_w = acc / count
                    for j in range(ds.p):
                        rows.append(
                            {
                                "dataset": name,
                                "algorithm": algo,
                                "init": init,
                                "constraint_kind": kind,
                                "fraction": fraction,
                                "n_constraints": n_constraints,
                                "feature": j,
                                "feature_name": names[j],
                                "feature_truth": truth[j],
                                "mean_weight": float(mean_w[j]),
                            }
                        )
    import csv as _csv

    with open(out / "weights.csv", "w", newline="", encoding="utf-8") as fh:
        writer = _csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        for r in rows:
            r = dict(r)
            r["mean_weight"] = repr(r["mean_weight"])
            r["fraction"] = repr(float(r["fraction"]))
            writer.writerow(r)
    plot_weight_profiles(rows, out / "weights.png")
    _write_manifest(out, config, "weights")
    print(f"wrote {out / 'weights.csv'} ({len(rows)} rows)")
    return EXIT_OK


def cmd_generate(args):
    out = Path(args.out)
    if out.exists() and not args.force:
        raise ConfigError(f"{out} exists; pass --force to overwrite")
    if args.kind == "brodinova":
        params = {
            "clusters": args.clusters,
            "per_cluster": args.per_cluster,
            "informative": args.informative,
            "uninformative": args.uninformative,
        }
        ds = generate_brodinova(seed=args.seed, **params)
    elif args.kind == "contaminate":
        base = load_csv(args.input, args.label_column)
        params = {"input": args.input, "count": args.count, "rate": args.rate}
        ds = contaminate_exponential(base, args.count, args.rate, seed=args.seed)
    elif args.kind == "subsample":
        base = load_csv(args.input, args.label_column)
        classes = [int(c) for c in args.classes.split(",")]
        params = {"input": args.input, "classes": classes, "per_class": args.per_class}
        ds = subsample_classes(base, classes, args.per_class, seed=args.seed)
    else:
        raise ConfigError(f"unknown generate kind {args.kind!r}")
    save_dataset(ds, out, seed=args.seed, generator=args.kind, params=params)
    print(f"wrote {out} ({ds.n}x{ds.p}) and {out}.meta.json")
    return EXIT_OK


def cmd_audit_table1(args):
    for n in args.points:
        print(f"points={n} folds={args.folds} pool={table1_audit(n, args.folds)}")
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    # usage errors are config errors: exit 1, not argparse's default 2
    def error(self, message):
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser():
    parser = _Parser(prog="cskmeans", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", required=True, help="experiment config (.toml or .json)")
        p.add_argument("--out", help="output directory (overrides config out_dir)")
        p.add_argument("--seed", type=int, help="master seed (overrides config)")
        p.add_argument("--force", action="store_true", help="overwrite a non-empty output directory")
        p.add_argument("--progress", action="store_true", help="print per-cell completion")
        p.add_argument("--standardize", action="store_true", help="z-score features before clustering")

    p_run = sub.add_parser("run", help="run the cross-validated benchmark grid")
    add_common(p_run)
    p_run.set_defaults(func=cmd_run)

    p_weights = sub.add_parser("weights", help="export per-feature weight profiles")
    add_common(p_weights)
    p_weights.set_defaults(func=cmd_weights)

    p_gen = sub.add_parser("generate", help="generate or transform datasets")
    gen_sub = p_gen.add_subparsers(dest="kind", required=True)

    g_b = gen_sub.add_parser("brodinova", help="Gaussian clusters with known noise features")
    g_b.add_argument("--clusters", type=int, default=3)
    g_b.add_argument("--per-cluster", type=int, default=40)
    g_b.add_argument("--informative", type=int, default=5)
    g_b.add_argument("--uninformative", type=int, default=5)

    g_c = gen_sub.add_parser("contaminate", help="append exponential noise features to a CSV")
    g_c.add_argument("--input", required=True)
    g_c.add_argument("--label-column")
    g_c.add_argument("--count", type=int, default=4)
    g_c.add_argument("--rate", type=float, default=1.0)

    g_s = gen_sub.add_parser("subsample", help="sample fixed-size class subsets from a CSV")
    g_s.add_argument("--input", required=True)
    g_s.add_argument("--label-column", required=True)
    g_s.add_argument("--classes", required=True, help="comma-separated class ids, e.g. 0,4,8")
    g_s.add_argument("--per-class", type=int, required=True)

    for g in (g_b, g_c, g_s):
        g.add_argument("--seed", type=int, default=0)
        g.add_argument("--out", required=True)
        g.add_argument("--force", action="store_true")
    p_gen.set_defaults(func=cmd_generate)

    p_audit = sub.add_parser("audit-table1", help="expected constraint-pool sizes from point counts")
    p_audit.add_argument("points", type=int, nargs="+")
    p_audit.add_argument("--folds", type=int, default=10)
    p_audit.set_defaults(func=cmd_audit_table1)

    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
