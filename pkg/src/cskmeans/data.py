"""Data model, CSV ingestion, synthetic generators and constraint pools."""

import csv
import json
import math
import os
from dataclasses import dataclass
from enum import Enum

import numpy as np


class DataError(Exception):
    """Raised when input data cannot be parsed or violates an invariant."""


class ConstraintKind(Enum):
    MUST_LINK = "ML"
    CANNOT_LINK = "CL"


FEATURE_INFORMATIVE = "informative"
FEATURE_UNINFORMATIVE = "uninformative"
FEATURE_UNKNOWN = "unknown"


class DataMatrix:
    """An n x p matrix of finite real-valued observations."""

    def __init__(self, values):
        values = np.asarray(values, dtype=float)
        if values.ndim != 2:
            raise DataError(f"expected a 2-d matrix, got shape {values.shape}")
        if values.shape[0] < 1 or values.shape[1] < 1:
            raise DataError(f"matrix must be at least 1x1, got {values.shape}")
        if not np.all(np.isfinite(values)):
            bad = np.argwhere(~np.isfinite(values))[0]
            raise DataError(f"non-finite entry at row {bad[0]}, column {bad[1]}")
        self.values = values
        self.n, self.p = values.shape

    def __repr__(self):
        return f"DataMatrix(n={self.n}, p={self.p})"


@dataclass
class LabeledDataset:
    """A data matrix with optional class labels and per-feature quality flags."""

    matrix: DataMatrix
    labels: np.ndarray | None = None
    class_count: int = 0
    feature_truth: list[str] | None = None
    feature_names: list[str] | None = None

    def __post_init__(self):
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=int)
            if len(self.labels) != self.matrix.n:
                raise DataError("labels length does not match point count")
            if self.class_count <= 0:
                self.class_count = int(self.labels.max()) + 1
            ids = np.unique(self.labels)
            if ids[0] != 0 or ids[-1] != self.class_count - 1 or len(ids) != self.class_count:
                raise DataError("labels must use contiguous ids 0..class_count-1")
        if self.feature_truth is not None and len(self.feature_truth) != self.matrix.p:
            raise DataError("feature_truth length does not match feature count")

    @property
    def n(self):
        return self.matrix.n

    @property
    def p(self):
        return self.matrix.p


@dataclass(frozen=True)
class Constraint:
    """One MUST-LINK or CANNOT-LINK pair, stored with i < j."""

    i: int
    j: int
    kind: ConstraintKind
    cost: float = 1.0

    def __post_init__(self):
        if self.i == self.j:
            raise DataError(f"constraint endpoints must differ, got ({self.i}, {self.j})")
        if self.i > self.j:
            lo, hi = self.j, self.i
            object.__setattr__(self, "i", lo)
            object.__setattr__(self, "j", hi)
        if self.cost < 0:
            raise DataError("constraint cost must be nonnegative")


class ConstraintSet:
    """Deduplicated pairwise constraints with a per-point partner index."""

    def __init__(self, constraints=()):
        self.constraints: list[Constraint] = []
        self.index: dict[int, list[Constraint]] = {}
        self._kinds: dict[tuple[int, int], ConstraintKind] = {}
        for c in constraints:
            self.add(c)

    def add(self, c: Constraint):
        key = (c.i, c.j)
        seen = self._kinds.get(key)
        if seen is not None:
            if seen != c.kind:
                raise DataError(f"pair {key} appears as both MUST_LINK and CANNOT_LINK")
            raise DataError(f"duplicate constraint for pair {key}")
        self._kinds[key] = c.kind
        self.constraints.append(c)
        self.index.setdefault(c.i, []).append(c)
        self.index.setdefault(c.j, []).append(c)

    def partners(self, i):
        """Constraints that mention point i."""
        return self.index.get(i, [])

    def of_kind(self, kind: ConstraintKind):
        return [c for c in self.constraints if c.kind == kind]

    def __len__(self):
        return len(self.constraints)

    def __iter__(self):
        return iter(self.constraints)

    def __repr__(self):
        ml = len(self.of_kind(ConstraintKind.MUST_LINK))
        return f"ConstraintSet(ml={ml}, cl={len(self) - ml})"


@dataclass
class MaxSeparatedPair:
    """The most distant point pair and its per-feature squared gaps."""

    I: int
    I_prime: int
    per_feature_gap: np.ndarray


def load_csv(path, label_column=None):
    """Parse a headed CSV into a LabeledDataset.

    All non-label columns must be numeric. If label_column is given, that
    column is mapped to contiguous class ids in order of first appearance.
    """
    if not os.path.exists(path):
        raise DataError(f"file not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file, header row required") from None
        header = [h.strip() for h in header]
        label_idx = None
        if label_column is not None:
            if label_column not in header:
                raise DataError(f"{path}: label column {label_column!r} not in header {header}")
            label_idx = header.index(label_column)
        rows = []
        raw_labels = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(
                    f"{path}: row {lineno} has {len(row)} cells, expected {len(header)}"
                )
            vals = []
            for col, cell in enumerate(row):
                if col == label_idx:
                    raw_labels.append(cell.strip())
                    continue
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise DataError(
                        f"{path}: non-numeric cell at row {lineno}, column {header[col]!r}: {cell!r}"
                    ) from None
            rows.append(vals)
    if not rows:
        raise DataError(f"{path}: no data rows")
    matrix = DataMatrix(np.array(rows, dtype=float))
    labels = None
    class_count = 0
    if label_idx is not None:
        mapping = {}
        labels = np.empty(len(raw_labels), dtype=int)
        for i, lab in enumerate(raw_labels):
            if lab not in mapping:
                mapping[lab] = len(mapping)
            labels[i] = mapping[lab]
        class_count = len(mapping)
    names = [h for i, h in enumerate(header) if i != label_idx]
    return LabeledDataset(matrix, labels=labels, class_count=class_count, feature_names=names)


def global_centroid(m: DataMatrix):
    """Column means of the data matrix."""
    return m.values.mean(axis=0)


def max_separated_pair(m: DataMatrix):
    """Pair with maximal squared Euclidean distance; ties broken by smallest (i, j)."""
    if m.n < 2:
        raise DataError("max_separated_pair needs at least 2 points")
    x = m.values
    # difference form, not the dot-product expansion: exact ties stay exact
    d2 = np.sum((x[:, None, :] - x[None, :, :]) ** 2, axis=-1)
    iu = np.triu_indices(m.n, k=1)
    dists = d2[iu]
    best = int(np.argmax(dists))  # argmax takes the first max: smallest (i, j) in row-major order
    bi, bj = int(iu[0][best]), int(iu[1][best])
    gap = (x[bi] - x[bj]) ** 2
    return MaxSeparatedPair(bi, bj, gap)


def build_constraint_pool(labels, subset):
    """All C(|subset|,2) constraints implied by the labels of a point subset."""
    labels = np.asarray(labels)
    subset = sorted(int(i) for i in subset)
    for i in subset:
        if labels[i] < 0:
            raise DataError(f"point {i} in subset is unlabeled")
    pool = ConstraintSet()
    for a in range(len(subset)):
        for b in range(a + 1, len(subset)):
            i, j = subset[a], subset[b]
            kind = ConstraintKind.MUST_LINK if labels[i] == labels[j] else ConstraintKind.CANNOT_LINK
            pool.add(Constraint(i, j, kind))
    return pool


def round_half_away(x):
    """round() with halves going away from zero, not to even."""
    return int(math.floor(x + 0.5)) if x >= 0 else -int(math.floor(-x + 0.5))


def sample_constraints(pool: ConstraintSet, fraction, kind_filter="both", seed=0):
    """Uniformly sample round(fraction * |filtered pool|) constraints without replacement."""
    if not 0 < fraction <= 1:
        raise DataError(f"fraction must be in (0, 1], got {fraction}")
    if kind_filter == "both":
        filtered = list(pool)
    elif kind_filter == "ML_only":
        filtered = pool.of_kind(ConstraintKind.MUST_LINK)
    elif kind_filter == "CL_only":
        filtered = pool.of_kind(ConstraintKind.CANNOT_LINK)
    else:
        raise DataError(f"unknown kind_filter {kind_filter!r}")
    if not filtered:
        raise DataError("constraint pool is empty after kind filtering")
    count = round_half_away(fraction * len(filtered))
    count = max(min(count, len(filtered)), 0)
    rng = np.random.default_rng(seed)
    chosen = rng.choice(len(filtered), size=count, replace=False)
    return ConstraintSet(filtered[int(i)] for i in sorted(chosen))


# Cluster means sit on scalings of the all-ones unit vector of the
# informative subspace, MEAN_SEPARATION apart (unit within-cluster sd), so
# every informative feature carries between-cluster signal.
MEAN_SEPARATION = 6.0


def generate_brodinova(clusters, per_cluster, informative, uninformative, seed=0):
    """Gaussian clusters with known informative and pure-noise features."""
    if clusters < 2:
        raise DataError("need at least 2 clusters")
    if informative < 1:
        raise DataError("need at least 1 informative feature")
    if per_cluster < 1 or uninformative < 0:
        raise DataError("counts must be positive")
    rng = np.random.default_rng(seed)
    n = clusters * per_cluster
    p = informative + uninformative
    direction = np.full(informative, 1.0 / math.sqrt(informative))
    means = MEAN_SEPARATION * np.arange(clusters)[:, None] * direction[None, :]
    x = np.empty((n, p))
    labels = np.repeat(np.arange(clusters), per_cluster)
    x[:, :informative] = rng.standard_normal((n, informative)) + means[labels]
    if uninformative:
        x[:, informative:] = rng.standard_normal((n, uninformative))
    truth = [FEATURE_INFORMATIVE] * informative + [FEATURE_UNINFORMATIVE] * uninformative
    return LabeledDataset(DataMatrix(x), labels=labels, class_count=clusters, feature_truth=truth)


def contaminate_exponential(ds: LabeledDataset, count, rate=1.0, seed=0):
    """Append count exponential(rate) noise columns, flagged uninformative."""
    if count < 1:
        raise DataError("count must be at least 1")
    if rate <= 0:
        raise DataError("rate must be positive")
    rng = np.random.default_rng(seed)
    extra = rng.exponential(scale=1.0 / rate, size=(ds.n, count))
    values = np.hstack([ds.matrix.values, extra])
    truth = list(ds.feature_truth) if ds.feature_truth else [FEATURE_UNKNOWN] * ds.p
    truth += [FEATURE_UNINFORMATIVE] * count
    names = None
    if ds.feature_names:
        names = list(ds.feature_names) + [f"noise{i + 1}" for i in range(count)]
    return LabeledDataset(
        DataMatrix(values),
        labels=None if ds.labels is None else ds.labels.copy(),
        class_count=ds.class_count,
        feature_truth=truth,
        feature_names=names,
    )


def subsample_classes(ds: LabeledDataset, classes, per_class, seed=0):
    """Sample per_class points from each requested class, labels remapped 0..len(classes)-1."""
    if ds.labels is None:
        raise DataError("dataset has no labels to subsample by")
    rng = np.random.default_rng(seed)
    keep = []
    new_labels = []
    for new_id, cls in enumerate(classes):
        members = np.flatnonzero(ds.labels == cls)
        if len(members) < per_class:
            raise DataError(
                f"class {cls} has {len(members)} members, cannot sample {per_class}"
            )
        picked = rng.choice(members, size=per_class, replace=False)
        keep.extend(sorted(int(i) for i in picked))
        new_labels.extend([new_id] * per_class)
    return LabeledDataset(
        DataMatrix(ds.matrix.values[keep]),
        labels=np.array(new_labels, dtype=int),
        class_count=len(classes),
        feature_truth=list(ds.feature_truth) if ds.feature_truth else None,
        feature_names=list(ds.feature_names) if ds.feature_names else None,
    )


def standardize(ds: LabeledDataset):
    """Z-score every column; constant columns are centered only."""
    x = ds.matrix.values
    mu = x.mean(axis=0)
    sd = x.std(axis=0)
    sd = np.where(sd > 1e-12, sd, 1.0)
    return LabeledDataset(
        DataMatrix((x - mu) / sd),
        labels=None if ds.labels is None else ds.labels.copy(),
        class_count=ds.class_count,
        feature_truth=list(ds.feature_truth) if ds.feature_truth else None,
        feature_names=list(ds.feature_names) if ds.feature_names else None,
    )


def save_dataset(ds: LabeledDataset, path, seed=None, generator=None, params=None):
    """Write the dataset as CSV plus a JSON metadata sidecar."""
    names = ds.feature_names or [f"f{j + 1}" for j in range(ds.p)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        header = list(names)
        if ds.labels is not None:
            header.append("class")
        writer.writerow(header)
        for i in range(ds.n):
            row = [repr(float(v)) for v in ds.matrix.values[i]]
            if ds.labels is not None:
                row.append(str(int(ds.labels[i])))
            writer.writerow(row)
    meta = {
        "n": ds.n,
        "p": ds.p,
        "class_count": ds.class_count,
        "seed": seed,
        "generator": generator,
        "params": params,
        "feature_truth": ds.feature_truth,
    }
    with open(str(path) + ".meta.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2)
        fh.write("\n")
