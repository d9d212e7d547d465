"""Datasets: synthetic generators, CSV ingestion, and input standardization.

Features are standardized with train-split statistics and affinely squashed
into the spline grid range so layer inputs land where the knots live.
"""

import csv

import numpy as np


class CsvFormatError(ValueError):
    pass


class Normalizer:
    """Per-column standardization followed by an affine squash into
    (lo, hi); fitted on the training split only."""

    def __init__(self, lo=-1.0, hi=1.0):
        self.lo, self.hi = float(lo), float(hi)
        self.mean = None
        self.std = None
        self.scale = None

    def fit(self, features):
        self.mean = features.mean(axis=0)
        std = features.std(axis=0)
        self.std = np.where(std > 0, std, 1.0)
        z = (features - self.mean) / self.std
        peak = np.abs(z).max(axis=0)
        self.scale = np.where(peak > 0, peak, 1.0)
        return self

    def transform(self, features):
        if self.mean is None:
            raise RuntimeError("Normalizer.fit must run before transform")
        z = (features - self.mean) / self.std
        unit = z / self.scale  # train split lands in [-1, 1]
        center = 0.5 * (self.lo + self.hi)
        half = 0.5 * (self.hi - self.lo)
        return center + half * unit

    def state(self):
        return {"lo": self.lo, "hi": self.hi, "mean": self.mean.tolist(),
                "std": self.std.tolist(), "scale": self.scale.tolist()}


class Dataset:
    """Feature matrix plus targets (class indices or regression columns)."""

    def __init__(self, features, targets, split="train", normalizer=None,
                 n_classes=None):
        self.features = np.asarray(features, dtype=np.float64)
        self.targets = np.asarray(targets)
        if self.features.ndim != 2:
            raise ValueError("features must be 2-D [n, d]")
        if len(self.features) != len(self.targets):
            raise ValueError(
                f"feature rows ({len(self.features)}) != target rows ({len(self.targets)})")
        self.split = split
        self.normalizer = normalizer
        self.n_classes = n_classes

    def __len__(self):
        return len(self.features)

    @property
    def n_features(self):
        return self.features.shape[1]

    @property
    def is_classification(self):
        return self.targets.ndim == 1 and np.issubdtype(self.targets.dtype, np.integer)

    def standardized(self, lo=-1.0, hi=1.0, normalizer=None):
        """Copy with features squashed into (lo, hi); fits on self when no
        normalizer is given (use the train split's for other splits)."""
        norm = normalizer or Normalizer(lo, hi).fit(self.features)
        return Dataset(norm.transform(self.features), self.targets,
                       split=self.split, normalizer=norm, n_classes=self.n_classes)


def gen_alignment_target(n, seed=0):
    """Uniform (x, y) on [-1, 1]^2 with targets exp(sin(pi x) + y^2)."""
    if n <= 0:
        raise ValueError(f"need n > 0 samples, got {n}")
    rng = np.random.default_rng(seed)
    xy = rng.uniform(-1.0, 1.0, size=(n, 2))
    t = np.exp(np.sin(np.pi * xy[:, 0]) + xy[:, 1] ** 2)
    return Dataset(xy, t.reshape(-1, 1))


def gen_blobs(n, d=32, classes=10, seed=0, center_spread=4.0, cluster_std=1.0):
    """Gaussian blob classification: `classes` isotropic clusters in R^d."""
    if n <= 0 or d <= 0 or classes <= 0:
        raise ValueError("n, d, classes must all be positive")
    rng = np.random.default_rng(seed)
    centers = rng.normal(0.0, center_spread, size=(classes, d))
    labels = rng.integers(0, classes, size=n)
    feats = centers[labels] + rng.normal(0.0, cluster_std, size=(n, d))
    return Dataset(feats, labels.astype(np.int64), n_classes=classes)


def load_csv(path, feature_columns=None, target_column="target",
             classification=None):
    """Read a headered CSV into a Dataset.

    All columns except the target are features unless `feature_columns`
    names them.  Parse failures report 1-based row and column.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvFormatError(f"{path}: empty file") from None
        if target_column not in header:
            raise CsvFormatError(f"{path}: no column named {target_column!r} in header")
        feat_names = feature_columns or [c for c in header if c != target_column]
        missing = [c for c in feat_names if c not in header]
        if missing:
            raise CsvFormatError(f"{path}: unknown feature columns {missing}")
        fidx = [header.index(c) for c in feat_names]
        tidx = header.index(target_column)
        feats, targs = [], []
        for rownum, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise CsvFormatError(
                    f"{path}: row {rownum} has {len(row)} cells, expected {len(header)}")
            try:
                feats.append([float(row[i]) for i in fidx])
            except ValueError:
                bad = next(i for i in fidx if not _is_number(row[i]))
                raise CsvFormatError(
                    f"{path}: row {rownum}, column {header[bad]!r}: "
                    f"non-numeric cell {row[bad]!r}") from None
            targs.append(row[tidx])
    feats = np.asarray(feats, dtype=np.float64)
    if classification is None:
        classification = not all(_is_number(t) for t in targs)
    if classification:
        seen = sorted(set(targs))
        lookup = {label: i for i, label in enumerate(seen)}
        targets = np.asarray([lookup[t] for t in targs], dtype=np.int64)
        return Dataset(feats, targets, n_classes=len(seen))
    bad = [i for i, t in enumerate(targs) if not _is_number(t)]
    if bad:
        raise CsvFormatError(
            f"{path}: row {bad[0] + 2}, column {target_column!r}: "
            f"non-numeric cell {targs[bad[0]]!r}")
    return Dataset(feats, np.asarray(targs, dtype=np.float64).reshape(-1, 1))


def _is_number(text):
    try:
        float(text)
        return True
    except ValueError:
        return False


def save_csv(dataset, path, feature_names=None, target_column="target"):
    """Write a Dataset back out (RFC-4180 quoting via the csv module)."""
    d = dataset.features.shape[1]
    names = feature_names or [f"x{i}" for i in range(d)]
    classify = dataset.is_classification
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([*names, target_column])
        for row, target in zip(dataset.features, dataset.targets):
            if dataset.targets.ndim == 2:
                target = target[0]
            tail = str(int(target)) if classify else repr(float(target))
            writer.writerow([repr(float(v)) for v in row] + [tail])
