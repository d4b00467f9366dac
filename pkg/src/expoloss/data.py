"""Datasets: synthetic generators, IDX/CSV loaders, normalization and label noise."""
from __future__ import annotations

import csv
import gzip
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.stats import norm


class ParseError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Dataset:
    """Feature matrix plus labels.

    Binary datasets carry labels in {-1, +1} with ``n_classes == 2``;
    multiclass datasets carry indices ``0..n_classes-1``.
    """

    features: np.ndarray
    labels: np.ndarray
    n_classes: int
    clean_labels: np.ndarray | None = None
    norm_state: str = "raw"
    scale: float = 1.0
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        y = np.asarray(self.labels).astype(int).reshape(-1)
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise ValueError(f"features must be a non-empty N x d matrix, got {X.shape}")
        if y.shape[0] != X.shape[0]:
            raise ValueError(f"{X.shape[0]} feature rows but {y.shape[0]} labels")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        if not _labels_valid(y, self.n_classes):
            raise ValueError(f"labels out of range for {self.n_classes} classes")

    @property
    def binary(self) -> bool:
        return self.n_classes == 2 and bool(np.all(np.isin(self.labels, (-1, 1))))

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        clean = None if self.clean_labels is None else self.clean_labels[idx]
        return replace(self, features=self.features[idx], labels=self.labels[idx], clean_labels=clean)

    def restore_clean(self) -> "Dataset":
        if self.clean_labels is None:
            return self
        prov = {k: v for k, v in self.provenance.items() if k not in ("noise_rate", "noise_seed")}
        return replace(self, labels=self.clean_labels.copy(), clean_labels=None, provenance=prov)

    def as_index_labels(self) -> "Dataset":
        """Map {-1, +1} labels to {0, 1} so softmax losses can consume them."""
        if not self.binary:
            return self
        to_idx = lambda y: (y > 0).astype(int)
        clean = None if self.clean_labels is None else to_idx(self.clean_labels)
        return replace(self, labels=to_idx(self.labels), clean_labels=clean)


def _labels_valid(y, k) -> bool:
    if k < 2:
        return False
    if k == 2 and np.all(np.isin(y, (-1, 1))):
        return True
    return bool(np.all((y >= 0) & (y < k)))


def gen_gaussians(n_per_class: int, d: int, mean_separation: float, seed: int) -> Dataset:
    """Two unit-variance isotropic Gaussians at +-(separation/2) e1, labels +-1."""
    if n_per_class < 1 or d < 2 or mean_separation < 0:
        raise ValueError("need n_per_class >= 1, d >= 2, separation >= 0")
    rng = np.random.default_rng(seed)
    y = np.repeat([1, -1], n_per_class)
    X = rng.standard_normal((2 * n_per_class, d))
    X[:, 0] += y * (mean_separation / 2.0)
    order = rng.permutation(y.size)
    prov = {
        "source": "gaussians", "n_per_class": n_per_class, "d": d,
        "separation": mean_separation, "seed": seed,
        "bayes_accuracy": float(norm.cdf(mean_separation / 2.0)),
    }
    return Dataset(X[order], y[order], 2, provenance=prov)


def gen_outlier_gaussians(n_per_class: int, d: int, separation: float, outlier_frac: float,
                          outlier_scale: float, seed: int) -> Dataset:
    """:func:`gen_gaussians` with a fraction of points turned into far outliers.

    A chosen point of class ``y`` is pushed along e1 to ``outlier_scale`` times
    its class-mean distance (keeping its noise offset) and relabelled ``-y``,
    so it sits deep on the wrong side of the Bayes boundary for its label.
    """
    if not (0.0 <= outlier_frac < 0.5):
        raise ValueError("outlier_frac must lie in [0, 0.5)")
    if outlier_scale <= 1.0:
        raise ValueError("outlier_scale must exceed 1")
    base = gen_gaussians(n_per_class, d, separation, seed)
    n_out = int(round(outlier_frac * base.n))
    rng = np.random.default_rng([seed, 1])
    idx = np.sort(rng.choice(base.n, size=n_out, replace=False))
    X = base.features.copy()
    y = base.labels.copy()
    half = separation / 2.0
    X[idx, 0] += y[idx] * (outlier_scale - 1.0) * half
    y[idx] = -y[idx]
    prov = dict(base.provenance, source="outlier_gaussians", outlier_frac=outlier_frac,
                outlier_scale=outlier_scale, outlier_indices=idx.tolist())
    return Dataset(X, y, 2, provenance=prov)


def gen_blobs(n_per_class: int, d: int, n_classes: int, separation: float, seed: int) -> Dataset:
    """K unit-variance Gaussians with means on scaled coordinate axes."""
    if n_classes < 2 or d < n_classes:
        raise ValueError("need 2 <= n_classes <= d")
    rng = np.random.default_rng(seed)
    y = np.repeat(np.arange(n_classes), n_per_class)
    X = rng.standard_normal((y.size, d))
    X[np.arange(y.size), y] += separation
    order = rng.permutation(y.size)
    prov = {"source": "blobs", "n_per_class": n_per_class, "d": d,
            "n_classes": n_classes, "separation": separation, "seed": seed}
    return Dataset(X[order], y[order], n_classes, provenance=prov)


def inject_symmetric_noise(ds: Dataset, rate: float, K: int | None = None, seed: int = 0) -> Dataset:
    """Corrupt each label with probability ``rate`` to a different class.

    The replacement is uniform over the other ``K - 1`` classes, so the
    expected fraction of changed labels is exactly ``rate``.
    """
    if not (0.0 <= rate < 1.0):
        raise ValueError(f"noise rate must lie in [0, 1), got {rate}")
    K = ds.n_classes if K is None else K
    if K != ds.n_classes:
        raise ValueError(f"dataset has {ds.n_classes} classes, noise asked for {K}")
    rng = np.random.default_rng(seed)
    clean = ds.labels if ds.clean_labels is None else ds.clean_labels
    flip = rng.random(ds.n) < rate
    shift = rng.integers(1, K, size=ds.n)
    if ds.binary:
        noisy = np.where(flip, -clean, clean)
    else:
        noisy = np.where(flip, (clean + shift) % K, clean)
    prov = dict(ds.provenance, noise_rate=rate, noise_seed=seed)
    return replace(ds, labels=noisy, clean_labels=clean.copy(), provenance=prov)


def normalize_unit_ball(ds: Dataset) -> Dataset:
    norms = np.linalg.norm(ds.features, axis=1)
    biggest = float(norms.max())
    # dividing by the max norm can leave it a few ulps above 1; count that as inside
    if biggest <= 1.0 + 8.0 * np.finfo(float).eps:
        return replace(ds, norm_state="unit-ball")
    return replace(ds, features=ds.features / biggest, norm_state="unit-ball",
                   scale=ds.scale / biggest)


def train_test_split(ds: Dataset, n_test: int, seed: int):
    order = np.random.default_rng(seed).permutation(ds.n)
    return ds.subset(order[n_test:]), ds.subset(order[:n_test])


# IDX: 2 zero bytes, dtype code, ndim, then ndim big-endian uint32 dims.
IDX_UBYTE = 0x08
IDX_LABELS_MAGIC = 0x00000801
IDX_IMAGES_MAGIC = 0x00000803


def _open_bytes(path) -> bytes:
    path = Path(path)
    if path.suffix == ".gz":
        with gzip.open(path, "rb") as f:
            return f.read()
    return path.read_bytes()


def read_idx(path) -> np.ndarray:
    raw = _open_bytes(path)
    if len(raw) < 4:
        raise ParseError(f"{path}: file too short for IDX header ({len(raw)} bytes, expected >= 4)")
    if raw[0] != 0 or raw[1] != 0:
        raise ParseError(f"{path}: bad magic at byte 0: {raw[:4].hex()}")
    if raw[2] != IDX_UBYTE:
        raise ParseError(f"{path}: unsupported IDX element type 0x{raw[2]:02x} at byte 2")
    ndim = raw[3]
    header = 4 + 4 * ndim
    if ndim == 0 or len(raw) < header:
        raise ParseError(f"{path}: truncated header, expected {header} bytes, got {len(raw)}")
    dims = tuple(int.from_bytes(raw[4 + 4 * i: 8 + 4 * i], "big") for i in range(ndim))
    expected = header + math.prod(dims)
    if len(raw) != expected:
        raise ParseError(f"{path}: expected {expected} bytes for dims {dims}, got {len(raw)}")
    return np.frombuffer(raw, dtype=np.uint8, offset=header).reshape(dims)


def load_idx(images_path, labels_path, n_classes: int | None = None) -> Dataset:
    images = read_idx(images_path)
    labels = read_idx(labels_path)
    if images.ndim < 2:
        raise ParseError(f"{images_path}: image file must have at least 2 dims, got {images.ndim}")
    if labels.ndim != 1:
        raise ParseError(f"{labels_path}: label file must be 1-d, got {labels.ndim} dims")
    if images.shape[0] != labels.shape[0]:
        raise ParseError(f"{images.shape[0]} images but {labels.shape[0]} labels")
    X = images.reshape(images.shape[0], -1).astype(float) / 255.0
    y = labels.astype(int)
    K = n_classes or max(2, int(y.max()) + 1)
    prov = {"source": "idx", "images": str(images_path), "labels": str(labels_path)}
    return Dataset(X, y, K, provenance=prov)


def load_csv(path) -> Dataset:
    """Comma-separated, header row required, label in the last column.

    Labels that are all -1/+1 give a binary dataset; otherwise they must be
    non-negative integers and ``K = max(label) + 1`` (at least 2).
    """
    rows, labels = [], []
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if not header or len(header) < 2:
            raise ParseError(f"{path}: line 1: header with at least one feature and a label required")
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(f"{path}: line {line}: {len(row)} cells, header has {len(header)}")
            try:
                vals = [float(v) for v in row]
            except ValueError as exc:
                raise ParseError(f"{path}: line {line}: non-numeric cell ({exc})") from None
            lab = vals[-1]
            if lab != int(lab):
                raise ParseError(f"{path}: line {line}: label {row[-1]!r} is not an integer")
            rows.append(vals[:-1])
            labels.append(int(lab))
    if not rows:
        raise ParseError(f"{path}: no data rows")
    y = np.array(labels)
    if np.all(np.isin(y, (-1, 1))) and np.any(y == -1):
        K = 2
    elif y.min() < 0:
        raise ParseError(f"{path}: negative class index")
    else:
        K = max(2, int(y.max()) + 1)
    prov = {"source": "csv", "path": str(path), "columns": header}
    return Dataset(np.array(rows), y, K, provenance=prov)
