"""Datasets, initialization heuristics, and evaluation metrics.

A Dataset bundles features, targets, a seeded 64/16/20 train/val/test
split, and the affine standardization stats needed to report metrics in
original units.  CSV ingestion standardizes X and (for regression) y by
default; the synthetic generators keep identity X-stats on purpose —
shifting or scaling inputs would silently break the exact input
symmetries the transform experiments rely on.
"""

import csv
import os
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import pdist

from . import kernels as kernels_mod
from .errors import ParameterError, ShapeError
from .seeding import seed_stream

TRAIN_FRAC = 0.64
VAL_FRAC = 0.16
KMEANS_ITERS = 25


@dataclass
class Dataset:
    """Features, targets, split indices, and standardization stats."""

    X: np.ndarray
    y: np.ndarray
    idx_train: np.ndarray
    idx_val: np.ndarray
    idx_test: np.ndarray
    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: float = 0.0
    y_std: float = 1.0
    task: str = "regression"  # or "binary"
    aux: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y, dtype=float).reshape(-1)
        if self.X.ndim != 2 or self.X.shape[0] != self.y.size:
            raise ShapeError("X must be n x d with one target per row")
        if not (np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.y))):
            raise ParameterError("dataset contains NaN or Inf")
        n = self.X.shape[0]
        joined = np.concatenate([self.idx_train, self.idx_val, self.idx_test])
        if len(set(joined.tolist())) != joined.size or joined.size != n:
            raise ParameterError("split indices must be disjoint and cover the data")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    # split views
    @property
    def X_train(self):
        return self.X[self.idx_train]

    @property
    def y_train(self):
        return self.y[self.idx_train]

    @property
    def X_val(self):
        return self.X[self.idx_val]

    @property
    def y_val(self):
        return self.y[self.idx_val]

    @property
    def X_test(self):
        return self.X[self.idx_test]

    @property
    def y_test(self):
        return self.y[self.idx_test]

    def unstandardize_y(self, values):
        return np.asarray(values) * self.y_std + self.y_mean


def split_indices(n: int, seed: int):
    """Seeded disjoint 64/16/20 permutation split of range(n)."""
    order = seed_stream(seed, "split").permutation(n)
    n_train = int(round(TRAIN_FRAC * n))
    n_val = int(round(VAL_FRAC * n))
    return order[:n_train], order[n_train : n_train + n_val], order[n_train + n_val :]


# ---------------------------------------------------------------------------
# CSV ingestion


def load_csv(path, target_column, standardize: bool = True, seed: int = 0) -> Dataset:
    """Headered numeric CSV -> standardized Dataset with a seeded split.

    Features are every non-target column in header order.  Binary {0,1}
    target columns switch the task to classification and skip target
    standardization.  Constant feature columns standardize with std 1 and
    a warning.
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such data file: {path}")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if r]
    if len(rows) < 2:
        raise ParameterError(f"{path}: no data rows below the header")
    header = [h.strip() for h in rows[0]]
    if isinstance(target_column, int):
        target_idx = target_column % len(header)
    else:
        if target_column not in header:
            raise ParameterError(f"target column {target_column!r} not in header {header}")
        target_idx = header.index(target_column)

    values = np.empty((len(rows) - 1, len(header)))
    for i, row in enumerate(rows[1:]):
        if len(row) != len(header):
            raise ParameterError(f"{path}: row {i + 2} has {len(row)} cells, expected {len(header)}")
        for j, cell in enumerate(row):
            try:
                values[i, j] = float(cell)
            except ValueError:
                raise ParameterError(
                    f"{path}: non-numeric value {cell!r} at row {i + 2}, column {header[j]!r}"
                ) from None

    y = values[:, target_idx]
    X = np.delete(values, target_idx, axis=1)
    task = "binary" if np.all(np.isin(y, (0.0, 1.0))) else "regression"

    x_mean = np.zeros(X.shape[1])
    x_std = np.ones(X.shape[1])
    y_mean, y_std = 0.0, 1.0
    if standardize:
        x_mean = X.mean(axis=0)
        x_std = X.std(axis=0)
        flat = x_std == 0.0
        if np.any(flat):
            feature_headers = [h for j, h in enumerate(header) if j != target_idx]
            names = [feature_headers[j] for j in np.flatnonzero(flat)]
            warnings.warn(f"constant feature column(s) {names} left unscaled")
            x_std = np.where(flat, 1.0, x_std)
        X = (X - x_mean) / x_std
        if task == "regression":
            y_mean = float(y.mean())
            y_std = float(y.std()) or 1.0
            y = (y - y_mean) / y_std

    tr, va, te = split_indices(X.shape[0], seed)
    return Dataset(X, y, tr, va, te, x_mean, x_std, y_mean, y_std, task)


# ---------------------------------------------------------------------------
# synthetic generators (identity X-stats: transforms act on raw features)


def make_symmetric_1d(n: int, seed: int = 0) -> Dataset:
    """Negation-symmetric 1-D regression: y = sin(3x) exp(-x^2/4) + 0.1 noise."""
    if n < 10:
        raise ParameterError("need n >= 10")
    rng = seed_stream(seed, "symmetric-1d")
    x = rng.standard_normal(n)
    y = np.sin(3.0 * x) * np.exp(-0.25 * x * x) + 0.1 * rng.standard_normal(n)
    y_mean, y_std = float(y.mean()), float(y.std()) or 1.0
    tr, va, te = split_indices(n, seed)
    return Dataset(
        x[:, None], (y - y_mean) / y_std, tr, va, te,
        np.zeros(1), np.ones(1), y_mean, y_std,
    )


# fixed trigonometric target; degree <= 3 in longitude, <= 2 in latitude
_TORUS_COEFS = ((1.0, 1, 0), (0.6, 2, 1), (-0.8, 3, 0), (0.5, 0, 2), (-0.4, 1, 1))


def make_torus_grid(n_lon: int, n_lat: int, seed: int = 0) -> Dataset:
    """Grid over lon in [-180, 180), lat in (-90, 90), periodic target.

    Raw (lon, lat) degrees are the features, so a longitude-shift
    transform acts exactly; the matching unit-sphere coordinates live in
    aux["X_euclidean"] for models that want plain 3-D inputs.
    """
    if n_lon * n_lat < 100:
        raise ParameterError("need n_lon * n_lat >= 100")
    lon = np.linspace(-180.0, 180.0, n_lon, endpoint=False)
    lat = np.linspace(-90.0, 90.0, n_lat + 2)[1:-1]  # keep off the poles
    L, B = np.meshgrid(lon, lat, indexing="ij")
    X = np.column_stack([L.ravel(), B.ravel()])
    lo, la = np.radians(X[:, 0]), np.radians(X[:, 1])
    y = sum(c * np.cos(a * lo) * np.cos(b * la) for c, a, b in _TORUS_COEFS)
    y = y + 0.3 * np.sin(2.0 * lo) * np.sin(la)
    y = y + 0.05 * seed_stream(seed, "torus-noise").standard_normal(y.size)
    y_mean, y_std = float(y.mean()), float(y.std()) or 1.0
    tr, va, te = split_indices(X.shape[0], seed)
    return Dataset(
        X, (y - y_mean) / y_std, tr, va, te,
        np.zeros(2), np.ones(2), y_mean, y_std,
        aux={"X_euclidean": kernels_mod.sphere_embed(X)},
    )


def _flip_templates(side: int):
    """Two side x side class templates: an off-center bar and a disk."""
    r = np.arange(side)
    bar = np.zeros((side, side))
    row = side // 4
    bar[row : row + max(1, side // 8), 1 : side - 1] = 1.0
    ii, jj = np.meshgrid(r, r, indexing="ij")
    cx = side / 4.0
    disk = ((ii - cx) ** 2 + (jj - cx) ** 2 <= (side / 4.0) ** 2).astype(float)
    return bar, disk


def make_flip_images(n: int, side: int, seed: int = 0) -> Dataset:
    """Binary images: two templates, each sample randomly flipped UD / LR.

    Flips preserve class identity, so the label function is invariant to
    the image-flip transforms; pixel noise keeps the task from being
    separable by a single pixel.
    """
    if side < 4:
        raise ParameterError("need side >= 4")
    rng = seed_stream(seed, "flip-images")
    bar, disk = _flip_templates(side)
    labels = rng.integers(0, 2, size=n)
    imgs = np.where(labels[:, None, None] == 1, disk[None], bar[None]).astype(float)
    imgs = imgs + 0.8 * rng.standard_normal(imgs.shape)
    flip_ud = rng.integers(0, 2, size=n).astype(bool)
    flip_lr = rng.integers(0, 2, size=n).astype(bool)
    imgs[flip_ud] = imgs[flip_ud][:, ::-1, :]
    imgs[flip_lr] = imgs[flip_lr][:, :, ::-1]
    X = imgs.reshape(n, side * side)
    tr, va, te = split_indices(n, seed)
    return Dataset(
        X, labels.astype(float), tr, va, te,
        np.zeros(side * side), np.ones(side * side), task="binary",
    )


# ---------------------------------------------------------------------------
# initialization heuristics


def kmeans_init(X, m: int, seed: int = 0) -> np.ndarray:
    """k-means++ seeding followed by a fixed 25 Lloyd iterations."""
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    if m > n:
        raise ParameterError(f"m={m} exceeds n={n}")
    rng = seed_stream(seed, "kmeans")
    centers = np.empty((m, X.shape[1]))
    centers[0] = X[rng.integers(n)]
    d2 = np.sum((X - centers[0]) ** 2, axis=1)
    for i in range(1, m):
        total = d2.sum()
        if total <= 0:
            centers[i] = X[rng.integers(n)]
        else:
            centers[i] = X[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, np.sum((X - centers[i]) ** 2, axis=1))
    for _ in range(KMEANS_ITERS):
        assign = np.argmin(
            ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2), axis=1
        )
        for i in range(m):
            sel = assign == i
            if np.any(sel):  # empty clusters keep their previous center
                centers[i] = X[sel].mean(axis=0)
    return centers


def median_heuristic(X, subsample: int = 1000, seed: int = 0) -> float:
    """Median pairwise distance over a seeded subsample."""
    X = np.asarray(X, dtype=float)
    if X.shape[0] < 2:
        raise ParameterError("need at least 2 points")
    if X.shape[0] > subsample:
        idx = seed_stream(seed, "median-heuristic").choice(
            X.shape[0], size=subsample, replace=False
        )
        X = X[idx]
    return float(np.median(pdist(X)))


def pca_directions(X, J: int) -> list:
    """Principal directions of standardized X, round-robin into J groups.

    Group j holds the components ranked j, J+j, 2J+j, ... by eigenvalue.
    Rank-deficient covariances drop the null directions with a warning.
    """
    X = np.asarray(X, dtype=float)
    d = X.shape[1]
    if not 1 <= J <= d:
        raise ParameterError(f"J must be in [1, {d}]")
    Xs = X - X.mean(axis=0)
    std = X.std(axis=0)
    Xs = Xs / np.where(std == 0.0, 1.0, std)
    evals, evecs = np.linalg.eigh(np.cov(Xs, rowvar=False))
    order = np.argsort(evals)[::-1]
    evals, evecs = evals[order], evecs[:, order]
    keep = evals > 1e-10 * max(evals[0], 1e-300)
    if not np.all(keep):
        warnings.warn(f"covariance rank {int(keep.sum())} < d={d}; dropping null directions")
        evecs = evecs[:, keep]
    return [evecs[:, j::J] for j in range(J)]


# ---------------------------------------------------------------------------
# metrics


def metrics(mean, var, y_true, y_stats=None) -> dict:
    """RMSE and average Gaussian NLL in original target units.

    All inputs live in the model's (standardized) target space; `y_stats`
    is the (mean, std) pair that restores original units, or None for
    identity.  `var` must already include observation noise.
    """
    mean = np.asarray(mean, dtype=float)
    var = np.asarray(var, dtype=float)
    y_true = np.asarray(y_true, dtype=float)
    if mean.shape != y_true.shape or var.shape != y_true.shape:
        raise ShapeError("mean, var, and y_true must share a shape")
    if np.any(var <= 0):
        raise ParameterError("predictive variance must be positive")
    y_std = 1.0 if y_stats is None else float(y_stats[1])
    err2 = (mean - y_true) ** 2
    rmse = float(np.sqrt(np.mean(err2)) * y_std)
    var_orig = var * y_std**2
    nll = float(np.mean(0.5 * (np.log(2.0 * np.pi * var_orig) + err2 * y_std**2 / var_orig)))
    return {"rmse": rmse, "nll": nll}
