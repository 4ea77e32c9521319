"""Datasets: CSV ingestion, deterministic splitting and a synthetic generator
with a controllable region of hard (label-noisy) examples."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.stats import norm

from .errors import DataError, InvalidArgumentError
from .jsonio import format_float


@dataclass(frozen=True, eq=False)
class Dataset:
    """Feature matrix plus integer class labels.

    ``hard`` optionally carries a ground-truth hardness flag per row (only
    synthetic data has one).
    """

    features: np.ndarray
    labels: np.ndarray
    num_classes: int | None = None
    feature_names: tuple | None = None
    provenance: str = ""
    hard: np.ndarray | None = None

    def __post_init__(self):
        X = np.array(self.features, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        y = np.array(self.labels, dtype=np.int64).reshape(-1)
        if X.shape[0] != y.shape[0]:
            raise DataError(f"{X.shape[0]} feature rows but {y.shape[0]} labels")
        if not np.all(np.isfinite(X)):
            raise DataError("features contain NaN or infinite values")
        k = self.num_classes if self.num_classes is not None else (int(y.max()) + 1 if y.size else 0)
        if y.size and (y.min() < 0 or y.max() >= k):
            raise DataError(f"labels must lie in [0, {k})")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "num_classes", int(k))
        if self.feature_names is not None:
            object.__setattr__(self, "feature_names", tuple(self.feature_names))
        if self.hard is not None:
            h = np.array(self.hard, dtype=bool).reshape(-1)
            h.setflags(write=False)
            object.__setattr__(self, "hard", h)

    @property
    def m(self) -> int:
        return int(self.labels.shape[0])

    @property
    def d(self) -> int:
        return int(self.features.shape[1])

    def __len__(self):
        return self.m

    def subset(self, indices, tag: str | None = None) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(
            self.features[idx], self.labels[idx], self.num_classes, self.feature_names,
            tag if tag is not None else self.provenance,
            None if self.hard is None else self.hard[idx])


@dataclass(frozen=True)
class CsvReport:
    rows_read: int
    rejected_rows: tuple = ()


def _resolve_label_column(label_column, header_row, ncols):
    if isinstance(label_column, str) and not label_column.lstrip("-").isdigit():
        if header_row is None or label_column not in header_row:
            raise DataError(f"label column {label_column!r} not found")
        return header_row.index(label_column)
    col = int(label_column)
    if col < 0:
        col += ncols
    if not 0 <= col < ncols:
        raise DataError(f"label column index {label_column} out of range for {ncols} columns")
    return col


def _parse_label(text, row_no):
    try:
        value = float(text)
    except ValueError:
        raise DataError(f"row {row_no}: label {text!r} is not an integer class index") from None
    if not math.isfinite(value) or value != int(value) or value < 0:
        raise DataError(f"row {row_no}: label {text!r} is not an integer class index")
    return int(value)


def load_csv(path, label_column=-1, header: bool = True) -> tuple[Dataset, CsvReport]:
    """Read a comma-separated numeric file.

    Rows with a missing or NaN feature are dropped and listed in the returned
    report (0-based data-row indices).  Any other unparseable cell raises
    :class:`DataError`.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise DataError(f"{path}: file is empty")
    header_row = [c.strip() for c in rows[0]] if header else None
    body = rows[1:] if header else rows
    if not body:
        raise DataError(f"{path}: no data rows")
    ncols = len(header_row) if header_row is not None else len(body[0])
    col = _resolve_label_column(label_column, header_row, ncols)
    feats, labels, rejected = [], [], []
    for i, row in enumerate(body):
        if len(row) != ncols:
            raise DataError(f"row {i}: expected {ncols} fields, found {len(row)}")
        values = []
        bad = False
        for j, cell in enumerate(row):
            if j == col:
                continue
            cell = cell.strip()
            if cell == "" or cell.lower() == "nan":
                bad = True
                continue
            try:
                v = float(cell)
            except ValueError:
                raise DataError(f"row {i}, column {j}: cannot parse {cell!r} as a number") from None
            if math.isnan(v):
                bad = True
            values.append(v)
        if bad:
            rejected.append(i)
            continue
        labels.append(_parse_label(row[col].strip(), i))
        feats.append(values)
    if not feats:
        raise DataError(f"{path}: every row was rejected")
    names = None
    if header_row is not None:
        names = tuple(h for j, h in enumerate(header_row) if j != col)
    ds = Dataset(np.array(feats), np.array(labels), feature_names=names, provenance=f"csv:{path.name}")
    return ds, CsvReport(rows_read=len(body), rejected_rows=tuple(rejected))


def save_csv(dataset: Dataset, path) -> None:
    """Write features then a trailing ``label`` column, floats at 17 significant digits."""
    names = dataset.feature_names or tuple(f"x{j}" for j in range(dataset.d))
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*names, "label"])
        for x, y in zip(dataset.features, dataset.labels):
            w.writerow([*(format_float(v) for v in x), int(y)])


@dataclass(frozen=True)
class SplitPlan:
    """Fractions for (D_N, D_S, validation, holdout)."""

    fractions: tuple = (0.45, 0.30, 0.05, 0.20)
    mode: str = "random"
    seed: int = 0

    def __post_init__(self):
        fr = tuple(float(f) for f in self.fractions)
        if len(fr) != 4:
            raise InvalidArgumentError("a split plan needs exactly four fractions")
        if any(f <= 0 for f in fr):
            raise InvalidArgumentError("split fractions must be positive")
        if abs(math.fsum(fr) - 1.0) > 1e-12:
            raise InvalidArgumentError(f"split fractions sum to {math.fsum(fr)!r}, not 1")
        if self.mode not in ("random", "sequential"):
            raise InvalidArgumentError(f"unknown split mode {self.mode!r}")
        object.__setattr__(self, "fractions", fr)


def split_sizes(m: int, fractions: Sequence[float]) -> list[int]:
    """Largest-remainder rounding; ties go to the earlier split."""
    raw = [f * m for f in fractions]
    sizes = [int(math.floor(r)) for r in raw]
    short = m - sum(sizes)
    order = sorted(range(len(raw)), key=lambda i: (-(raw[i] - sizes[i]), i))
    for i in order[:short]:
        sizes[i] += 1
    return sizes


def split_indices(m: int, plan: SplitPlan) -> tuple[np.ndarray, ...]:
    if m < 4:
        raise InvalidArgumentError("need at least 4 rows to split")
    sizes = split_sizes(m, plan.fractions)
    if min(sizes) == 0:
        raise InvalidArgumentError(f"split sizes {sizes} leave an empty part")
    if plan.mode == "random":
        order = np.random.default_rng(plan.seed).permutation(m)
    else:
        order = np.arange(m)
    bounds = np.cumsum([0, *sizes])
    return tuple(order[bounds[i]:bounds[i + 1]] for i in range(4))


def split(dataset: Dataset, plan: SplitPlan) -> tuple[Dataset, Dataset, Dataset, Dataset]:
    """Partition into (D_N, D_S, validation, holdout)."""
    parts = split_indices(dataset.m, plan)
    tags = ("D_N", "D_S", "validation", "holdout")
    return tuple(dataset.subset(ix, f"{dataset.provenance}/{t}") for ix, t in zip(parts, tags))


@dataclass(frozen=True)
class HardRegionGenerator:
    """Two isotropic Gaussian classes plus two discs of label noise.

    In a frame rotated by ``angle`` the class means sit at ``(-offset, 0)`` and
    ``(+offset, 0)``.  Each class owns one disc at ``(-+offset, +-lift)`` on its
    own side, far from the Bayes boundary; points falling inside either disc
    are flagged hard and have their label flipped with probability
    ``noise_rate``.  Rotating the whole picture makes the boundary oblique, so
    axis-aligned trees cannot represent it exactly.
    """

    offset: float = 1.8
    sigma: float = 1.0
    lift: float = 2.0
    radius: float = 1.5
    angle: float = math.pi / 4

    @property
    def rotation(self) -> np.ndarray:
        c, s = math.cos(self.angle), math.sin(self.angle)
        return np.array([[c, -s], [s, c]])

    @property
    def means(self) -> np.ndarray:
        return np.array([[-self.offset, 0.0], [self.offset, 0.0]]) @ self.rotation.T

    @property
    def region_centers(self) -> np.ndarray:
        return np.array([[-self.offset, self.lift], [self.offset, -self.lift]]) @ self.rotation.T

    def in_hard_region(self, X) -> np.ndarray:
        X = np.atleast_2d(X)
        d = np.linalg.norm(X[:, None, :] - self.region_centers[None, :, :], axis=2)
        return (d <= self.radius).any(axis=1)

    def class_densities(self, X) -> np.ndarray:
        """Class-conditional Gaussian densities, shape ``(n, 2)``."""
        X = np.atleast_2d(X)
        sq = ((X[:, None, :] - self.means[None, :, :]) ** 2).sum(axis=2)
        return np.exp(-sq / (2 * self.sigma ** 2)) / (2 * math.pi * self.sigma ** 2)

    def bayes_error_without_noise(self) -> float:
        """Closed form for two equal-prior isotropic Gaussians: Phi(-distance / (2 sigma))."""
        return float(norm.cdf(-self.offset / self.sigma))

    def sample(self, m: int, noise_rate: float, seed: int) -> Dataset:
        if not 0 <= noise_rate < 0.5:
            raise InvalidArgumentError("noise_rate must lie in [0, 0.5)")
        if m < 1:
            raise InvalidArgumentError("m must be positive")
        rng = np.random.default_rng(seed)
        clean = np.zeros(m, dtype=np.int64)
        clean[m // 2:] = 1
        clean = clean[rng.permutation(m)]
        X = self.means[clean] + self.sigma * rng.standard_normal((m, 2))
        hard = self.in_hard_region(X)
        flip = hard & (rng.random(m) < noise_rate)
        y = np.where(flip, 1 - clean, clean)
        return Dataset(X, y, num_classes=2, feature_names=("x0", "x1"),
                       provenance=f"synth_hard_regions(m={m},noise={noise_rate!r},seed={seed})",
                       hard=hard)


def synth_hard_regions(m: int, noise_rate: float, seed: int,
                       generator: HardRegionGenerator | None = None) -> Dataset:
    """Balanced two-class 2-D data with flagged hard regions of label noise."""
    return (generator or HardRegionGenerator()).sample(m, noise_rate, seed)
