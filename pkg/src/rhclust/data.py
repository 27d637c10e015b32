"""Data matrices, synthetic generators and CSV ingestion.

Generators draw normal variates with ``numpy.random.default_rng(seed)``
(PCG64 bit generator, ziggurat ``standard_normal``), filling the noise
matrix in row-major order. The same seed therefore yields bit-identical
matrices for a given numpy release.
"""
from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument, SchemaError


@dataclass(frozen=True)
class DataMatrix:
    """An ``n x p`` matrix of observations (rows) with row provenance."""

    values: np.ndarray
    rows: tuple = field(default=())

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2:
            raise InvalidArgument(f"expected a 2-D matrix, got shape {v.shape}")
        if v.shape[0] < 2 or v.shape[1] < 1:
            raise InvalidArgument(f"need n >= 2 and p >= 1, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise InvalidArgument("data matrix contains non-finite entries")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        if not self.rows:
            object.__setattr__(self, "rows", tuple(range(v.shape[0])))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    def standardized(self) -> "DataMatrix":
        """Per-column z-scoring (population standard deviation)."""
        v = self.values
        sd = v.std(axis=0)
        sd[sd == 0] = 1.0
        return DataMatrix((v - v.mean(axis=0)) / sd, self.rows)


@dataclass(frozen=True)
class GroundTruth:
    labels: np.ndarray
    k_star: int
    mu: np.ndarray | None = None
    sigma: float | None = None


def as_array(X) -> np.ndarray:
    """Return the float matrix behind a DataMatrix or array-like."""
    if isinstance(X, DataMatrix):
        return X.values
    return np.asarray(X, dtype=float)


def _draw(mu, sigma, rng_seed):
    if not sigma > 0:
        raise InvalidArgument(f"sigma must be positive, got {sigma}")
    rng = np.random.default_rng(rng_seed)
    return mu + sigma * rng.standard_normal(mu.shape)


def _truth(group, mu, sigma):
    # relabel so that only groups with distinct means count as clusters
    _, labels = np.unique(mu, axis=0, return_inverse=True)
    labels = np.asarray(labels).ravel()
    # order labels by first appearance
    order = {}
    for g in labels:
        order.setdefault(int(g), len(order) + 1)
    labels = np.array([order[int(g)] for g in labels])
    return GroundTruth(labels=labels, k_star=len(order), mu=mu, sigma=sigma)


def generate_two_cluster(n, delta, sigma=1.0, p=2, rng_seed=None):
    """Two groups of ``n/2`` rows with means 0 and ``(delta, 0, ..., 0)``."""
    if n % 2 or n < 2:
        raise InvalidArgument(f"n must be a positive even number, got {n}")
    if p < 1:
        raise InvalidArgument("p must be >= 1")
    if delta < 0:
        raise InvalidArgument("delta must be >= 0")
    mu = np.zeros((n, p))
    mu[n // 2:, 0] = delta
    X = _draw(mu, sigma, rng_seed)
    group = np.repeat([1, 2], n // 2)
    return DataMatrix(X), _truth(group, mu, sigma)


def three_cluster_centers(delta):
    return np.array([[0.0, 0.0], [delta, 0.0], [delta / 2, math.sqrt(3) * delta / 2]])


def generate_three_cluster(n, delta, sigma=1.0, rng_seed=None):
    """Three equal groups around the vertices of an equilateral triangle."""
    if n % 3 or n < 3:
        raise InvalidArgument(f"n must be a positive multiple of 3, got {n}")
    if delta < 0:
        raise InvalidArgument("delta must be >= 0")
    mu = np.repeat(three_cluster_centers(delta), n // 3, axis=0)
    X = _draw(mu, sigma, rng_seed)
    return DataMatrix(X), _truth(np.repeat([1, 2, 3], n // 3), mu, sigma)


def circular_sizes(n, k_star):
    base, extra = divmod(n, k_star)
    return [base + 1 if k < extra else base for k in range(k_star)]


def generate_circular(n, k_star, radius=6.0, sigma=1.0, rng_seed=None):
    """``k_star`` groups with centers spaced evenly on a circle."""
    if k_star < 1 or n < k_star:
        raise InvalidArgument(f"need 1 <= k_star <= n, got k_star={k_star}, n={n}")
    angles = 2 * np.pi * np.arange(k_star) / k_star
    centers = radius * np.column_stack([np.cos(angles), np.sin(angles)])
    sizes = circular_sizes(n, k_star)
    mu = np.repeat(centers, sizes, axis=0)
    X = _draw(mu, sigma, rng_seed)
    group = np.repeat(np.arange(1, k_star + 1), sizes)
    return DataMatrix(X), _truth(group, mu, sigma)


def parse_filters(filters):
    """Turn ``["col=value", ...]`` into ``{col: {values}}``.

    Repeating a column ORs its values; distinct columns are ANDed.
    """
    out = {}
    for item in filters or ():
        if isinstance(item, tuple):
            col, val = item
        else:
            if "=" not in item:
                raise InvalidArgument(f"filter must look like col=value: {item!r}")
            col, val = item.split("=", 1)
        out.setdefault(col.strip(), set()).add(val.strip())
    return out


def load_csv(path, feature_columns, filters=(), standardize=False) -> DataMatrix:
    """Read numeric features from a headed, comma-separated UTF-8 file.

    Rows whose feature cells are empty, ``NA`` or not parseable as floats are
    dropped; ``DataMatrix.rows`` lists the 0-based data-row indices kept.
    """
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    wanted = parse_filters(filters)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        for col in list(feature_columns) + list(wanted):
            if col not in header:
                raise SchemaError(f"{path}: unknown column {col!r}")
        feat_idx = [header.index(c) for c in feature_columns]
        filt_idx = {header.index(c): vals for c, vals in wanted.items()}
        values, rows = [], []
        for i, rec in enumerate(reader):
            if len(rec) != len(header):
                continue
            if any(rec[j].strip() not in vals for j, vals in filt_idx.items()):
                continue
            try:
                row = [float(rec[j]) for j in feat_idx]
            except ValueError:
                continue
            if not all(math.isfinite(x) for x in row):
                continue
            values.append(row)
            rows.append(i)
    if len(values) < 2:
        raise InvalidArgument(f"{path}: fewer than 2 usable rows after filtering")
    dm = DataMatrix(np.array(values), tuple(rows))
    return dm.standardized() if standardize else dm
