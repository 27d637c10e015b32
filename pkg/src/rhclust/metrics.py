"""Clustering quality, agreement and stability measures, and the gap statistic."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .data import as_array
from .engine import RandomizationConfig, canonical_labels, run_clustering
from .errors import DegenerateDataError, InvalidArgument


def _labels(labels):
    return np.asarray(labels).ravel()


def wcss(X, labels) -> float:
    X, labels = as_array(X), _labels(labels)
    total = 0.0
    for k in np.unique(labels):
        block = X[labels == k]
        total += float(((block - block.mean(axis=0)) ** 2).sum())
    return total


def wcss_tss(X, labels) -> float:
    """Within-cluster over total sum of squares."""
    X, labels = as_array(X), _labels(labels)
    if len(labels) != X.shape[0]:
        raise InvalidArgument("labels and X have different lengths")
    tss = float(((X - X.mean(axis=0)) ** 2).sum())
    if tss <= 0:
        raise DegenerateDataError("total sum of squares is zero (all rows identical)")
    return wcss(X, labels) / tss


def _comb2(x):
    x = np.asarray(x, dtype=float)
    return x * (x - 1) / 2


def contingency(labels_a, labels_b) -> np.ndarray:
    _, ia = np.unique(_labels(labels_a), return_inverse=True)
    _, ib = np.unique(_labels(labels_b), return_inverse=True)
    table = np.zeros((ia.max() + 1, ib.max() + 1), dtype=np.int64)
    np.add.at(table, (ia.ravel(), ib.ravel()), 1)
    return table


def ari(labels_a, labels_b) -> float:
    """Adjusted Rand index.

    When the expected and maximal index coincide (both partitions trivial
    in the same way) the ratio is undefined; we return 1 for identical
    partitions and 0 otherwise.
    """
    a, b = _labels(labels_a), _labels(labels_b)
    if len(a) != len(b):
        raise InvalidArgument("label vectors have different lengths")
    if len(a) < 2:
        raise InvalidArgument("ARI needs at least two points")
    table = contingency(a, b)
    index = _comb2(table).sum()
    sum_a = _comb2(table.sum(axis=1)).sum()
    sum_b = _comb2(table.sum(axis=0)).sum()
    expected = sum_a * sum_b / _comb2(len(a))
    max_index = (sum_a + sum_b) / 2
    if max_index == expected:
        same = np.array_equal(canonical_labels(a), canonical_labels(b))
        return 1.0 if same else 0.0
    return float((index - expected) / (max_index - expected))


@dataclass(frozen=True)
class CooccurrenceMatrix:
    c: np.ndarray
    runs: int

    def block_means(self, blocks):
        """Mean off-diagonal co-occurrence within blocks and between blocks."""
        blocks = _labels(blocks)
        same = blocks[:, None] == blocks[None, :]
        off = ~np.eye(len(blocks), dtype=bool)
        within = self.c[same & off]
        between = self.c[~same]
        return (float(within.mean()) if within.size else float("nan"),
                float(between.mean()) if between.size else float("nan"))


def cooccurrence(runs) -> CooccurrenceMatrix:
    runs = [_labels(r) for r in runs]
    if not runs:
        raise InvalidArgument("need at least one run")
    n = len(runs[0])
    if any(len(r) != n for r in runs):
        raise InvalidArgument("runs have different lengths")
    counts = np.zeros((n, n))
    for r in runs:
        counts += r[:, None] == r[None, :]
    return CooccurrenceMatrix(counts / len(runs), len(runs))


def cooccurrence_blocks(C, k=2) -> np.ndarray:
    """Split points into ``k`` blocks by average-linkage clustering of ``1 - C``."""
    from scipy.cluster.hierarchy import fcluster, linkage
    from scipy.spatial.distance import squareform

    c = C.c if isinstance(C, CooccurrenceMatrix) else np.asarray(C)
    dist = 1.0 - c
    np.fill_diagonal(dist, 0.0)
    Z = linkage(squareform(dist, checks=False), "average")
    return canonical_labels(fcluster(Z, k, "maxclust"))


@dataclass(frozen=True)
class GapResult:
    k_hat: int
    ks: tuple
    gap: tuple
    s_k: tuple
    log_w: tuple
    ref_log_w: tuple


def _log_w_curve(X, k_max, linkage):
    trace = run_clustering(X, 1, RandomizationConfig(0.0, linkage))
    out = []
    for k in range(1, k_max + 1):
        w = wcss(X, trace.labels_at(k))
        out.append(np.log(max(w, 1e-300)))
    return np.array(out)


def gap_statistic(X, k_max=10, b_refs=50, linkage="complete", rng_seed=0) -> GapResult:
    """Gap statistic over greedy hierarchical cuts with uniform-box references.

    ``k_hat`` is the smallest ``K < k_max`` with
    ``Gap(K) >= Gap(K+1) - s_{K+1}``, or ``k_max`` if there is none.
    Reference ``b`` is drawn from ``SeedSequence([rng_seed, b])``.
    """
    X = as_array(X)
    n = X.shape[0]
    if not 1 <= k_max < n:
        raise InvalidArgument(f"k_max must be in 1..{n - 1}, got {k_max}")
    if b_refs < 1:
        raise InvalidArgument("b_refs must be >= 1")
    lo, hi = X.min(axis=0), X.max(axis=0)
    log_w = _log_w_curve(X, k_max, linkage)
    ref = np.empty((b_refs, k_max))
    for b in range(b_refs):
        rng = np.random.default_rng(np.random.SeedSequence([int(rng_seed), b]))
        ref[b] = _log_w_curve(lo + (hi - lo) * rng.random(X.shape), k_max, linkage)
    gap = ref.mean(axis=0) - log_w
    s_k = ref.std(axis=0) * np.sqrt(1 + 1 / b_refs)
    k_hat = k_max
    for k in range(1, k_max):
        if gap[k - 1] >= gap[k] - s_k[k]:
            k_hat = k
            break
    return GapResult(k_hat, tuple(range(1, k_max + 1)), tuple(gap), tuple(s_k),
                     tuple(log_w), tuple(ref.mean(axis=0)))


def write_cooccurrence_csv(path, C: CooccurrenceMatrix):
    """Square matrix, header ``i,0,1,...,n-1``; row ``i`` holds ``C[i, :]``."""
    n = C.c.shape[0]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i"] + list(range(n)))
        for i in range(n):
            w.writerow([i] + [f"{v:.6g}" for v in C.c[i]])


def write_gap_csv(path, result: GapResult):
    """Header ``k,log_w,ref_log_w,gap,s_k``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "log_w", "ref_log_w", "gap", "s_k"])
        for row in zip(result.ks, result.log_w, result.ref_log_w, result.gap, result.s_k):
            w.writerow([row[0]] + [f"{v:.10g}" for v in row[1:]])
