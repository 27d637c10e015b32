"""Pairwise dissimilarities, cluster bookkeeping and linkage evaluation.

Clusters are identified by their *representative*, the smallest member
index. Candidate merges are enumerated in canonical order: pairs
``(a, b)`` of representatives with ``a < b``, sorted lexicographically.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .data import as_array
from .errors import InvalidArgument, InvalidState

LINKAGES = ("complete", "single", "average", "minimax")


def _check_kind(kind):
    if kind not in LINKAGES:
        raise InvalidArgument(f"unknown linkage {kind!r}; expected one of {LINKAGES}")


def pairwise_dissimilarity(X) -> np.ndarray:
    """Euclidean distance matrix between the rows of ``X``."""
    return squareform(pdist(as_array(X), "euclidean"))


class DissimilarityFamily:
    """Distance matrices of ``X(c) = sum_k c_k M_k`` for many coefficient vectors ``c``.

    Squared distances are a fixed quadratic form in ``c``, so the inner
    products of row differences are formed once and every batch costs a
    single matrix product.
    """

    def __init__(self, components):
        comps = [np.asarray(M, dtype=float) for M in components]
        self.n = comps[0].shape[0]
        self.k = len(comps)
        diffs = [M[:, None, :] - M[None, :, :] for M in comps]
        E = np.empty((self.k, self.k, self.n, self.n))
        for i in range(self.k):
            for j in range(i, self.k):
                E[i, j] = E[j, i] = np.einsum("abp,abp->ab", diffs[i], diffs[j])
        self._E = E.reshape(self.k * self.k, self.n * self.n).T.copy()

    def __call__(self, coeffs) -> np.ndarray:
        """Distance matrices ``(n, n, Q)`` for coefficients of shape ``(Q, k)``."""
        c = np.asarray(coeffs, dtype=float)
        W = (c[:, :, None] * c[:, None, :]).reshape(c.shape[0], -1)
        D = self._E @ W.T
        np.maximum(D, 0, out=D)
        np.sqrt(D, out=D)
        return D.reshape(self.n, self.n, -1)


def linkage_dissimilarity(kind, A, B, D) -> float:
    """Linkage value between index sets ``A`` and ``B``, from scratch."""
    _check_kind(kind)
    A, B = list(A), list(B)
    if not A or not B:
        raise InvalidArgument("clusters must be non-empty")
    if set(A) & set(B):
        raise InvalidArgument("clusters overlap")
    D = np.asarray(D)
    if kind == "minimax":
        U = A + B
        return float(D[np.ix_(U, U)].max(axis=1).min())
    cross = D[np.ix_(A, B)]
    if kind == "complete":
        return float(cross.max())
    if kind == "single":
        return float(cross.min())
    return float(cross.mean())


@dataclass(frozen=True)
class CandidateMerge:
    a: int
    b: int
    dissimilarity: float


class ClusterState:
    """A partition of ``{0..n-1}`` into disjoint clusters."""

    def __init__(self, n, clusters=None, step=0):
        if clusters is None:
            clusters = [[i] for i in range(n)]
        clusters = sorted((sorted(int(i) for i in c) for c in clusters), key=lambda c: c[0])
        seen = [i for c in clusters for i in c]
        if sorted(seen) != list(range(n)):
            raise InvalidArgument("clusters must partition {0..n-1}")
        self.n = n
        self.clusters = clusters
        self.step = step

    def merge(self, a, b) -> "ClusterState":
        """Return the state after merging clusters at positions ``a`` and ``b``."""
        rest = [c for k, c in enumerate(self.clusters) if k not in (a, b)]
        return ClusterState(self.n, rest + [self.clusters[a] + self.clusters[b]], self.step + 1)

    def labels(self) -> np.ndarray:
        out = np.empty(self.n, dtype=int)
        for k, c in enumerate(self.clusters, start=1):
            out[c] = k
        return out


def candidate_merges(state: ClusterState, kind, D) -> list[CandidateMerge]:
    """All cluster pairs of ``state`` with their linkage values, canonically ordered.

    ``a`` and ``b`` index ``state.clusters``. This is the from-scratch
    reference; the clustering engine uses :class:`LinkageTracker`.
    """
    m = len(state.clusters)
    if m < 2:
        raise InvalidState("need at least two clusters to form a candidate merge")
    out = []
    for i in range(m):
        for j in range(i + 1, m):
            d = linkage_dissimilarity(kind, state.clusters[i], state.clusters[j], D)
            out.append(CandidateMerge(i, j, d))
    return out


@lru_cache(maxsize=None)
def _upper_pairs(m):
    i, j = np.triu_indices(m, 1)
    i.flags.writeable = j.flags.writeable = False
    return i, j


class LinkageTracker:
    """Incremental linkage values over a batch of dissimilarity matrices.

    ``D`` has shape ``(n, n)`` or ``(n, n, Q)`` with the batch axis last;
    every matrix in the batch goes through the same sequence of merges.
    Complete, single and average linkage use the Lance-Williams
    recurrences. Minimax keeps, for every point ``x`` and cluster ``c``,
    the farthest distance from ``x`` to ``c`` and recomputes the covering
    radius of each union from it.
    """

    def __init__(self, D, kind, copy=True):
        _check_kind(kind)
        D = np.asarray(D, dtype=float)
        if D.ndim == 2:
            D = D[:, :, None]
        self.kind = kind
        self.n = D.shape[0]
        self.L = D.copy() if copy else D
        self.members = {i: [i] for i in range(self.n)}
        self.active = list(range(self.n))
        if kind == "minimax":
            self.far = D.copy()
            self.owner = np.arange(self.n)

    @property
    def n_clusters(self):
        return len(self.active)

    def pairs(self):
        reps = np.asarray(self.active)
        i, j = _upper_pairs(len(reps))
        return reps[i], reps[j]

    def values(self) -> np.ndarray:
        """Linkage values of all candidate merges, shape ``(m(m-1)/2, Q)``."""
        a, b = self.pairs()
        flat = self.L.reshape(self.n * self.n, -1)
        return np.take(flat, a * self.n + b, axis=0)

    def pair_position(self, a, b) -> int:
        """Index of the merge ``(a, b)`` in the canonical candidate order."""
        if a > b:
            a, b = b, a
        m = len(self.active)
        i, j = self.active.index(a), self.active.index(b)
        return i * m - i * (i + 1) // 2 + (j - i - 1)

    def merge(self, a, b):
        """Merge the clusters represented by ``a`` and ``b``; returns the new representative."""
        if a > b:
            a, b = b, a
        if a == b or a not in self.members or b not in self.members:
            raise InvalidState(f"cannot merge clusters {a} and {b}")
        others = [c for c in self.active if c != a and c != b]
        ma, mb = self.members[a], self.members[b]
        if others:
            L = self.L
            if self.kind == "complete":
                new = np.maximum(L[a, others], L[b, others])
            elif self.kind == "single":
                new = np.minimum(L[a, others], L[b, others])
            elif self.kind == "average":
                na, nb = len(ma), len(mb)
                new = (na * L[a, others] + nb * L[b, others]) / (na + nb)
            else:
                new = self._minimax_update(a, b, ma + mb, others)
            L[a, others] = new
            L[others, a] = new
        elif self.kind == "minimax":
            self.far[:, a] = np.maximum(self.far[:, a], self.far[:, b])
            self.owner[mb] = a
        self.members[a] = sorted(ma + mb)
        del self.members[b]
        self.active.remove(b)
        return a

    def _minimax_update(self, a, b, union, others):
        far = self.far
        far[:, a] = np.maximum(far[:, a], far[:, b])
        self.owner[self.members[b]] = a
        # centers inside the merged cluster
        fu = far[union]
        inside = np.maximum(fu[:, [a]], fu[:, others]).min(axis=0)
        # centers inside each other cluster
        pts = [x for c in others for x in self.members[c]]
        starts = np.cumsum([0] + [len(self.members[c]) for c in others[:-1]])
        h = np.maximum(far[pts, a], far[pts, self.owner[pts]])
        outside = np.minimum.reduceat(h, starts, axis=0)
        return np.minimum(inside, outside)
