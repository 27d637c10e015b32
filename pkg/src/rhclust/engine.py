"""Randomized agglomerative clustering.

At step ``t`` every candidate merge ``M`` is drawn with probability
``softmax(-d(M) / tau_t)`` where ``tau_t = tau * mean(d)`` over the
candidates of that step. ``tau = 0`` is plain greedy clustering.

Randomness: step ``t`` of a run seeded with ``seed`` draws a single
uniform from ``default_rng(SeedSequence([seed, t]))``; the stream for a
step never depends on what happened at other steps.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import logsumexp

from .data import as_array
from .errors import InvalidArgument
from .linkage import LINKAGES, LinkageTracker, pairwise_dissimilarity

TRACE_SCHEMA = 1


@dataclass(frozen=True)
class RandomizationConfig:
    tau: float = 0.1
    linkage: str = "complete"
    rng_seed: int = 0

    def __post_init__(self):
        if not np.isfinite(self.tau) or self.tau < 0:
            raise InvalidArgument(f"tau must be finite and >= 0, got {self.tau}")
        if self.linkage not in LINKAGES:
            raise InvalidArgument(f"unknown linkage {self.linkage!r}")


@dataclass(frozen=True)
class MergeRecord:
    step: int
    members_a: tuple
    members_b: tuple
    dissimilarity: float
    tau_t: float
    log_prob: float
    candidate_count: int


@dataclass(frozen=True)
class MergeTrace:
    records: tuple
    config: RandomizationConfig
    labels: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return len(self.labels)

    def __len__(self):
        return len(self.records)

    def record(self, t) -> MergeRecord:
        """The merge performed at step ``t`` (1-based)."""
        if not 1 <= t <= len(self.records):
            raise InvalidArgument(f"step {t} outside 1..{len(self.records)}")
        return self.records[t - 1]

    def labels_at(self, k) -> np.ndarray:
        """Cluster labels (1..k) after the first ``n - k`` merges."""
        steps = self.n - k
        if not 0 <= steps <= len(self.records):
            raise InvalidArgument(f"trace has no {k}-cluster partition")
        return labels_from_merges(self.n, self.records[:steps])

    def to_dict(self) -> dict:
        recs = self.records
        return {
            "schema": TRACE_SCHEMA,
            "config": asdict(self.config),
            "n": self.n,
            "records": {
                "step": [r.step for r in recs],
                "members_a": [list(r.members_a) for r in recs],
                "members_b": [list(r.members_b) for r in recs],
                "dissimilarity": [r.dissimilarity for r in recs],
                "tau_t": [r.tau_t for r in recs],
                "log_prob": [r.log_prob for r in recs],
                "candidate_count": [r.candidate_count for r in recs],
            },
            "labels": [int(x) for x in self.labels],
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d) -> "MergeTrace":
        r = d["records"]
        records = tuple(
            MergeRecord(int(s), tuple(a), tuple(b), float(ds), float(tt), float(lp), int(cc))
            for s, a, b, ds, tt, lp, cc in zip(
                r["step"], r["members_a"], r["members_b"], r["dissimilarity"],
                r["tau_t"], r["log_prob"], r["candidate_count"])
        )
        cfg = d["config"]
        config = RandomizationConfig(float(cfg["tau"]), cfg["linkage"], cfg["rng_seed"])
        return cls(records, config, np.asarray(d["labels"], dtype=int))

    @classmethod
    def from_json(cls, text) -> "MergeTrace":
        return cls.from_dict(json.loads(text))


def labels_from_merges(n, records) -> np.ndarray:
    owner = np.arange(n)
    for rec in records:
        owner[list(rec.members_b)] = owner[rec.members_a[0]]
    return canonical_labels(owner)


def canonical_labels(labels) -> np.ndarray:
    """Relabel to 1..K in order of first appearance."""
    labels = np.asarray(labels)
    mapping = {}
    for x in labels.tolist():
        mapping.setdefault(x, len(mapping) + 1)
    return np.array([mapping[x] for x in labels.tolist()], dtype=int)


def _dissimilarities(candidates) -> np.ndarray:
    if len(candidates) and hasattr(candidates[0], "dissimilarity"):
        return np.array([c.dissimilarity for c in candidates], dtype=float)
    return np.asarray(candidates, dtype=float)


def log_merge_probabilities(d, tau):
    """Log softmax of ``-d / tau_t`` along the last axis, and ``tau_t``.

    ``d`` may be a batch ``(Q, P)``. Rows whose candidates are all at
    distance 0 get the uniform distribution; ``tau = inf`` flattens every
    row to uniform.
    """
    d = np.asarray(d, dtype=float)
    tau_t = tau * d.mean(axis=-1, keepdims=True)
    shifted = d - d.min(axis=-1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        z = np.where(tau_t > 0, shifted / tau_t, 0.0)
    z = np.where(np.isfinite(tau_t), z, 0.0)
    logp = -z - logsumexp(-z, axis=-1, keepdims=True)
    return logp, tau_t[..., 0]


def merge_probabilities(candidates, tau) -> np.ndarray:
    """Sampling probabilities for a list of candidates (or their dissimilarities)."""
    if not tau > 0:
        raise InvalidArgument(f"tau must be > 0 for randomized merging, got {tau}")
    d = _dissimilarities(candidates)
    if d.size == 0:
        raise InvalidArgument("no candidate merges")
    if not np.all(np.isfinite(d)):
        raise InvalidArgument("candidate dissimilarities must be finite")
    logp, _ = log_merge_probabilities(d, tau)
    return np.exp(logp)


def sample_merge(probs, rng) -> int:
    """Inverse-CDF draw over the canonical candidate order using one uniform.

    ``rng`` is a numpy Generator or a float already drawn from U[0, 1).
    """
    probs = np.asarray(probs, dtype=float)
    u = rng if isinstance(rng, float) else rng.random()
    cdf = np.cumsum(probs)
    idx = int(np.searchsorted(cdf, u * cdf[-1], side="right"))
    return min(idx, len(probs) - 1)


def step_rng(seed, step) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(step)]))


def run_clustering(X, K=1, config: RandomizationConfig | None = None, D=None) -> MergeTrace:
    """Cluster the rows of ``X`` down to ``K`` clusters, recording every merge."""
    config = config or RandomizationConfig()
    X = as_array(X)
    n = X.shape[0]
    if not 1 <= K <= n:
        raise InvalidArgument(f"K must be in 1..{n}, got {K}")
    if D is None:
        D = pairwise_dissimilarity(X)
    tracker = LinkageTracker(D, config.linkage)
    records = []
    for t in range(1, n - K + 1):
        a_reps, b_reps = tracker.pairs()
        vals = tracker.values()[:, 0]
        if config.tau == 0:
            idx = int(np.argmin(vals))
            log_prob, tau_t = 0.0, 0.0
        else:
            logp, tau_t = log_merge_probabilities(vals, config.tau)
            idx = sample_merge(np.exp(logp), step_rng(config.rng_seed, t))
            log_prob, tau_t = float(logp[idx]), float(tau_t)
        a, b = int(a_reps[idx]), int(b_reps[idx])
        records.append(MergeRecord(
            step=t,
            members_a=tuple(tracker.members[a]),
            members_b=tuple(tracker.members[b]),
            dissimilarity=float(vals[idx]),
            tau_t=tau_t,
            log_prob=log_prob,
            candidate_count=len(vals),
        ))
        tracker.merge(a, b)
    records = tuple(records)
    return MergeTrace(records, config, labels_from_merges(n, records))
