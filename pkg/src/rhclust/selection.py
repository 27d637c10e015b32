"""Choosing the number of clusters by spending a significance budget along the merges.

The merge sequence is walked from the first merge on. A merge is tested only
when both sides have at least ``n_min`` points (singletons never). Each
tested merge takes one level from a decaying sequence of alphas: the
smallest remaining level when one side has fewer than ``n_star`` points,
the largest otherwise. The walk stops at the first rejection.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .data import as_array
from .engine import RandomizationConfig, run_clustering
from .errors import DegenerateDataError, InvalidArgument
from .inference import p_value_f

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AlphaSchedule:
    alphas: tuple
    total: float

    def __len__(self):
        return len(self.alphas)


def alpha_sequence(n, alpha_total=0.05, decay=0.5) -> AlphaSchedule:
    """Levels ``alpha_j`` proportional to ``exp(-decay * j)`` for ``j = 1..n-1``, summing to ``alpha_total``."""
    if n < 2:
        raise InvalidArgument(f"need n >= 2, got {n}")
    if not decay > 0:
        raise InvalidArgument(f"decay must be > 0, got {decay}")
    if alpha_total < 0:
        raise InvalidArgument(f"alpha_total must be >= 0, got {alpha_total}")
    j = np.arange(1, n)
    # exp(-decay*(j-1)) avoids underflow of the leading terms for large decay
    w = np.exp(-decay * (j - 1))
    alphas = alpha_total * w / w.sum()
    return AlphaSchedule(tuple(float(a) for a in alphas), float(alpha_total))


@dataclass(frozen=True)
class StepDecision:
    step: int
    sizes: tuple
    tested: bool
    skipped_small: bool
    alpha_used: float | None = None
    p_value: float | None = None
    note: str = ""


@dataclass(frozen=True)
class KEstimate:
    k_hat: int
    stop_step: int | None
    steps: tuple = field(repr=False)
    n: int = 0

    @property
    def alpha_spent(self) -> float:
        return float(sum(s.alpha_used for s in self.steps if s.tested))

    def to_dict(self) -> dict:
        return {
            "k_hat": self.k_hat,
            "stop_step": self.stop_step,
            "n": self.n,
            "alpha_spent": self.alpha_spent,
            "steps": [
                {"step": s.step, "sizes": list(s.sizes), "tested": s.tested,
                 "skipped_small": s.skipped_small, "alpha_used": s.alpha_used,
                 "p_value": s.p_value, "note": s.note}
                for s in self.steps
            ],
        }


def resolve_size(value, n, default_frac) -> int:
    """An absolute cluster-size threshold from an int, a fraction of ``n`` in (0, 1), or None."""
    if value is None:
        value = default_frac
    if isinstance(value, float) and 0 < value < 1:
        return math.ceil(value * n)
    if value < 0 or value != int(value):
        raise InvalidArgument(f"size threshold must be a count >= 0 or a fraction in (0, 1), got {value}")
    return int(value)


def select_k(trace, p_value_fn, schedule: AlphaSchedule, n_min, n_star) -> KEstimate:
    """Walk a full merge trace and stop at the first rejected merge.

    ``p_value_fn(t)`` returns the p-value of merge ``t``.
    """
    n = trace.n
    if len(schedule) < len(trace):
        raise InvalidArgument("alpha schedule shorter than the merge sequence")
    available = list(schedule.alphas)
    steps = []
    for t in range(1, len(trace) + 1):
        rec = trace.record(t)
        sizes = (len(rec.members_a), len(rec.members_b))
        if min(sizes) < max(n_min, 2):
            steps.append(StepDecision(t, sizes, False, True))
            continue
        try:
            p = float(p_value_fn(t))
        except DegenerateDataError as exc:
            log.warning("merge %d not tested: %s", t, exc)
            steps.append(StepDecision(t, sizes, False, False, note=str(exc)))
            continue
        alpha = min(available) if min(sizes) < n_star else max(available)
        available.remove(alpha)
        steps.append(StepDecision(t, sizes, True, False, alpha, p))
        if p < alpha:
            return KEstimate(n - t + 1, t, tuple(steps), n)
    return KEstimate(1, None, tuple(steps), n)


def estimate_k(X, linkage="complete", tau=0.1, schedule=None, n_min=None, n_star=None,
               rng_seed=0, quad=None, naive=False, p_value_fn=None, alpha_total=0.05, decay=0.5):
    """Estimate the number of clusters. Returns ``(KEstimate, MergeTrace)``.

    ``n_min`` and ``n_star`` take counts or fractions of ``n`` (defaults
    0.1 and 0.4). ``p_value_fn(X, trace, t)`` replaces the selective
    p-value, e.g. with a stub for testing the spending logic alone.
    """
    X = as_array(X)
    n = X.shape[0]
    schedule = schedule or alpha_sequence(n, alpha_total, decay)
    n_min = resolve_size(n_min, n, 0.1)
    n_star = resolve_size(n_star, n, 0.4)
    trace = run_clustering(X, 1, RandomizationConfig(tau, linkage, rng_seed))
    if p_value_fn is None:
        def pv(t):
            return p_value_f(X, trace, t, quad=quad, naive=naive).p_value
    else:
        def pv(t):
            return p_value_fn(X, trace, t)
    return select_k(trace, pv, schedule, n_min, n_star), trace
