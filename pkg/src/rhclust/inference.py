"""Conditional p-values for the merges of a randomized clustering run.

For the merge at step ``t`` the data are written as a function of a
scalar statistic (the F ratio ``R`` or the whitened mean difference ``U``)
and auxiliary statistics that are held fixed. Under the null the
statistic has a known base law (``F(p, (N-2)p)`` or ``||nu|| * chi_p``);
conditioning on the observed merges reweights that law by the
probability of replaying merges ``1..t`` on the reconstructed data.

The two integrals of the conditional CDF are taken in the log-odds of the
base CDF, ``s = logit(F_base(r))``, with composite Gauss-Legendre panels.
The substitution keeps the integrand bounded, and the survival-side
quantile keeps tail probabilities far below machine epsilon accurate.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np
from scipy import stats
from scipy.special import expit, log_expit, logsumexp

from .data import as_array
from .engine import MergeTrace
from .errors import DegenerateDataError, InvalidArgument, NumericalFailure
from .linkage import DissimilarityFamily, LinkageTracker

_DEGENERATE_RTOL = 1e-20


@dataclass(frozen=True)
class QuadratureConfig:
    """Panels/nodes of the log-odds grid.

    ``span`` is the half-width of the base interval in log-odds units; it is
    widened (up to ``max_span``) on a side where the weight at the far end
    exceeds the weight at the median, so that tail mass is not missed.
    ``chunk_elems`` bounds the size of the per-chunk ``(n, n, Q)`` arrays.
    """

    panels: int = 64
    nodes: int = 16
    span: float = 40.0
    max_span: float = 700.0
    chunk_elems: int = 8_000_000

    def __post_init__(self):
        if self.panels < 1 or self.nodes < 1:
            raise InvalidArgument("need at least one panel and one node")


@dataclass(frozen=True)
class ContrastVector:
    nu: np.ndarray
    norm_sq: float


@dataclass(frozen=True)
class AuxiliaryStats:
    eta: np.ndarray
    gamma: np.ndarray
    delta: float
    gamma_resid: np.ndarray
    n_merged: int
    p: int
    c1: tuple
    c2: tuple


@dataclass(frozen=True)
class ChiAuxiliaryStats:
    xi: np.ndarray
    pi_resid: np.ndarray
    nu: ContrastVector
    sigma_half: np.ndarray
    c1: tuple
    c2: tuple


@dataclass
class TestResult:
    statistic: float
    p_value: float
    step: int
    sizes: tuple
    variant: str = "f"
    naive: bool = False
    diagnostics: dict = field(default_factory=dict)

    __test__ = False  # not a pytest class

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sizes"] = list(self.sizes)
        return d


def _index_sets(c1, c2, n=None):
    c1 = tuple(sorted(int(i) for i in c1))
    c2 = tuple(sorted(int(i) for i in c2))
    if not c1 or not c2:
        raise InvalidArgument("clusters must be non-empty")
    if set(c1) & set(c2):
        raise InvalidArgument("clusters overlap")
    if n is not None and (min(c1 + c2) < 0 or max(c1 + c2) >= n):
        raise InvalidArgument("cluster index out of range")
    return c1, c2


def contrast_vector(c1, c2, n) -> ContrastVector:
    c1, c2 = _index_sets(c1, c2, n)
    nu = np.zeros(n)
    nu[list(c1)] = 1.0 / len(c1)
    nu[list(c2)] = -1.0 / len(c2)
    return ContrastVector(nu, 1.0 / len(c1) + 1.0 / len(c2))


def _split(X, c1, c2):
    """Between part ``B X`` and within part ``W X`` of ``X`` for the merge."""
    X = as_array(X)
    c1, c2 = _index_sets(c1, c2, X.shape[0])
    cv = contrast_vector(c1, c2, X.shape[0])
    BX = np.outer(cv.nu, cv.nu @ X) / cv.norm_sq
    WX = np.zeros_like(X)
    for c in (c1, c2):
        rows = X[list(c)]
        WX[list(c)] = rows - rows.mean(axis=0)
    scale = float((X[list(c1 + c2)] ** 2).sum()) + 1e-300
    return X, c1, c2, BX, WX, scale


def f_statistic(X, c1, c2):
    """F ratio ``(N-2) * BCSS / WCSS`` for merging ``c1`` and ``c2``."""
    X, c1, c2, BX, WX, scale = _split(X, c1, c2)
    N = len(c1) + len(c2)
    if N < 3:
        raise InvalidArgument("need |C1| + |C2| >= 3 for the F statistic")
    bcss, wcss = float((BX ** 2).sum()), float((WX ** 2).sum())
    if wcss <= _DEGENERATE_RTOL * scale:
        raise DegenerateDataError("within-cluster sum of squares is zero")
    return (N - 2) * bcss / wcss, bcss, wcss


def auxiliary_stats(X, c1, c2) -> AuxiliaryStats:
    X, c1, c2, BX, WX, scale = _split(X, c1, c2)
    N = len(c1) + len(c2)
    if N < 3:
        raise InvalidArgument("need |C1| + |C2| >= 3")
    bcss, wcss = float((BX ** 2).sum()), float((WX ** 2).sum())
    if wcss <= _DEGENERATE_RTOL * scale or bcss <= _DEGENERATE_RTOL * scale:
        raise DegenerateDataError("between or within sum of squares is zero")
    return AuxiliaryStats(
        eta=BX / np.sqrt(bcss),
        gamma=WX / np.sqrt(wcss),
        delta=bcss + wcss,
        gamma_resid=X - BX - WX,
        n_merged=N,
        p=X.shape[1],
        c1=c1,
        c2=c2,
    )


def reconstruct_f(r, aux: AuxiliaryStats) -> np.ndarray:
    """Data matrix whose F statistic is ``r`` and whose auxiliary stats are ``aux``.

    A scalar ``r`` gives an ``(n, p)`` matrix; an array gives ``(len(r), n, p)``.
    ``r = inf`` is the limit of infinite separation.
    """
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr < 0):
        raise InvalidArgument("r must be >= 0")
    k = aux.n_merged - 2
    rr = np.atleast_1d(r_arr)
    finite = np.isfinite(rr)
    safe = np.where(finite, rr, 0.0)
    a = np.where(finite, np.sqrt(safe / (k + safe)), 1.0)
    b = np.where(finite, np.sqrt(k / (k + safe)), 0.0)
    root = np.sqrt(aux.delta)
    out = root * (a[:, None, None] * aux.eta + b[:, None, None] * aux.gamma) + aux.gamma_resid
    return out[0] if r_arr.ndim == 0 else out


def _replay_plan(trace: MergeTrace, t, c1, c2):
    """Representative pairs for steps ``1..t``, checked against the trace."""
    if not 1 <= t <= len(trace):
        raise InvalidArgument(f"step {t} outside 1..{len(trace)}")
    rec = trace.record(t)
    if {tuple(sorted(rec.members_a)), tuple(sorted(rec.members_b))} != {c1, c2}:
        raise InvalidArgument(f"auxiliary statistics do not belong to step {t}")
    clusters = {i: {i} for i in range(trace.n)}
    plan = []
    for rec in trace.records[:t]:
        a, b = min(rec.members_a), min(rec.members_b)
        if clusters.get(a) != set(rec.members_a) or clusters.get(b) != set(rec.members_b):
            raise InvalidArgument(f"trace step {rec.step} does not match its own history")
        a, b = min(a, b), max(a, b)
        clusters[a] = clusters[a] | clusters.pop(b)
        plan.append((a, b))
    return plan


def _step_log_prob(vals, pos, tau):
    """Log softmax probability of candidate ``pos``; overwrites ``vals``."""
    dmin = vals.min(axis=0)
    tau_t = tau * vals.mean(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        scale = np.where((tau_t > 0) & np.isfinite(tau_t), -1.0 / tau_t, 0.0)
    vals -= dmin
    vals *= scale
    chosen = vals[pos].copy()
    np.exp(vals, out=vals)
    return chosen - np.log(vals.sum(axis=0))


def replay_log_weight(coeffs, family, trace: MergeTrace, plan, tau=None,
                      chunk_elems=8_000_000):
    """Sum over the planned steps of the log probability of the recorded merge.

    Each row of ``coeffs`` selects one data matrix from ``family`` (a
    :class:`DissimilarityFamily`); ``tau_s`` is recomputed on each.
    """
    tau = trace.config.tau if tau is None else tau
    if tau == 0:
        raise InvalidArgument("merge-sequence weights need a randomized trace (tau > 0)")
    coeffs = np.atleast_2d(coeffs)
    Q, n = coeffs.shape[0], family.n
    chunk = max(1, chunk_elems // (n * n))
    out = np.empty(Q)
    for lo in range(0, Q, chunk):
        D = family(coeffs[lo:lo + chunk])
        tracker = LinkageTracker(D, trace.config.linkage, copy=trace.config.linkage == "minimax")
        acc = np.zeros(D.shape[-1])
        for a, b in plan:
            acc += _step_log_prob(tracker.values(), tracker.pair_position(a, b), tau)
            tracker.merge(a, b)
        out[lo:lo + chunk] = acc
    return out


def _f_coefficients(r, aux):
    rr = np.atleast_1d(np.asarray(r, dtype=float))
    k = aux.n_merged - 2
    finite = np.isfinite(rr)
    safe = np.where(finite, rr, 0.0)
    a = np.where(finite, np.sqrt(safe / (k + safe)), 1.0)
    b = np.where(finite, np.sqrt(k / (k + safe)), 0.0)
    return np.column_stack([a, b, np.ones_like(a)])


def _f_family(aux):
    root = np.sqrt(aux.delta)
    return DissimilarityFamily([root * aux.eta, root * aux.gamma, aux.gamma_resid])


def sequence_log_weight(r, aux: AuxiliaryStats, trace: MergeTrace, t, tau=None, quad=None):
    """Log probability of the first ``t`` recorded merges on ``X(r)``.

    ``tau`` overrides the trace's randomization level (``np.inf`` gives the
    flat limit). Vectorized over ``r``.
    """
    quad = quad or QuadratureConfig()
    plan = _replay_plan(trace, t, aux.c1, aux.c2)
    out = replay_log_weight(_f_coefficients(r, aux), _f_family(aux), trace, plan, tau,
                            quad.chunk_elems)
    return float(out[0]) if np.ndim(r) == 0 else out


# -- quadrature ---------------------------------------------------------------

def _from_logodds(dist, s):
    """Base-law quantile at log-odds ``s``, using the survival side for ``s > 0``."""
    s = np.asarray(s, dtype=float)
    out = np.empty_like(s)
    lo = s <= 0
    out[lo] = dist.ppf(expit(s[lo]))
    out[~lo] = dist.isf(expit(-s[~lo]))
    return out


def _to_logodds(dist, x):
    if x <= 0:
        return -np.inf
    if not np.isfinite(x):
        return np.inf
    return float(dist.logcdf(x) - dist.logsf(x))


@lru_cache(maxsize=8)
def _gauss_legendre(nodes):
    return np.polynomial.legendre.leggauss(nodes)


def _panel_nodes(edges, nodes):
    g, w = _gauss_legendre(nodes)
    lo, hi = edges[:-1, None], edges[1:, None]
    half = (hi - lo) / 2
    s = (lo + hi) / 2 + half * g
    return s.ravel(), np.log(half * w).ravel()


def _log_diff(la, lb):
    """``log(exp(la) - exp(lb))`` for ``lb <= la``."""
    if lb == -np.inf:
        return la
    if lb >= la:
        return -np.inf
    return la + np.log1p(-np.exp(lb - la))


def weighted_tail(dist, log_weight, x, quad: QuadratureConfig | None = None):
    """Lower and upper mass at ``x`` of the base law ``dist`` reweighted by ``exp(log_weight)``.

    Returns ``(cdf, sf, diagnostics)``; ``cdf + sf = 1`` up to rounding, and
    each is computed from its own side so small tails stay accurate.
    """
    quad = quad or QuadratureConfig()
    far = quad.max_span
    lw_lo, lw_mid, lw_hi = log_weight(_from_logodds(dist, np.array([-far, 0.0, far])))
    s_lo = -min(far, quad.span + max(0.0, lw_lo - lw_mid))
    s_hi = min(far, quad.span + max(0.0, lw_hi - lw_mid))
    s_x = _to_logodds(dist, x)

    edges = np.linspace(s_lo, s_hi, quad.panels + 1)
    if s_lo < s_x < s_hi:
        edges = np.sort(np.append(edges, s_x))
    s, log_w = _panel_nodes(edges, quad.nodes)
    lw = log_weight(_from_logodds(dist, s))
    terms = lw + log_w + log_expit(s) + log_expit(-s)
    grid_below = logsumexp(terms[s < s_x]) if np.any(s < s_x) else -np.inf
    grid_above = logsumexp(terms[s > s_x]) if np.any(s > s_x) else -np.inf

    # mass outside the grid, with the weight frozen at its far-end value
    if s_x <= s_lo:
        log_below = lw_lo + log_expit(s_x)
        log_above = logsumexp([lw_lo + _log_diff(log_expit(s_lo), log_expit(s_x)),
                               grid_above, lw_hi + log_expit(-s_hi)])
    elif s_x >= s_hi:
        log_above = lw_hi + log_expit(-s_x)
        log_below = logsumexp([lw_lo + log_expit(s_lo), grid_below,
                               lw_hi + _log_diff(log_expit(-s_hi), log_expit(-s_x))])
    else:
        log_below = np.logaddexp(lw_lo + log_expit(s_lo), grid_below)
        log_above = np.logaddexp(grid_above, lw_hi + log_expit(-s_hi))
    log_total = np.logaddexp(log_below, log_above)
    diagnostics = {
        "nodes": int(s.size) + 3,
        "max_log_weight": float(np.max(lw)),
        "log_denominator": float(log_total),
        "denominator": float(np.exp(log_total - max(np.max(lw), lw_lo, lw_hi))),
        "logodds_range": [float(s_lo), float(s_hi)],
    }
    if not np.isfinite(log_total):
        raise NumericalFailure("conditional CDF denominator is not finite", diagnostics)
    cdf = float(np.exp(log_below - log_total))
    sf = float(np.exp(log_above - log_total))
    return min(max(cdf, 0.0), 1.0), min(max(sf, 0.0), 1.0), diagnostics


def f_base_law(aux: AuxiliaryStats):
    return stats.f(aux.p, (aux.n_merged - 2) * aux.p)


def _f_log_weight(aux, trace, t, naive, quad):
    if naive:
        return lambda r: np.zeros(np.shape(r))
    plan = _replay_plan(trace, t, aux.c1, aux.c2)
    family = _f_family(aux)

    def log_weight(r):
        return replay_log_weight(_f_coefficients(r, aux), family, trace, plan, None,
                                 quad.chunk_elems)

    return log_weight


def conditional_cdf_f(r, aux: AuxiliaryStats, trace: MergeTrace, t,
                      quad: QuadratureConfig | None = None, naive=False) -> float:
    """Conditional CDF of the F statistic at ``r`` given merges ``1..t``.

    ``naive=True`` replaces the merge-sequence weight by a constant, which
    reduces the result to the plain F CDF.
    """
    quad = quad or QuadratureConfig()
    cdf, _, _ = weighted_tail(f_base_law(aux), _f_log_weight(aux, trace, t, naive, quad), r, quad)
    return cdf


def merged_sets(trace, t):
    rec = trace.record(t)
    return tuple(sorted(rec.members_a)), tuple(sorted(rec.members_b))


def p_value_f(X, trace: MergeTrace, t, quad: QuadratureConfig | None = None,
              naive=False) -> TestResult:
    """Selective p-value for the merge at step ``t`` (1-based) using the F statistic."""
    quad = quad or QuadratureConfig()
    c1, c2 = merged_sets(trace, t)
    R, _, _ = f_statistic(X, c1, c2)
    aux = auxiliary_stats(X, c1, c2)
    _, sf, diag = weighted_tail(f_base_law(aux), _f_log_weight(aux, trace, t, naive, quad), R, quad)
    return TestResult(float(R), sf, t, (len(c1), len(c2)), "f", naive, diag)


# -- known-covariance (chi) variant -------------------------------------------

def sigma_roots(sigma, p):
    """``(Sigma^{1/2}, Sigma^{-1/2})`` for a scalar variance or a ``p x p`` matrix."""
    S = np.asarray(sigma, dtype=float)
    if S.ndim == 0:
        S = S * np.eye(p)
    if S.shape != (p, p) or not np.allclose(S, S.T, rtol=1e-10, atol=1e-12):
        raise InvalidArgument("Sigma must be a symmetric p x p matrix")
    vals, vecs = np.linalg.eigh(S)
    if vals.min() <= 0:
        raise InvalidArgument("Sigma must be positive definite")
    half = (vecs * np.sqrt(vals)) @ vecs.T
    half_inv = (vecs / np.sqrt(vals)) @ vecs.T
    return half, half_inv


def plugin_sigma2(X) -> float:
    """Pooled variance estimate around the grand mean (approximate; ignores clusters)."""
    X = as_array(X)
    n, p = X.shape
    return float(((X - X.mean(axis=0)) ** 2).sum() / ((n - 1) * p))


def chi_statistic(X, c1, c2, sigma_half_inv) -> float:
    """Whitened mean difference ``||Sigma^{-1/2} X^T nu||``."""
    X = as_array(X)
    H = np.asarray(sigma_half_inv, dtype=float)
    if H.ndim == 0:
        H = H * np.eye(X.shape[1])
    if not np.allclose(H, H.T) or np.linalg.eigvalsh(H).min() <= 0:
        raise InvalidArgument("Sigma^{-1/2} must be symmetric positive definite")
    cv = contrast_vector(c1, c2, X.shape[0])
    return float(np.linalg.norm(H @ (X.T @ cv.nu)))


def chi_auxiliary_stats(X, c1, c2, sigma) -> ChiAuxiliaryStats:
    X = as_array(X)
    c1, c2 = _index_sets(c1, c2, X.shape[0])
    half, half_inv = sigma_roots(sigma, X.shape[1])
    cv = contrast_vector(c1, c2, X.shape[0])
    v = half_inv @ (X.T @ cv.nu)
    norm = np.linalg.norm(v)
    if norm == 0:
        raise DegenerateDataError("merged cluster means coincide; direction undefined")
    pi = X - np.outer(cv.nu, cv.nu @ X) / cv.norm_sq
    return ChiAuxiliaryStats(v / norm, pi, cv, half, c1, c2)


def reconstruct_chi(u, aux: ChiAuxiliaryStats) -> np.ndarray:
    u_arr = np.asarray(u, dtype=float)
    direction = np.outer(aux.nu.nu / aux.nu.norm_sq, aux.xi @ aux.sigma_half)
    uu = np.atleast_1d(u_arr)
    out = uu[:, None, None] * direction + aux.pi_resid
    return out[0] if u_arr.ndim == 0 else out


def p_value_chi(X, trace: MergeTrace, t, sigma, quad: QuadratureConfig | None = None,
                naive=False) -> TestResult:
    """Selective p-value for step ``t`` with known covariance ``sigma``."""
    quad = quad or QuadratureConfig()
    X = as_array(X)
    c1, c2 = merged_sets(trace, t)
    aux = chi_auxiliary_stats(X, c1, c2, sigma)
    _, half_inv = sigma_roots(sigma, X.shape[1])
    U = chi_statistic(X, c1, c2, half_inv)
    dist = stats.chi(X.shape[1], scale=np.sqrt(aux.nu.norm_sq))
    if naive:
        def log_weight(u):
            return np.zeros(np.shape(u))
    else:
        plan = _replay_plan(trace, t, c1, c2)
        direction = np.outer(aux.nu.nu / aux.nu.norm_sq, aux.xi @ aux.sigma_half)
        family = DissimilarityFamily([direction, aux.pi_resid])

        def log_weight(u):
            u = np.atleast_1d(np.asarray(u, dtype=float))
            return replay_log_weight(np.column_stack([u, np.ones_like(u)]), family, trace,
                                     plan, None, quad.chunk_elems)
    _, sf, diag = weighted_tail(dist, log_weight, U, quad)
    return TestResult(U, sf, t, (len(c1), len(c2)), "chi", naive, diag)
