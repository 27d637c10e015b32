"""Experiment drivers for the simulation studies.

Every run is described by an :class:`ExperimentSpec`. Replication ``r``
draws its data from seed ``replication_seed(spec.seed, r)`` and uses the
same seed for the randomized clusterer, so a run is reproducible from the
spec alone and independent of the number of worker processes.
"""
from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, astuple, dataclass, field, replace

import numpy as np

from . import data as gen
from .engine import RandomizationConfig, run_clustering
from .errors import DegenerateDataError, InvalidArgument
from .inference import merged_sets, p_value_f
from .linkage import linkage_dissimilarity, pairwise_dissimilarity
from .metrics import ari, cooccurrence, gap_statistic, wcss_tss, write_cooccurrence_csv
from .selection import estimate_k

MANIFEST_SCHEMA = 1
KINDS = ("null_calibration", "power_curve", "fwer", "k_histogram", "stability", "quality_sweep")
QUALITY_TAUS = (0.0, 0.025, 0.05, 0.1, 0.25, 0.5, 1.0, 5.0)


@dataclass(frozen=True)
class ExperimentSpec:
    kind: str
    replications: int
    generator: dict = field(default_factory=dict)
    method: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidArgument(f"unknown experiment kind {self.kind!r}")
        if self.replications < 1:
            raise InvalidArgument("replications must be >= 1")

    def scaled(self, scale) -> "ExperimentSpec":
        """Same experiment with ``replications / scale`` runs (at least one)."""
        if scale <= 0:
            raise InvalidArgument("scale must be > 0")
        return replace(self, replications=max(1, int(round(self.replications / scale))))

    def to_dict(self) -> dict:
        return asdict(self)


# Defaults follow the simulation studies; any key can be overridden.
DEFAULT_SPECS = {
    "null_calibration": ExperimentSpec(
        "null_calibration", 2000,
        {"name": "two_cluster", "n": 30, "p": 10, "delta": 0.0, "sigma": 1.0},
        {"tau": 0.1, "linkage": "complete", "K": 2, "alpha": 0.05, "batch_size": 200}),
    "power_curve": ExperimentSpec(
        "power_curve", 2000,
        {"name": "two_cluster", "n": 30, "p": 2, "sigma": 1.0, "deltas": list(range(1, 11))},
        {"tau": 0.1, "linkage": "complete", "K": 2, "alpha": 0.05, "bins": 10}),
    "fwer": ExperimentSpec(
        "fwer", 2000,
        {"name": "two_cluster", "n": 30, "p": 2, "delta": 0.0, "sigma": 1.0},
        {"taus": [0.1], "naive": True, "linkage": "complete", "alpha": 0.05, "decay": 0.5}),
    "k_histogram": ExperimentSpec(
        "k_histogram", 100,
        {"name": "three_cluster", "n": 30, "delta": 14.0, "sigma": 1.0},
        {"tau": 0.1, "linkage": "complete", "alpha": 0.05, "decay": 0.5, "gap": True,
         "k_max": 10, "b_refs": 50}),
    "stability": ExperimentSpec(
        "stability", 500, {}, {"tau": 0.1, "linkage": "complete", "K": 2}),
    "quality_sweep": ExperimentSpec(
        "quality_sweep", 500,
        {"name": "two_cluster", "n": 30, "p": 2, "delta": 6.0, "sigma": 1.0},
        {"taus": list(QUALITY_TAUS), "linkage": "complete", "K": 2}),
}


def default_spec(kind, replications=None, seed=0, generator=None, method=None) -> ExperimentSpec:
    base = DEFAULT_SPECS[kind]
    return replace(
        base,
        replications=base.replications if replications is None else replications,
        generator={**base.generator, **(generator or {})},
        method={**base.method, **(method or {})},
        seed=seed,
    )


def replication_seed(master, r) -> int:
    return int(np.random.SeedSequence([int(master), int(r)]).generate_state(1)[0])


def make_data(generator, seed):
    """``(DataMatrix, GroundTruth)`` from a generator description."""
    g = dict(generator)
    name = g.pop("name")
    g.pop("deltas", None)
    if name == "two_cluster":
        return gen.generate_two_cluster(g["n"], g.get("delta", 0.0), g.get("sigma", 1.0),
                                        g.get("p", 2), rng_seed=seed)
    if name == "three_cluster":
        return gen.generate_three_cluster(g["n"], g["delta"], g.get("sigma", 1.0), rng_seed=seed)
    if name == "circular":
        return gen.generate_circular(g["n"], g["k_star"], g.get("radius", 6.0),
                                     g.get("sigma", 1.0), rng_seed=seed)
    raise InvalidArgument(f"unknown generator {name!r}")


def _pmap(fn, items, threads):
    items = list(items)
    if threads and threads > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * threads))))
    return [fn(x) for x in items]


def _config(method, seed, tau=None):
    return RandomizationConfig(method.get("tau", 0.1) if tau is None else tau,
                               method.get("linkage", "complete"), seed)


# -- null calibration ------------------------------------------------------

@dataclass(frozen=True)
class NullCalibration:
    p_values: np.ndarray
    ks: float
    type1: float
    batch_type1: tuple
    ecdf_grid: np.ndarray
    ecdf: np.ndarray
    failures: int


def ks_uniform(p) -> float:
    """Sup distance between the empirical CDF of ``p`` and the uniform CDF."""
    p = np.sort(np.asarray(p, dtype=float))
    m = len(p)
    i = np.arange(1, m + 1)
    return float(max((i / m - p).max(), (p - (i - 1) / m).max()))


def _null_rep(args):
    spec, r = args
    seed = replication_seed(spec.seed, r)
    X, _ = make_data(spec.generator, seed)
    K = spec.method.get("K", 2)
    naive = spec.method.get("naive", False)
    trace = run_clustering(X, K - 1, _config(spec.method, seed))
    try:
        return p_value_f(X, trace, X.n - K + 1, naive=naive).p_value
    except DegenerateDataError:
        return float("nan")


def run_null_calibration(spec: ExperimentSpec, threads=1) -> NullCalibration:
    """Cluster null data down to ``K`` clusters and test the next merge."""
    p = np.array(_pmap(_null_rep, [(spec, r) for r in range(spec.replications)], threads))
    failures = int(np.isnan(p).sum())
    p = p[~np.isnan(p)]
    alpha = spec.method.get("alpha", 0.05)
    size = spec.method.get("batch_size", 200)
    batches = tuple(float((p[i:i + size] < alpha).mean()) for i in range(0, len(p) - size + 1, size))
    grid = np.linspace(0, 1, 101)
    ecdf = np.searchsorted(np.sort(p), grid, side="right") / len(p)
    return NullCalibration(p, ks_uniform(p), float((p < alpha).mean()), batches, grid, ecdf, failures)


# -- power -----------------------------------------------------------------

@dataclass(frozen=True)
class PowerBin:
    lo: float
    hi: float
    rejections: int
    trials: int
    power: float
    ci_lo: float
    ci_hi: float


def effect_size(mu, c1, c2, linkage) -> float:
    """Linkage dissimilarity between two index sets evaluated on the true means."""
    return linkage_dissimilarity(linkage, c1, c2, pairwise_dissimilarity(mu))


def _power_rep(args):
    spec, delta, r = args
    seed = replication_seed(spec.seed, r)
    X, truth = make_data({**spec.generator, "delta": delta}, seed)
    K = spec.method.get("K", 2)
    t = X.n - K + 1
    trace = run_clustering(X, K - 1, _config(spec.method, seed))
    c1, c2 = merged_sets(trace, t)
    es = effect_size(truth.mu, c1, c2, trace.config.linkage)
    try:
        p = p_value_f(X, trace, t).p_value
    except DegenerateDataError:
        return es, float("nan")
    return es, p


def power_bins(es, reject, bins=10) -> list:
    """Equal-width effect-size bins with normal-approximation 95% intervals; empty bins are dropped."""
    es, reject = np.asarray(es, dtype=float), np.asarray(reject, dtype=bool)
    lo, hi = float(es.min()), float(es.max())
    if hi == lo:
        hi = lo + 1.0
    edges = np.linspace(lo, hi, bins + 1)
    idx = np.clip(np.searchsorted(edges, es, side="right") - 1, 0, bins - 1)
    out = []
    for b in range(bins):
        sel = idx == b
        n = int(sel.sum())
        if n == 0:
            continue
        k = int(reject[sel].sum())
        pw = k / n
        half = 1.959963984540054 * math.sqrt(pw * (1 - pw) / n)
        out.append(PowerBin(float(edges[b]), float(edges[b + 1]), k, n, pw,
                            max(0.0, pw - half), min(1.0, pw + half)))
    return out


def run_power_curve(spec: ExperimentSpec, threads=1):
    """Rejection rate of the selective test as a function of effect size.

    ``replications`` runs are made for every value in ``generator["deltas"]``.
    Returns ``(bins, effect_sizes, p_values)``.
    """
    deltas = spec.generator.get("deltas") or [spec.generator.get("delta", 0.0)]
    jobs = [(spec, float(d), i * spec.replications + r)
            for i, d in enumerate(deltas) for r in range(spec.replications)]
    res = np.array(_pmap(_power_rep, jobs, threads))
    ok = ~np.isnan(res[:, 1])
    es, p = res[ok, 0], res[ok, 1]
    alpha = spec.method.get("alpha", 0.05)
    return power_bins(es, p < alpha, spec.method.get("bins", 10)), es, p


# -- number of clusters ----------------------------------------------------

def detect_cross_merge(trace, truth, t_star) -> bool:
    """True iff a merge before step ``t_star`` joins points with different true labels."""
    labels = np.asarray(getattr(truth, "labels", truth))
    for rec in trace.records[:max(0, t_star - 1)]:
        if len(set(labels[list(rec.members_a + rec.members_b)].tolist())) > 1:
            return True
    return False


def _select_args(method):
    out = {k: method[k] for k in ("n_min", "n_star", "decay") if k in method}
    if "alpha" in method:
        out["alpha_total"] = method["alpha"]
    return out


@dataclass(frozen=True)
class KRun:
    k_hat: int
    k_star: int
    cross_merge: bool
    k_gap: int | None = None


def _k_rep(args):
    spec, r, tau, naive = args
    seed = replication_seed(spec.seed, r)
    X, truth = make_data(spec.generator, seed)
    est, trace = estimate_k(X, spec.method.get("linkage", "complete"), tau, rng_seed=seed,
                            naive=naive, **_select_args(spec.method))
    cross = detect_cross_merge(trace, truth, X.n - truth.k_star + 1)
    k_gap = None
    if spec.method.get("gap"):
        k_max = min(spec.method.get("k_max", 10), X.n - 1)
        k_gap = gap_statistic(X, k_max, spec.method.get("b_refs", 50),
                              spec.method.get("linkage", "complete"), seed).k_hat
    return KRun(est.k_hat, truth.k_star, cross, k_gap)


def _k_runs(spec, tau, naive, threads):
    return _pmap(_k_rep, [(spec, r, tau, naive) for r in range(spec.replications)], threads)


def overestimation_rate(runs) -> float:
    """Frequency of {K > K*} together with no cross-cluster merge before ``t*``."""
    return float(np.mean([r.k_hat > r.k_star and not r.cross_merge for r in runs]))


@dataclass(frozen=True)
class FwerRow:
    method: str
    tau: float
    fraction: float
    se: float
    rejections: int
    replications: int


def run_fwer(spec: ExperimentSpec, threads=1) -> list:
    """Fraction of null replications with more than one estimated cluster.

    One row per ``method["taus"]`` entry, plus a ``naive`` row (greedy
    clustering, plain F p-values) when ``method["naive"]`` is set.
    """
    plan = [("randomized", float(t), False) for t in spec.method.get("taus", [0.1])]
    if spec.method.get("naive"):
        plan.append(("naive", 0.0, True))
    rows = []
    for name, tau, naive in plan:
        runs = _k_runs(replace(spec, method={**spec.method, "gap": False}), tau, naive, threads)
        k = sum(r.k_hat > 1 for r in runs)
        f = k / len(runs)
        rows.append(FwerRow(name, tau, f, math.sqrt(f * (1 - f) / len(runs)), k, len(runs)))
    return rows


@dataclass(frozen=True)
class KHistogram:
    k_hat: np.ndarray
    k_gap: np.ndarray | None
    k_star: int
    overestimation: float

    def counts(self) -> list:
        """Rows ``(k, count_ours, count_gap)`` for every K seen."""
        top = int(max(self.k_hat.max(), self.k_gap.max() if self.k_gap is not None else 0))
        ours = np.bincount(self.k_hat, minlength=top + 1)
        gap = np.bincount(self.k_gap, minlength=top + 1) if self.k_gap is not None else None
        return [(k, int(ours[k]), int(gap[k]) if gap is not None else None) for k in range(1, top + 1)]

    def mode(self) -> int:
        return int(np.argmax(np.bincount(self.k_hat)))


def run_k_histogram(spec: ExperimentSpec, threads=1) -> KHistogram:
    runs = _k_runs(spec, spec.method.get("tau", 0.1), spec.method.get("naive", False), threads)
    k_gap = np.array([r.k_gap for r in runs]) if spec.method.get("gap") else None
    return KHistogram(np.array([r.k_hat for r in runs]), k_gap, runs[0].k_star,
                      overestimation_rate(runs))


# -- stability and quality -------------------------------------------------

def _stability_rep(args):
    X, method, seed = args
    return run_clustering(X, method.get("K", 2), _config(method, seed)).labels


def run_stability(spec: ExperimentSpec, X, threads=1):
    """Co-occurrence of ``replications`` randomized clusterings of a fixed dataset."""
    X = gen.as_array(X)
    jobs = [(X, spec.method, replication_seed(spec.seed, r)) for r in range(spec.replications)]
    return cooccurrence(_pmap(_stability_rep, jobs, threads))


@dataclass(frozen=True)
class QualityRow:
    tau: float
    ari_median: float
    ari_q1: float
    ari_q3: float
    ratio_median: float
    ratio_q1: float
    ratio_q3: float


def _quality_rep(args):
    spec, r = args
    seed = replication_seed(spec.seed, r)
    X, truth = make_data(spec.generator, seed)
    K = spec.method.get("K", truth.k_star)
    out = []
    for tau in spec.method.get("taus", QUALITY_TAUS):
        labels = run_clustering(X, K, _config(spec.method, seed, float(tau))).labels
        out.append((ari(labels, truth.labels), wcss_tss(X, labels)))
    return out


def run_quality_sweep(spec: ExperimentSpec, threads=1):
    """ARI and WCSS/TSS of the K-cluster cut over a grid of randomization levels.

    Returns ``(rows, ari, ratio)`` where ``ari`` and ``ratio`` have shape
    ``(replications, len(taus))``; every tau sees the same datasets.
    """
    taus = [float(t) for t in spec.method.get("taus", QUALITY_TAUS)]
    res = np.array(_pmap(_quality_rep, [(spec, r) for r in range(spec.replications)], threads))
    ari_v, ratio = res[:, :, 0], res[:, :, 1]
    rows = []
    for j, tau in enumerate(taus):
        qa = np.percentile(ari_v[:, j], [25, 50, 75])
        qr = np.percentile(ratio[:, j], [25, 50, 75])
        rows.append(QualityRow(tau, qa[1], qa[0], qa[2], qr[1], qr[0], qr[2]))
    return rows, ari_v, ratio


# -- output ----------------------------------------------------------------

def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow(["" if v is None else v for v in row])


def write_manifest(out_dir, spec: ExperimentSpec, tables, summary=None, extra=None) -> str:
    """JSON manifest with the full spec, seed, produced tables and summary numbers."""
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, f"{spec.kind}_manifest.json")
    body = {"schema": MANIFEST_SCHEMA, "spec": spec.to_dict(), "tables": list(tables),
            "summary": summary or {}}
    if extra:
        body.update(extra)
    with open(path, "w") as fh:
        json.dump(body, fh, indent=2, default=float)
    return path


def run_and_write(spec: ExperimentSpec, out_dir, threads=1, X=None) -> dict:
    """Run an experiment, write its CSV tables and manifest, return the summary."""
    os.makedirs(out_dir, exist_ok=True)
    kind = spec.kind
    tables, summary = [], {}

    def table(name, header, rows):
        path = os.path.join(out_dir, f"{kind}_{name}.csv")
        write_csv(path, header, rows)
        tables.append(os.path.basename(path))

    if kind == "null_calibration":
        res = run_null_calibration(spec, threads)
        table("pvalues", ["replication", "p_value"], enumerate(res.p_values))
        table("ecdf", ["u", "ecdf"], zip(res.ecdf_grid, res.ecdf))
        table("type1_batches", ["batch", "type1"], enumerate(res.batch_type1))
        summary = {"ks": res.ks, "type1": res.type1, "failures": res.failures}
    elif kind == "power_curve":
        bins, es, p = run_power_curve(spec, threads)
        table("bins", ["lo", "hi", "rejections", "trials", "power", "ci_lo", "ci_hi"],
              [astuple(b) for b in bins])
        table("trials", ["effect_size", "p_value"], zip(es, p))
        summary = {"trials": int(len(p))}
    elif kind == "fwer":
        rows = run_fwer(spec, threads)
        table("table", ["method", "tau", "fraction", "se", "rejections", "replications"],
              [astuple(r) for r in rows])
        summary = {f"{r.method}_{r.tau:g}": r.fraction for r in rows}
    elif kind == "k_histogram":
        res = run_k_histogram(spec, threads)
        table("counts", ["k", "ours", "gap"], res.counts())
        summary = {"mode": res.mode(), "overestimation": res.overestimation, "k_star": res.k_star}
    elif kind == "stability":
        if X is None:
            raise InvalidArgument("stability needs a dataset")
        C = run_stability(spec, X, threads)
        path = os.path.join(out_dir, "stability_cooccurrence.csv")
        write_cooccurrence_csv(path, C)
        tables.append(os.path.basename(path))
        summary = {"runs": C.runs}
    elif kind == "quality_sweep":
        rows, _, _ = run_quality_sweep(spec, threads)
        table("summary", ["tau", "ari_median", "ari_q1", "ari_q3",
                          "ratio_median", "ratio_q1", "ratio_q3"], [astuple(r) for r in rows])
        summary = {f"ari_median_{r.tau:g}": r.ari_median for r in rows}
    write_manifest(out_dir, spec, tables, summary)
    return summary
