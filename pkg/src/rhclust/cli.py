"""Command-line entry point: ``rhclust <command> ...`` (or ``python3 -m rhclust``).

Data for ``cluster``, ``pvalue``, ``choose-k``, ``stability`` and ``gap``
come either from a CSV file (``--csv``, ``--features``, ``--filter``,
``--standardize``) or from a built-in generator (``--generate``,
``--param key=value``). Results are printed as JSON; tables and traces go
to ``--out-dir``.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from collections import Counter

import numpy as np

from . import bench
from .data import load_csv
from .engine import MergeTrace, RandomizationConfig, run_clustering
from .errors import DegenerateDataError, InvalidArgument, NumericalFailure, SchemaError
from .inference import QuadratureConfig, p_value_chi, p_value_f, plugin_sigma2
from .linkage import LINKAGES
from .metrics import cooccurrence_blocks, gap_statistic, write_cooccurrence_csv, write_gap_csv
from .selection import alpha_sequence, estimate_k


def _value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _params(items):
    out = {}
    for item in items or ():
        if "=" not in item:
            raise InvalidArgument(f"expected key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = _value(v.strip())
    return out


def _size(text):
    v = float(text)
    return v if 0 < v < 1 else int(v)


def _add_data(p):
    g = p.add_argument_group("data")
    g.add_argument("--csv", help="input CSV (header row, comma-separated)")
    g.add_argument("--features", help="comma-separated feature columns")
    g.add_argument("--filter", action="append", default=[], metavar="COL=VALUE",
                   help="keep rows with COL=VALUE; repeat a column for OR")
    g.add_argument("--standardize", action="store_true", help="z-score each feature")
    g.add_argument("--generate", choices=["two_cluster", "three_cluster", "circular"],
                   help="simulate the data instead of reading a CSV")
    g.add_argument("--param", action="append", default=[], metavar="KEY=VALUE",
                   help="generator parameter, e.g. n=30, delta=4")


def _add_method(p, tau=0.1):
    p.add_argument("--tau", type=float, default=tau)
    p.add_argument("--linkage", choices=LINKAGES, default="complete")


def _load(args):
    if args.csv:
        if not args.features:
            raise InvalidArgument("--features is required with --csv")
        return load_csv(args.csv, [c.strip() for c in args.features.split(",")],
                        args.filter, args.standardize)
    if args.generate:
        X, _ = bench.make_data({"name": args.generate, **_params(args.param)}, args.seed)
        return X
    raise InvalidArgument("give --csv or --generate")


def _quad(args):
    return QuadratureConfig(panels=args.quad_panels, nodes=args.quad_nodes)


def _emit(obj):
    json.dump(obj, sys.stdout, indent=2, default=float)
    sys.stdout.write("\n")


def _out(args, name):
    os.makedirs(args.out_dir, exist_ok=True)
    return os.path.join(args.out_dir, name)


def cmd_cluster(args):
    X = _load(args)
    trace = run_clustering(X, args.K, RandomizationConfig(args.tau, args.linkage, args.seed))
    path = _out(args, "trace.json")
    with open(path, "w") as fh:
        fh.write(trace.to_json(indent=1))
    _emit({"n": trace.n, "K": args.K, "labels": trace.labels.tolist(), "trace": path})


def _sigma(text, p):
    if text == "plugin":
        return None
    if os.path.exists(text):
        return np.loadtxt(text, delimiter=",", ndmin=2) if p > 1 else float(np.loadtxt(text))
    return float(text)


def cmd_pvalue(args):
    X = _load(args)
    if args.trace:
        with open(args.trace) as fh:
            trace = MergeTrace.from_json(fh.read())
    else:
        trace = run_clustering(X, 1, RandomizationConfig(args.tau, args.linkage, args.seed))
    t = args.step if args.step else X.n - args.K + 1
    if args.variant == "f":
        res = p_value_f(X, trace, t, _quad(args), naive=args.naive)
    else:
        sigma = _sigma(args.sigma, X.p)
        if sigma is None:
            sigma = plugin_sigma2(X)
        res = p_value_chi(X, trace, t, sigma, _quad(args), naive=args.naive)
    _emit(res.to_dict())


def cmd_choose_k(args):
    X = _load(args)
    schedule = alpha_sequence(X.n, args.alpha, args.decay)
    runs = max(1, int(round(args.runs / args.scale)))
    results = []
    for r in range(runs):
        seed = args.seed if runs == 1 else bench.replication_seed(args.seed, r)
        est, trace = estimate_k(X, args.linkage, args.tau, schedule, args.n_min, args.n_star,
                                seed, _quad(args), naive=args.naive)
        results.append((est, trace))
    if runs == 1:
        est, trace = results[0]
        with open(_out(args, "choose_k_trace.json"), "w") as fh:
            fh.write(trace.to_json(indent=1))
        _emit({"estimate": est.to_dict(), "trace": trace.to_dict()})
        return
    ks = [e.k_hat for e, _ in results]
    counts = Counter(ks)
    bench.write_csv(_out(args, "choose_k_counts.csv"), ["k", "count"], sorted(counts.items()))
    _emit({"runs": runs, "mode": max(sorted(counts), key=lambda k: counts[k]),
           "counts": {str(k): v for k, v in sorted(counts.items())}})


def cmd_stability(args):
    X = _load(args)
    spec = bench.default_spec("stability", args.runs, args.seed,
                              method={"tau": args.tau, "linkage": args.linkage, "K": args.K})
    spec = spec.scaled(args.scale)
    C = bench.run_stability(spec, X, args.threads)
    write_cooccurrence_csv(_out(args, "cooccurrence.csv"), C)
    blocks = cooccurrence_blocks(C, args.K)
    within, between = C.block_means(blocks)
    _emit({"runs": C.runs, "blocks": blocks.tolist(), "within_mean": within,
           "between_mean": between, "matrix": os.path.join(args.out_dir, "cooccurrence.csv")})


def cmd_gap(args):
    X = _load(args)
    res = gap_statistic(X, min(args.k_max, X.n - 1), args.b_refs, args.linkage, args.seed)
    write_gap_csv(_out(args, "gap.csv"), res)
    _emit({"k_hat": res.k_hat, "gap": list(res.gap), "s_k": list(res.s_k)})


def cmd_simulate(args):
    spec = bench.default_spec(args.kind, args.replications, args.seed,
                              _params(args.gen), _params(args.method)).scaled(args.scale)
    X = _load(args) if args.kind == "stability" else None
    summary = bench.run_and_write(spec, args.out_dir, args.threads, X)
    _emit({"kind": spec.kind, "replications": spec.replications, "summary": summary,
           "out_dir": args.out_dir})


def build_parser():
    p = argparse.ArgumentParser(prog="rhclust", description=__doc__.splitlines()[0])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1, help="worker processes for replications")
    p.add_argument("--out-dir", default="rhclust_out")
    p.add_argument("--scale", type=float, default=1.0, help="divide replication counts by this")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("cluster", help="randomized agglomerative clustering")
    _add_data(c)
    _add_method(c)
    c.add_argument("--K", type=int, default=2)
    c.set_defaults(func=cmd_cluster)

    def quad_flags(q):
        q.add_argument("--quad-panels", type=int, default=64)
        q.add_argument("--quad-nodes", type=int, default=16)
        q.add_argument("--naive", action="store_true", help="plain F/chi test, no selection weight")

    v = sub.add_parser("pvalue", help="selective p-value of one merge")
    _add_data(v)
    _add_method(v)
    v.add_argument("--K", type=int, default=2, help="test the merge that joins two of K clusters")
    v.add_argument("--step", type=int, help="test merge STEP instead (1-based)")
    v.add_argument("--trace", help="trace JSON written by 'cluster' (else re-clustered)")
    v.add_argument("--variant", choices=["f", "chi"], default="f")
    v.add_argument("--sigma", default="plugin",
                   help="chi variant: scalar variance, CSV file with the covariance, or 'plugin'")
    quad_flags(v)
    v.set_defaults(func=cmd_pvalue)

    k = sub.add_parser("choose-k", help="estimate the number of clusters")
    _add_data(k)
    _add_method(k)
    k.add_argument("--alpha", type=float, default=0.05)
    k.add_argument("--decay", type=float, default=0.5)
    k.add_argument("--n-min", type=_size, default=0.1, help="count, or fraction of n")
    k.add_argument("--n-star", type=_size, default=0.4, help="count, or fraction of n")
    k.add_argument("--runs", type=int, default=1, help="repeat with derived seeds and report the mode")
    quad_flags(k)
    k.set_defaults(func=cmd_choose_k)

    s = sub.add_parser("stability", help="co-occurrence over repeated randomized runs")
    _add_data(s)
    _add_method(s)
    s.add_argument("--K", type=int, default=2)
    s.add_argument("--runs", type=int, default=500)
    s.set_defaults(func=cmd_stability)

    g = sub.add_parser("gap", help="gap statistic baseline")
    _add_data(g)
    g.add_argument("--linkage", choices=LINKAGES, default="complete")
    g.add_argument("--k-max", type=int, default=10)
    g.add_argument("--b-refs", type=int, default=50)
    g.set_defaults(func=cmd_gap)

    m = sub.add_parser("simulate", help="run a simulation study")
    m.add_argument("kind", choices=bench.KINDS)
    _add_data(m)
    m.add_argument("--replications", type=int, help="override the default count")
    m.add_argument("--gen", action="append", default=[], metavar="KEY=VALUE",
                   help="generator override, e.g. delta=4")
    m.add_argument("--method", action="append", default=[], metavar="KEY=VALUE",
                   help="method override, e.g. tau=0.05 or taus=[0.1,0.5]")
    m.set_defaults(func=cmd_simulate)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (InvalidArgument, SchemaError, DegenerateDataError, NumericalFailure,
            FileNotFoundError) as exc:
        print(f"rhclust: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
