"""Command-line interface: ``sltree {simulate,infer,evaluate,benchmark}``.

Exit codes: 0 success, 2 input error, 3 numerical or inference error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .benchmark import check_monotone, run_benchmark
from .engine import InclusionMatrix, infer_all, threshold_estimate
from .formats import (FormatError, format_dataset, format_inclusion, format_network,
                      format_tree_spec, parse_dataset, parse_inclusion, parse_network,
                      parse_prior_network, parse_tree_spec, read_text)
from .metrics import METRIC_NAMES, aggregate, all_metrics
from .prior import StructuralPriorConfig
from .simgen import REGIMES, RegimeConfig, generate_experiment

log = logging.getLogger("sltree")

EXIT_INPUT = 2
EXIT_NUMERIC = 3


class VerificationError(ArithmeticError):
    pass


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _regime_config(args) -> RegimeConfig:
    return RegimeConfig(regime=args.regime, P=args.P, n=args.n, rho=args.rho, sigma=args.sigma,
                        n_children=args.n_children, n_leaves=args.n_leaves,
                        series_length=args.series_length, seed=args.seed,
                        self_edges=not args.no_self_edges)


def load_inputs(tree_path, data_dir=None, prior_path=None, d_max=2, self_edges=True):
    """Tree, datasets keyed by node, and prior config from files."""
    topo = parse_tree_spec(read_text(tree_path))
    base = Path(data_dir) if data_dir else Path(tree_path).parent
    datasets = {n: parse_dataset(read_text(base / str(ref))) for n, ref in topo.data.items()}
    if not datasets:
        raise FormatError("no node in the tree carries data")
    names = next(iter(datasets.values())).names
    for n, d in datasets.items():
        if d.names != names:
            raise FormatError(f"dataset of node {n!r} has variables {d.names}, expected {names}")
    prior_text = read_text(prior_path) if prior_path else None
    g0 = parse_prior_network(prior_text, names, self_edges)
    cfg = StructuralPriorConfig(P=len(names), d_max=d_max, g0=g0, self_edges=self_edges)
    return topo, datasets, cfg, names


def cmd_simulate(args) -> int:
    cfg = _regime_config(args)
    truth = generate_experiment(cfg)
    out = Path(args.out)
    names = next(iter(truth.datasets.values())).names
    data_refs = {n: f"data/{n}.csv" for n in truth.datasets}
    for node, g in truth.networks.items():
        _write(out / "networks" / f"{node}.csv", format_network(g, names))
    for node, d in truth.datasets.items():
        _write(out / data_refs[node], format_dataset(d))
    _write(out / "truth_tree.json", format_tree_spec(truth.topology.with_data(data_refs)))
    _write(out / "tree.json", format_tree_spec(truth.inference_topology.with_data(data_refs)))
    _write(out / "config.json", json.dumps(asdict(cfg), indent=2, sort_keys=True) + "\n")
    log.info("wrote %d networks and %d datasets to %s", len(truth.networks), len(truth.datasets), out)
    return 0


def cmd_infer(args) -> int:
    topo, datasets, cfg, names = load_inputs(args.tree, args.data_dir, args.prior,
                                             args.d_max, not args.no_self_edges)
    start = time.perf_counter()
    res = infer_all(topo, datasets, cfg, threads=args.threads)
    runtime = time.perf_counter() - start
    out = Path(args.out)
    edges = {}
    for node in topo.nodes:
        m = res.inclusion[node]
        _write(out / f"{node}_inclusion.csv", format_inclusion(m.probs, names))
        edges[node] = [[names[k], names[l]] for k, l in threshold_estimate(m, 0.5).edges()]
    summary = {"nodes": list(topo.nodes), "observed": list(topo.observed), "variables": list(names),
               "P": cfg.P, "d_max": cfg.d_max, "runtime_seconds": runtime,
               "threshold": 0.5, "edges": edges}
    _write(out / "summary.json", json.dumps(summary, indent=2) + "\n")
    log.info("inferred %d nodes x %d variables in %.2fs", len(topo.nodes), cfg.P, runtime)
    return 0


def _parse_estimate_arg(spec: str):
    name, sep, path = spec.partition("=")
    if not sep:
        return Path(spec).name, Path(spec)
    return name, Path(path)


def verify_matrices(mats: dict, topo=None, g0=None) -> list[str]:
    problems = []
    for node, M in mats.items():
        if np.any(M < 0) or np.any(M > 1):
            problems.append(f"node {node}: entries outside [0, 1]")
        if g0 is not None:
            forbidden = g0.adjacency() == 0
            if np.any(M[forbidden] != 0):
                problems.append(f"node {node}: non-zero probability on an edge absent from the prior network")
    if topo is not None:
        wrapped = {n: InclusionMatrix(n, M) for n, M in mats.items()}
        # files carry six decimals
        for i, j, gap in check_monotone(topo, wrapped, tol=1e-6):
            problems.append(f"edge {i}->{j}: inclusion increases by {gap:.2g}")
    return problems


def cmd_evaluate(args) -> int:
    truth_dir = Path(args.truth)
    self_edges = not args.no_self_edges
    rows = []
    all_problems = []
    topo = parse_tree_spec(read_text(args.tree)) if args.tree else None
    for spec in args.estimate:
        est_name, est_dir = _parse_estimate_arg(spec)
        files = sorted(est_dir.glob("*_inclusion.csv"))
        if not files:
            raise FormatError(f"no *_inclusion.csv files in {est_dir}")
        mats = {}
        for f in files:
            node = f.name[: -len("_inclusion.csv")]
            if args.nodes and node not in args.nodes:
                continue
            M, names = parse_inclusion(read_text(f))
            mats[node] = M
            truth_file = truth_dir / f"{node}.csv"
            if not truth_file.exists():
                raise FormatError(f"estimate {est_name}: no truth network for node {node!r}")
            truth = parse_network(read_text(truth_file), names)
            row = {"estimator": est_name, "node": node}
            row.update(all_metrics(M, truth, self_edges=self_edges))
            rows.append(row)
        if args.nodes:
            missing = set(args.nodes) - set(mats)
            if missing:
                raise FormatError(f"estimate {est_name}: no matrix for nodes {sorted(missing)}")
        if args.verify:
            g0 = None
            if args.prior:
                g0 = parse_prior_network(read_text(args.prior), names, self_edges)
            all_problems += [f"{est_name}: {p}" for p in verify_matrices(mats, topo, g0)]

    fields = ["estimator", "node", *METRIC_NAMES]
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(r[k]) for k in fields})
        for est in dict.fromkeys(r["estimator"] for r in rows):
            agg = {"estimator": est, "node": "ALL"}
            for m in METRIC_NAMES:
                vals = [r[m] for r in rows if r["estimator"] == est and not math.isnan(r[m])]
                agg[m] = aggregate([vals]).mean if vals else math.nan
            w.writerow({k: _fmt(agg[k]) for k in fields})
    if all_problems:
        for p in all_problems:
            print(f"verify: {p}", file=sys.stderr)
        raise VerificationError(f"{len(all_problems)} invariant violations")
    return 0


def _fmt(x):
    if isinstance(x, float):
        return "nan" if math.isnan(x) else f"{x:.6f}"
    return x


def _parse_grid(text):
    if not text:
        return None, ()
    param, sep, values = text.partition("=")
    if not sep or param not in ("n", "rho"):
        raise FormatError("--grid must look like n=20,40,60 or rho=0.2,0.5")
    try:
        vals = [int(v) if param == "n" else float(v) for v in values.split(",") if v]
    except ValueError:
        raise FormatError(f"bad grid values {values!r}") from None
    return param, sorted(vals)


def cmd_benchmark(args) -> int:
    base = _regime_config(args)
    param, grid = _parse_grid(args.grid)
    start = time.perf_counter()
    instances, report = run_benchmark(base, param, grid, reps=args.reps, seed=args.seed,
                                      d_max=args.d_max, threads=args.threads)
    log.info("benchmark finished in %.1fs", time.perf_counter() - start)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    fields = list(report[0])
    with out.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for r in report:
            w.writerow({k: _fmt(v) for k, v in r.items()})
    if args.instances:
        ifields = ["regime", "param", "value", "replicate", "estimator", "node", *METRIC_NAMES]
        with open(args.instances, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=ifields, lineterminator="\n")
            w.writeheader()
            for r in instances:
                w.writerow({k: _fmt(r[k]) for k in ifields})
    return 0


def _add_regime_args(p):
    p.add_argument("--regime", choices=REGIMES, default="disjoint")
    p.add_argument("--P", type=int, default=10)
    p.add_argument("--n", type=int, default=60)
    p.add_argument("--rho", type=float, default=0.5)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--series-length", type=int, default=10)
    p.add_argument("--n-children", type=int, default=2)
    p.add_argument("--n-leaves", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sltree", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--d-max", type=int, default=2)
    common.add_argument("--no-self-edges", action="store_true")
    common.add_argument("--threads", type=int, default=os.cpu_count() or 1)

    p = sub.add_parser("simulate", parents=[common], help="generate a synthetic population")
    _add_regime_args(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("infer", parents=[common], help="posterior edge inclusion for every tree node")
    p.add_argument("--tree", required=True)
    p.add_argument("--data-dir")
    p.add_argument("--prior")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("evaluate", parents=[common], help="score inclusion matrices against true networks")
    p.add_argument("--truth", required=True, help="directory of <node>.csv edge lists")
    p.add_argument("--estimate", action="append", required=True,
                   help="NAME=DIR of <node>_inclusion.csv files (repeatable)")
    p.add_argument("--nodes", nargs="+", help="restrict to these node ids")
    p.add_argument("--tree", help="tree spec, for the --verify monotonicity audit")
    p.add_argument("--prior", help="prior network, for the --verify support audit")
    p.add_argument("--verify", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("benchmark", parents=[common], help="replicated comparison of SLT, STAR and DBN")
    _add_regime_args(p)
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--grid", help="n=20,40,60 or rho=0.2,0.5")
    p.add_argument("--instances", help="also write per-network rows here")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_benchmark)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "d_max", 0) < 0:
        parser.error("--d-max must be non-negative")
    try:
        return args.func(args)
    except ArithmeticError as exc:
        print(f"sltree: error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, KeyError, IndexError, OSError) as exc:
        print(f"sltree: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
