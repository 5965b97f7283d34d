"""Command-line interface.

Exit codes: 0 success, 1 input or usage error, 2 no valid instrument set found.
"""
from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .bench import format_table, load_spec_file, plot_data_csv, reports_to_csv, run_benchmark
from .direction import infer_direction_effects
from .discovery import DiscoveryTrace, find_valid_iv_sets
from .io import SCHEMA_VERSION, read_dataset_csv, write_dataset_csv, write_json, write_truth_json
from .model import DiscoveryConfig, PrebimError
from .simulator import ScenarioSpec, simulate_scenario

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_EMPTY = 2


class _Parser(argparse.ArgumentParser):
    # usage errors share exit code 1 with bad input
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _bool(text):
    value = str(text).strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected true or false, got {text!r}")


def _alpha(text):
    value = float(text)
    if not 0.0 < value < 1.0:
        raise argparse.ArgumentTypeError("alpha must lie in (0, 1)")
    return value


def _width(text):
    value = int(text)
    if value < 2:
        raise argparse.ArgumentTypeError("max set size must be >= 2")
    return value


def _scenario(text):
    try:
        a, b, g = (int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("scenario must look like a,b,g (e.g. 2,2,6)") from None
    return a, b, g


def _add_discovery_flags(p):
    p.add_argument("--alpha", type=_alpha, default=0.05, help="significance level (default 0.05)")
    p.add_argument("-W", "--max-set-size", type=_width, default=None,
                   help="largest set to grow (default min(g, 10))")
    p.add_argument("--merge-same-direction", type=_bool, nargs="?", const=True, default=True,
                   metavar="BOOL", help="merge a second set that passes jointly with the first (default true)")
    p.add_argument("--plain-test", action="store_true",
                   help="correlate pseudo-residuals with raw genotypes instead of the X-orthogonal part")


def _config(args, overrides=None) -> DiscoveryConfig:
    base = dict(overrides or {})
    base.update(alpha=args.alpha, max_set_size=args.max_set_size,
                merge_same_direction=args.merge_same_direction)
    if args.plain_test:
        base["adjusted_test"] = False
    return DiscoveryConfig(**base)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="prebim", description="Bi-directional Mendelian randomization with "
                     "pseudo-residual valid instrument discovery.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="write a simulated dataset and its ground truth")
    p.add_argument("--scenario", type=_scenario, required=True, metavar="A,B,G",
                   help="valid X->Y count, valid Y->X count, total variants")
    p.add_argument("--n", type=int, default=5000, help="sample size (default 5000)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--one-directional", action="store_true", help="force beta_yx = 0")
    p.add_argument("--correlated-valid", action="store_true",
                   help="make one pair of valid instruments dependent")
    p.add_argument("-o", "--output", type=Path, default=None,
                   help="CSV path; the truth sidecar is written next to it as *.truth.json")

    for name, text in (("discover", "find valid instrument sets"),
                       ("estimate", "find valid sets, assign directions and estimate effects")):
        p = sub.add_parser(name, help=text)
        p.add_argument("dataset", type=Path, help="CSV with header x,y,G_1,...,G_g")
        _add_discovery_flags(p)
        p.add_argument("--no-center", action="store_true", help="data are already centered")
        p.add_argument("--trace", action="store_true", help="include every search decision in the JSON")
        p.add_argument("-o", "--output", type=Path, default=None, help="JSON report path")
        if name == "estimate":
            p.add_argument("--per-set-majority", action="store_true",
                           help="assign each discovered set by majority vote of its members")

    p = sub.add_parser("bench", help="run a replication sweep")
    p.add_argument("spec", help="sweep JSON path or bundled name (table1_desk, one_directional_desk, ...)")
    p.add_argument("--reps", type=int, default=None, help="override the replication count")
    p.add_argument("--seed", type=int, default=None, help="override the master seed")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--plot-data", action="store_true", help="also write tidy metric-vs-n CSV")
    p.add_argument("-o", "--output-dir", type=Path, default=Path("."))
    p.add_argument("--replications", action="store_true", help="include per-replication rows in the JSON")
    _add_discovery_flags(p)
    return parser


def cmd_simulate(args) -> int:
    a, b, g = args.scenario
    spec = ScenarioSpec(a, b, g, args.n, bidirectional=not args.one_directional,
                        correlated_valid=args.correlated_valid, seed=args.seed)
    params, labels, sample = simulate_scenario(spec)
    out = args.output or Path(f"S{a}-{b}-{g}_n{args.n}_seed{args.seed}.csv")
    sidecar = out.with_suffix(".truth.json")
    write_dataset_csv(out, sample.x, sample.y, sample.genotypes)
    write_truth_json(sidecar, params, labels, spec)
    print(f"wrote {out} and {sidecar}")
    return EXIT_OK


def _run_pipeline(args, estimate: bool):
    data = read_dataset_csv(args.dataset, center=not args.no_center)
    config = _config(args)
    trace = DiscoveryTrace() if args.trace else None
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        sets = find_valid_iv_sets(data, config, trace)
        est = infer_direction_effects(data, sets, config.tolerance, args.per_set_majority) \
            if estimate else None
    names = data.variant_names
    doc = {
        "schema_version": SCHEMA_VERSION,
        "command": "estimate" if estimate else "discover",
        "input": str(args.dataset),
        "n": data.n,
        "g": data.g,
        "config": {"alpha": config.alpha, "max_set_size": config.resolve_max_set_size(data.g),
                   "merge_same_direction": config.merge_same_direction,
                   "adjusted_test": config.adjusted_test},
        "sets": [[names[j] for j in s] for s in sets],
        "set_indices": [list(s) for s in sets],
    }
    if est is not None:
        doc.update({
            "assigned_xy": [names[j] for j in est.assigned_xy],
            "assigned_yx": [names[j] for j in est.assigned_yx],
            "beta_hat_xy": est.beta_hat_xy,
            "beta_hat_yx": est.beta_hat_yx,
            "dropped": [names[j] for j in est.dropped],
            "split_sets": [[names[j] for j in s] for s in est.split_sets],
        })
    if caught:
        doc["warnings"] = [str(w.message) for w in caught]
    if trace is not None:
        doc["trace"] = trace.to_dict()
    return doc, sets, est


def cmd_discover(args, estimate: bool = False) -> int:
    doc, sets, est = _run_pipeline(args, estimate)
    if not sets:
        print("no valid instrument set found")
    for s in doc["sets"]:
        print("valid set: " + ", ".join(s))
    if est is not None:
        for arrow, key in (("X->Y", "xy"), ("Y->X", "yx")):
            beta = doc[f"beta_hat_{key}"]
            members = ", ".join(doc[f"assigned_{key}"]) or "-"
            shown = "absent" if beta is None else f"{beta:.6g}"
            print(f"{arrow}: beta_hat = {shown}  instruments: {members}")
    for w in doc.get("warnings", []):
        print(f"warning: {w}", file=sys.stderr)
    out = args.output or args.dataset.with_suffix(f".{doc['command']}.json")
    write_json(out, doc)
    print(f"report: {out}")
    return EXIT_OK if sets else EXIT_EMPTY


def cmd_bench(args) -> int:
    specs, reps, seed, overrides = load_spec_file(args.spec)
    reps = args.reps if args.reps is not None else reps
    seed = args.seed if args.seed is not None else seed
    config = _config(args, overrides)
    reports = run_benchmark(specs, reps, config, seed, workers=args.workers)
    out = args.output_dir
    out.mkdir(parents=True, exist_ok=True)
    doc = {
        "schema_version": SCHEMA_VERSION,
        "spec": str(args.spec),
        "reps": reps,
        "master_seed": seed,
        "config": {"alpha": config.alpha, "max_set_size": config.max_set_size,
                   "merge_same_direction": config.merge_same_direction,
                   "adjusted_test": config.adjusted_test},
        "reports": [r.to_dict(args.replications) for r in reports],
    }
    write_json(out / "report.json", doc)
    (out / "report.csv").write_text(reports_to_csv(reports), encoding="utf-8")
    if args.plot_data:
        (out / "plot_data.csv").write_text(plot_data_csv(reports), encoding="utf-8")
    print(format_table(reports))
    failed = sum(r.failures for r in reports)
    if failed:
        print(f"{failed} replication(s) raised estimator errors; see report.json", file=sys.stderr)
    print(f"reports written to {out}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "simulate":
            return cmd_simulate(args)
        if args.command == "discover":
            return cmd_discover(args, estimate=False)
        if args.command == "estimate":
            return cmd_discover(args, estimate=True)
        return cmd_bench(args)
    except (PrebimError, OSError, ValueError, KeyError) as err:
        print(f"prebim: error: {err}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
