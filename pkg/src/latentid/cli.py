"""Command-line interface: identifiability checks, formula export, effect
estimation, exhaustive benchmarks, and numeric verification.

Every subcommand is a thin wrapper around the library; all logic lives in
the other modules. Exit codes: 0 on full success, 2 when the requested
analysis is only partially achieved, 1 on input errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Optional

from .catalog import BUILTIN_GRAPHS, builtin_graph
from .criteria import SearchConfig, combined_algorithm
from .enumeration import (
    METHOD_PRESETS,
    PATTERNS,
    run_benchmark,
    rows_to_csv,
    rows_to_markdown,
)
from .formulas import (
    expr_to_dict,
    formula_map_from_state,
    render_latex,
)
from .graph import GraphError, LatentFactorGraph, load_graph
from .numerics import (
    SamplingError,
    covariance_from_csv,
    estimate,
    verify_identification,
)

SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_INPUT_ERROR = 1
EXIT_PARTIAL = 2


class CliError(Exception):
    """Input problem that should terminate with exit code 1."""


def _resolve_graph(spec: str) -> LatentFactorGraph:
    """A builtin graph name, or a path to a JSON graph file."""
    if spec in BUILTIN_GRAPHS:
        return builtin_graph(spec)
    if not os.path.exists(spec):
        raise CliError(
            f"graph {spec!r} is neither a builtin name "
            f"({', '.join(sorted(BUILTIN_GRAPHS))}) nor an existing file"
        )
    try:
        return load_graph(spec)
    except (GraphError, ValueError, KeyError) as exc:
        raise CliError(f"could not load graph {spec!r}: {exc}") from exc


def _search_config(args: argparse.Namespace) -> SearchConfig:
    if args.legacy_lf_htc:
        return SearchConfig(
            legacy_lf_htc_only=True,
            enable_det=False,
            enable_recursion=False,
            cap_det_pairs=args.cap_det_pairs,
            cap_h_size=args.cap_h,
            cap_recursion=args.cap_recursion,
            simplify_wz_loop=args.simplify_wz,
        )
    return SearchConfig(
        cap_det_pairs=args.cap_det_pairs,
        cap_h_size=args.cap_h,
        simplify_wz_loop=args.simplify_wz,
        cap_recursion=args.cap_recursion,
        enable_det=not args.no_det,
        enable_elf=not args.no_elf,
        enable_recursion=not args.no_rec,
    )


def _emit(payload: dict, fmt: str) -> None:
    if fmt == "json":
        print(json.dumps(payload, indent=2, sort_keys=True))
    else:
        raise CliError(f"unsupported output format {fmt!r} for this command")


# -- subcommands -----------------------------------------------------------


def cmd_check(args: argparse.Namespace) -> int:
    g = _resolve_graph(args.graph)
    state = combined_algorithm(g, _search_config(args))
    edge_records = []
    by_edge = {}
    for record in state.certificates:
        for e in record.edges:
            by_edge.setdefault(e, record)
    for edge in sorted(g.edges_obs):
        rec = by_edge.get(edge)
        edge_records.append(
            {
                "edge": list(edge),
                "solved": edge in state.solved_edges,
                "certificate": rec.to_dict() if rec else None,
            }
        )
    fully = g.edges_obs <= state.solved_edges
    payload = {
        "schema": SCHEMA_VERSION,
        "command": "check",
        "graph": args.graph,
        "fully_identified": fully,
        "num_solved": len(state.solved_edges & g.edges_obs),
        "num_edges": len(g.edges_obs),
        "edges": edge_records,
    }
    if args.format == "md":
        print(f"| edge | solved | criterion |")
        print("| --- | --- | --- |")
        for rec in edge_records:
            crit = (
                rec["certificate"]["certificate"]["criterion"]
                if rec["certificate"]
                else "-"
            )
            print(
                f"| {rec['edge'][0]} -> {rec['edge'][1]} "
                f"| {'yes' if rec['solved'] else 'no'} | {crit} |"
            )
    else:
        _emit(payload, args.format)
    return EXIT_OK if fully else EXIT_PARTIAL


def cmd_formula(args: argparse.Namespace) -> int:
    g = _resolve_graph(args.graph)
    state = combined_algorithm(g, _search_config(args))
    fmap = formula_map_from_state(g, state)
    entries = []
    for edge in sorted(g.edges_obs):
        if edge in fmap:
            expr = fmap.get(edge)
            entries.append(
                {
                    "edge": list(edge),
                    "status": "identified",
                    "latex": render_latex(expr),
                    "expression": expr_to_dict(expr),
                }
            )
        else:
            entries.append(
                {
                    "edge": list(edge),
                    "status": "unidentified",
                    "latex": None,
                    "expression": None,
                }
            )
    if args.format == "latex":
        for e in entries:
            name = f"\\lambda_{{{e['edge'][0]}{e['edge'][1]}}}"
            if e["status"] == "identified":
                print(f"{name} = {e['latex']}")
            else:
                print(f"% {name}: unidentified")
    else:
        _emit(
            {
                "schema": SCHEMA_VERSION,
                "command": "formula",
                "graph": args.graph,
                "formulas": entries,
            },
            args.format,
        )
    fully = all(e["status"] == "identified" for e in entries)
    return EXIT_OK if fully else EXIT_PARTIAL


def cmd_estimate(args: argparse.Namespace) -> int:
    g = _resolve_graph(args.graph)
    if not args.cov:
        raise CliError("estimate requires --cov pointing to a covariance CSV")
    if not os.path.exists(args.cov):
        raise CliError(f"covariance file {args.cov!r} does not exist")
    try:
        with open(args.cov) as fh:
            sigma = covariance_from_csv(fh.read())
    except ValueError as exc:
        raise CliError(f"could not parse covariance CSV: {exc}") from exc
    if set(sigma.nodes) != set(g.observed):
        raise CliError(
            "covariance node ids do not match the graph's observed nodes"
        )
    state = combined_algorithm(g, _search_config(args))
    fmap = formula_map_from_state(g, state)
    results = estimate(g, sigma, fmap)
    entries = []
    for edge in sorted(g.edges_obs):
        res = results.get(edge)
        entries.append(
            {
                "edge": list(edge),
                "estimate": None if res is None else res.value,
                "degenerate": bool(res and res.degenerate),
                "identified": res is not None,
            }
        )
    if args.format == "csv":
        print("tail,head,estimate,degenerate,identified")
        for e in entries:
            val = "" if e["estimate"] is None else format(e["estimate"], ".17g")
            print(
                f"{e['edge'][0]},{e['edge'][1]},{val},"
                f"{int(e['degenerate'])},{int(e['identified'])}"
            )
    else:
        _emit(
            {
                "schema": SCHEMA_VERSION,
                "command": "estimate",
                "graph": args.graph,
                "estimates": entries,
            },
            args.format,
        )
    complete = all(e["identified"] and not e["degenerate"] for e in entries)
    return EXIT_OK if complete else EXIT_PARTIAL


def cmd_enumerate(args: argparse.Namespace) -> int:
    if args.pattern not in PATTERNS:
        raise CliError(
            f"unknown pattern {args.pattern!r}; "
            f"choices: {', '.join(sorted(PATTERNS))}"
        )
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    for m in methods:
        if m not in METHOD_PRESETS:
            raise CliError(
                f"unknown method {m!r}; choices: "
                f"{', '.join(sorted(METHOD_PRESETS))}"
            )
    workers = args.workers
    if workers is None:
        env = os.environ.get("LATENTID_WORKERS")
        workers = int(env) if env else None
    rows = run_benchmark(
        PATTERNS[args.pattern], args.max_edges, methods, workers=workers
    )
    if args.format == "csv":
        print(rows_to_csv(rows))
    elif args.format == "md":
        print(rows_to_markdown(rows))
    else:
        _emit(
            {
                "schema": SCHEMA_VERSION,
                "command": "enumerate",
                "pattern": args.pattern,
                "rows": [r.to_dict() for r in rows],
            },
            args.format,
        )
    return EXIT_OK


def cmd_verify(args: argparse.Namespace) -> int:
    g = _resolve_graph(args.graph)
    state = combined_algorithm(g, _search_config(args))
    try:
        report = verify_identification(
            g, state, trials=args.trials, tol=args.tol, seed=args.seed
        )
    except SamplingError as exc:
        raise CliError(str(exc)) from exc
    _emit(
        {
            "schema": SCHEMA_VERSION,
            "command": "verify",
            "graph": args.graph,
            "report": report.to_dict(),
        },
        args.format,
    )
    clean = not report.failures and not report.unverified_edges
    return EXIT_OK if clean else EXIT_PARTIAL


# -- argument parsing ------------------------------------------------------


def _add_search_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--cap-det-pairs", type=int, default=None)
    p.add_argument("--cap-h", type=int, default=None)
    p.add_argument("--simplify-wz", action="store_true")
    p.add_argument("--cap-recursion", type=int, default=None)
    p.add_argument("--legacy-lf-htc", action="store_true")
    p.add_argument("--no-det", action="store_true")
    p.add_argument("--no-elf", action="store_true")
    p.add_argument("--no-rec", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="latentid",
        description=(
            "Identifiability of direct causal effects in linear models "
            "with latent factor variables"
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_check = sub.add_parser(
        "check", help="run the identification search on a graph"
    )
    p_check.add_argument("--graph", required=True)
    p_check.add_argument("--format", default="json", choices=["json", "md"])
    _add_search_flags(p_check)
    p_check.set_defaults(func=cmd_check)

    p_formula = sub.add_parser(
        "formula", help="export identification formulas"
    )
    p_formula.add_argument("--graph", required=True)
    p_formula.add_argument(
        "--format", default="json", choices=["json", "latex"]
    )
    _add_search_flags(p_formula)
    p_formula.set_defaults(func=cmd_formula)

    p_estimate = sub.add_parser(
        "estimate", help="estimate effects from a covariance matrix"
    )
    p_estimate.add_argument("--graph", required=True)
    p_estimate.add_argument("--cov", required=True)
    p_estimate.add_argument(
        "--format", default="json", choices=["json", "csv"]
    )
    _add_search_flags(p_estimate)
    p_estimate.set_defaults(func=cmd_estimate)

    p_enum = sub.add_parser(
        "enumerate", help="benchmark methods over all DAGs of a pattern"
    )
    p_enum.add_argument(
        "--pattern", default="fig5a", choices=sorted(PATTERNS)
    )
    p_enum.add_argument("--max-edges", type=int, default=6)
    p_enum.add_argument(
        "--methods", default=",".join(("LF-HTC", "Det+eLF-HTC+rec"))
    )
    p_enum.add_argument("--workers", type=int, default=None)
    p_enum.add_argument(
        "--format", default="md", choices=["json", "csv", "md"]
    )
    p_enum.set_defaults(func=cmd_enumerate)

    p_verify = sub.add_parser(
        "verify", help="numerically verify derived formulas"
    )
    p_verify.add_argument("--graph", required=True)
    p_verify.add_argument("--seed", type=int, default=0)
    p_verify.add_argument("--trials", type=int, default=100)
    p_verify.add_argument("--tol", type=float, default=1e-8)
    p_verify.add_argument("--format", default="json", choices=["json"])
    _add_search_flags(p_verify)
    p_verify.set_defaults(func=cmd_verify)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    except (GraphError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR


if __name__ == "__main__":
    sys.exit(main())
