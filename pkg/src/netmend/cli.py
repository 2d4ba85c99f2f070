"""Command-line surface: repair, eval, inspect, compare.

Exit codes: 0 when the request succeeded (repair found, outputs printed),
2 when a repair ran out of budget without finding a change, 1 on usage or
parse errors.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys

import numpy as np

from . import lp, model_io, search

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NOT_REPAIRED = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="netmend",
        description="Repair feed-forward ReLU networks with minimal multi-layer weight changes.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    rep = sub.add_parser("repair", help="repair a model against a job file")
    rep.add_argument("model")
    rep.add_argument("job")
    rep.add_argument("--out", help="write the repaired model here")
    rep.add_argument("--report", help="write a JSON repair report here")
    rep.add_argument("--trace", action="store_true", help="include the full search trace in the report")
    rep.add_argument("--test-set", help="labeled set for accuracy before/after")
    rep.add_argument("--dump-lp", help="append every solved program to this file in tableau form")
    _add_knob_overrides(rep)

    ev = sub.add_parser("eval", help="evaluate a model on one input vector")
    ev.add_argument("model")
    ev.add_argument("input", help='JSON vector, e.g. "[1]"')

    ins = sub.add_parser("inspect", help="print a model's architecture")
    ins.add_argument("model")

    cmp_ = sub.add_parser("compare", help="run several heuristics on one job under the same budget")
    cmp_.add_argument("model")
    cmp_.add_argument("job")
    cmp_.add_argument("--heuristics", default="random,greedy,mcts",
                      help="comma-separated heuristic names")
    cmp_.add_argument("--csv", help="write the comparison table here as CSV")
    cmp_.add_argument("--test-set", help="labeled set for the accuracy columns")
    _add_knob_overrides(cmp_)
    return parser


def _add_knob_overrides(sub):
    knobs = sub.add_argument_group("job knob overrides")
    knobs.add_argument("--epsilon", type=float)
    knobs.add_argument("--heuristic", choices=search.HEURISTICS)
    knobs.add_argument("--norm", choices=lp.NORMS)
    knobs.add_argument("--timeout-secs", type=float)
    knobs.add_argument("--seed", type=int)
    knobs.add_argument("--separation-indices", help='comma-separated, e.g. "3,5"')
    knobs.add_argument("--margin", type=float)
    knobs.add_argument("--random-radius", type=float)
    knobs.add_argument("--mcts-iterations", type=int)
    knobs.add_argument("--mcts-depth", type=int)
    knobs.add_argument("--mcts-sims", type=int)
    knobs.add_argument("--mcts-exploration", type=float)
    knobs.add_argument("--max-evals", type=int)


def _apply_overrides(options: search.SearchOptions, args) -> search.SearchOptions:
    for name in (
        "epsilon", "heuristic", "norm", "timeout_secs", "seed", "margin",
        "random_radius", "mcts_iterations", "mcts_depth", "mcts_sims",
        "mcts_exploration", "max_evals",
    ):
        value = getattr(args, name, None)
        if value is not None:
            setattr(options, name, value)
    raw = getattr(args, "separation_indices", None)
    if raw is not None:
        options.separation_indices = tuple(
            int(part) for part in raw.split(",") if part.strip()
        )
    return options


def _fmt(value: float) -> str:
    return f"{value:.12g}"


def _fmt_vector(vec) -> str:
    return "[" + ", ".join(_fmt(v) for v in np.asarray(vec).reshape(-1)) + "]"


def _cmd_repair(args) -> int:
    net = model_io.load_model(args.model)
    points, options = model_io.load_job(args.job)
    options = _apply_overrides(options, args)
    labeled = model_io.load_labeled_set(args.test_set) if args.test_set else None

    dump = open(args.dump_lp, "a") if args.dump_lp else None
    lp.tableau_dump = dump
    try:
        result = search.repair(net, points, options)
    finally:
        lp.tableau_dump = None
        if dump is not None:
            dump.close()

    print(f"status: {result.status}")
    if result.status == search.STATUS_REPAIRED:
        print(f"cost ({options.norm}): {_fmt(result.cost)}")
        print(f"sub-costs: {_fmt_vector(result.sub_costs)}")
        for d in result.deltas:
            print(f"  weights[{d.weight_index}] changed, size {_fmt(d.cost)}")
    print(f"evaluations: {result.evaluations}, wall time: {result.wall_time:.3f}s")
    for spec in points:
        after = result.network if result.status == search.STATUS_REPAIRED else net
        print(
            f"  point {_fmt_vector(spec.x)}: output {_fmt_vector(after.evaluate(spec.x).output)}"
        )

    if args.out and result.status == search.STATUS_REPAIRED:
        model_io.save_model(result.network, args.out)
        print(f"repaired model written to {args.out}")
    if args.report:
        report = model_io.build_report(net, points, options, result, labeled, args.trace)
        model_io.save_report(report, args.report)
        print(f"report written to {args.report}")
    return EXIT_OK if result.status == search.STATUS_REPAIRED else EXIT_NOT_REPAIRED


def _cmd_eval(args) -> int:
    net = model_io.load_model(args.model)
    try:
        vec = json.loads(args.input)
    except json.JSONDecodeError:
        raise model_io.ParseError(f"input: expected a JSON vector, got {args.input!r}")
    print(_fmt_vector(net.evaluate(np.asarray(vec, dtype=np.float64)).output))
    return EXIT_OK


def _cmd_inspect(args) -> int:
    net = model_io.load_model(args.model)
    print(f"layers: {len(net.layer_sizes)}, sizes {list(net.layer_sizes)}")
    total = 0
    for i, w in enumerate(net.weights):
        total += w.size
        bias = "" if not np.any(net.biases[i]) else ", with bias"
        print(f"  weights[{i}]: {w.shape[0]}x{w.shape[1]}{bias}")
    print(f"parameters: {total}")
    return EXIT_OK


def _cmd_compare(args) -> int:
    net = model_io.load_model(args.model)
    points, options = model_io.load_job(args.job)
    options = _apply_overrides(options, args)
    if options.max_evals is None:
        options.max_evals = 200  # a shared default budget keeps runs comparable
    labeled = model_io.load_labeled_set(args.test_set) if args.test_set else None
    names = [h.strip() for h in args.heuristics.split(",") if h.strip()]
    for name in names:
        if name not in search.HEURISTICS:
            raise model_io.ParseError(f"heuristics: unknown heuristic {name!r}")

    rows = []
    for name in names:
        run_options = dataclasses.replace(options, heuristic=name)
        result = search.repair(net, points, run_options)
        row = {
            "heuristic": name,
            "status": result.status,
            "cost": result.cost if result.status == search.STATUS_REPAIRED else None,
            "evaluations": result.evaluations,
            "wall_time_secs": round(result.wall_time, 4),
        }
        if labeled:
            repaired = result.network if result.status == search.STATUS_REPAIRED else net
            row["accuracy_before"] = model_io.measure_accuracy(net, labeled)
            row["accuracy_after"] = model_io.measure_accuracy(repaired, labeled)
        rows.append(row)

    columns = list(rows[0].keys())
    widths = {
        c: max(len(c), max(len(_cell(r[c])) for r in rows)) for c in columns
    }
    print("  ".join(c.ljust(widths[c]) for c in columns))
    for row in rows:
        print("  ".join(_cell(row[c]).ljust(widths[c]) for c in columns))

    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=columns)
            writer.writeheader()
            writer.writerows(rows)
    return EXIT_OK if all(r["status"] == search.STATUS_REPAIRED for r in rows) else EXIT_NOT_REPAIRED


def _cell(value) -> str:
    if value is None:
        return "-"
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "repair": _cmd_repair,
        "eval": _cmd_eval,
        "inspect": _cmd_inspect,
        "compare": _cmd_compare,
    }
    try:
        return handlers[args.command](args)
    except (model_io.ParseError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


def entrypoint():
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
