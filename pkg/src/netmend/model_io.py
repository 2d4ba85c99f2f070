"""Model, job, labeled-set, and report documents.

All documents are JSON text. Doubles are rendered with Python's shortest
round-trip representation, so saved models reload bit-for-bit and golden
files stay stable across platforms.
"""

from __future__ import annotations

import json

import numpy as np

from . import lp
from .constraints import ClassificationGoal, LinearGoal, PointSpec, check_satisfied
from .network import Network
from .search import HEURISTICS, RepairResult, SearchOptions


class ParseError(ValueError):
    """A document is malformed; the message names the offending field."""


def _expect_keys(record: dict, allowed: set, context: str):
    unknown = set(record) - allowed
    if unknown:
        raise ParseError(f"{context}: unknown field {sorted(unknown)[0]!r}")


# -- model documents ---------------------------------------------------------

def model_to_dict(net: Network) -> dict:
    doc = {
        "layer_sizes": list(net.layer_sizes),
        "weights": [w.tolist() for w in net.weights],
    }
    if any(np.any(b != 0) for b in net.biases):
        doc["biases"] = [b.tolist() for b in net.biases]
    return doc


def model_from_dict(doc: dict) -> Network:
    if not isinstance(doc, dict):
        raise ParseError("model: expected a JSON object")
    _expect_keys(doc, {"layer_sizes", "weights", "biases"}, "model")
    try:
        sizes = [int(s) for s in doc["layer_sizes"]]
    except (KeyError, TypeError, ValueError):
        raise ParseError("layer_sizes: expected an array of integers") from None
    if len(sizes) < 2 or any(s < 1 for s in sizes):
        raise ParseError("layer_sizes: need at least two positive sizes")
    weights = doc.get("weights")
    if not isinstance(weights, list) or len(weights) != len(sizes) - 1:
        raise ParseError(f"weights: expected {len(sizes) - 1} matrices")
    mats = []
    for i, w in enumerate(weights):
        try:
            arr = np.array(w, dtype=np.float64)
        except (TypeError, ValueError):
            raise ParseError(f"weights[{i}]: expected a numeric matrix") from None
        if arr.shape != (sizes[i + 1], sizes[i]):
            raise ParseError(
                f"weights[{i}]: expected shape {sizes[i + 1]}x{sizes[i]}, "
                f"got {'x'.join(str(d) for d in arr.shape)}"
            )
        mats.append(arr)
    biases = None
    if "biases" in doc:
        raw = doc["biases"]
        if not isinstance(raw, list) or len(raw) != len(mats):
            raise ParseError(f"biases: expected {len(mats)} vectors")
        biases = []
        for i, b in enumerate(raw):
            try:
                vec = np.array(b, dtype=np.float64)
            except (TypeError, ValueError):
                raise ParseError(f"biases[{i}]: expected a numeric vector") from None
            if vec.shape != (sizes[i + 1],):
                raise ParseError(f"biases[{i}]: expected length {sizes[i + 1]}")
            biases.append(vec)
    try:
        return Network(mats, biases)
    except ValueError as exc:
        raise ParseError(str(exc)) from None


def load_model(path) -> Network:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"model: invalid JSON ({exc})") from None
    return model_from_dict(doc)


def save_model(net: Network, path):
    with open(path, "w") as fh:
        json.dump(model_to_dict(net), fh, indent=1)
        fh.write("\n")


# -- job documents -----------------------------------------------------------

_JOB_KNOBS = {
    "epsilon", "heuristic", "norm", "timeout_secs", "seed", "separation_indices",
    "margin", "random_radius", "mcts_iterations", "mcts_depth", "mcts_sims",
    "mcts_exploration", "max_evals",
}


def _point_from_dict(record: dict, index: int, default_margin: float) -> PointSpec:
    context = f"points[{index}]"
    if not isinstance(record, dict):
        raise ParseError(f"{context}: expected an object")
    _expect_keys(record, {"x", "label", "margin", "A", "b"}, context)
    if "x" not in record:
        raise ParseError(f"{context}: missing field 'x'")
    x = np.array(record["x"], dtype=np.float64).reshape(-1)
    has_label = "label" in record
    has_system = "A" in record or "b" in record
    if has_label == has_system:
        raise ParseError(f"{context}: need either 'label' or 'A'/'b', not both")
    if has_label:
        margin = float(record.get("margin", default_margin))
        try:
            return PointSpec(x, ClassificationGoal(int(record["label"]), margin))
        except ValueError as exc:
            raise ParseError(f"{context}: {exc}") from None
    if "A" not in record or "b" not in record:
        raise ParseError(f"{context}: 'A' and 'b' must appear together")
    try:
        return PointSpec(x, LinearGoal(np.array(record["A"], dtype=np.float64),
                                       np.array(record["b"], dtype=np.float64)))
    except ValueError as exc:
        raise ParseError(f"{context}: {exc}") from None


def job_from_dict(doc: dict) -> tuple[list[PointSpec], SearchOptions]:
    if not isinstance(doc, dict):
        raise ParseError("job: expected a JSON object")
    _expect_keys(doc, _JOB_KNOBS | {"points"}, "job")
    options = SearchOptions()
    if "margin" in doc:
        margin = float(doc["margin"])
        if not margin > 0:
            raise ParseError(f"margin: must be positive, got {margin}")
        options.margin = margin
    raw_points = doc.get("points")
    if not isinstance(raw_points, list) or not raw_points:
        raise ParseError("points: expected a non-empty array")
    points = [
        _point_from_dict(rec, i, options.margin) for i, rec in enumerate(raw_points)
    ]
    if "epsilon" in doc:
        options.epsilon = float(doc["epsilon"])
        if not options.epsilon > 0:
            raise ParseError(f"epsilon: must be positive, got {options.epsilon}")
    if "heuristic" in doc:
        if doc["heuristic"] not in HEURISTICS:
            raise ParseError(f"heuristic: expected one of {list(HEURISTICS)}")
        options.heuristic = doc["heuristic"]
    if "norm" in doc:
        norm = str(doc["norm"]).lower()
        if norm not in lp.NORMS:
            raise ParseError(f"norm: expected one of {list(lp.NORMS)}")
        options.norm = norm
    if "timeout_secs" in doc:
        options.timeout_secs = float(doc["timeout_secs"])
    if "seed" in doc:
        options.seed = int(doc["seed"])
    if "separation_indices" in doc:
        options.separation_indices = tuple(int(i) for i in doc["separation_indices"])
    if "random_radius" in doc:
        options.random_radius = float(doc["random_radius"])
    if "mcts_iterations" in doc:
        options.mcts_iterations = int(doc["mcts_iterations"])
    if "mcts_depth" in doc:
        options.mcts_depth = int(doc["mcts_depth"])
    if "mcts_sims" in doc:
        options.mcts_sims = int(doc["mcts_sims"])
    if "mcts_exploration" in doc:
        options.mcts_exploration = float(doc["mcts_exploration"])
    if "max_evals" in doc:
        options.max_evals = int(doc["max_evals"])
    return points, options


def load_job(path) -> tuple[list[PointSpec], SearchOptions]:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"job: invalid JSON ({exc})") from None
    return job_from_dict(doc)


# -- labeled sets and accuracy ------------------------------------------------

def load_labeled_set(path) -> list[tuple[np.ndarray, int]]:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"labeled set: invalid JSON ({exc})") from None
    if isinstance(doc, dict):
        _expect_keys(doc, {"points"}, "labeled set")
        doc = doc.get("points")
    if not isinstance(doc, list) or not doc:
        raise ParseError("labeled set: expected a non-empty array of points")
    out = []
    for i, rec in enumerate(doc):
        if not isinstance(rec, dict):
            raise ParseError(f"points[{i}]: expected an object")
        _expect_keys(rec, {"x", "label"}, f"points[{i}]")
        if "x" not in rec or "label" not in rec:
            raise ParseError(f"points[{i}]: need both 'x' and 'label'")
        out.append((np.array(rec["x"], dtype=np.float64).reshape(-1), int(rec["label"])))
    return out


def measure_accuracy(net: Network, labeled) -> float:
    """Fraction of points whose 1-based classification matches the label."""
    labeled = list(labeled)
    if not labeled:
        raise ValueError("accuracy needs a non-empty labeled set")
    for x, label in labeled:
        if not 1 <= label <= net.output_dim:
            raise ValueError(f"label {label} out of range 1..{net.output_dim}")
    hits = sum(1 for x, label in labeled if net.classify(x) == label)
    return hits / len(labeled)


# -- repair reports ------------------------------------------------------------

def _finite_or_none(value):
    return float(value) if value is not None and np.isfinite(value) else None


def build_report(
    original: Network,
    points,
    options: SearchOptions,
    result: RepairResult,
    labeled=None,
    include_trace: bool = False,
) -> dict:
    repaired = result.network if result.status == "repaired" else original
    report = {
        "status": result.status,
        "norm": options.norm,
        "heuristic": options.heuristic,
        "epsilon": options.epsilon,
        "separation_indices": list(options.separation_indices),
        "cost": _finite_or_none(result.cost),
        "sub_costs": list(result.sub_costs) if result.sub_costs is not None else None,
        "deltas": [
            {"weight_index": d.weight_index, "cost": d.cost, "delta": d.delta.tolist()}
            for d in result.deltas
        ],
        "evaluations": result.evaluations,
        "wall_time_secs": result.wall_time,
        "points": [],
    }
    for spec in points:
        before = original.evaluate(spec.x).output
        after = repaired.evaluate(spec.x).output
        report["points"].append(
            {
                "x": np.asarray(spec.x).tolist(),
                "output_before": before.tolist(),
                "output_after": after.tolist(),
                "label_before": int(np.argmax(before)) + 1,
                "label_after": int(np.argmax(after)) + 1,
                "satisfied_before": check_satisfied(original, spec),
                "satisfied_after": check_satisfied(repaired, spec),
            }
        )
    if labeled:
        report["accuracy_before"] = measure_accuracy(original, labeled)
        report["accuracy_after"] = measure_accuracy(repaired, labeled)
    if include_trace:
        report["trace"] = [
            {
                "multiples": [list(block) for block in entry.proposal.multiples],
                "sub_costs": list(entry.sub_costs) if entry.sub_costs is not None else None,
                "total": _finite_or_none(entry.total),
                "best_total": _finite_or_none(entry.best_total),
            }
            for entry in result.trace.entries
        ]
    return report


def save_report(report: dict, path):
    with open(path, "w") as fh:
        json.dump(report, fh, indent=1)
        fh.write("\n")


def apply_report_deltas(net: Network, report: dict) -> Network:
    """Re-apply a report's per-layer deltas to the original network."""
    out = net
    for entry in report["deltas"]:
        out = out.apply_delta(int(entry["weight_index"]), np.array(entry["delta"]))
    return out
