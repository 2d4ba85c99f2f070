"""Per-point output goals and their encodings as linear constraint systems.

Every goal ultimately becomes a system A y <= b over some output vector y:
classification goals over the network output, exact-value goals over the
pre-activation output of a sub-network whose result passes through a ReLU.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .network import Network

DEFAULT_MARGIN = 0.1
SATISFACTION_TOL = 1e-7


class InvalidTargetError(ValueError):
    """An exact-output target has a negative entry."""


@dataclass(frozen=True, eq=False)
class ClassificationGoal:
    """Require the output's argmax to be ``label`` with a strict gap ``margin``."""

    label: int
    margin: float = DEFAULT_MARGIN

    def __post_init__(self):
        if self.label < 1:
            raise ValueError(f"label must be >= 1, got {self.label}")
        if not self.margin > 0:
            raise ValueError(f"margin must be positive, got {self.margin}")


@dataclass(frozen=True, eq=False)
class LinearGoal:
    """Require A y <= b over the output vector y."""

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.a, dtype=np.float64))
        b = np.asarray(self.b, dtype=np.float64).reshape(-1)
        if a.shape[0] != b.shape[0]:
            raise ValueError(f"A has {a.shape[0]} rows but b has {b.shape[0]} entries")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise ValueError("constraint coefficients must be finite")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)


@dataclass(frozen=True, eq=False)
class ExactOutputGoal:
    """Require the post-ReLU output to equal ``target`` element-wise."""

    target: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.target, dtype=np.float64).reshape(-1)
        if np.any(t < 0):
            raise InvalidTargetError(
                "exact-output targets are post-ReLU values and must be non-negative"
            )
        object.__setattr__(self, "target", t)


@dataclass(frozen=True, eq=False)
class PointSpec:
    """One input point together with the goal its output must satisfy."""

    x: np.ndarray
    goal: ClassificationGoal | LinearGoal

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=np.float64).reshape(-1))


def encode_classification(label: int, num_outputs: int, margin: float = DEFAULT_MARGIN):
    """Rows y_j - y_label <= -margin for every competing output j.

    Any y satisfying the system has a strict argmax at ``label``. Returns
    num_outputs - 1 rows; a single-output network yields an empty system.
    """
    if not 1 <= label <= num_outputs:
        raise ValueError(f"label {label} out of range 1..{num_outputs}")
    if not margin > 0:
        raise ValueError(f"margin must be positive, got {margin}")
    rows = []
    for j in range(num_outputs):
        if j == label - 1:
            continue
        row = np.zeros(num_outputs)
        row[j] = 1.0
        row[label - 1] = -1.0
        rows.append(row)
    a = np.array(rows).reshape(len(rows), num_outputs)
    b = np.full(len(rows), -margin)
    return a, b


def encode_exact_output(goal: ExactOutputGoal):
    """Linear rows over the pre-activation output z that force ReLU(z) == target.

    Positive targets become two-sided bounds (equality of the pre-activation);
    zero targets need only z_j <= 0, since any non-positive pre-activation
    already yields a post-ReLU value of exactly zero.
    """
    t = goal.target
    d = t.shape[0]
    rows = []
    rhs = []
    for j in range(d):
        up = np.zeros(d)
        up[j] = 1.0
        rows.append(up)
        rhs.append(t[j])
        if t[j] > 0:
            rows.append(-up)
            rhs.append(-t[j])
    return np.array(rows).reshape(len(rows), d), np.array(rhs)


def goal_system(goal, num_outputs: int):
    """The (A, b) system of any goal kind, over the relevant output vector."""
    if isinstance(goal, ClassificationGoal):
        return encode_classification(goal.label, num_outputs, goal.margin)
    if isinstance(goal, LinearGoal):
        if goal.a.shape[1] != num_outputs:
            raise ValueError(
                f"A has {goal.a.shape[1]} columns but the output has {num_outputs} entries"
            )
        return goal.a, goal.b
    if isinstance(goal, ExactOutputGoal):
        if goal.target.shape[0] != num_outputs:
            raise ValueError(
                f"target has {goal.target.shape[0]} entries but the output has {num_outputs}"
            )
        return encode_exact_output(goal)
    raise TypeError(f"unknown goal type {type(goal).__name__}")


def check_satisfied(net: Network, spec: PointSpec, tol: float = SATISFACTION_TOL) -> bool:
    """Whether the network output on spec.x satisfies the encoded system.

    A small slack absorbs LP solver round-off in repaired networks.
    """
    y = net.evaluate(spec.x).output
    a, b = goal_system(spec.goal, net.output_dim)
    if a.shape[0] == 0:
        return True
    return bool(np.all(a @ y <= b + tol))
