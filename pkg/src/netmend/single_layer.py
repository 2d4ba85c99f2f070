"""Minimal change to one designated layer of a sub-network.

Only final-layer modification is solved exactly here: the prefix of the
sub-network is untouched by the change, so its output stays fixed per input
point and the pre-activation output is linear in the delta. Every point goal
then contributes linear rows over the flattened delta, and one minimum-norm
program covers all points at once.

Other kinds of backend (e.g. verifier-based, for interior layers) can plug
into the same seam through the registry below.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import lp
from .constraints import ExactOutputGoal, goal_system
from .network import Network, relu

REPAIRED = "repaired"
INFEASIBLE = "infeasible"


class UnknownBackendError(ValueError):
    """No backend is registered under the requested name."""


@dataclass(eq=False)
class SingleLayerQuery:
    """A sub-network, the layer allowed to change, and per-point goals.

    ``goals`` pairs each input vector with either an ExactOutputGoal (the
    post-ReLU output must hit given values) or a classification/linear goal
    over the raw output. ``layer`` indexes into ``subnet.weights``; None
    selects the final matrix.
    """

    subnet: Network
    goals: list[tuple[np.ndarray, object]]
    norm: str = lp.L1
    layer: int | None = None

    def target_layer(self) -> int:
        return len(self.subnet.weights) - 1 if self.layer is None else self.layer


@dataclass(eq=False)
class SingleLayerAnswer:
    status: str
    subnet: Network | None
    delta: np.ndarray | None
    cost: float


def _prefix_features(subnet: Network, x) -> np.ndarray:
    """Activation feeding the final matrix; unaffected by a final-layer delta."""
    v = np.asarray(x, dtype=np.float64)
    for w, b in zip(subnet.weights[:-1], subnet.biases[:-1]):
        v = relu(w @ v + b)
    return v


def goal_rows(subnet: Network, x, goal) -> list[tuple[np.ndarray, float]]:
    """Rows over the flattened final-layer delta that make ``x`` meet ``goal``.

    With features u and final matrix W, the pre-activation output is
    (W + D) u + bias, so each goal row a . y <= b becomes
    sum_{r,c} a[r] u[c] D[r,c] <= b - a . (W u + bias).
    """
    u = _prefix_features(subnet, x)
    w = subnet.weights[-1]
    z0 = w @ u + subnet.biases[-1]
    a, b = goal_system(goal, subnet.output_dim)
    rows = []
    for i in range(a.shape[0]):
        rows.append((np.outer(a[i], u).ravel(), float(b[i] - a[i] @ z0)))
    return rows


def modify_final_layer(query: SingleLayerQuery) -> SingleLayerAnswer:
    """Minimal final-layer change meeting every point goal, via one LP."""
    subnet = query.subnet
    layer = query.target_layer()
    if layer != len(subnet.weights) - 1:
        raise ValueError(
            "the lp-final backend can only modify the final weight matrix "
            f"(index {len(subnet.weights) - 1}), got layer {layer}"
        )
    rows = []
    for x, goal in query.goals:
        rows.extend(goal_rows(subnet, x, goal))
    shape = subnet.weights[-1].shape
    solution = lp.solve_min_norm(rows, shape[0] * shape[1], query.norm)
    if solution.status != lp.OPTIMAL:
        return SingleLayerAnswer(INFEASIBLE, None, None, float("inf"))
    delta = solution.delta.reshape(shape)
    return SingleLayerAnswer(
        REPAIRED, subnet.apply_delta(layer, delta), delta, solution.objective
    )


_BACKENDS = {"lp-final": modify_final_layer}


def register_backend(name: str, fn):
    _BACKENDS[name] = fn


def backend_dispatch(query: SingleLayerQuery, backend: str = "lp-final") -> SingleLayerAnswer:
    """Run the named single-layer repair backend on the query."""
    try:
        fn = _BACKENDS[backend]
    except KeyError:
        raise UnknownBackendError(
            f"unknown backend {backend!r}; registered: {sorted(_BACKENDS)}"
        ) from None
    return fn(query)


def answer_satisfies(query: SingleLayerQuery, answer: SingleLayerAnswer, tol: float = 1e-7) -> bool:
    """Re-evaluate the repaired sub-network and check every point goal directly."""
    if answer.status != REPAIRED:
        return False
    for x, goal in query.goals:
        z = answer.subnet.evaluate(x).output
        if isinstance(goal, ExactOutputGoal):
            if np.max(np.abs(relu(z) - goal.target)) > tol:
                return False
        else:
            a, b = goal_system(goal, answer.subnet.output_dim)
            if a.shape[0] and not np.all(a @ z <= b + tol):
                return False
    return True
