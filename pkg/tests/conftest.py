"""Shared fixtures: the worked toy network, random generators, and
brute-force oracles used to cross-check the LP and single-layer layers."""

import numpy as np
import pytest

from netmend import ClassificationGoal, Network, PointSpec

TOY_WEIGHTS = [
    [[1.0], [1.0]],
    [[0.01, 0.0], [0.0, 100.0]],
    [[1000.0, 0.0], [0.0, 0.01]],
    [[1.0, 1.0], [-1.0, -1.0]],
]


@pytest.fixture
def toy_net():
    """Five-layer toy network: input [1] evaluates to [11, -11]."""
    return Network(TOY_WEIGHTS)


@pytest.fixture
def fig_single_layer_net(toy_net):
    """Toy net after the minimal single-layer change: one output edge 1 -> -1.21."""
    delta = np.zeros((2, 2))
    delta[0, 0] = -2.21
    return toy_net.apply_delta(3, delta)


@pytest.fixture
def fig_two_layer_net(toy_net):
    """Toy net after the two-layer change: edge 0.01 -> 0 and edge -1 -> 1.1."""
    d1 = np.zeros((2, 2))
    d1[0, 0] = -0.01
    d3 = np.zeros((2, 2))
    d3[1, 1] = 2.1
    return toy_net.apply_delta(1, d1).apply_delta(3, d3)


def random_network(rng, sizes):
    """Random network with fan-in scaled weights so activations stay O(1)."""
    weights = [
        rng.normal(0.0, 1.0, size=(sizes[i + 1], sizes[i])) / np.sqrt(sizes[i])
        for i in range(len(sizes) - 1)
    ]
    return Network(weights)


def random_live_job(
    rng,
    layer_range=(4, 8),
    max_width=8,
    num_points=1,
    num_separations=1,
    margin=0.1,
    min_alive=0.2,
):
    """A repair job whose hidden activations are alive on every point.

    Live activations keep the origin proposal feasible: with a non-zero
    feature vector feeding each sub-network's final matrix, every induced
    single-layer program has a solution, so the job is repairable.
    Labels are the runner-up logit so repairs stay small.
    """
    while True:
        n = int(rng.integers(layer_range[0], layer_range[1] + 1))
        sizes = [int(rng.integers(2, max_width + 1)) for _ in range(n)]
        sizes[-1] = max(sizes[-1], 2)
        net = random_network(rng, sizes)
        xs = [rng.uniform(0.2, 1.0, size=sizes[0]) for _ in range(num_points)]
        traces = [net.evaluate(x) for x in xs]
        alive = all(
            min(np.max(layer) for layer in tr.layers[1:-1]) >= min_alive
            for tr in traces
        )
        if not alive:
            continue
        points = []
        for x, tr in zip(xs, traces):
            order = np.argsort(tr.output)
            label = int(order[-2]) + 1  # runner-up output, 1-based
            points.append(PointSpec(x, ClassificationGoal(label, margin)))
        interior = list(range(2, n))
        if len(interior) < num_separations:
            continue
        picks = sorted(
            int(i) for i in rng.choice(interior, size=num_separations, replace=False)
        )
        return net, points, tuple(picks)


def _lattice_chunks(num_vars, axis):
    """Yield the lattice box axis^num_vars in memory-bounded chunks."""
    if num_vars <= 2:
        grids = np.meshgrid(*([axis] * num_vars), indexing="ij")
        yield np.stack([x.ravel() for x in grids], axis=1)
        return
    tail = np.meshgrid(*([axis] * (num_vars - 1)), indexing="ij")
    tail_pts = np.stack([x.ravel() for x in tail], axis=1)
    for v in axis:
        yield np.column_stack([np.full(len(tail_pts), v), tail_pts])


def _norms(pts, norm):
    return np.abs(pts).sum(axis=1) if norm == "l1" else np.abs(pts).max(axis=1)


def grid_min_norm(rows, num_vars, norm, radius, step=0.01, slack=1e-9):
    """Exhaustive lattice scan for the cheapest feasible point in a box.

    Any point outside the box has a coordinate beyond ``radius`` and hence a
    norm above it, so whenever the best point found has norm <= radius it is
    the global lattice optimum. Returns (best_norm, best_point) or (inf, None).
    """
    k = int(round(radius / step))
    axis = np.arange(-k, k + 1) * step
    if rows:
        g = np.array([np.asarray(c, dtype=float) for c, _ in rows])
        h = np.array([float(r) for _, r in rows])
    else:
        g = h = None
    best, best_pt = float("inf"), None
    for pts in _lattice_chunks(num_vars, axis):
        if g is None:
            feasible = np.ones(len(pts), dtype=bool)
        else:
            feasible = np.all(pts @ g.T <= h + slack, axis=1)
        if not feasible.any():
            continue
        norms = np.where(feasible, _norms(pts, norm), np.inf)
        i = int(np.argmin(norms))
        if norms[i] < best:
            best, best_pt = float(norms[i]), pts[i].copy()
    return best, best_pt


def random_min_norm_program(rng, num_vars, num_rows):
    """A feasible random program with a known lattice witness.

    The witness is a lattice point, so the lattice optimum is at most its
    norm; the first row is tilted to make the zero delta infeasible.
    """
    witness = rng.integers(-20, 21, size=num_vars) * 0.01
    g = rng.uniform(-2.0, 2.0, size=(num_rows, num_vars))
    while abs(g[0] @ witness) < 0.05:
        g[0] = rng.uniform(-2.0, 2.0, size=num_vars)
    if g[0] @ witness > 0:
        g[0] = -g[0]
    slack = rng.uniform(0.0, 0.5, size=num_rows)
    slack[0] = rng.uniform(0.0, 0.4) * abs(g[0] @ witness)
    h = g @ witness + slack
    rows = [(g[i], float(h[i])) for i in range(num_rows)]
    return rows, witness


def brute_force_final_layer(subnet, goals, norm, radius, step=0.01, tol=1e-9):
    """Cheapest lattice delta to the final matrix meeting every goal.

    Independent of the LP route: candidate deltas are added to the final
    matrix and the resulting outputs are checked directly against each goal
    (argmax gap for classification, A y <= b for linear systems).
    """
    w = subnet.weights[-1]
    out_dim, in_dim = w.shape
    m = out_dim * in_dim
    k = int(round(radius / step))
    axis = np.arange(-k, k + 1) * step
    prepared = []
    for x, goal in goals:
        trace = subnet.evaluate(x)
        u = trace.layers[-2]
        prepared.append((u, w @ u + subnet.biases[-1], goal))

    best, best_delta = float("inf"), None
    for deltas in _lattice_chunks(m, axis):
        feasible = np.ones(len(deltas), dtype=bool)
        for u, z0, goal in prepared:
            zadd = np.zeros((len(deltas), out_dim))
            for r in range(out_dim):
                zadd[:, r] = deltas[:, r * in_dim : (r + 1) * in_dim] @ u
            z = z0 + zadd
            if isinstance(goal, ClassificationGoal):
                target = z[:, goal.label - 1]
                others = np.delete(z, goal.label - 1, axis=1)
                feasible &= np.all(others + goal.margin <= target[:, None] + tol, axis=1)
            else:
                feasible &= np.all(z @ goal.a.T <= goal.b + tol, axis=1)
            if not feasible.any():
                break
        if not feasible.any():
            continue
        norms = np.where(feasible, _norms(deltas, norm), np.inf)
        i = int(np.argmin(norms))
        if norms[i] < best:
            best = float(norms[i])
            best_delta = deltas[i].reshape(out_dim, in_dim)
    return best, best_delta


def check_mcts_invariants(tree):
    """Visit bookkeeping and branching bound for every node of the tree."""
    width = tree.grid.widths[tree.layer]
    stack = [tree.root]
    while stack:
        node = stack.pop()
        assert node.visits == node.self_visits + sum(c.visits for c in node.children)
        assert len(node.children) + len(node.untried) <= 2 * width + 1
        for child in node.children:
            assert child.visits >= 1
            assert child.parent is node
            stack.append(child)
