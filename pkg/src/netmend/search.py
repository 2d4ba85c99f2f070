"""Anytime search for a minimal multi-layer repair.

The driver walks a lattice of candidate changes to the separation-layer
assignments. Each candidate fixes what every sub-network must compute, which
turns one multi-layer repair into a chain of independent single-layer
repairs: the first sub-network must map each input point to its adjusted
separation values, intermediate sub-networks map adjusted values to adjusted
values, and the last one must meet the original output goals. The candidate's
score is the combined cost of those single-layer changes, and the search
keeps the cheapest scored candidate until its time or evaluation budget runs
out.

Three proposal heuristics are provided: uniform random sampling inside a
bounded box, steepest-descent over lattice neighbors with random restarts,
and a Monte Carlo tree search that balances descending into good regions
against exploring untried moves.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import lp
from .constraints import ExactOutputGoal
from .network import Network, SubnetworkChain, relu, split
from .single_layer import (
    REPAIRED,
    SingleLayerAnswer,
    SingleLayerQuery,
    backend_dispatch,
)

HEURISTICS = ("random", "greedy", "mcts")

COORD_TOL = 1e-9

STATUS_REPAIRED = "repaired"
STATUS_NOT_REPAIRED = "not-repaired"


class InvalidProposalError(ValueError):
    """A proposal drives some separation-layer assignment negative."""


@dataclass(frozen=True)
class ChangeProposal:
    """One lattice point: an additive change vector per separation layer.

    Coordinates are stored as integer multiples of the step so that lattice
    membership is exact and proposals hash cleanly.
    """

    epsilon: float
    multiples: tuple[tuple[int, ...], ...]

    @property
    def key(self):
        return self.multiples

    def vector(self, layer: int) -> np.ndarray:
        return np.array(self.multiples[layer], dtype=np.float64) * self.epsilon

    def vectors(self) -> list[np.ndarray]:
        return [self.vector(layer) for layer in range(len(self.multiples))]

    def is_origin(self) -> bool:
        return all(all(a == 0 for a in layer) for layer in self.multiples)

    @classmethod
    def from_vectors(cls, epsilon: float, vectors) -> "ChangeProposal":
        mults = []
        for vec in vectors:
            arr = np.asarray(vec, dtype=np.float64).reshape(-1)
            alpha = np.rint(arr / epsilon)
            if np.max(np.abs(alpha * epsilon - arr), initial=0.0) > COORD_TOL:
                raise ValueError(
                    f"coordinates must be integer multiples of {epsilon}, got {arr}"
                )
            mults.append(tuple(int(a) for a in alpha))
        return cls(epsilon, tuple(mults))


@dataclass(frozen=True)
class Grid:
    """The lattice of change vectors with the given step, one block per layer."""

    epsilon: float
    widths: tuple[int, ...]

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")

    def origin(self) -> ChangeProposal:
        return ChangeProposal(self.epsilon, tuple((0,) * w for w in self.widths))

    def shift(self, proposal: ChangeProposal, layer: int, coord: int, step: int) -> ChangeProposal:
        mults = list(proposal.multiples)
        block = list(mults[layer])
        block[coord] += step
        mults[layer] = tuple(block)
        return ChangeProposal(self.epsilon, tuple(mults))


@dataclass(eq=False)
class TraceEntry:
    proposal: ChangeProposal
    sub_costs: tuple[float, ...] | None
    total: float
    best_total: float

    @property
    def feasible(self) -> bool:
        return self.sub_costs is not None


@dataclass(eq=False)
class SearchTrace:
    entries: list[TraceEntry] = field(default_factory=list)

    def best_total(self) -> float:
        return self.entries[-1].best_total if self.entries else float("inf")

    def __len__(self):
        return len(self.entries)


@dataclass(eq=False)
class ProposalOutcome:
    """Scored proposal: per-sub-network answers and the combined cost."""

    proposal: ChangeProposal
    answers: tuple[SingleLayerAnswer, ...] | None
    sub_costs: tuple[float, ...] | None
    total: float

    @property
    def feasible(self) -> bool:
        return self.answers is not None

    def modified_chain(self, indices) -> SubnetworkChain:
        return SubnetworkChain(tuple(a.subnet for a in self.answers), tuple(indices))


@dataclass
class SearchOptions:
    """All search knobs; file fields and CLI flags mirror these names."""

    epsilon: float = 0.5
    heuristic: str = "greedy"
    norm: str = lp.L1
    timeout_secs: float = 60.0
    seed: int = 0
    separation_indices: tuple[int, ...] = ()
    margin: float = 0.1
    random_radius: float | None = None  # defaults to 5 * epsilon
    mcts_iterations: int = 50
    mcts_depth: int = 3
    mcts_sims: int = 1
    mcts_exploration: float = math.sqrt(2.0)
    max_evals: int | None = None
    backend: str = "lp-final"

    def effective_radius(self) -> float:
        return 5.0 * self.epsilon if self.random_radius is None else self.random_radius


@dataclass(eq=False)
class LayerDelta:
    """A change to one weight matrix of the combined network."""

    weight_index: int
    delta: np.ndarray
    cost: float


@dataclass(eq=False)
class RepairResult:
    status: str
    network: Network | None
    cost: float
    sub_costs: tuple[float, ...] | None
    deltas: list[LayerDelta]
    proposal: ChangeProposal | None
    trace: SearchTrace
    evaluations: int
    wall_time: float


def combine_costs(sub_costs, norm: str) -> float:
    """Total change size across sub-networks: sum under L1, max under Linf."""
    costs = list(sub_costs)
    if norm == lp.L1:
        return float(sum(costs))
    return float(max(costs)) if costs else 0.0


def separation_assignments(chain: SubnetworkChain, points) -> list[list[np.ndarray]]:
    """Post-ReLU separation-layer values of every point, one list per point."""
    per_point = []
    for spec in points:
        v = np.asarray(spec.x, dtype=np.float64)
        values = []
        for sub in chain.subnets[:-1]:
            v = relu(sub.evaluate(v).output)
            values.append(v)
        per_point.append(values)
    return per_point


def evaluate_proposal(
    chain: SubnetworkChain,
    points,
    proposal: ChangeProposal,
    norm: str = lp.L1,
    backend: str = "lp-final",
    base: list[list[np.ndarray]] | None = None,
) -> ProposalOutcome:
    """Score one proposal by solving the induced single-layer queries.

    The first sub-network must map each original input to its adjusted
    separation values; intermediate ones map adjusted values to adjusted
    values; the last must satisfy the point goals. Any infeasible sub-query
    makes the whole proposal infeasible.
    """
    k = len(chain.subnets) - 1
    if base is None:
        base = separation_assignments(chain, points)
    vectors = proposal.vectors()
    if len(vectors) != k:
        raise InvalidProposalError(f"proposal has {len(vectors)} blocks, expected {k}")
    targets = []
    for values in base:
        adjusted = []
        for layer in range(k):
            t = values[layer] + vectors[layer]
            if np.any(t < -COORD_TOL):
                raise InvalidProposalError(
                    "proposal drives a separation-layer assignment negative"
                )
            adjusted.append(np.maximum(t, 0.0))
        targets.append(adjusted)

    answers = []
    sub_costs = []
    for j, sub in enumerate(chain.subnets):
        goals = []
        for p, spec in enumerate(points):
            source = spec.x if j == 0 else targets[p][j - 1]
            goal = spec.goal if j == k else ExactOutputGoal(targets[p][j])
            goals.append((source, goal))
        answer = backend_dispatch(SingleLayerQuery(sub, goals, norm), backend)
        if answer.status != REPAIRED:
            return ProposalOutcome(proposal, None, None, float("inf"))
        answers.append(answer)
        sub_costs.append(answer.cost)
    return ProposalOutcome(
        proposal, tuple(answers), tuple(sub_costs), combine_costs(sub_costs, norm)
    )


class _SearchStop(Exception):
    pass


class JobEvaluator:
    """Memoizing proposal scorer for one repair job.

    Greedy and MCTS revisit lattice points constantly; each fresh score is a
    chain of LP solves, so outcomes are cached by lattice key. Cached hits
    consume no evaluation budget and add no trace entries.
    """

    def __init__(self, chain, points, norm, backend="lp-final"):
        self.chain = chain
        self.points = list(points)
        self.norm = norm
        self.backend = backend
        self.base = separation_assignments(chain, points)
        widths = tuple(sub.output_dim for sub in chain.subnets[:-1])
        self.widths = widths
        mins = [
            np.min([values[layer] for values in self.base], axis=0)
            for layer in range(len(widths))
        ]
        self.layer_mins = mins
        self.cache: dict[tuple, ProposalOutcome] = {}

    def lower_multiples(self, epsilon: float) -> list[np.ndarray]:
        """Per coordinate, the smallest step multiple keeping all points non-negative."""
        return [
            -np.floor((m + COORD_TOL) / epsilon).astype(int) for m in self.layer_mins
        ]

    def is_valid(self, proposal: ChangeProposal) -> bool:
        for layer, m in enumerate(self.layer_mins):
            if np.any(m + proposal.vector(layer) < -COORD_TOL):
                return False
        return True

    def outcome(self, proposal: ChangeProposal) -> tuple[ProposalOutcome, bool]:
        cached = self.cache.get(proposal.key)
        if cached is not None:
            return cached, False
        out = evaluate_proposal(
            self.chain, self.points, proposal, self.norm, self.backend, self.base
        )
        self.cache[proposal.key] = out
        return out, True


class _Driver:
    """Owns the mutable search state: trace, best-so-far, budget and clock."""

    def __init__(self, evaluator: JobEvaluator, options: SearchOptions, deadline: float):
        self.evaluator = evaluator
        self.options = options
        self.deadline = deadline
        self.trace = SearchTrace()
        self.best: ProposalOutcome | None = None
        self.evaluations = 0

    def check_stop(self):
        if time.monotonic() >= self.deadline:
            raise _SearchStop
        if self.options.max_evals is not None and self.evaluations >= self.options.max_evals:
            raise _SearchStop

    def score(self, proposal: ChangeProposal) -> ProposalOutcome:
        cached = self.evaluator.cache.get(proposal.key)
        if cached is not None:
            return cached
        self.check_stop()
        outcome, _ = self.evaluator.outcome(proposal)
        self.evaluations += 1
        if outcome.feasible and (self.best is None or outcome.total < self.best.total):
            self.best = outcome
        best_total = self.best.total if self.best is not None else float("inf")
        self.trace.entries.append(
            TraceEntry(proposal, outcome.sub_costs, outcome.total, best_total)
        )
        return outcome

    def total(self, proposal: ChangeProposal) -> float:
        return self.score(proposal).total


def propose_random(grid: Grid, rng, lower_multiples, radius: float) -> ChangeProposal:
    """Uniform sample of the lattice box of the given radius, kept non-negative.

    The non-negativity constraint is per coordinate, so sampling each
    coordinate uniformly over its admissible multiples is exactly uniform
    over the admissible box points.
    """
    max_mult = int(math.floor(radius / grid.epsilon + COORD_TOL))
    blocks = []
    for layer, width in enumerate(grid.widths):
        lows = np.maximum(lower_multiples[layer], -max_mult)
        block = tuple(
            int(rng.integers(lows[c], max_mult + 1)) for c in range(width)
        )
        blocks.append(block)
    return ChangeProposal(grid.epsilon, tuple(blocks))


def _neighbor_moves(grid: Grid, layers=None):
    chosen = range(len(grid.widths)) if layers is None else layers
    for layer in chosen:
        for coord in range(grid.widths[layer]):
            yield layer, coord, 1
            yield layer, coord, -1


def propose_greedy_step(
    current: ChangeProposal,
    evaluate,
    grid: Grid,
    is_valid,
    layers=None,
) -> tuple[ChangeProposal, bool]:
    """One steepest-descent step over the lattice neighbors of ``current``.

    Neighbors differ from ``current`` by one step in a single coordinate.
    Returns the cheapest feasible neighbor if it strictly beats the current
    cost, else ``current`` with a local-minimum flag.
    """
    current_cost = evaluate(current)
    best = None
    best_cost = float("inf")
    for layer, coord, step in _neighbor_moves(grid, layers):
        candidate = grid.shift(current, layer, coord, step)
        if not is_valid(candidate):
            continue
        cost = evaluate(candidate)
        if cost < best_cost:
            best, best_cost = candidate, cost
    if best is not None and best_cost < current_cost:
        return best, False
    return current, True


class MctsNode:
    """One lattice point in a move's search tree."""

    __slots__ = ("proposal", "parent", "children", "untried", "visits", "self_visits", "reward_sum")

    def __init__(self, proposal: ChangeProposal, parent=None, untried=()):
        self.proposal = proposal
        self.parent = parent
        self.children: list[MctsNode] = []
        self.untried: list = list(untried)
        self.visits = 0
        self.self_visits = 0
        self.reward_sum = 0.0

    @property
    def mean_reward(self) -> float:
        return self.reward_sum / self.visits if self.visits else 0.0


class MctsTree:
    """Monte Carlo tree search for one move over one separation layer.

    Moves are staying put or taking one lattice step in a coordinate of the
    layer, so a node has at most 2 * width + 1 children. Rewards map cost c
    to 1 / (1 + c); infeasible evaluations earn 0. Node statistics aggregate
    the mean reward and drive UCB selection.
    """

    def __init__(self, root_proposal, layer, grid, is_valid, evaluate, rng, options):
        self.layer = layer
        self.grid = grid
        self.is_valid = is_valid
        self.evaluate = evaluate
        self.rng = rng
        self.exploration = options.mcts_exploration
        self.depth = options.mcts_depth
        self.sims = max(1, options.mcts_sims)
        self.feasible_seen = False
        self.root = MctsNode(root_proposal, untried=self._moves(root_proposal))

    def _moves(self, proposal):
        moves = [None]  # staying put is always admissible
        for coord in range(self.grid.widths[self.layer]):
            for step in (1, -1):
                if self.is_valid(self.grid.shift(proposal, self.layer, coord, step)):
                    moves.append((coord, step))
        return moves

    def _apply(self, proposal, move):
        if move is None:
            return proposal
        coord, step = move
        return self.grid.shift(proposal, self.layer, coord, step)

    def iterate(self):
        """One selection / expansion / simulation / backpropagation pass."""
        node = self.root
        while not node.untried and node.children:
            node = self._select_child(node)
        if node.untried:
            pick = int(self.rng.integers(len(node.untried)))
            move = node.untried.pop(pick)
            proposal = self._apply(node.proposal, move)
            child = MctsNode(proposal, parent=node, untried=self._moves(proposal))
            node.children.append(child)
            node = child
        for _ in range(self.sims):
            reward = self._simulate(node.proposal)
            self._backpropagate(node, reward)

    def _select_child(self, node):
        log_visits = math.log(node.visits)
        best, best_score = None, -float("inf")
        for child in node.children:
            score = child.mean_reward + self.exploration * math.sqrt(
                log_visits / child.visits
            )
            if score > best_score:
                best, best_score = child, score
        return best

    def _simulate(self, proposal) -> float:
        walk = proposal
        for _ in range(self.depth):
            moves = self._moves(walk)
            walk = self._apply(walk, moves[int(self.rng.integers(len(moves)))])
        total = self.evaluate(walk)
        if math.isinf(total):
            return 0.0
        self.feasible_seen = True
        return 1.0 / (1.0 + total)

    def _backpropagate(self, node, reward):
        node.self_visits += 1
        while node is not None:
            node.visits += 1
            node.reward_sum += reward
            node = node.parent

    def best_move(self) -> ChangeProposal | None:
        if not self.children_explored() or not self.feasible_seen:
            return None
        best = max(self.root.children, key=lambda c: c.mean_reward)
        return best.proposal

    def children_explored(self) -> bool:
        return bool(self.root.children)


def propose_mcts(
    current: ChangeProposal,
    layer: int,
    grid: Grid,
    is_valid,
    evaluate,
    rng,
    options: SearchOptions,
) -> tuple[ChangeProposal, bool]:
    """Run one MCTS move from ``current`` over the given layer's coordinates.

    Returns the child with the best aggregated reward, or ``current``
    unchanged (progress flag False) when no iterations ran or every
    simulated proposal was infeasible.
    """
    tree = MctsTree(current, layer, grid, is_valid, evaluate, rng, options)
    for _ in range(options.mcts_iterations):
        tree.iterate()
    best = tree.best_move()
    if best is None:
        return current, False
    return best, True


def _run_random(driver: _Driver, grid: Grid, rng):
    lows = driver.evaluator.lower_multiples(grid.epsilon)
    radius = driver.options.effective_radius()
    max_mult = int(math.floor(radius / grid.epsilon + COORD_TOL))
    box_points = math.prod(
        int(max_mult - max(lo, -max_mult) + 1)
        for layer_lows in lows
        for lo in layer_lows
    )
    seen: set = set()
    while True:
        driver.check_stop()
        proposal = propose_random(grid, rng, lows, radius)
        seen.add(proposal.key)
        driver.score(proposal)
        if len(seen) >= box_points:
            return  # every admissible box point has been scored


def _run_greedy(driver: _Driver, grid: Grid, rng):
    lows = driver.evaluator.lower_multiples(grid.epsilon)
    radius = driver.options.effective_radius()
    is_valid = driver.evaluator.is_valid
    current = grid.origin()
    num_layers = len(grid.widths)
    while True:
        driver.check_stop()
        moved = False
        for layer in range(num_layers):
            layers = None if num_layers == 1 else [layer]
            current, local_min = propose_greedy_step(
                current, driver.total, grid, is_valid, layers
            )
            if not local_min:
                moved = True
        if not moved:
            # Local minimum everywhere: restart from a fresh admissible point
            # and keep descending until the budget runs out.
            current = propose_random(grid, rng, lows, radius)
            driver.score(current)


def _run_mcts(driver: _Driver, grid: Grid, rng):
    is_valid = driver.evaluator.is_valid
    current = grid.origin()
    num_layers = len(grid.widths)
    while True:
        driver.check_stop()
        for layer in range(num_layers):
            current, _ = propose_mcts(
                current, layer, grid, is_valid, driver.total, rng, driver.options
            )
            driver.score(current)


def repair(net: Network, points, options: SearchOptions) -> RepairResult:
    """Anytime repair of ``net`` so every point goal holds, at minimal cost.

    Splits the network at ``options.separation_indices``, then proposes and
    scores assignment changes until the timeout or evaluation budget is
    exhausted, and returns the re-combined network of the cheapest feasible
    proposal seen. Each proposal is scored against the unmodified
    sub-networks, so the result is exactly the best single candidate.
    """
    if not points:
        raise ValueError("at least one point is required")
    if options.heuristic not in HEURISTICS:
        raise ValueError(f"heuristic must be one of {HEURISTICS}, got {options.heuristic!r}")
    if options.norm not in lp.NORMS:
        raise ValueError(f"norm must be one of {lp.NORMS}, got {options.norm!r}")
    for spec in points:
        if spec.x.shape[0] != net.input_dim:
            raise ValueError(
                f"point of dimension {spec.x.shape[0]} does not match input width {net.input_dim}"
            )

    start = time.monotonic()
    chain = split(net, options.separation_indices)
    evaluator = JobEvaluator(chain, points, options.norm, options.backend)
    driver = _Driver(evaluator, options, start + max(0.0, options.timeout_secs))
    grid = Grid(options.epsilon, evaluator.widths)
    rng = np.random.default_rng(options.seed)

    runners = {"random": _run_random, "greedy": _run_greedy, "mcts": _run_mcts}
    try:
        driver.check_stop()
        driver.score(grid.origin())  # baseline: keep every separation value
        if evaluator.widths:
            runners[options.heuristic](driver, grid, rng)
        # With no separation layers there is nothing to search: the origin
        # already scored the single final-layer repair.
    except _SearchStop:
        pass

    wall = time.monotonic() - start
    best = driver.best
    if best is None:
        return RepairResult(
            STATUS_NOT_REPAIRED, None, float("inf"), None, [], None,
            driver.trace, driver.evaluations, wall,
        )
    indices = chain.indices
    repaired = best.modified_chain(indices).combine()
    deltas = [
        LayerDelta(idx, answer.delta, answer.cost)
        for idx, answer in zip(chain.final_weight_indices(), best.answers)
    ]
    return RepairResult(
        STATUS_REPAIRED, repaired, best.total, best.sub_costs, deltas,
        best.proposal, driver.trace, driver.evaluations, wall,
    )
