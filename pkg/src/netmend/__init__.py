"""Minimal multi-layer weight repair for feed-forward ReLU networks."""

from .constraints import (
    ClassificationGoal,
    ExactOutputGoal,
    LinearGoal,
    PointSpec,
    check_satisfied,
    encode_classification,
    encode_exact_output,
)
from .lp import LpSolution, solve_min_norm
from .model_io import (
    ParseError,
    load_job,
    load_labeled_set,
    load_model,
    measure_accuracy,
    save_model,
)
from .network import (
    ActivationTrace,
    InvalidChainError,
    InvalidSplitError,
    Network,
    ShapeError,
    SubnetworkChain,
    combine,
    split,
)
from .search import (
    ChangeProposal,
    Grid,
    RepairResult,
    SearchOptions,
    evaluate_proposal,
    propose_greedy_step,
    propose_mcts,
    propose_random,
    repair,
)
from .single_layer import (
    SingleLayerAnswer,
    SingleLayerQuery,
    backend_dispatch,
    modify_final_layer,
    register_backend,
)

__version__ = "0.1.0"

__all__ = [
    "ActivationTrace",
    "ChangeProposal",
    "ClassificationGoal",
    "ExactOutputGoal",
    "Grid",
    "InvalidChainError",
    "InvalidSplitError",
    "LinearGoal",
    "LpSolution",
    "Network",
    "ParseError",
    "PointSpec",
    "RepairResult",
    "SearchOptions",
    "ShapeError",
    "SingleLayerAnswer",
    "SingleLayerQuery",
    "SubnetworkChain",
    "backend_dispatch",
    "check_satisfied",
    "combine",
    "encode_classification",
    "encode_exact_output",
    "evaluate_proposal",
    "load_job",
    "load_labeled_set",
    "load_model",
    "measure_accuracy",
    "modify_final_layer",
    "propose_greedy_step",
    "propose_mcts",
    "propose_random",
    "register_backend",
    "repair",
    "save_model",
    "solve_min_norm",
    "split",
]
