"""CASH search: three optimizers, ensembling, refit and incremental update."""

from .core import (
    BudgetExhausted,
    EvalRecord,
    Evaluator,
    ScoredModel,
    SearchBudget,
    incumbent_of,
    split_holdout,
    write_history_csv,
)
from .ensemble import (
    ENSEMBLE_METHODS,
    STACKER_KINDS,
    EnsembleModel,
    build_ensemble,
    greedy_selection,
)
from .paradigms import (
    PARADIGMS,
    FittedAutoML,
    evo_search,
    expected_improvement,
    increment,
    random_search_stack,
    refit,
    run_search,
    smbo_search,
)

__all__ = [
    "BudgetExhausted",
    "EvalRecord",
    "Evaluator",
    "ScoredModel",
    "SearchBudget",
    "incumbent_of",
    "split_holdout",
    "write_history_csv",
    "ENSEMBLE_METHODS",
    "STACKER_KINDS",
    "EnsembleModel",
    "build_ensemble",
    "greedy_selection",
    "PARADIGMS",
    "FittedAutoML",
    "evo_search",
    "expected_improvement",
    "increment",
    "random_search_stack",
    "refit",
    "run_search",
    "smbo_search",
]
