"""Quality-Diversity optimisation and evaluation under noisy fitness and descriptors."""

from .algorithms import AlgorithmConfig, BudgetPlan, GenerationReport, Optimizer, Variant, plan_budget
from .archive import AdditionRule, Archive, Selector
from .core import (
    ConfigError,
    ContractError,
    EmptyArchiveError,
    Evaluation,
    RecordBatch,
    RngStream,
    SolutionRecord,
    fresh_record,
    update_running_mean,
)
from .metrics import (
    CorrectionMode,
    ReevalResult,
    corrected_archive,
    estimator_study,
    qd_score_loss,
    reproducibility_score,
    time_to_convergence,
)
from .tasks import ArmTask, HetSphereTask, NoiseModel, evaluate_batch, make_task
from .tessellation import Centroids, generate_cvt, nearest_centroid
from .variation import VariationParams, iso_line_mutation

__version__ = "0.1.0"

__all__ = [
    "AlgorithmConfig",
    "BudgetPlan",
    "GenerationReport",
    "Optimizer",
    "Variant",
    "plan_budget",
    "AdditionRule",
    "Archive",
    "Selector",
    "ConfigError",
    "ContractError",
    "EmptyArchiveError",
    "Evaluation",
    "RecordBatch",
    "RngStream",
    "SolutionRecord",
    "fresh_record",
    "update_running_mean",
    "CorrectionMode",
    "ReevalResult",
    "corrected_archive",
    "estimator_study",
    "qd_score_loss",
    "reproducibility_score",
    "time_to_convergence",
    "ArmTask",
    "HetSphereTask",
    "NoiseModel",
    "evaluate_batch",
    "make_task",
    "Centroids",
    "generate_cvt",
    "nearest_centroid",
    "VariationParams",
    "iso_line_mutation",
]
