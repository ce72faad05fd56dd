"""Adaptive-sparse polynomial dimensional decomposition for uncertainty quantification."""

__version__ = "0.1.0"

from .adaptive import AdaptiveConfig, RankingError, build_truncated, run_adaptive
from .evaluation import BudgetExceeded, ModelEvaluationError, ModelEvaluator
from .fsi import fsi_point_count, fsi_rule
from .models import Example1, ExternalModel, SpringMassSystem
from .orthopoly import OrthonormalBasis, build_basis
from .postproc import crude_mcs, embedded_mcs, tolerance_sweep
from .qmc import SamplingEngine, SobolSequence
from .quadrature import FsiEngine, FullGridEngine, grid_point_count
from .random_input import Custom, Gaussian, Lognormal, RandomInput, Uniform
from .store import CoefficientStore, SurrogateModel, count_adaptive, count_truncated

__all__ = [
    "__version__",
    "AdaptiveConfig",
    "RankingError",
    "build_truncated",
    "run_adaptive",
    "BudgetExceeded",
    "ModelEvaluationError",
    "ModelEvaluator",
    "fsi_point_count",
    "fsi_rule",
    "Example1",
    "ExternalModel",
    "SpringMassSystem",
    "OrthonormalBasis",
    "build_basis",
    "crude_mcs",
    "embedded_mcs",
    "tolerance_sweep",
    "SamplingEngine",
    "SobolSequence",
    "FsiEngine",
    "FullGridEngine",
    "grid_point_count",
    "Custom",
    "Gaussian",
    "Lognormal",
    "RandomInput",
    "Uniform",
    "CoefficientStore",
    "SurrogateModel",
    "count_adaptive",
    "count_truncated",
]
