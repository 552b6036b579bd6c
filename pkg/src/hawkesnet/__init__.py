"""Sparse network estimation and background testing for Hawkes processes."""

__version__ = "0.1.0"

from .design import DesignBuilder, DesignCache, build_design, compute_features
from .errors import (HawkesNetError, InternalInconsistencyError, InvalidDimensionError,
                     InvalidIntervalError, NumericError, ResolutionError,
                     SimulationDivergedError, SingularDesignError, UndefinedKappaError,
                     UnstableModelError)
from .estimator import NodeFit, fit_node, fit_path, kkt_residuals, refit
from .inference import (BackgroundTest, TestConfig, chi_square_upper_tail,
                        constant_background_basis, test_all_nodes, test_background)
from .metrics import EvalReport, FittedModel, evaluate, mse_background, mse_transfer, \
    selection_scores
from .model import (BackgroundFunction, ModelSpec, TransferFunction, mean_intensity_bound,
                    omega_matrix, preset, random_network)
from .selection import GicRecord, gic, select_basis_dims, select_eta
from .simulator import EventData, simulate, simulate_iterative
from .spline_basis import SplineBasis, eval_basis, gram_matrix, make_basis

__all__ = [
    "BackgroundFunction", "BackgroundTest", "DesignBuilder", "DesignCache", "EvalReport",
    "EventData", "FittedModel", "GicRecord", "HawkesNetError", "InternalInconsistencyError",
    "InvalidDimensionError", "InvalidIntervalError", "ModelSpec", "NodeFit", "NumericError",
    "ResolutionError", "SimulationDivergedError", "SingularDesignError", "SplineBasis",
    "TestConfig", "TransferFunction", "UndefinedKappaError", "UnstableModelError",
    "build_design", "chi_square_upper_tail", "compute_features", "constant_background_basis",
    "eval_basis", "evaluate", "fit_node", "fit_path", "gic", "gram_matrix", "kkt_residuals",
    "make_basis", "mean_intensity_bound", "mse_background", "mse_transfer", "omega_matrix",
    "preset", "random_network", "refit", "select_basis_dims", "select_eta",
    "selection_scores", "simulate", "simulate_iterative", "test_all_nodes", "test_background",
]
