"""Block-oriented system identification for soft resistive strain sensors.

Linear, Hammerstein, Wiener and Wiener-Hammerstein models map the relative
resistance change of a piezoresistive foam to the strain of the actuator it
is embedded in.
"""
__version__ = "0.1.0"

from .blockmodel import BlockModel, Kind, ModelBundle, PiecewiseLinearMap, load_model, save_model, simulate_model
from .datasets import ResistanceTrace, Role, TimeSeriesDataset, compute_resistance_change, load_dataset, normalize_inputs, save_dataset
from .estimate import (
    EstimationProblem,
    SearchConfig,
    estimate,
    estimate_block,
    estimate_linear,
    estimate_miso_bundle,
    estimate_wh,
    evaluate_model,
    select_best,
)
from .lti import TransferFunction, simulate_tf
from .metrics import nrmse_fit, scaled_rms

__all__ = [
    "__version__",
    "BlockModel", "Kind", "ModelBundle", "PiecewiseLinearMap", "load_model", "save_model", "simulate_model",
    "ResistanceTrace", "Role", "TimeSeriesDataset", "compute_resistance_change", "load_dataset",
    "normalize_inputs", "save_dataset",
    "EstimationProblem", "SearchConfig", "estimate", "estimate_block", "estimate_linear",
    "estimate_miso_bundle", "estimate_wh", "evaluate_model", "select_best",
    "TransferFunction", "simulate_tf", "nrmse_fit", "scaled_rms",
]
