"""Decision-forest heads over a fully-connected backbone, trained end to end
with dynamic soft weight pruning, plus a hard-pruning baseline, synthetic
noise-robustness benchmarks, and metric reporting.
"""

from .data import Dataset, SyntheticSpec, Task
from .errors import (DataError, DnspnError, MetricError, NumericError,
                     ParameterError, ShapeError, UsageError)
from .numeric import RngState
from .pruning import PruneConfig
from .training import (Model, TrainConfig, build_forest_model,
                       build_softmax_model, evaluate_model, fit, predict)

__all__ = [
    "Dataset", "SyntheticSpec", "Task", "RngState", "PruneConfig",
    "Model", "TrainConfig", "build_forest_model", "build_softmax_model",
    "evaluate_model", "fit", "predict",
    "DnspnError", "ShapeError", "ParameterError", "UsageError", "DataError",
    "NumericError", "MetricError",
]

__version__ = "0.1.0"
