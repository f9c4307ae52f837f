"""Volterra reservoir kernel: recursive evaluation, Gram matrices, ridge forecasting."""
from .baseline import BaselineParams, baseline_gram, baseline_kernel
from .errors import (
    ConfigurationError,
    DataError,
    DimensionError,
    InputBoundError,
    NumericalError,
    ParameterError,
)
from .regression import Forecast, RidgeModel, cumulative_mape, mape, ridge_fit, ridge_predict
from .sequence import (
    SampleSet,
    Sequence,
    Window,
    delay,
    make_rolling_windows,
    nested_truncations,
    project_last,
    sup_norm,
)
from .volterra import (
    GramMatrix,
    KernelParams,
    gram_extend,
    gram_pairwise,
    gram_streaming,
    kernel_pair,
    kernel_sum,
    validate,
)

__version__ = "0.1.0"
