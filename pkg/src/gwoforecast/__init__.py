"""GWO-calibrated recurrent forecasters and a GWO-weighted ensemble for multi-step Brent price forecasting."""

from .data import FeatureSet, PreparedData, SplitPlan, make_windows, prepare
from .ensemble import blend, optimize_weights
from .forecasters import ArchitectureId, HyperParams, build, fit, predict
from .gwo import Categorical, Continuous, GwoConfig, Integer, SearchSpace, Trace, gwo_optimize
from .metrics import MetricReport, mae, mape, mse, mspe, r2, rmse

__version__ = "0.1.0"
