"""Depthwise separable convolutions, the Xception graph, and a numpy training harness."""

from .arch import ArchSpec, build_named, build_xception, report_costs, structure, toy_xception
from .errors import XsepError
from .model import Model, build_model
from .params import ParamStore
from .tensor import Rng

__version__ = "0.1.0"

__all__ = ["ArchSpec", "Model", "ParamStore", "Rng", "XsepError", "build_model", "build_named",
           "build_xception", "report_costs", "structure", "toy_xception", "__version__"]
