"""DoA estimation and model-order selection for antenna arrays with subarray sampling."""

__version__ = "0.1.0"

from .geometry import ArrayGeometry, SubarrayScheme, steering_derivative, steering_vector
from .results import Estimate
from .simulation import SampleCovSet, Scenario, ScenarioRanges, draw_scenario, sample_covariances

__all__ = [
    "ArrayGeometry",
    "Estimate",
    "SampleCovSet",
    "Scenario",
    "ScenarioRanges",
    "SubarrayScheme",
    "__version__",
    "draw_scenario",
    "sample_covariances",
    "steering_derivative",
    "steering_vector",
]
