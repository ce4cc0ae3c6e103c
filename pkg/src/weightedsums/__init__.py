"""Monte Carlo and exact-enumeration tools for the distribution of weighted sums
``<X, theta>`` of isotropic random vectors, over directions on the unit sphere."""

__version__ = "0.1.0"

from .exceptions import (DegenerateInputError, InvalidArgumentError, NumericFailureError,
                         ResourceLimitError, UnsupportedError, WeightedSumsError)
from .zoo import DistributionModel, enumerate_support, exact_metadata, sample_batch
from .sphere import WeightedSumProjector, sample_directions
from .functionals import CorrelationFunctionals, SecondOrderCorrelation, lambda_power
from .charfn import CharacteristicFunctionProfile, cf_profile
from .experiments import ExperimentConfig, avg_kolmogorov, rate_sweep

__all__ = [
    "DegenerateInputError", "InvalidArgumentError", "NumericFailureError",
    "ResourceLimitError", "UnsupportedError", "WeightedSumsError",
    "DistributionModel", "enumerate_support", "exact_metadata", "sample_batch",
    "WeightedSumProjector", "sample_directions",
    "CorrelationFunctionals", "SecondOrderCorrelation", "lambda_power",
    "CharacteristicFunctionProfile", "cf_profile",
    "ExperimentConfig", "avg_kolmogorov", "rate_sweep",
]
