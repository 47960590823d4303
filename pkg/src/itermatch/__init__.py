"""Trainable cross-modal matching: self-attention feature enhancement,
cross-attention with gated-memory refinement, K-step iterative matching,
and bidirectional triplet-loss training, on a small float64 autodiff core.
"""

from .autodiff import Adam, Tensor, finite_difference, l2_normalize
from .config import RunConfig
from .errors import ConfigError, DataError, NumericalError

__version__ = "0.1.0"

__all__ = [
    "Adam",
    "Tensor",
    "finite_difference",
    "l2_normalize",
    "RunConfig",
    "ConfigError",
    "DataError",
    "NumericalError",
    "__version__",
]
