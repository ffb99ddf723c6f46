"""Multi-scale patch network with differential geodesic coding for
short-term flight trajectory prediction, built on a from-scratch
float64 autodiff core."""

from .tensor import Tensor, no_grad
from .geo import EarthModel, GeoPoint, SignedDelta

__version__ = "0.1.0"

__all__ = [
    "Tensor",
    "no_grad",
    "EarthModel",
    "GeoPoint",
    "SignedDelta",
    "__version__",
]
