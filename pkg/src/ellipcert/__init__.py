"""Computer-assisted existence and positivity certificates for -Laplace(u) = f(u)."""

from .interval import Interval, IntervalArray

__version__ = "0.1.0"

__all__ = ["Interval", "IntervalArray", "__version__"]
