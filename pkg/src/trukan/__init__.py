"""TruKAN: truncated-power spline networks with a compact autodiff core.

Layers based on truncated-power + polynomial edge functions, reference
B-spline KAN / SineKAN / dense heads, an AdamW + LookAhead training stack,
pruning and activation export, and an efficiency benchmark harness.
"""

from .tensor import Tensor, backward, no_grad, set_nan_checks
from .basis import KnotSet
from .kernels import backend_name

__version__ = "0.1.0"

__all__ = [
    "Tensor",
    "backward",
    "no_grad",
    "set_nan_checks",
    "KnotSet",
    "backend_name",
    "__version__",
]
