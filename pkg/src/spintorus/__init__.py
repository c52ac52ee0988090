"""Fused transfer matrices, T-Q relations and Bethe-ansatz equations of the su(n) spin torus."""

__version__ = "0.1.0"

from .model import InvalidModelError, ModelSpec, Twist  # noqa: E402
from .fusion import TransferFamily  # noqa: E402
from .tq import TQAnsatz  # noqa: E402

__all__ = ["InvalidModelError", "ModelSpec", "Twist", "TransferFamily", "TQAnsatz", "__version__"]
