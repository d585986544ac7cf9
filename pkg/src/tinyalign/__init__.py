"""tinyalign: compact two-stage facial landmark tracking with makeup rendering."""

__version__ = "0.1.0"

from .tensor import Tensor, backward, no_grad  # noqa: F401
