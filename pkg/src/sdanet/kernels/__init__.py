"""Convolution kernel backends.

The compiled extension is used when it imports cleanly; otherwise the
numpy fallback takes over. Set SDANET_KERNELS=native or SDANET_KERNELS=numpy
to force a choice (forcing the native backend when it is not built raises).
"""

import os

from ..errors import ConfigError
from . import _numpy

_choice = os.environ.get("SDANET_KERNELS", "").strip().lower()

if _choice == "numpy":
    _impl = _numpy
elif _choice == "native":
    from . import _native as _impl
elif _choice == "":
    try:
        from . import _native as _impl
    except ImportError:
        _impl = _numpy
else:
    raise ConfigError(
        f"unknown kernel backend {_choice!r}; expected 'native' or 'numpy'")

BACKEND = _impl.BACKEND
conv2d_forward = _impl.conv2d_forward
conv2d_backward_input = _impl.conv2d_backward_input
conv2d_backward_weight = _impl.conv2d_backward_weight

__all__ = ["BACKEND", "conv2d_forward", "conv2d_backward_input",
           "conv2d_backward_weight"]
