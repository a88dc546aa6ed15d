"""Kernel backend selection.

The compiled Cython extension is preferred when it imported cleanly; the
numpy implementation is the fallback. AFRSEG_BACKEND=numpy|compiled forces
a choice (forcing "compiled" raises if the extension is unavailable).
"""

import os

from . import _kernels_np

_choice = os.environ.get("AFRSEG_BACKEND", "auto").lower()
if _choice not in ("auto", "numpy", "compiled"):
    raise RuntimeError(f"AFRSEG_BACKEND must be auto, numpy, or compiled, got {_choice!r}")

_impl = None
if _choice in ("auto", "compiled"):
    try:
        from . import _kernels as _impl
    except ImportError:
        if _choice == "compiled":
            raise RuntimeError("AFRSEG_BACKEND=compiled but the extension is not built")
if _impl is None:
    _impl = _kernels_np

BACKEND = _impl.BACKEND_NAME

conv2d_forward = _impl.conv2d_forward
conv2d_backward = _impl.conv2d_backward
depthwise_forward = _impl.depthwise_forward
depthwise_backward_input = _impl.depthwise_backward_input

# always available regardless of backend; used by resize and tests
reflect_indices = _kernels_np.reflect_indices
pad_reflect = _kernels_np.pad_reflect
