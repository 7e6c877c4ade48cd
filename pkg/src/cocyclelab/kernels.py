"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the numpy
fallback.  Set ``COCYCLELAB_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _kernels_py

if os.environ.get("COCYCLELAB_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl
    except ImportError:
        _impl = _kernels_py

BACKEND = _impl.BACKEND
cumprod_scaled = _impl.cumprod_scaled
qr_accumulate = _impl.qr_accumulate
power_growth = _impl.power_growth
markov_chain = _impl.markov_chain
toral_orbit = _impl.toral_orbit
identity_residual = _impl.identity_residual


def available_backends():
    """Modules implementing the kernel API, fallback first."""
    out = [_kernels_py]
    try:
        from . import _kernels
    except ImportError:
        return out
    out.append(_kernels)
    return out
