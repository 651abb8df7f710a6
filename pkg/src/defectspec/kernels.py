"""Kernel backend selection.

The compiled extension is used when it imports cleanly; otherwise the numpy
versions in :mod:`defectspec._kernels_py` take over. Setting the environment
variable ``DEFECTSPEC_PURE_PYTHON=1`` forces the fallback.
"""
import os

from . import _kernels_py

if os.environ.get("DEFECTSPEC_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

fc_matrix = _impl.fc_matrix
render_lines = _impl.render_lines
cos2_moments = _impl.cos2_moments


def available_backends():
    """Return ``{name: module}`` for every importable backend."""
    out = {"python": _kernels_py}
    try:
        from . import _ckernels
        out["cython"] = _ckernels
    except ImportError:
        pass
    return out
