"""Kernel backend selection.

The compiled extension is used when it imports; ``MAGPINN_PURE_PYTHON=1``
forces the numpy fallback.
"""
import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("MAGPINN_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py

CORE, WINDING, AIR = _kernels_py.CORE, _kernels_py.WINDING, _kernels_py.AIR

classify = _impl.classify
steel_eval = _impl.steel_eval
element_tangent = _impl.element_tangent
act_forward = _impl.act_forward
act_backward = _impl.act_backward
gate_forward = _impl.gate_forward
gate_backward = _impl.gate_backward
