"""Hot loops, compiled with Cython when available.

Set ``CIRCUITREC_PURE_PYTHON=1`` to force the pure-Python implementations.
``BACKEND`` names the implementation picked at import; ``python_kernels``
and ``compiled_kernels`` expose both sides for benchmarks and tests.
"""
import os
from types import SimpleNamespace

from . import _pyfh, _pypool

python_kernels = SimpleNamespace(
    fh_merge=_pyfh.fh_merge,
    maxpool_forward=_pypool.maxpool_forward,
    maxpool_backward=_pypool.maxpool_backward,
    relu_forward=_pypool.relu_forward,
    relu_backward=_pypool.relu_backward,
)

try:
    from . import _cfh, _cpool
except ImportError:
    compiled_kernels = None
else:
    compiled_kernels = SimpleNamespace(
        fh_merge=_cfh.fh_merge,
        maxpool_forward=_cpool.maxpool_forward,
        maxpool_backward=_cpool.maxpool_backward,
        relu_forward=_cpool.relu_forward,
        relu_backward=_cpool.relu_backward,
    )

if compiled_kernels is None or os.environ.get("CIRCUITREC_PURE_PYTHON"):
    _active = python_kernels
    BACKEND = "python"
else:
    _active = compiled_kernels
    BACKEND = "cython"

fh_merge = _active.fh_merge
maxpool_forward = _active.maxpool_forward
maxpool_backward = _active.maxpool_backward
relu_forward = _active.relu_forward
relu_backward = _active.relu_backward

__all__ = [
    "BACKEND", "compiled_kernels", "python_kernels", "fh_merge",
    "maxpool_forward", "maxpool_backward", "relu_forward", "relu_backward",
]
