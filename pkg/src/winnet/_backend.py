"""Kernel backend selection.

The compiled ``_ckernels`` extension is used when it imports; otherwise the
numpy implementation in ``_pykernels`` takes over. Setting the environment
variable ``WINNET_PURE_PYTHON=1`` forces the fallback.
"""
import os

from . import _pykernels

compiled = None
if os.environ.get("WINNET_PURE_PYTHON") != "1":
    try:
        from . import _ckernels as compiled
    except ImportError:
        compiled = None

if compiled is not None:
    NAME = "cython"
    im2col = compiled.im2col
    col2im = compiled.col2im
else:
    NAME = "numpy"
    im2col = _pykernels.im2col
    col2im = _pykernels.col2im
