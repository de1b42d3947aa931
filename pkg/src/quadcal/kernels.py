"""Backend selection for the hot kernels.

The compiled extension is used when it was built; otherwise the numpy
implementation. Set ``QUADCAL_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _pykernels

if os.environ.get("QUADCAL_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernels
else:
    try:
        from . import _ckernels as _impl
    except ImportError:
        _impl = _pykernels

BACKEND = "cython" if _impl is not _pykernels else "python"

nll_and_grad = _impl.nll_and_grad
corrected_logits = _impl.corrected_logits


def compiled_available() -> bool:
    try:
        from . import _ckernels  # noqa: F401
    except ImportError:
        return False
    return True
