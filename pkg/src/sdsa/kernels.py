"""Selects the GRU time-loop backend at import.

The compiled ``_gru_core`` extension is used when it was built; otherwise the
numpy loop in ``_gru_py``. Set ``SDSA_PURE_PYTHON=1`` to force the fallback.
"""
import os

import numpy as np

from . import _gru_py

BACKEND = "python"
_impl = _gru_py

if os.environ.get("SDSA_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _gru_core
    except ImportError:
        pass
    else:
        _impl = _gru_core
        BACKEND = "compiled"


def _c(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def gru_forward(A, U, h0, backend=None):
    impl = _gru_py if backend == "python" else _impl
    return impl.gru_forward(_c(A), _c(U), _c(h0))


def gru_backward(dHs, Hs, Z, R, HT, h0, U, backend=None):
    impl = _gru_py if backend == "python" else _impl
    return impl.gru_backward(_c(dHs), _c(Hs), _c(Z), _c(R), _c(HT), _c(h0), _c(U))
