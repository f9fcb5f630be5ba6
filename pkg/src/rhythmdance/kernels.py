"""Selective-scan kernel dispatch.

The compiled extension is used when it imports; otherwise the numpy fallback.
Set ``RHYTHMDANCE_PURE_PYTHON=1`` to force the fallback.
"""
import os

import numpy as np

from . import _scan_py

BACKEND = "python"
_impl = _scan_py

if os.environ.get("RHYTHMDANCE_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _scan_ext as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _scan_py


def _c(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def scan_forward(u, delta, A, Bm, C, Dskip, impl=None):
    impl = impl or _impl
    return impl.scan_forward(_c(u), _c(delta), _c(A), _c(Bm), _c(C), _c(Dskip))


def scan_backward(dy, u, delta, A, Bm, C, Dskip, hs, impl=None):
    impl = impl or _impl
    return impl.scan_backward(_c(dy), _c(u), _c(delta), _c(A), _c(Bm), _c(C), _c(Dskip), _c(hs))


def backends():
    """Importable kernel modules by name, for tests and benchmarks."""
    found = {"python": _scan_py}
    try:
        from . import _scan_ext

        found["cython"] = _scan_ext
    except ImportError:
        pass
    return found
