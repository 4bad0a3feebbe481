"""Kernel dispatch: the compiled core when it imports, the numpy fallback otherwise.

Set ``SECTORPASS_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("SECTORPASS_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # noqa: F811
        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _pykernels

nonlinear_terms = _impl.nonlinear_terms
count_components = _impl.count_components


def implementations():
    """Both backends keyed by name; ``cython`` is absent when the extension is not built."""
    out = {"python": _pykernels}
    try:
        from . import _ckernels
        out["cython"] = _ckernels
    except ImportError:
        pass
    return out
