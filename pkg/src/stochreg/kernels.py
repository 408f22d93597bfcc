"""Selects the simulation kernels at import time.

The compiled ``_kernels`` extension is used when it was built; otherwise,
or when ``STOCHREG_PURE_PYTHON=1`` is set, the numpy versions in
``_fallback`` take over. Both expose ``expm_pade`` and ``propagate`` with
identical semantics.
"""
import os

from . import _fallback

BACKEND = "python"
_impl = _fallback
if os.environ.get("STOCHREG_PURE_PYTHON", "") != "1":
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]
        BACKEND = "cython"
    except ImportError:
        _impl = _fallback

expm_pade = _impl.expm_pade
propagate = _impl.propagate

__all__ = ["BACKEND", "expm_pade", "propagate"]
