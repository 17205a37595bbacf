"""Numeric kernel backend selection.

Prefers the compiled Cython extension and falls back to the pure-numpy
implementation when the extension was not built.  Set the environment
variable ``SKILLFORM_NO_EXT=1`` to force the fallback (used by the
benchmark to compare both).
"""

import os

from . import numpy_backend

if os.environ.get("SKILLFORM_NO_EXT"):
    _impl = numpy_backend
    BACKEND = "numpy"
else:
    try:
        from . import _core as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        _impl = numpy_backend
        BACKEND = "numpy"

translog_transition = _impl.translog_transition
ces_parts = _impl.ces_parts
ces_transition = _impl.ces_transition
mixture_logpdf = _impl.mixture_logpdf

__all__ = [
    "BACKEND",
    "numpy_backend",
    "translog_transition",
    "ces_parts",
    "ces_transition",
    "mixture_logpdf",
]
