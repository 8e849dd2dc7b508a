"""Kernel backend selection.

The compiled extension is used when it was built; set ``ARQOPT_PURE_PYTHON=1``
to force the pure-Python kernels.
"""

import os

from . import _kernels_py as python_kernels

compiled_kernels = None
if not os.environ.get("ARQOPT_PURE_PYTHON"):
    try:
        from . import _kernels as compiled_kernels
    except ImportError:
        compiled_kernels = None

_active = compiled_kernels or python_kernels
BACKEND = "compiled" if compiled_kernels is not None else "python"

eliminate = _active.eliminate
lex_filter = _active.lex_filter
run_slots = _active.run_slots


def get(backend: str | None = None):
    """Kernel module for ``"compiled"``, ``"python"`` or the default (None)."""
    if backend is None:
        return _active
    if backend == "python":
        return python_kernels
    if backend == "compiled":
        if compiled_kernels is None:
            raise RuntimeError("compiled kernels are not available")
        return compiled_kernels
    raise ValueError(f"unknown backend {backend!r}")
