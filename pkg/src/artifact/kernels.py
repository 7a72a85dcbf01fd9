"""Backend selection for the hot loops.

The compiled extension is used when importable, unless ARTIFACT_PURE_PYTHON=1.
"""
from __future__ import annotations

import os

from . import _kernels_py as pure

BACKEND = "python"
_impl = pure
if os.environ.get("ARTIFACT_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled  # type: ignore[attr-defined]
    except ImportError:  # pragma: no cover - depends on the build
        pass
    else:
        _impl = _compiled
        BACKEND = "cython"

gauss_seidel = _impl.gauss_seidel
simulate_jsq = _impl.simulate_jsq
coupling_run = _impl.coupling_run


def get(backend: str):
    """Explicit module for ``backend`` in {"python", "cython"}."""
    if backend == "python":
        return pure
    from . import _kernels  # type: ignore[attr-defined]
    return _kernels
