"""Backend selection for the hot loops.

Prefers the compiled extension when importable; falls back to the NumPy
implementation.  Set RODFLOW_FORCE_PYTHON=1 to force the fallback (used by
the cross-checking tests and the benchmark).
"""
from __future__ import annotations

import os

from . import _pycore

if os.environ.get("RODFLOW_FORCE_PYTHON", "0") == "1":
    core = _pycore
else:
    try:
        from . import _fastcore as core  # type: ignore[no-redef]
    except ImportError:
        core = _pycore

BACKEND = core.BACKEND_NAME

heun_paths = core.heun_paths
euler_ito_paths = core.euler_ito_paths
pair_strain = core.pair_strain
