"""Hot inner loops: Cholesky completion, G-Wishart Metropolis sweeps and the
latent log-risk sweep of the surveillance model.

The compiled Cython module is used when it imports; otherwise the
pure-Python implementation is selected. Set ``MWGGM_PURE_PYTHON=1`` to force
the fallback (the benchmark and the backend-equivalence tests use this).
"""
from __future__ import annotations

import os

from . import _pykernels

python_backend = _pykernels

if os.environ.get("MWGGM_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _pykernels
        BACKEND = "python"

compiled_backend = _impl if BACKEND == "cython" else None

complete_rows = _impl.complete_rows
row_quad = _impl.row_quad
mh_sweep = _impl.mh_sweep
theta_sweep = _impl.theta_sweep

__all__ = ["BACKEND", "complete_rows", "row_quad", "mh_sweep", "theta_sweep",
           "python_backend", "compiled_backend"]
