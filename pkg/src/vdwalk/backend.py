"""Selects the compiled core when available, the numpy fallback otherwise.

Set VDWALK_PURE_PYTHON=1 to force the fallback (used by the equality
tests and the benchmark).  Both implementations are bit-for-bit
identical; only throughput differs.
"""

from __future__ import annotations

import os

import numpy as np

from . import _python

if os.environ.get("VDWALK_PURE_PYTHON"):
    _impl = _python
    BACKEND = "python"
else:
    try:
        from . import _native as _impl  # type: ignore[no-redef]
        BACKEND = "native"
    except ImportError:
        _impl = _python
        BACKEND = "python"


def fill_states(indptr, indices, degree, darning_cum, absorbing, x0, u, n_events):
    return _impl.fill_states(
        np.ascontiguousarray(indptr, dtype=np.int64),
        np.ascontiguousarray(indices, dtype=np.int64),
        np.ascontiguousarray(degree, dtype=np.int64),
        np.ascontiguousarray(darning_cum, dtype=np.float64),
        np.ascontiguousarray(absorbing, dtype=np.uint8),
        int(x0),
        np.ascontiguousarray(u, dtype=np.float64),
        np.ascontiguousarray(n_events, dtype=np.int64),
    )


def pairwise_rho_max(px, py, rho_norm, kind, idx):
    return _impl.pairwise_rho_max(
        np.ascontiguousarray(px, dtype=np.float64),
        np.ascontiguousarray(py, dtype=np.float64),
        np.ascontiguousarray(rho_norm, dtype=np.float64),
        np.ascontiguousarray(kind, dtype=np.uint8),
        np.ascontiguousarray(idx, dtype=np.int64),
    )
