"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The active backend is chosen once at import time (see :mod:`xpolab._accel`).
Both implementations stay importable as :mod:`._numpy` / :mod:`._numba` so the
test-suite and ``benchmarks/bench_kernels.py`` can compare them directly.
"""

from __future__ import annotations

import numpy as np

from .._accel import USE_NUMBA

if USE_NUMBA:
    from . import _numba as _impl

    BACKEND = "numba"
else:
    from . import _numpy as _impl

    BACKEND = "numpy"

path_logprob = _impl.path_logprob
class_path_logprob = _impl.class_path_logprob
sigmoid_gap_worst = _impl.sigmoid_gap_worst
sec_exhaustive = _impl.sec_exhaustive
loglinear_value_grad = _impl.loglinear_value_grad
loglinear_descent = _impl.loglinear_descent



def sparse_features(phi):
    """Pack a dense ``(S, A, d)`` feature array into padded index/value arrays.

    The width is the largest number of nonzeros in any ``phi(s, a)``; shorter
    rows are padded with index 0 and value 0, which contributes nothing.
    """
    phi = np.asarray(phi, dtype=float)
    nz = phi != 0.0
    width = max(1, int(nz.sum(axis=2).max(initial=0)))
    n_s, n_a, _ = phi.shape
    idx = np.zeros((n_s, n_a, width), dtype=np.int64)
    val = np.zeros((n_s, n_a, width))
    for s in range(n_s):
        for a in range(n_a):
            cols = np.flatnonzero(nz[s, a])
            idx[s, a, : cols.size] = cols
            val[s, a, : cols.size] = phi[s, a, cols]
    return idx, val


__all__ = [
    "BACKEND",
    "sparse_features",
    "path_logprob",
    "class_path_logprob",
    "sigmoid_gap_worst",
    "sec_exhaustive",
    "loglinear_value_grad",
    "loglinear_descent",
]
