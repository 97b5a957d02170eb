"""Integration kernels: numba-jitted with a pure-numpy fallback.

The fallback is selected automatically when numba is unavailable, or
explicitly by setting the environment variable GRIDPI_DISABLE_NUMBA=1.
Both paths run the same source, so results agree to the last bit.
"""

from __future__ import annotations

import os

import numpy as np

# Any state component beyond this magnitude is treated as divergence. [model units]
DIVERGENCE_LIMIT = 1.0e12

_DISABLED = os.environ.get("GRIDPI_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")

try:
    if _DISABLED:
        raise ImportError("numba disabled by GRIDPI_DISABLE_NUMBA")
    from numba import njit

    HAVE_NUMBA = True
except ImportError:
    njit = None
    HAVE_NUMBA = False


def _rk4_affine(mat, offset, h, n_steps, out):
    """Classical fixed-step RK4 for x' = mat @ x + offset.

    out[0] must hold the initial state; steps k = 1..n_steps fill out[k].
    Returns (steps_completed, diverged).  On divergence the partial trace up
    to and including the offending step is kept and the rest is unwritten.
    """
    x = out[0].copy()
    for k in range(n_steps):
        k1 = mat @ x + offset
        k2 = mat @ (x + 0.5 * h * k1) + offset
        k3 = mat @ (x + 0.5 * h * k2) + offset
        k4 = mat @ (x + h * k3) + offset
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[k + 1] = x
        bad = False
        for i in range(x.shape[0]):
            v = x[i]
            if not np.isfinite(v) or v > DIVERGENCE_LIMIT or v < -DIVERGENCE_LIMIT:
                bad = True
        if bad:
            return k + 1, True
    return n_steps, False


rk4_affine_numpy = _rk4_affine
if HAVE_NUMBA:
    rk4_affine_jit = njit(cache=True)(_rk4_affine)
    rk4_affine = rk4_affine_jit
else:
    rk4_affine_jit = None
    rk4_affine = rk4_affine_numpy
