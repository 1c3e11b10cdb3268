"""Hot numeric kernels with a numba fast path and a numpy fallback.

The single performance-critical primitive of the whole package is
clamped multilinear interpolation of a flat row-major value array at a
batch of query points; every scheme sweep reduces to calls of it.  Two
implementations live here:

* a ``numba.njit`` kernel parallelised over query points, and
* a vectorised pure-numpy version with the identical operation order.

Both produce bit-identical results (no fastmath, fixed corner and axis
enumeration order), so the selection is purely a speed choice.  Set the
environment variable ``IMPULSEGAME_BACKEND`` to ``numba`` or ``numpy``
to force one; the default is numba when importable.
"""

from __future__ import annotations

import os

import numpy as np

__all__ = ["interp_batch", "active_backend", "set_threads", "max_threads"]

_ENV_VAR = "IMPULSEGAME_BACKEND"

_requested = os.environ.get(_ENV_VAR, "").strip().lower()
if _requested not in ("", "numba", "numpy"):
    raise ValueError(
        f"{_ENV_VAR} must be 'numba' or 'numpy', got {_requested!r}"
    )

_numba = None
if _requested in ("", "numba"):
    # the default layer probe warns on older TBB builds; workqueue is
    # always available and plenty for desk-scale kernels
    os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")
    try:
        import numba as _numba
    except ImportError:
        if _requested == "numba":
            raise
        _numba = None

_BACKEND = "numba" if _numba is not None else "numpy"


def active_backend() -> str:
    """Name of the kernel backend selected at import time."""
    return _BACKEND


def max_threads() -> int:
    return _numba.config.NUMBA_NUM_THREADS if _numba is not None else 1


def set_threads(n: int) -> int:
    """Set the kernel thread count (clamped to what numba allows)."""
    if _numba is None:
        return 1
    n = max(1, min(int(n), _numba.config.NUMBA_NUM_THREADS))
    _numba.set_num_threads(n)
    return n


def _interp_batch_numpy(values, lo, hi, inv_step, counts, strides, points):
    q, m = points.shape
    top = (counts - 1).astype(np.float64)
    xc = np.minimum(np.maximum(points, lo), hi)
    u = (xc - lo) * inv_step
    u = np.minimum(u, top)
    cell = np.minimum(u.astype(np.int64), counts - 2)
    frac = u - cell
    out = np.zeros(q, dtype=np.float64)
    for corner in range(1 << m):
        w = np.ones(q, dtype=np.float64)
        idx = np.zeros(q, dtype=np.int64)
        for a in range(m):
            bit = (corner >> a) & 1
            w = w * (frac[:, a] if bit else (1.0 - frac[:, a]))
            idx = idx + (cell[:, a] + bit) * strides[a]
        out += w * values[idx]
    return out


_PARALLEL_MIN_POINTS = 4096  # below this, thread launch costs more than it saves

if _BACKEND == "numba":
    from numba import njit, prange

    @njit(cache=True)
    def _interp_batch_serial(values, lo, hi, inv_step, counts, strides, points):  # pragma: no cover - jitted
        q, m = points.shape
        out = np.empty(q, dtype=np.float64)
        cell = np.empty(m, dtype=np.int64)
        frac = np.empty(m, dtype=np.float64)
        for p in range(q):
            for a in range(m):
                x = points[p, a]
                if x < lo[a]:
                    x = lo[a]
                elif x > hi[a]:
                    x = hi[a]
                u = (x - lo[a]) * inv_step[a]
                top = float(counts[a] - 1)
                if u > top:
                    u = top
                c = np.int64(u)
                if c > counts[a] - 2:
                    c = counts[a] - 2
                cell[a] = c
                frac[a] = u - c
            acc = 0.0
            for corner in range(1 << m):
                w = 1.0
                idx = np.int64(0)
                for a in range(m):
                    bit = (corner >> a) & 1
                    w = w * (frac[a] if bit else (1.0 - frac[a]))
                    idx = idx + (cell[a] + bit) * strides[a]
                acc += w * values[idx]
            out[p] = acc
        return out

    @njit(cache=True, parallel=True)
    def _interp_batch_parallel(values, lo, hi, inv_step, counts, strides, points):  # pragma: no cover - jitted
        q, m = points.shape
        out = np.empty(q, dtype=np.float64)
        for p in prange(q):
            cell = np.empty(m, dtype=np.int64)
            frac = np.empty(m, dtype=np.float64)
            for a in range(m):
                x = points[p, a]
                if x < lo[a]:
                    x = lo[a]
                elif x > hi[a]:
                    x = hi[a]
                u = (x - lo[a]) * inv_step[a]
                top = float(counts[a] - 1)
                if u > top:
                    u = top
                c = np.int64(u)
                if c > counts[a] - 2:
                    c = counts[a] - 2
                cell[a] = c
                frac[a] = u - c
            acc = 0.0
            for corner in range(1 << m):
                w = 1.0
                idx = np.int64(0)
                for a in range(m):
                    bit = (corner >> a) & 1
                    w = w * (frac[a] if bit else (1.0 - frac[a]))
                    idx = idx + (cell[a] + bit) * strides[a]
                acc += w * values[idx]
            out[p] = acc
        return out


def interp_batch(values, lo, hi, inv_step, counts, strides, points) -> np.ndarray:
    """Clamped multilinear interpolation at many points.

    ``values`` is the flat row-major node array; ``points`` has shape
    (q, m).  Coordinates outside the box are clamped before
    interpolating, so this never extrapolates.  Every implementation
    (serial njit, parallel njit, numpy) runs the identical per-point
    arithmetic, so the choice never changes results.
    """
    points = np.ascontiguousarray(points, dtype=np.float64)
    values = np.ascontiguousarray(values, dtype=np.float64)
    if _BACKEND == "numba":
        if points.shape[0] >= _PARALLEL_MIN_POINTS:
            return _interp_batch_parallel(values, lo, hi, inv_step, counts, strides, points)
        return _interp_batch_serial(values, lo, hi, inv_step, counts, strides, points)
    return _interp_batch_numpy(values, lo, hi, inv_step, counts, strides, points)
