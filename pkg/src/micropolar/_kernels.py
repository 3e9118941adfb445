"""Hot per-mode kernels with numba acceleration and a pure-numpy fallback.

The inner loop of the exponential integrator applies one small dense complex
matrix per Fourier mode (3x3 in 2D, 6x6 in 3D) to the stacked state vector,
several times per step.  That batched matvec and the fused RK4 combination
are the only places where an explicit mode loop beats vectorized numpy, so
they live here with two interchangeable backends.

Backend selection: numba is used when importable unless the environment
variable ``MICROPOLAR_NUMBA`` is set to ``0`` (any other value, or unset,
prefers numba).  ``set_backend`` overrides at runtime; ``benchmarks/`` times
the two implementations against each other.
"""

import os

import numpy as np

# workqueue is always available and keeps threaded results reproducible;
# the default TBB probe warns on older TBB builds
os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAS_NUMBA = False

_env = os.environ.get("MICROPOLAR_NUMBA", "")
_BACKEND = "numba" if (HAS_NUMBA and _env != "0") else "numpy"


def set_backend(name):
    """Force the kernel backend ('numba' or 'numpy'). Returns the old name."""
    global _BACKEND
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown kernel backend {name!r}")
    if name == "numba" and not HAS_NUMBA:
        raise RuntimeError("numba backend requested but numba is not importable")
    old = _BACKEND
    _BACKEND = name
    return old


def get_backend():
    return _BACKEND


def _apply_mode_matrices_numpy(mats, vecs):
    return np.einsum("mij,mj->mi", mats, vecs)


def _rk4_combine_numpy(ez, ek1, e2k23, k4, dt):
    return ez + (dt / 6.0) * (ek1 + 2.0 * e2k23 + k4)


if HAS_NUMBA:
    from numba import prange

    # prange is safe here: every output element is written by exactly one
    # iteration, so results are identical for any thread count.
    @njit(cache=True, parallel=True)
    def _apply_mode_matrices_numba(mats, vecs):  # pragma: no cover - compiled
        m, c = vecs.shape
        out = np.empty_like(vecs)
        for i in prange(m):
            for r in range(c):
                acc = 0.0 + 0.0j
                for s in range(c):
                    acc += mats[i, r, s] * vecs[i, s]
                out[i, r] = acc
        return out

    @njit(cache=True, parallel=True)
    def _rk4_combine_numba(ez, ek1, e2k23, k4, dt):  # pragma: no cover
        m, c = ez.shape
        out = np.empty_like(ez)
        w = dt / 6.0
        for i in prange(m):
            for r in range(c):
                out[i, r] = ez[i, r] + w * (ek1[i, r] + 2.0 * e2k23[i, r] + k4[i, r])
        return out


def apply_mode_matrices(mats, vecs):
    """Batched matvec: out[m] = mats[m] @ vecs[m] for stacked complex matrices."""
    if _BACKEND == "numba":
        return _apply_mode_matrices_numba(
            np.ascontiguousarray(mats), np.ascontiguousarray(vecs)
        )
    return _apply_mode_matrices_numpy(mats, vecs)


def rk4_combine(ez, ek1, e2k23, k4, dt):
    """Fused Lawson-RK4 update: ez + dt/6 * (ek1 + 2*e2k23 + k4)."""
    if _BACKEND == "numba":
        return _rk4_combine_numba(
            np.ascontiguousarray(ez),
            np.ascontiguousarray(ek1),
            np.ascontiguousarray(e2k23),
            np.ascontiguousarray(k4),
            float(dt),
        )
    return _rk4_combine_numpy(ez, ek1, e2k23, k4, dt)
