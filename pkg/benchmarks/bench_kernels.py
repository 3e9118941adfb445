"""Benchmark the numba kernels against the pure-numpy fallback.

Times the two hot per-mode operations (batched small matvec, fused RK4
combination) on both backends across problem sizes, plus one full nonlinear
step for context.  Run as:  python benchmarks/bench_kernels.py
"""

import time

import numpy as np

from micropolar import _kernels
from micropolar.dynamics import FluidParams, _get_stepper
from micropolar.initdata import SpectrumEnvelope, random_solenoidal
from micropolar.spectral import Grid


def _time(fn, *args, repeat=5):
    fn(*args)  # warm up (jit compile)
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_batched_ops():
    rng = np.random.default_rng(0)
    print(f"{'modes':>10} {'c':>3} {'op':>12} {'numpy':>12} {'numba':>12} {'speedup':>8}")
    for modes, c in [(64**2, 3), (256**2, 3), (512**2, 3), (64**3, 6)]:
        mats = rng.standard_normal((modes, c, c)) + 1j * rng.standard_normal((modes, c, c))
        vecs = rng.standard_normal((modes, c)) + 1j * rng.standard_normal((modes, c))
        parts = [
            rng.standard_normal((modes, c)) + 1j * rng.standard_normal((modes, c))
            for _ in range(4)
        ]
        for op, args in [
            ("matvec", (mats, vecs)),
            ("rk4_combine", (*parts, 0.1)),
        ]:
            times = {}
            for backend in ("numpy", "numba"):
                if backend == "numba" and not _kernels.HAS_NUMBA:
                    continue
                _kernels.set_backend(backend)
                fn = (
                    _kernels.apply_mode_matrices
                    if op == "matvec"
                    else _kernels.rk4_combine
                )
                times[backend] = _time(fn, *args)
            speed = times["numpy"] / times["numba"] if "numba" in times else float("nan")
            print(
                f"{modes:>10} {c:>3} {op:>12} {times['numpy']:>12.6f} "
                f"{times.get('numba', float('nan')):>12.6f} {speed:>8.2f}x"
            )


def bench_full_step():
    grid = Grid(dim=2, n=256, length=2 * np.pi)
    params = FluidParams(mu=0.1, nu=0.1, chi=0.1)
    state = random_solenoidal(
        grid, SpectrumEnvelope(exponent_r=-1.0, cutoff_kc=20.0, amplitude=0.01, seed=1),
        with_w=True,
    )
    print("\nfull nonlinear step, 256^2:")
    for backend in ("numpy", "numba"):
        if backend == "numba" and not _kernels.HAS_NUMBA:
            continue
        _kernels.set_backend(backend)
        stepper = _get_stepper(grid, params, 0.01, True)
        vec = stepper.fields_to_vec(state.u, state.w)
        best = _time(lambda: stepper.step_vec(vec, 0.0, True))
        print(f"  {backend:>6}: {best:.4f} s/step")


if __name__ == "__main__":
    print(f"numba available: {_kernels.HAS_NUMBA}, default backend: {_kernels.get_backend()}")
    bench_batched_ops()
    bench_full_step()
