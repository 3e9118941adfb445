"""Backend equivalence for the numba-accelerated kernels."""

import os
import subprocess
import sys

import numpy as np
import pytest

from micropolar import _kernels


@pytest.fixture
def restore_backend():
    old = _kernels.get_backend()
    yield
    _kernels.set_backend(old)


@pytest.mark.parametrize("modes,c", [(1024, 3), (512, 6)])
def test_backends_agree_matvec(restore_backend, modes, c):
    rng = np.random.default_rng(0)
    mats = rng.standard_normal((modes, c, c)) + 1j * rng.standard_normal((modes, c, c))
    vecs = rng.standard_normal((modes, c)) + 1j * rng.standard_normal((modes, c))
    _kernels.set_backend("numpy")
    a = _kernels.apply_mode_matrices(mats, vecs)
    if not _kernels.HAS_NUMBA:
        pytest.skip("numba not importable")
    _kernels.set_backend("numba")
    b = _kernels.apply_mode_matrices(mats, vecs)
    assert np.allclose(a, b, rtol=1e-13, atol=1e-14)


def test_backends_agree_rk4_combine(restore_backend):
    rng = np.random.default_rng(1)
    parts = [
        rng.standard_normal((777, 3)) + 1j * rng.standard_normal((777, 3))
        for _ in range(4)
    ]
    _kernels.set_backend("numpy")
    a = _kernels.rk4_combine(*parts, 0.37)
    if not _kernels.HAS_NUMBA:
        pytest.skip("numba not importable")
    _kernels.set_backend("numba")
    b = _kernels.rk4_combine(*parts, 0.37)
    assert np.allclose(a, b, rtol=1e-14, atol=0)


def test_set_backend_validates(restore_backend):
    with pytest.raises(ValueError):
        _kernels.set_backend("fortran")


def test_env_flag_disables_numba():
    code = (
        "from micropolar import _kernels; "
        "print(_kernels.get_backend())"
    )
    env = dict(os.environ, MICROPOLAR_NUMBA="0")
    out = subprocess.run(
        [sys.executable, "-c", code], env=env, capture_output=True, text=True
    )
    assert out.returncode == 0, out.stderr
    assert out.stdout.strip() == "numpy"


def test_numpy_fallback_runs_integrator(restore_backend):
    import micropolar as mp

    _kernels.set_backend("numpy")
    g = mp.make_grid(2, 16, 2 * np.pi)
    p = mp.FluidParams(mu=0.2, nu=0.3, chi=0.1)
    st = mp.taylor_green(g, 0.5)
    out_np = mp.step(st, p, 0.05)
    if not _kernels.HAS_NUMBA:
        pytest.skip("numba not importable")
    _kernels.set_backend("numba")
    out_nb = mp.step(st, p, 0.05)
    assert np.allclose(out_np.u.coeffs, out_nb.u.coeffs, rtol=1e-13, atol=1e-16)
