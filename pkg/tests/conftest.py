import numpy as np
import pytest

from micropolar import (
    FluidParams,
    MicropolarState,
    SpectralField,
    SpectrumEnvelope,
    field_from_physical,
    make_grid,
    random_solenoidal,
)


def random_real_field(grid, components, seed):
    """Random real-valued field (full spectrum) from seeded physical noise."""
    rng = np.random.default_rng(seed)
    values = rng.standard_normal((components,) + grid.shape)
    return field_from_physical(grid, values)


def random_state(grid, seed, amplitude=0.5, kc=None, with_w=True):
    if kc is None:
        kc = grid.k0 * max(4, grid.n // 4)
    env = SpectrumEnvelope(exponent_r=-0.5, cutoff_kc=kc, amplitude=amplitude, seed=seed)
    return random_solenoidal(grid, env, with_w=with_w)


def scale_state(state, factor):
    return MicropolarState(
        time=state.time,
        u=SpectralField(grid=state.u.grid, coeffs=state.u.coeffs * factor),
        w=SpectralField(grid=state.w.grid, coeffs=state.w.coeffs * factor),
    )


@pytest.fixture
def grid2d():
    return make_grid(2, 32, 2 * np.pi)


@pytest.fixture
def grid3d():
    return make_grid(3, 16, 2 * np.pi)


@pytest.fixture
def params():
    return FluidParams(mu=0.3, nu=0.5, chi=0.4, kappa=0.2)
