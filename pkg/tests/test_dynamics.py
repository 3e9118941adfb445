"""Per-mode linear structure, nonlinear tendencies, stepping and simulation."""

import numpy as np
import pytest
import scipy.linalg

from micropolar import (
    BlowUpError,
    FluidParams,
    MicropolarState,
    SimConfig,
    divergence,
    inner_product,
    linear_mode_matrix,
    linear_oracle_evolve,
    make_grid,
    mode_matrices,
    nonlinear_rhs,
    simulate,
    sobolev_seminorm,
    step,
    taylor_green,
    zero_field,
)
from micropolar.dynamics import momentum_linear_rhs, momentum_linear_rhs_sync_form
from micropolar.spectral import hermitian_defect

from conftest import random_state


class TestFluidParams:
    def test_gamma_is_min(self):
        assert FluidParams(mu=0.3, nu=0.5, chi=0.1).gamma() == 0.3
        assert FluidParams(mu=0.5, nu=0.3, chi=0.1).gamma() == 0.3

    def test_positivity(self):
        with pytest.raises(ValueError):
            FluidParams(mu=0.0, nu=0.1, chi=0.1)
        with pytest.raises(ValueError):
            FluidParams(mu=0.1, nu=0.1, chi=0.0)
        with pytest.raises(ValueError):
            FluidParams(mu=0.1, nu=0.1, chi=0.1, kappa=-1.0)


class TestLinearModeMatrix:
    def test_decoupled_limit_eigenvalues(self):
        # chi -> 0: u-block decays at mu |k|^2, w-block at nu |k|^2, with the
        # longitudinal w direction picking up the extra kappa |k|^2 in 3D
        p = FluidParams(mu=0.4, nu=0.7, chi=1e-14, kappa=0.3)
        k = (1.0, 2.0, 2.0)
        ksq = 9.0
        m = linear_mode_matrix(p, k, 3).entries
        ev = np.sort(np.linalg.eigvalsh(m))
        expect = np.sort(
            [-0.4 * ksq] * 3 + [-0.7 * ksq] * 2 + [-(0.7 + 0.3) * ksq]
        )
        assert np.allclose(ev, expect, rtol=1e-9, atol=1e-9)

    def test_2d_zero_mode_is_pure_damping(self):
        p = FluidParams(mu=0.2, nu=0.3, chi=0.25)
        m = linear_mode_matrix(p, (0.0, 0.0), 2).entries
        assert np.allclose(m, np.diag([0.0, 0.0, -4 * 0.25]))

    def test_2d_trace_identity(self):
        p = FluidParams(mu=0.2, nu=0.3, chi=0.25)
        k = (1.5, -2.0)
        ksq = 1.5**2 + 4.0
        m = linear_mode_matrix(p, k, 2).entries
        want = -2 * (p.mu + p.chi) * ksq - p.nu * ksq - 4 * p.chi
        assert abs(np.trace(m).real - want) < 1e-13
        assert abs(np.trace(m).imag) == 0.0

    @pytest.mark.parametrize("dim,n", [(2, 16), (3, 8)])
    def test_batched_matches_scalar_assembly(self, dim, n):
        g = make_grid(dim, n, 2 * np.pi)
        p = FluidParams(mu=0.3, nu=0.5, chi=0.4, kappa=0.2)
        batched = mode_matrices(g, p)
        freqs = [g.index_to_wavenumber(i) for i in range(n)]
        idx = 0
        import itertools

        for ks in itertools.product(freqs, repeat=dim):
            single = linear_mode_matrix(p, ks, dim).entries
            assert np.allclose(batched[idx], single, rtol=0, atol=1e-14)
            idx += 1

    @pytest.mark.parametrize("dim,n", [(2, 16), (3, 8)])
    def test_dissipativity_sweep(self, dim, n):
        g = make_grid(dim, n, 5.0)
        p = FluidParams(mu=0.3, nu=0.5, chi=0.4, kappa=0.2)
        a = mode_matrices(g, p)
        herm = np.max(np.abs(a - np.conj(np.transpose(a, (0, 2, 1)))))
        assert herm < 1e-12
        ev = np.linalg.eigvalsh(a)
        assert ev.max() <= 1e-12 * max(1.0, np.max(np.abs(a)))


class TestNonlinearRHS:
    def test_zero_state(self, grid2d, params):
        z = MicropolarState(time=0.0, u=zero_field(grid2d, 2), w=zero_field(grid2d, 1))
        du, dw = nonlinear_rhs(z, params)
        assert sobolev_seminorm(du, 0).value == 0.0
        assert sobolev_seminorm(dw, 0).value == 0.0

    def test_taylor_green_advection_is_gradient(self, params):
        g = make_grid(2, 64, 2 * np.pi)
        tg = taylor_green(g, 1.0)
        du, _ = nonlinear_rhs(tg, params)
        assert sobolev_seminorm(du, 0).value < 1e-13

    @pytest.mark.parametrize("dim,n", [(2, 32), (3, 16)])
    def test_advection_energy_neutral(self, dim, n, params):
        g = make_grid(dim, n, 2 * np.pi)
        st = random_state(g, seed=17, amplitude=1.0)
        du, dw = nonlinear_rhs(st, params)
        ip = inner_product(du, st.u) + inner_product(dw, st.w)
        scale = st.z_norm(0) * (
            sobolev_seminorm(du, 0).value + sobolev_seminorm(dw, 0).value
        )
        assert abs(ip) <= 1e-12 * max(scale, 1e-30)

    def test_tendency_divergence_free(self, grid3d, params):
        st = random_state(grid3d, seed=18)
        du, _ = nonlinear_rhs(st, params)
        rel = sobolev_seminorm(divergence(du), 0).value / sobolev_seminorm(du, 1).value
        assert rel < 1e-12


class TestMomentumIdentity:
    @pytest.mark.parametrize("dim,n", [(2, 32), (3, 16)])
    def test_primitive_equals_sync_form(self, dim, n):
        p = FluidParams(mu=0.25, nu=0.6, chi=0.35, kappa=0.15)
        g = make_grid(dim, n, 2 * np.pi)
        for seed in range(5):
            st = random_state(g, seed=100 + seed)
            a = momentum_linear_rhs(st, p)
            b = momentum_linear_rhs_sync_form(st, p)
            scale = max(np.max(np.abs(a.coeffs)), 1e-30)
            assert np.max(np.abs(a.coeffs - b.coeffs)) <= 1e-12 * scale


class TestStep:
    @pytest.mark.parametrize("dim,n", [(2, 16), (3, 8)])
    def test_linear_step_equals_matrix_exponential(self, dim, n):
        g = make_grid(dim, n, 2 * np.pi)
        p = FluidParams(mu=0.3, nu=0.5, chi=0.4, kappa=0.2)
        st = random_state(g, seed=19)
        out = step(st, p, 0.07, nonlinear=False)
        mats = mode_matrices(g, p)
        prop = scipy.linalg.expm(0.07 * mats)
        c = dim + st.w.components
        vec = np.concatenate([st.u.coeffs, st.w.coeffs]).reshape(c, -1).T
        want = np.einsum("mij,mj->mi", prop, vec).T.reshape((c,) + g.shape)
        got = np.concatenate([out.u.coeffs, out.w.coeffs])
        assert np.max(np.abs(got - want)) <= 1e-12 * np.max(np.abs(want))

    def test_zero_state_stays_zero(self, grid2d, params):
        z = MicropolarState(time=0.0, u=zero_field(grid2d, 2), w=zero_field(grid2d, 1))
        out = step(z, params, 0.1)
        assert sobolev_seminorm(out.u, 0).value == 0.0
        assert sobolev_seminorm(out.w, 0).value == 0.0
        assert out.time == 0.1

    def test_dt_refinement_order(self):
        # self-convergence of the full nonlinear scheme against a dt/16 reference
        g = make_grid(2, 32, 2 * np.pi)
        p = FluidParams(mu=0.05, nu=0.08, chi=0.1)
        tg = taylor_green(g, 1.0)
        wr = random_state(g, seed=20, amplitude=0.3)
        z0 = MicropolarState(time=0.0, u=tg.u, w=wr.w)
        t_end = 0.4

        def advance(dt):
            state = z0
            for _ in range(int(round(t_end / dt))):
                state = step(state, p, dt)
            return np.concatenate([state.u.coeffs.ravel(), state.w.coeffs.ravel()])

        ref = advance(t_end / 64)
        e1 = np.max(np.abs(advance(t_end / 4) - ref))
        e2 = np.max(np.abs(advance(t_end / 8) - ref))
        order = np.log2(e1 / e2)
        assert order >= 3.5

    def test_hermitian_preserved(self, grid2d):
        p = FluidParams(mu=0.3, nu=0.2, chi=0.5)
        st = random_state(grid2d, seed=21)
        for _ in range(20):
            st = step(st, p, 0.05)
        assert hermitian_defect(st.u) < 1e-13
        assert hermitian_defect(st.w) < 1e-13


class TestSimulate:
    def test_zero_horizon_records_initial_state(self, grid2d, params):
        st = random_state(grid2d, seed=22)
        cfg = SimConfig(grid=grid2d, params=params, dt=0.1, t_end=0.0)
        res = simulate(cfg, st)
        assert len(res.series.times) == 1
        assert res.series.times[0] == 0.0

    def test_taylor_green_heat_decay(self):
        # chi -> 0 with w = 0: TG decays at the exact two-mode heat rate
        g = make_grid(2, 32, 2 * np.pi)
        p = FluidParams(mu=0.1, nu=0.1, chi=1e-14)
        tg = taylor_green(g, 1.0)
        cfg = SimConfig(grid=g, params=p, dt=0.02, t_end=1.0, record_stride=10)
        res = simulate(cfg, tg)
        u0 = res.series.values("u:m=0")[0]
        for t, val in zip(res.series.times, res.series.values("u:m=0")):
            assert abs(val - u0 * np.exp(-2 * p.mu * t)) <= 1e-9 * u0

    def test_z_norm_nonincreasing(self, grid2d):
        p = FluidParams(mu=0.05, nu=0.07, chi=0.1)
        st = random_state(grid2d, seed=23, amplitude=1.0)
        cfg = SimConfig(grid=grid2d, params=p, dt=0.01, t_end=1.0, record_stride=5)
        res = simulate(cfg, st)
        z = res.series.values("z:m=0")
        assert np.all(np.diff(z) <= 1e-10 * z[:-1])

    def test_divergence_free_after_many_steps(self):
        g = make_grid(2, 8, 2 * np.pi)
        p = FluidParams(mu=0.2, nu=0.3, chi=0.2)
        st = random_state(g, seed=24, amplitude=0.5, kc=2.0)
        cfg = SimConfig(grid=g, params=p, dt=1e-3, t_end=10.0, record_stride=10000)
        res = simulate(cfg, st)
        final = res.final_state
        rel = (
            sobolev_seminorm(divergence(final.u), 0).value
            / sobolev_seminorm(final.u, 1).value
        )
        assert rel < 1e-11

    def test_deterministic(self, grid2d):
        p = FluidParams(mu=0.1, nu=0.1, chi=0.3)
        st = random_state(grid2d, seed=25)
        cfg = SimConfig(grid=grid2d, params=p, dt=0.02, t_end=0.2)
        a = simulate(cfg, st)
        b = simulate(cfg, st)
        assert np.array_equal(a.final_state.u.coeffs, b.final_state.u.coeffs)
        for label in a.series.labels():
            assert np.array_equal(a.series.values(label), b.series.values(label))

    def test_partial_final_step_hits_t_end(self, grid2d, params):
        st = random_state(grid2d, seed=26)
        cfg = SimConfig(grid=grid2d, params=params, dt=0.04, t_end=0.1)
        res = simulate(cfg, st)
        assert abs(res.final_state.time - 0.1) < 1e-12

    def test_blow_up_raises_with_time(self):
        g = make_grid(2, 32, 2 * np.pi)
        p = FluidParams(mu=1e-4, nu=1e-4, chi=1e-4)
        tg = taylor_green(g, 50.0)
        cfg = SimConfig(grid=g, params=p, dt=0.5, t_end=40.0, record_stride=1)
        with pytest.raises(BlowUpError) as err:
            simulate(cfg, tg)
        assert err.value.time > 0
        assert err.value.partial_series is not None

    def test_linearized_run_matches_oracle_over_time(self):
        g = make_grid(2, 16, 2 * np.pi)
        p = FluidParams(mu=0.3, nu=0.6, chi=0.4)
        st = random_state(g, seed=27)
        state = st
        for i in range(20):
            state = step(state, p, 0.05, nonlinear=False)
            oracle = linear_oracle_evolve(st, p, state.time)
            got = np.concatenate([state.u.coeffs.ravel(), state.w.coeffs.ravel()])
            ref = np.concatenate([oracle.u.coeffs.ravel(), oracle.w.coeffs.ravel()])
            assert np.max(np.abs(got - ref)) <= 1e-10 * np.max(np.abs(ref))
