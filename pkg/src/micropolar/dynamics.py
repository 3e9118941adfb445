"""Time evolution of the coupled velocity / micro-rotation system.

The momentum equation

    u_t + (u.grad)u + grad p = (mu + chi) Lap(u) + 2 chi curl(w),   div u = 0,

and the spin equation

    w_t + (u.grad)w = nu Lap(w) + kappa grad(div w) - 4 chi w + 2 chi curl(u)

(the kappa term is absent in 2D, where w is scalar) are advanced with a
Lawson exponential Runge-Kutta scheme of classical order 4: the full linear
coupling is integrated exactly per Fourier mode by precomputed matrix
exponentials, so the -4 chi damping and the 2 chi curl exchange impose no
step-size limit, and a linearized run reduces to the exact per-mode
propagator.  Pressure never appears: the advection tendency is Leray
projected, which is how div u = 0 is enforced.

The per-mode linear matrix is Hermitian (the curl couplings enter as i times
real antisymmetric blocks), so its exponential is computed by a batched
Hermitian eigendecomposition; `initdata.linear_oracle_evolve` provides an
independent scaling-and-squaring route for validation.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from . import _kernels
from .diagnostics import NormSeries, epsilon_field
from .spectral import Grid, SpectralField, leray_project, sobolev_seminorm

__all__ = [
    "FluidParams",
    "MicropolarState",
    "LinearModeMatrix",
    "SimConfig",
    "SimulationResult",
    "BlowUpError",
    "linear_mode_matrix",
    "mode_matrices",
    "nonlinear_rhs",
    "momentum_linear_rhs",
    "momentum_linear_rhs_sync_form",
    "step",
    "simulate",
]


@dataclass(frozen=True)
class FluidParams:
    """Viscosity and coupling constants; chi is the vortex viscosity."""

    mu: float
    nu: float
    chi: float
    kappa: float = 0.0

    def __post_init__(self):
        if not (self.mu > 0 and self.nu > 0 and self.chi > 0):
            raise ValueError("mu, nu and chi must all be positive")
        if self.kappa < 0:
            raise ValueError("kappa must be nonnegative")

    def gamma(self):
        """The smaller of the two viscosities, min(mu, nu)."""
        return min(self.mu, self.nu)


@dataclass(frozen=True)
class MicropolarState:
    """The pair z = (u, w) at one instant; u is divergence-free."""

    time: float
    u: SpectralField
    w: SpectralField

    def __post_init__(self):
        if self.time < 0:
            raise ValueError("time must be nonnegative")
        grid = self.u.grid
        if self.w.grid != grid:
            raise ValueError("u and w must live on the same grid")
        if not self.u.is_vector:
            raise ValueError(f"u needs {grid.dim} components, got {self.u.components}")
        want_w = 1 if grid.dim == 2 else 3
        if self.w.components != want_w:
            raise ValueError(f"w needs {want_w} components in {grid.dim}D")

    @property
    def grid(self):
        return self.u.grid

    def z_norm(self, m=0):
        return math.sqrt(
            sobolev_seminorm(self.u, m).value ** 2
            + sobolev_seminorm(self.w, m).value ** 2
        )


@dataclass(frozen=True)
class LinearModeMatrix:
    """Dense linear coupling matrix of one Fourier mode over (u_hat, w_hat)."""

    k: tuple
    entries: np.ndarray = field(repr=False)


def linear_mode_matrix(params, k, dim):
    """Assemble the per-mode matrix from the linear terms, scalar path.

    2D (3x3 over u1, u2, w):
        u' = -(mu+chi)|k|^2 u + 2 chi (i k2 w, -i k1 w)
        w' = -(nu|k|^2 + 4 chi) w + 2 chi (i k1 u2 - i k2 u1)
    3D (6x6 over u, w):
        u' = -(mu+chi)|k|^2 u + 2 chi i (k x w)
        w' = -nu|k|^2 w - kappa k (k.w) - 4 chi w + 2 chi i (k x u)
    At k = 0 only the damping survives: u' = 0, w' = -4 chi w.
    """
    k = tuple(float(kj) for kj in k)
    if len(k) != dim:
        raise ValueError(f"wavenumber has {len(k)} entries for dim {dim}")
    ksq = sum(kj * kj for kj in k)
    mu, nu, chi, kappa = params.mu, params.nu, params.chi, params.kappa
    if dim == 2:
        k1, k2 = k
        a = np.zeros((3, 3), dtype=np.complex128)
        a[0, 0] = a[1, 1] = -(mu + chi) * ksq
        a[2, 2] = -nu * ksq - 4.0 * chi
        a[0, 2] = 2.0 * chi * 1j * k2
        a[1, 2] = -2.0 * chi * 1j * k1
        a[2, 0] = -2.0 * chi * 1j * k2
        a[2, 1] = 2.0 * chi * 1j * k1
    else:
        a = np.zeros((6, 6), dtype=np.complex128)
        for i in range(3):
            a[i, i] = -(mu + chi) * ksq
        for i in range(3):
            for j in range(3):
                a[3 + i, 3 + j] = -kappa * k[i] * k[j]
            a[3 + i, 3 + i] += -nu * ksq - 4.0 * chi
        cross = _cross_matrix(k)
        a[0:3, 3:6] = 2.0 * chi * 1j * cross
        a[3:6, 0:3] = 2.0 * chi * 1j * cross
    return LinearModeMatrix(k=k, entries=a)


def _cross_matrix(k):
    k1, k2, k3 = k
    return np.array([[0.0, -k3, k2], [k3, 0.0, -k1], [-k2, k1, 0.0]])


def mode_matrices(grid, params):
    """Vectorized assembly of all per-mode matrices, shape (modes, c, c)."""
    d = grid.dim
    wc = 1 if d == 2 else 3
    c = d + wc
    kfull = [np.broadcast_to(kj, grid.shape).ravel() for kj in grid.wavenumbers()]
    ksq = grid.ksq().ravel()
    m = grid.modes
    a = np.zeros((m, c, c), dtype=np.complex128)
    mu, nu, chi, kappa = params.mu, params.nu, params.chi, params.kappa
    for j in range(d):
        a[:, j, j] = -(mu + chi) * ksq
    if d == 2:
        k1, k2 = kfull
        a[:, 2, 2] = -nu * ksq - 4.0 * chi
        a[:, 0, 2] = 2.0 * chi * 1j * k2
        a[:, 1, 2] = -2.0 * chi * 1j * k1
        a[:, 2, 0] = -2.0 * chi * 1j * k2
        a[:, 2, 1] = 2.0 * chi * 1j * k1
    else:
        k1, k2, k3 = kfull
        for i in range(3):
            a[:, 3 + i, 3 + i] = -nu * ksq - 4.0 * chi
        for i in range(3):
            for j in range(3):
                a[:, 3 + i, 3 + j] += -kappa * kfull[i] * kfull[j]
        # coupling blocks 2 chi i (k x .), Hermitian as i times real antisymmetric
        cross = np.zeros((m, 3, 3))
        cross[:, 0, 1] = -k3
        cross[:, 0, 2] = k2
        cross[:, 1, 0] = k3
        cross[:, 1, 2] = -k1
        cross[:, 2, 0] = -k2
        cross[:, 2, 1] = k1
        a[:, 0:3, 3:6] = 2.0 * chi * 1j * cross
        a[:, 3:6, 0:3] = 2.0 * chi * 1j * cross
    return a


def nonlinear_rhs(state, params, use_dealias=True):
    """Advective tendencies: du = -P[(u.grad)u], dw = -(u.grad)w.

    Products are formed in physical space with 2/3-rule dealiasing; the Leray
    projection absorbs the pressure gradient and keeps du divergence-free.
    The viscous and coupling terms are handled exactly by the propagator and
    do not appear here.
    """
    grid = state.grid
    from .spectral import _grid_cache, batch_from_physical, batch_to_physical

    k, _, _, mask = _grid_cache(grid)
    uc = state.u.coeffs * mask if use_dealias else state.u.coeffs
    wcoef = state.w.coeffs * mask if use_dealias else state.w.coeffs
    d = grid.dim
    wc = state.w.components

    # one batched inverse transform of [u, D_j u_a, D_j w_a]
    stack = np.empty((d + d * d + wc * d,) + grid.shape, dtype=np.complex128)
    stack[:d] = uc
    pos = d
    for a in range(d):
        for j in range(d):
            stack[pos] = 1j * k[j] * uc[a]
            pos += 1
    for a in range(wc):
        for j in range(d):
            stack[pos] = 1j * k[j] * wcoef[a]
            pos += 1
    phys = batch_to_physical(grid, stack)
    u_phys = phys[:d]

    adv = np.empty((d + wc,) + grid.shape)
    for a in range(d):
        acc = u_phys[0] * phys[d + a * d]
        for j in range(1, d):
            acc += u_phys[j] * phys[d + a * d + j]
        adv[a] = -acc
    base = d + d * d
    for a in range(wc):
        acc = u_phys[0] * phys[base + a * d]
        for j in range(1, d):
            acc += u_phys[j] * phys[base + a * d + j]
        adv[d + a] = -acc

    coeffs = batch_from_physical(grid, adv)
    if use_dealias:
        coeffs = coeffs * mask
    zero = (np.s_[:],) + (0,) * d
    coeffs[zero] = 0.0
    du = leray_project(SpectralField(grid=grid, coeffs=coeffs[:d].copy()))
    return du, SpectralField(grid=grid, coeffs=coeffs[d:].copy())


def momentum_linear_rhs(state, params):
    """Linear momentum terms in the primitive form (mu+chi) Lap(u) + 2 chi curl(w)."""
    from .spectral import curl, laplacian

    lap = laplacian(state.u)
    cw = curl(state.w)
    return SpectralField(
        grid=state.grid,
        coeffs=(params.mu + params.chi) * lap.coeffs + 2.0 * params.chi * cw.coeffs,
    )


def momentum_linear_rhs_sync_form(state, params):
    """Same terms rewritten through the synchronization error: mu Lap(u) + 2 chi curl(eps).

    Equal to `momentum_linear_rhs` for divergence-free u, since
    curl(curl(u)) = -Lap(u) there; the pair is kept as a cross-check.
    """
    from .spectral import curl, laplacian

    lap = laplacian(state.u)
    ce = curl(epsilon_field(state))
    return SpectralField(
        grid=state.grid,
        coeffs=params.mu * lap.coeffs + 2.0 * params.chi * ce.coeffs,
    )


class BlowUpError(RuntimeError):
    """Raised when coefficients stop being finite or the norm explodes."""

    def __init__(self, time, message=None):
        self.time = time
        super().__init__(message or f"solution blew up at t = {time:.6g}")


@dataclass(frozen=True)
class SimConfig:
    """Run settings for `simulate`; initial data is supplied separately."""

    grid: Grid
    params: FluidParams
    dt: float
    t_end: float
    record_stride: int = 1
    seminorm_orders: tuple = (0, 1)
    dealias: bool = True
    nonlinear: bool = True
    blowup_factor: float = 1e6
    keep_snapshots: bool = False

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.t_end < 0:
            raise ValueError("t_end must be nonnegative")
        if self.record_stride < 1:
            raise ValueError("record_stride must be >= 1")
        if any(m < 0 for m in self.seminorm_orders):
            raise ValueError("seminorm orders must be nonnegative")


@dataclass(frozen=True)
class SimulationResult:
    series: NormSeries
    final_state: MicropolarState
    snapshots: list = field(default_factory=list)


def _propagators_from_eigh(evals, evecs, dt):
    phase = np.exp(evals * dt)
    return np.einsum("mik,mk,mjk->mij", evecs, phase, np.conj(evecs))


class _Stepper:
    """Precomputed propagators and work buffers for one (grid, params, dt)."""

    def __init__(self, grid, params, dt, use_dealias):
        self.grid = grid
        self.params = params
        self.dt = float(dt)
        self.use_dealias = use_dealias
        self.d = grid.dim
        self.wc = 1 if grid.dim == 2 else 3
        self.c = self.d + self.wc
        a = mode_matrices(grid, params)
        evals, evecs = np.linalg.eigh(a)
        self.e_full = _propagators_from_eigh(evals, evecs, self.dt)
        self.e_half = _propagators_from_eigh(evals, evecs, self.dt / 2.0)
        k = grid.wavenumbers()
        self.kflat = [np.broadcast_to(kj, grid.shape).ravel() for kj in k]
        ksq = grid.ksq().ravel()
        self.inv_ksq = np.where(ksq > 0, 1.0 / np.where(ksq > 0, ksq, 1.0), 0.0)

    def fields_to_vec(self, u, w):
        stacked = np.concatenate([u.coeffs, w.coeffs], axis=0)
        return np.ascontiguousarray(stacked.reshape(self.c, -1).T)

    def vec_to_fields(self, vec):
        stacked = np.ascontiguousarray(vec.T).reshape((self.c,) + self.grid.shape)
        u = SpectralField(grid=self.grid, coeffs=stacked[: self.d].copy())
        w = SpectralField(grid=self.grid, coeffs=stacked[self.d :].copy())
        return u, w

    def project_u(self, vec):
        """Leray projection applied to the u block of a stacked mode vector."""
        kdotu = np.zeros(vec.shape[0], dtype=np.complex128)
        for j in range(self.d):
            kdotu += self.kflat[j] * vec[:, j]
        kdotu *= self.inv_ksq
        out = vec.copy()
        for j in range(self.d):
            out[:, j] -= self.kflat[j] * kdotu
        return out

    def rhs_vec(self, vec, time):
        u, w = self.vec_to_fields(vec)
        state = MicropolarState(time=max(time, 0.0), u=u, w=w)
        du, dw = nonlinear_rhs(state, self.params, use_dealias=self.use_dealias)
        return self.fields_to_vec(du, dw)

    def apply(self, mats, vec):
        return _kernels.apply_mode_matrices(mats, vec)

    def step_vec(self, vec, time, nonlinear):
        dt = self.dt
        if not nonlinear:
            return self.apply(self.e_full, vec)
        k1 = self.rhs_vec(vec, time)
        k2 = self.rhs_vec(
            self.apply(self.e_half, vec + (dt / 2.0) * k1), time + dt / 2.0
        )
        e2z = self.apply(self.e_half, vec)
        k3 = self.rhs_vec(e2z + (dt / 2.0) * k2, time + dt / 2.0)
        ez = self.apply(self.e_full, vec)
        k4 = self.rhs_vec(ez + dt * self.apply(self.e_half, k3), time + dt)
        ek1 = self.apply(self.e_full, k1)
        e2k23 = self.apply(self.e_half, k2 + k3)
        out = _kernels.rk4_combine(ez, ek1, e2k23, k4, dt)
        return self.project_u(out)


_STEPPER_CACHE = {}


def _get_stepper(grid, params, dt, use_dealias):
    key = (grid, params, float(dt), bool(use_dealias))
    stepper = _STEPPER_CACHE.get(key)
    if stepper is None:
        if len(_STEPPER_CACHE) >= 8:
            _STEPPER_CACHE.pop(next(iter(_STEPPER_CACHE)))
        stepper = _Stepper(grid, params, dt, use_dealias)
        _STEPPER_CACHE[key] = stepper
    return stepper


def _check_finite(vec, time, ceiling):
    sumsq = float(np.sum(np.abs(vec) ** 2))
    if not math.isfinite(sumsq):
        raise BlowUpError(time, f"non-finite coefficients at t = {time:.6g}")
    if ceiling is not None and sumsq > ceiling:
        raise BlowUpError(time, f"norm ceiling exceeded at t = {time:.6g}")
    return sumsq


def step(state, params, dt, nonlinear=True, use_dealias=True):
    """Advance one step of size dt; exact per-mode propagator when linear."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    stepper = _get_stepper(state.grid, params, dt, use_dealias)
    vec = stepper.fields_to_vec(state.u, state.w)
    out = stepper.step_vec(vec, state.time, nonlinear)
    _check_finite(out, state.time + dt, None)
    u, w = stepper.vec_to_fields(out)
    return MicropolarState(time=state.time + dt, u=u, w=w)


def _record(norm_data, state, orders, params):
    grid = state.grid
    from .spectral import _grid_cache

    k, ksq, _, _ = _grid_cache(grid)
    vol = grid.volume()
    uc, wcoef = state.u.coeffs, state.w.coeffs
    eps = epsilon_field(state)

    def seminorm_sq(coeffs, m):
        weight = ksq**m if m > 0 else 1.0
        return vol * float(np.sum(weight * np.abs(coeffs) ** 2))

    needed = sorted(set(orders) | {0, 1})
    vals = {}
    for m in needed:
        usq = seminorm_sq(uc, m)
        wsq = seminorm_sq(wcoef, m)
        vals[f"u:m={m}"] = math.sqrt(usq)
        vals[f"w:m={m}"] = math.sqrt(wsq)
        vals[f"z:m={m}"] = math.sqrt(usq + wsq)
        vals[f"eps:m={m}"] = math.sqrt(seminorm_sq(eps.coeffs, m))
    if grid.dim == 3:
        divw = np.zeros(grid.shape, dtype=np.complex128)
        for j in range(3):
            divw = divw + k[j] * wcoef[j]
        vals["divw:m=0"] = math.sqrt(vol * float(np.sum(np.abs(divw) ** 2)))
        cw = [
            k[1] * wcoef[2] - k[2] * wcoef[1],
            k[2] * wcoef[0] - k[0] * wcoef[2],
            k[0] * wcoef[1] - k[1] * wcoef[0],
        ]
        vals["curlw:m=0"] = math.sqrt(
            vol * float(sum(np.sum(np.abs(c) ** 2) for c in cw))
        )
    vals["energy_lhs"] = vals["z:m=0"] ** 2
    vals["dissip_u"] = params.mu * vals["u:m=1"] ** 2
    vals["dissip_w"] = params.nu * vals["w:m=1"] ** 2
    for label, v in vals.items():
        norm_data.setdefault(label, []).append(v)


def simulate(config, z0):
    """Run to t_end recording seminorms every record_stride steps.

    Deterministic given (config, z0).  Raises BlowUpError when coefficients
    stop being finite or ||z|| exceeds blowup_factor * ||z0||; the series
    recorded so far is attached to the exception as `partial_series`.
    """
    if z0.grid != config.grid:
        raise ValueError("initial state lives on a different grid")
    stepper = _get_stepper(config.grid, config.params, config.dt, config.dealias)
    vec = stepper.fields_to_vec(z0.u, z0.w)
    ceiling = config.blowup_factor**2 * max(float(np.sum(np.abs(vec) ** 2)), 1e-300)

    n_full = int(config.t_end / config.dt + 1e-9)
    remainder = config.t_end - n_full * config.dt
    has_tail = remainder > 1e-9 * max(config.dt, 1.0)

    times = [float(z0.time)]
    data = {}
    snapshots = []
    state0 = MicropolarState(time=z0.time, u=z0.u, w=z0.w)
    _record(data, state0, config.seminorm_orders, config.params)
    if config.keep_snapshots:
        snapshots.append(state0)

    def build_series():
        return NormSeries(
            times=np.array(times), data={k: np.array(v) for k, v in data.items()}
        )

    current = vec
    t = float(z0.time)
    total_steps = n_full + (1 if has_tail else 0)
    try:
        for i in range(1, n_full + 1):
            current = stepper.step_vec(current, t, config.nonlinear)
            t = z0.time + i * config.dt
            _check_finite(current, t, ceiling)
            if i % config.record_stride == 0 or (i == total_steps):
                u, w = stepper.vec_to_fields(current)
                st = MicropolarState(time=t, u=u, w=w)
                times.append(t)
                _record(data, st, config.seminorm_orders, config.params)
                if config.keep_snapshots:
                    snapshots.append(st)
        if has_tail:
            tail = _Stepper(config.grid, config.params, remainder, config.dealias)
            current = tail.step_vec(current, t, config.nonlinear)
            t = z0.time + config.t_end
            _check_finite(current, t, ceiling)
            u, w = tail.vec_to_fields(current)
            st = MicropolarState(time=t, u=u, w=w)
            times.append(t)
            _record(data, st, config.seminorm_orders, config.params)
            if config.keep_snapshots:
                snapshots.append(st)
    except BlowUpError as err:
        err.partial_series = build_series()
        raise

    u, w = stepper.vec_to_fields(current)
    final = MicropolarState(time=t, u=u, w=w)
    return SimulationResult(series=build_series(), final_state=final, snapshots=snapshots)
