"""Decay and synchronization diagnostics over recorded norm time series.

The central object is the synchronization error field

    eps = w - (1/2) curl(u),

whose fast decay relative to ``w`` expresses the locking of micro-rotation to
half the flow vorticity.  The functions here measure decay exponents over a
validity window, evaluate the integrated energy inequality, locate
monotonicity onsets, and compare everything against the closed-form exponent
predictions attached to a configured decay hypothesis.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from .spectral import (
    SpectralField,
    curl,
    dealias as dealias_op,
    field_from_physical,
    sobolev_seminorm,
    to_physical,
)

__all__ = [
    "NormSeries",
    "DecayHypothesis",
    "BoundConstants",
    "BOUND_CONSTANTS",
    "epsilon_field",
    "elliptic_operator",
    "epsilon_residual",
    "energy_check",
    "fit_decay_exponent",
    "monotonicity_onset",
    "t_doublestar_bound_3d",
    "smallness_margin",
    "sync_report",
    "validity_window",
]


@dataclass(frozen=True)
class NormSeries:
    """Time series of norms and energy-budget terms, one array per label."""

    times: np.ndarray
    data: dict = field(repr=False)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or len(t) == 0:
            raise ValueError("times must be a nonempty 1-d array")
        if len(t) > 1 and not np.all(np.diff(t) > 0):
            raise ValueError("times must be strictly increasing")
        for label, v in self.data.items():
            v = np.asarray(v, dtype=float)
            if v.shape != t.shape:
                raise ValueError(f"label {label!r} has shape {v.shape}, want {t.shape}")
            if not np.all(np.isfinite(v)) or np.any(v < 0):
                raise ValueError(f"label {label!r} contains non-finite or negative values")

    def labels(self):
        return sorted(self.data)

    def values(self, label):
        if label not in self.data:
            raise ValueError(f"series has no label {label!r} (have {self.labels()})")
        return np.asarray(self.data[label], dtype=float)

    def window_indices(self, t_a, t_b):
        return np.nonzero((self.times >= t_a) & (self.times <= t_b))[0]


@dataclass(frozen=True)
class DecayHypothesis:
    """Constants of an assumed two-sided algebraic decay of ||u(t)||.

    Upper bound: ||u(t)|| <= C0 ||z0|| t^-alpha for t > T0.
    Lower bound (optional): ||u(t)|| >= c0 ||z0|| t^-eta for t > t0,
    with eta >= alpha; eta defaults to alpha.
    """

    alpha: float
    C0: float = 1.0
    c0: float = 0.0
    eta: float = None
    T0: float = 0.0
    t0: float = 0.0

    def __post_init__(self):
        if self.eta is None:
            object.__setattr__(self, "eta", self.alpha)
        if self.alpha < 0 or self.eta < self.alpha:
            raise ValueError("need 0 <= alpha <= eta")
        if self.C0 <= 0 or self.c0 < 0 or self.c0 > self.C0:
            raise ValueError("need 0 <= c0 <= C0 with C0 > 0")
        if self.T0 < 0 or self.t0 < 0:
            raise ValueError("T0 and t0 must be nonnegative")

    def q(self):
        """Exponent ratio eta/alpha used by the lower-bound transfer."""
        if self.alpha <= 0:
            raise ValueError("q is defined only for alpha > 0")
        return self.eta / self.alpha

    @property
    def has_lower_bound(self):
        return self.c0 > 0


@dataclass(frozen=True)
class BoundConstants:
    """Explicit constants of the monotonicity and smallness thresholds."""

    K_smallness: float = 12.0 ** 0.125 / math.sqrt(6.0 * math.pi)
    t_doublestar_coeff_3d: float = 0.005
    smallness_coeff_2d: float = 2.0
    h1_initdata_threshold: float = 3.182
    H_1_2: float = 0.5
    Hprime_1_n: float = 1.0

    @staticmethod
    def p_n(dim):
        """Dimension-dependent exponent boost (n - 2)/4 in the equal-viscosity case."""
        return (dim - 2) / 4.0


BOUND_CONSTANTS = BoundConstants()


def epsilon_field(state):
    """Synchronization error eps = w - (1/2) curl(u), computed spectrally."""
    half_curl = curl(state.u)
    return SpectralField(
        grid=state.u.grid, coeffs=state.w.coeffs - 0.5 * half_curl.coeffs
    )


def elliptic_operator(f, params):
    """Apply the damping-free elliptic part of the eps equation.

    L v = mu Lap(v) + kappa grad(div v) - chi curl(curl v), which reduces to
    (mu + chi) Lap(v) for a 2D scalar, where curl(curl .) = -Lap.
    """
    grid = f.grid
    from .spectral import _grid_cache  # shared precomputed wavenumbers

    k, ksq, _, _ = _grid_cache(grid)
    if grid.dim == 2:
        if not f.is_scalar:
            raise ValueError("2D synchronization error is a scalar field")
        return SpectralField(grid=grid, coeffs=-(params.mu + params.chi) * ksq * f.coeffs)
    kdotv = np.zeros(grid.shape, dtype=np.complex128)
    for j in range(3):
        kdotv = kdotv + k[j] * f.coeffs[j]
    out = np.empty_like(f.coeffs)
    for j in range(3):
        out[j] = -(params.mu + params.chi) * ksq * f.coeffs[j] - (
            params.kappa - params.chi
        ) * k[j] * kdotv
    return SpectralField(grid=grid, coeffs=out)


def _advect(u, q, use_dealias):
    """Pseudo-spectral (u . grad) q with 2/3-rule dealiasing."""
    from .spectral import _grid_cache

    grid = u.grid
    k, _, _, mask = _grid_cache(grid)
    uc = u.coeffs * mask if use_dealias else u.coeffs
    qc = q.coeffs * mask if use_dealias else q.coeffs
    u_phys = to_physical(SpectralField(grid=grid, coeffs=uc))
    out_phys = np.zeros((q.components,) + grid.shape)
    for a in range(q.components):
        for j in range(grid.dim):
            dq = to_physical(
                SpectralField(grid=grid, coeffs=(1j * k[j] * qc[a])[np.newaxis])
            )[0]
            out_phys[a] += u_phys[j] * dq
    out = field_from_physical(grid, out_phys)
    return dealias_op(out) if use_dealias else out


def _wedge_source(u, use_dealias):
    """The quadratic source (1/2) sum_j grad(u_j) wedge (D_j u) of the eps equation."""
    from .spectral import _grid_cache

    grid = u.grid
    k, _, _, mask = _grid_cache(grid)
    uc = u.coeffs * mask if use_dealias else u.coeffs
    d = grid.dim
    # du[a][j] = D_j u_a in physical space
    du = [
        [
            to_physical(SpectralField(grid=grid, coeffs=(1j * k[j] * uc[a])[np.newaxis]))[0]
            for j in range(d)
        ]
        for a in range(d)
    ]
    if d == 2:
        # (grad u_j) wedge (D_j u) = D1(u_j) D_j(u2) - D2(u_j) D_j(u1)
        src = np.zeros(grid.shape)
        for j in range(2):
            src += du[j][0] * du[1][j] - du[j][1] * du[0][j]
        out = field_from_physical(grid, 0.5 * src)
    else:
        src = np.zeros((3,) + grid.shape)
        for j in range(3):
            # (grad u_j) x (D_j u), cross product of two 3-vectors
            a = [du[j][0], du[j][1], du[j][2]]
            b = [du[0][j], du[1][j], du[2][j]]
            src[0] += a[1] * b[2] - a[2] * b[1]
            src[1] += a[2] * b[0] - a[0] * b[2]
            src[2] += a[0] * b[1] - a[1] * b[0]
        out = field_from_physical(grid, 0.5 * src)
    return dealias_op(out) if use_dealias else out


def epsilon_residual(states, params, stride=1, use_dealias=True):
    """L^2 residual of the eps evolution equation along a recorded trajectory.

    eps_t is approximated by centered differencing at the given stride (in
    recorded samples); every other term is evaluated spectrally at the center
    time.  Returns arrays over the interior times where the centered stencil
    fits: {'times', 'residual', 'scale'}, with scale the H^1 magnitude
    sqrt(||eps||^2 + ||D eps||^2) of the center state.
    """
    if len(states) < 2 * stride + 1:
        raise ValueError(
            f"need at least {2 * stride + 1} consecutive states for stride {stride}"
        )
    times = np.array([s.time for s in states])
    eps = [epsilon_field(s) for s in states]
    out_t, out_r, out_s = [], [], []
    for i in range(stride, len(states) - stride):
        h_plus = times[i + stride] - times[i]
        h_minus = times[i] - times[i - stride]
        if abs(h_plus - h_minus) > 1e-9 * max(h_plus, h_minus):
            raise ValueError("centered differencing needs uniformly spaced records")
        eps_t = (eps[i + stride].coeffs - eps[i - stride].coeffs) / (h_plus + h_minus)
        adv = _advect(states[i].u, eps[i], use_dealias)
        ell = elliptic_operator(eps[i], params)
        from .spectral import laplacian

        lap_w = laplacian(states[i].w)
        src = _wedge_source(states[i].u, use_dealias)
        res = (
            eps_t
            + adv.coeffs
            + 4.0 * params.chi * eps[i].coeffs
            - ell.coeffs
            - (params.nu - params.mu) * lap_w.coeffs
            - src.coeffs
        )
        res_field = SpectralField(grid=states[i].u.grid, coeffs=res)
        e0 = sobolev_seminorm(eps[i], 0).value
        e1 = sobolev_seminorm(eps[i], 1).value
        out_t.append(times[i])
        out_r.append(sobolev_seminorm(res_field, 0).value)
        out_s.append(math.sqrt(e0 * e0 + e1 * e1))
    return {
        "times": np.array(out_t),
        "residual": np.array(out_r),
        "scale": np.array(out_s),
    }


def _index_of_time(series, t):
    idx = np.nonzero(np.isclose(series.times, t, rtol=0, atol=1e-9 * (1 + abs(t))))[0]
    if len(idx) == 0:
        raise ValueError(f"time {t} is not a recorded time of the series")
    return int(idx[0])


def energy_check(series, params, s, t, tol=1e-6):
    """Integrated energy inequality between two recorded times.

    lhs = ||z(t)||^2 + 2 int_s^t (mu ||Du||^2 + nu ||Dw||^2) dtau  (trapezoid),
    rhs = ||z(s)||^2; passes when slack = rhs - lhs >= -tol * rhs.
    """
    i, j = _index_of_time(series, s), _index_of_time(series, t)
    if i >= j:
        raise ValueError(f"need s < t within the series, got s={s}, t={t}")
    e = series.values("energy_lhs")
    du = series.values("dissip_u")
    dw = series.values("dissip_w")
    sl = slice(i, j + 1)
    integral = np.trapezoid(du[sl] + dw[sl], series.times[sl])
    lhs = e[j] + 2.0 * integral
    rhs = e[i]
    slack = rhs - lhs
    return {
        "lhs": float(lhs),
        "rhs": float(rhs),
        "slack": float(slack),
        "pass": bool(slack >= -tol * max(rhs, np.finfo(float).tiny)),
    }


def fit_decay_exponent(series, label, window, min_samples=10):
    """Least-squares slope of log(value) against log(t) over a time window.

    Also fits a quadratic in log t and reports |2 a2| as a curvature measure;
    curvature above 0.05 flags the series as not a power law (an exponential,
    for example, curves strongly in log-log).
    """
    t_a, t_b = window
    if t_a <= 0:
        raise ValueError("power-law fits need a strictly positive window start")
    idx = series.window_indices(t_a, t_b)
    if len(idx) < min_samples:
        raise ValueError(
            f"window [{t_a}, {t_b}] holds {len(idx)} samples, need >= {min_samples}"
        )
    t = series.times[idx]
    v = series.values(label)[idx]
    if np.any(v <= 0):
        raise ValueError(f"label {label!r} has nonpositive values in the fit window")
    x = np.log(t)
    y = np.log(v)
    coef, cov = np.polyfit(x, y, 1, cov=True)
    slope = float(coef[0])
    stderr = float(np.sqrt(max(cov[0, 0], 0.0)))
    quad = np.polyfit(x, y, 2)
    curvature = float(abs(2.0 * quad[0]))
    return {
        "slope": slope,
        "stderr": stderr,
        "curvature": curvature,
        "is_power_law": bool(curvature <= 0.05),
    }


def monotonicity_onset(series, label, rtol=1e-10):
    """Earliest recorded time after which the labeled series never rises.

    A rise at sample i means v[i+1] > v[i] + rtol*v[i].  Returns None when the
    final recorded pair still rises (no onset within the horizon).
    """
    v = series.values(label)
    if len(v) < 3:
        raise ValueError("monotonicity onset needs at least 3 samples")
    rises = np.nonzero(v[1:] > v[:-1] * (1.0 + rtol))[0]
    if len(rises) == 0:
        return float(series.times[0])
    last = int(rises[-1])
    if last == len(v) - 2:
        return None
    return float(series.times[last + 1])


def t_doublestar_bound_3d(params, z0_norm):
    """Explicit 3D bound on the gradient-monotonicity time: 0.005 gamma^-5 ||z0||^4."""
    return (
        BOUND_CONSTANTS.t_doublestar_coeff_3d * params.gamma() ** -5 * z0_norm**4
    )


def smallness_margin(state, params):
    """Smallness-vs-viscosity margins that trigger gradient monotonicity.

    3D: K ||z||^(1/2) ||Dz||^(1/2) < gamma with K = 12^(1/8)/sqrt(6 pi).
    2D: ||z|| <= 2 gamma.
    Also reports the H^1 initial-data smallness check against 3.182 gamma.
    """
    z0 = math.sqrt(
        sobolev_seminorm(state.u, 0).value ** 2 + sobolev_seminorm(state.w, 0).value ** 2
    )
    z1 = math.sqrt(
        sobolev_seminorm(state.u, 1).value ** 2 + sobolev_seminorm(state.w, 1).value ** 2
    )
    gamma = params.gamma()
    dim = state.u.grid.dim
    if dim == 3:
        value = BOUND_CONSTANTS.K_smallness * math.sqrt(z0) * math.sqrt(z1)
        threshold = gamma
    else:
        value = z0
        threshold = BOUND_CONSTANTS.smallness_coeff_2d * gamma
    h1_value = math.sqrt(z0) * math.sqrt(z1)
    h1_threshold = BOUND_CONSTANTS.h1_initdata_threshold * gamma
    return {
        "dim": dim,
        "value": float(value),
        "threshold": float(threshold),
        "satisfied": bool(value < threshold),
        "h1_value": float(h1_value),
        "h1_threshold": float(h1_threshold),
        "h1_satisfied": bool(h1_value <= h1_threshold),
    }


def validity_window(series, grid, params, ir_fraction=0.1, floor_fraction=0.01,
                    t_floor=0.0):
    """Time window where algebraic decay is measurable on the torus.

    The upper end keeps the slowest-mode exponential cutoff exp(-gamma k_min^2 t)
    below `ir_fraction` contamination: t_max = ir_fraction * L^2/(4 pi^2 gamma).
    The lower end skips the initial transient: the first local maximum of
    ||Dz||, and, when ||w|| peaks inside the horizon (spin-up from small w0),
    1.5x that peak time; it never starts before floor_fraction * t_max or the
    caller-supplied t_floor (for band-limited data, power laws of derivative
    norms only establish once the spectral peak falls below the cutoff, after
    roughly 1.5/(gamma kc^2)).
    """
    t_max = ir_fraction * grid.length**2 / (4.0 * math.pi**2 * params.gamma())
    t = series.times
    transient = t[0]
    v = series.values("z:m=1")
    for i in range(1, len(v) - 1):
        if v[i - 1] < v[i] and v[i] >= v[i + 1]:
            transient = t[i]
            break
    w = series.values("w:m=0")
    ipk = int(np.argmax(w))
    if 0 < ipk < len(w) - 1 and w[ipk] > 0:
        transient = max(transient, 1.5 * t[ipk])
    positive = t[t > 0]
    first_pos = positive[0] if len(positive) else t_max
    t_min = max(transient, floor_fraction * t_max, first_pos, t_floor)
    return (float(t_min), float(t_max))


def _slope_record(series, label, window, check, predicted, tol):
    fit = fit_decay_exponent(series, label, window)
    return {
        "check": check,
        "predicted": float(predicted),
        "measured": fit["slope"],
        "tol": float(tol),
        "pass": bool(abs(fit["slope"] - predicted) <= tol),
    }


def sync_report(
    series,
    hyp,
    params,
    orders,
    dim,
    window,
    slope_tol=0.2,
    gap_threshold=-0.8,
    band_factor=5.0,
):
    """Exponent and synchronization checks against the decay hypothesis.

    Emits one record per check: each compares a fitted log-log slope (or slope
    gap, or a compensated band) against its closed-form prediction.  The u and
    w laws are genuine power laws, so their slope checks are two-sided.  The
    eps and div(w) laws are upper bounds only (in 2D with mu = nu the source
    of the eps equation vanishes identically for solenoidal u, and eps decays
    exponentially to the rounding floor), so their records pass when the
    measured slope is at most prediction + tol, and the gap checks pass when
    the measured gap is at most `gap_threshold`.  When the hypothesis carries
    a lower bound, the compensated quantity ||D^m u|| t^(alpha + m/2) must
    stay inside a factor-`band_factor` band.
    """
    a = hyp.alpha
    equal_visc = params.mu == params.nu
    p_n = BOUND_CONSTANTS.p_n(dim)
    records = []

    # the synchronization error (and the divergence of w in 3D) passes through
    # an exponential 4*chi transient before its algebraic tail establishes, so
    # those labels are fitted over the last decade of the window only
    t_a, t_b = window
    decade = (max(t_a, t_b / 10.0), t_b)

    def eps_slope(m):
        if equal_visc:
            return -2.0 * a - (m + 3.0) / 2.0 - p_n
        return -a - (m + 3.0) / 2.0

    for m in sorted(set(orders)):
        records.append(
            _slope_record(
                series, f"u:m={m}", window, f"u_slope_m{m}", -a - m / 2.0, slope_tol
            )
        )
        records.append(
            _slope_record(
                series,
                f"w:m={m}",
                window,
                f"w_slope_m{m}",
                -a - (m + 1.0) / 2.0,
                slope_tol,
            )
        )
        fit_e = fit_decay_exponent(series, f"eps:m={m}", decade)
        records.append(
            {
                "check": f"eps_slope_m{m}",
                "predicted": float(eps_slope(m)),
                "measured": fit_e["slope"],
                "tol": float(slope_tol),
                "pass": bool(fit_e["slope"] <= eps_slope(m) + slope_tol),
            }
        )

    # slope gaps (differences are more robust than absolute slopes)
    fit_u0 = fit_decay_exponent(series, "u:m=0", window)
    fit_w0 = fit_decay_exponent(series, "w:m=0", window)
    records.append(
        {
            "check": "w_u_gap",
            "predicted": -0.5,
            "measured": fit_w0["slope"] - fit_u0["slope"],
            "tol": slope_tol,
            "pass": bool(abs(fit_w0["slope"] - fit_u0["slope"] + 0.5) <= slope_tol),
        }
    )
    if 1 in orders:
        fit_u1 = fit_decay_exponent(series, "u:m=1", window)
        records.append(
            {
                "check": "du_u_gap",
                "predicted": -0.5,
                "measured": fit_u1["slope"] - fit_u0["slope"],
                "tol": slope_tol,
                "pass": bool(abs(fit_u1["slope"] - fit_u0["slope"] + 0.5) <= slope_tol),
            }
        )
    fit_e0 = fit_decay_exponent(series, "eps:m=0", decade)
    fit_w0_late = fit_decay_exponent(series, "w:m=0", decade)
    eps_gap_pred = eps_slope(0) - (-a - 0.5)
    measured_gap = fit_e0["slope"] - fit_w0_late["slope"]
    records.append(
        {
            "check": "eps_w_gap",
            "predicted": float(eps_gap_pred),
            "measured": float(measured_gap),
            "tol": float(gap_threshold - eps_gap_pred),
            "pass": bool(measured_gap <= gap_threshold),
        }
    )

    # ratio ||eps||/||w|| must trend to zero over the last decade of the window
    idx = series.window_indices(*decade)
    if len(idx) >= 3:
        ratio = series.values("eps:m=0")[idx] / np.maximum(
            series.values("w:m=0")[idx], np.finfo(float).tiny
        )
        x = np.log(series.times[idx])
        slope = float(np.polyfit(x, np.log(np.maximum(ratio, 1e-300)), 1)[0])
        records.append(
            {
                "check": "eps_w_ratio_trend",
                "predicted": float(eps_gap_pred),
                "measured": slope,
                "tol": 0.0,
                "pass": bool(slope < 0.0 and ratio[-1] < ratio[0]),
            }
        )

    if dim == 3 and "divw:m=0" in series.data and "curlw:m=0" in series.data:
        divw_pred = (-2.0 * a - 2.0 - 0.25) if equal_visc else (-a - 2.0)
        curlw_pred = -a - 1.0
        fit_div = fit_decay_exponent(series, "divw:m=0", decade)
        fit_curl = fit_decay_exponent(series, "curlw:m=0", decade)
        records.append(
            {
                "check": "divw_slope",
                "predicted": float(divw_pred),
                "measured": fit_div["slope"],
                "tol": float(slope_tol),
                "pass": bool(fit_div["slope"] <= divw_pred + slope_tol),
            }
        )
        gap_pred = divw_pred - curlw_pred
        gap_meas = fit_div["slope"] - fit_curl["slope"]
        records.append(
            {
                "check": "divw_curlw_gap",
                "predicted": float(gap_pred),
                "measured": float(gap_meas),
                "tol": float(gap_threshold - gap_pred),
                "pass": bool(gap_meas <= gap_threshold),
            }
        )

    if hyp.has_lower_bound:
        for m in sorted(set(orders)):
            if m < 1:
                continue
            idx = series.window_indices(*window)
            t = series.times[idx]
            v = series.values(f"u:m={m}")[idx]
            comp = v * t ** (a + m / 2.0)
            band = float(np.max(comp) / max(np.min(comp), np.finfo(float).tiny))
            records.append(
                {
                    "check": f"sandwich_u_m{m}",
                    "predicted": 1.0,
                    "measured": band,
                    "tol": float(band_factor),
                    "pass": bool(band <= band_factor),
                }
            )
    return records
