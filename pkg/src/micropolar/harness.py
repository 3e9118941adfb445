"""Batch experiment runner: config file -> simulation -> CSV series -> report.

Config files are flat ``key = value`` text (``#`` starts a comment).  Keys are
validated strictly: an unknown key is an error, because a silently ignored
typo in mu/nu/chi would wreck any decay comparison.  See DEFAULTS for the
full key set and the values filled in when a key is omitted.
"""

from dataclasses import dataclass, field
import hashlib
import json
import math
from pathlib import Path

import numpy as np

from .diagnostics import (
    DecayHypothesis,
    NormSeries,
    epsilon_residual,
    monotonicity_onset,
    smallness_margin,
    sync_report,
    t_doublestar_bound_3d,
    validity_window,
)
from .dynamics import BlowUpError, FluidParams, SimConfig, simulate
from .initdata import (
    SpectrumEnvelope,
    decay_character_data,
    linear_oracle_evolve,
    random_solenoidal,
    taylor_green,
)
from .spectral import Grid, save_field

__all__ = [
    "ExperimentSpec",
    "Report",
    "CHECK_NAMES",
    "load_config",
    "run_experiment",
    "emit_csv",
    "load_series",
]

CHECK_NAMES = ("energy", "sync", "monotonicity", "epsilon_residual", "oracle", "bounds")

DEFAULTS = {
    "dim": "2",
    "n": "64",
    "box_length": "6.283185307179586",
    "mu": "0.1",
    "nu": "0.1",
    "chi": "0.1",
    "kappa": "0.0",
    "dt": "0.01",
    "t_end": "1.0",
    "record_stride": "10",
    "seminorm_orders": "0,1",
    "dealias": "true",
    "nonlinear": "true",
    "seed": "0",
    "out_dir": ".",
    "checks": "",
    "slope_tol": "0.2",
    "energy_tol": "1e-6",
    "blowup_factor": "1e6",
    "initdata.kind": "random_solenoidal",
    "initdata.alpha": "0.25",
    "initdata.amplitude": "1.0",
    "initdata.kc": "",
    "initdata.exponent_r": "",
    "initdata.seed": "",
    "initdata.with_w": "false",
    "hypothesis.alpha": "",
    "hypothesis.eta": "",
    "hypothesis.C0": "1.0",
    "hypothesis.c0": "0.0",
    "hypothesis.T0": "0.0",
    "hypothesis.t0": "0.0",
}

_INITDATA_KINDS = ("decay_character", "taylor_green", "random_solenoidal")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentSpec:
    sim: SimConfig
    initdata: dict
    checks: tuple
    out_dir: Path
    seed: int
    slope_tol: float
    energy_tol: float
    hypothesis: DecayHypothesis = None
    experiment_id: str = "experiment"


@dataclass
class Report:
    experiment_id: str
    environment: dict
    records: list = field(default_factory=list)

    @property
    def passed(self):
        return all(r["pass"] for r in self.records)

    def to_json(self):
        return json.dumps(
            {
                "experiment_id": self.experiment_id,
                "environment": self.environment,
                "records": self.records,
                "pass": self.passed,
            },
            indent=2,
        )


def _parse_kv(text, path="<config>"):
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in DEFAULTS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        values[key] = value
    return values


def _as_bool(key, value):
    low = value.lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise ConfigError(f"key {key!r}: expected a boolean, got {value!r}")


def _as_float(key, value):
    try:
        return float(value)
    except ValueError as err:
        raise ConfigError(f"key {key!r}: expected a number, got {value!r}") from err


def _as_int(key, value):
    try:
        return int(value)
    except ValueError as err:
        raise ConfigError(f"key {key!r}: expected an integer, got {value!r}") from err


def load_config(path_or_text, base_dir=None, overrides=None):
    """Parse and fully validate an experiment config; unknown keys are errors."""
    if isinstance(path_or_text, (str, Path)) and "\n" not in str(path_or_text):
        path = Path(path_or_text)
        text = path.read_text()
        name = path.stem
        base = base_dir or path.parent
    else:
        text = str(path_or_text)
        name = "inline"
        base = Path(base_dir or ".")
    values = dict(DEFAULTS)
    values.update(_parse_kv(text, path=name))
    if overrides:
        for key, val in overrides.items():
            if key not in DEFAULTS:
                raise ConfigError(f"unknown key {key!r}")
            values[key] = val

    dim = _as_int("dim", values["dim"])
    try:
        grid = Grid(dim=dim, n=_as_int("n", values["n"]),
                    length=_as_float("box_length", values["box_length"]))
    except ValueError as err:
        raise ConfigError(str(err)) from err
    try:
        params = FluidParams(
            mu=_as_float("mu", values["mu"]),
            nu=_as_float("nu", values["nu"]),
            chi=_as_float("chi", values["chi"]),
            kappa=_as_float("kappa", values["kappa"]),
        )
    except ValueError as err:
        raise ConfigError(f"mu/nu/chi/kappa: {err}") from err

    orders = tuple(
        int(tok) for tok in values["seminorm_orders"].split(",") if tok.strip() != ""
    )
    try:
        sim = SimConfig(
            grid=grid,
            params=params,
            dt=_as_float("dt", values["dt"]),
            t_end=_as_float("t_end", values["t_end"]),
            record_stride=_as_int("record_stride", values["record_stride"]),
            seminorm_orders=orders,
            dealias=_as_bool("dealias", values["dealias"]),
            nonlinear=_as_bool("nonlinear", values["nonlinear"]),
            blowup_factor=_as_float("blowup_factor", values["blowup_factor"]),
        )
    except ValueError as err:
        raise ConfigError(str(err)) from err

    checks = tuple(t.strip() for t in values["checks"].split(",") if t.strip())
    for c in checks:
        if c not in CHECK_NAMES:
            raise ConfigError(f"key 'checks': unknown check {c!r} (have {CHECK_NAMES})")

    seed = _as_int("seed", values["seed"])
    kind = values["initdata.kind"]
    if kind not in _INITDATA_KINDS:
        raise ConfigError(f"key 'initdata.kind': unknown kind {kind!r}")
    initdata = {
        "kind": kind,
        "alpha": _as_float("initdata.alpha", values["initdata.alpha"]),
        "amplitude": _as_float("initdata.amplitude", values["initdata.amplitude"]),
        "kc": (
            _as_float("initdata.kc", values["initdata.kc"])
            if values["initdata.kc"]
            else None
        ),
        "exponent_r": (
            _as_float("initdata.exponent_r", values["initdata.exponent_r"])
            if values["initdata.exponent_r"]
            else None
        ),
        "seed": (
            _as_int("initdata.seed", values["initdata.seed"])
            if values["initdata.seed"]
            else seed
        ),
        "with_w": _as_bool("initdata.with_w", values["initdata.with_w"]),
    }

    hypothesis = None
    if values["hypothesis.alpha"]:
        alpha = _as_float("hypothesis.alpha", values["hypothesis.alpha"])
        hypothesis = DecayHypothesis(
            alpha=alpha,
            eta=(
                _as_float("hypothesis.eta", values["hypothesis.eta"])
                if values["hypothesis.eta"]
                else None
            ),
            C0=_as_float("hypothesis.C0", values["hypothesis.C0"]),
            c0=_as_float("hypothesis.c0", values["hypothesis.c0"]),
            T0=_as_float("hypothesis.T0", values["hypothesis.T0"]),
            t0=_as_float("hypothesis.t0", values["hypothesis.t0"]),
        )
    if "sync" in checks and hypothesis is None:
        raise ConfigError("the 'sync' check needs hypothesis.alpha to be set")

    out_dir = Path(values["out_dir"])
    if not out_dir.is_absolute():
        out_dir = Path(base) / out_dir
    digest = hashlib.sha256(text.encode()).hexdigest()[:10]
    return ExperimentSpec(
        sim=sim,
        initdata=initdata,
        checks=checks,
        out_dir=out_dir,
        seed=seed,
        slope_tol=_as_float("slope_tol", values["slope_tol"]),
        energy_tol=_as_float("energy_tol", values["energy_tol"]),
        hypothesis=hypothesis,
        experiment_id=f"{name}-{digest}",
    )


def build_initial_state(spec):
    grid = spec.sim.grid
    d = spec.initdata
    if d["kind"] == "decay_character":
        return decay_character_data(
            grid,
            d["alpha"],
            d["amplitude"],
            d["seed"],
            cutoff_kc=d["kc"],
            params=spec.sim.params,
        )
    if d["kind"] == "taylor_green":
        return taylor_green(grid, d["amplitude"])
    kc = d["kc"] if d["kc"] is not None else grid.k0 * max(4, grid.n // 8)
    r = d["exponent_r"]
    if r is None:
        r = 2.0 * d["alpha"] - grid.dim / 2.0
    env = SpectrumEnvelope(
        exponent_r=r, cutoff_kc=kc, amplitude=d["amplitude"], seed=d["seed"]
    )
    return random_solenoidal(grid, env, with_w=d["with_w"])


def emit_csv(series, path):
    """Write a NormSeries as CSV: `t` first, labels sorted, 17 significant digits."""
    labels = series.labels()
    if len(series.times) == 0:
        raise ValueError("refusing to write an empty series")
    lines = ["t," + ",".join(labels)]
    for i, t in enumerate(series.times):
        row = [f"{t:.17g}"] + [f"{series.data[l][i]:.17g}" for l in labels]
        lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n")


def load_series(path):
    text = Path(path).read_text().strip().splitlines()
    header = text[0].split(",")
    if header[0] != "t":
        raise ValueError(f"{path}: first CSV column must be 't', got {header[0]!r}")
    rows = [[float(tok) for tok in line.split(",")] for line in text[1:]]
    arr = np.array(rows)
    data = {label: arr[:, j + 1] for j, label in enumerate(header[1:])}
    return NormSeries(times=arr[:, 0], data=data)


def _all_pairs_energy_record(series, params, tol):
    """Worst slack/rhs over every recorded pair s < t, via a cumulative integral."""
    e = series.values("energy_lhs")
    du = series.values("dissip_u")
    dw = series.values("dissip_w")
    t = series.times
    integrand = du + dw
    cum = np.concatenate(
        [[0.0], np.cumsum(0.5 * (integrand[1:] + integrand[:-1]) * np.diff(t))]
    )
    worst = np.inf
    for i in range(len(t) - 1):
        rhs = max(e[i], np.finfo(float).tiny)
        slack = e[i] - (e[i + 1 :] + 2.0 * (cum[i + 1 :] - cum[i]))
        worst = min(worst, float(np.min(slack / rhs)))
    return {
        "check": "energy",
        "predicted": 0.0,
        "measured": worst,
        "tol": tol,
        "pass": bool(worst >= -tol),
    }


def _monotonicity_records(series, params, dim, horizon):
    records = []
    if dim == 3:
        z0 = series.values("z:m=0")[0]
        bound = t_doublestar_bound_3d(params, z0)
        onset = monotonicity_onset(series, "z:m=1")
        in_horizon = bound <= horizon
        records.append(
            {
                "check": "monotonicity_3d",
                "predicted": float(bound),
                "measured": float("nan") if onset is None else float(onset),
                "tol": 0.0,
                "pass": bool(
                    (not in_horizon) or (onset is not None and onset <= bound)
                ),
            }
        )
    else:
        z = series.values("z:m=0")
        gamma = params.gamma()
        crossing = np.nonzero(z <= 2.0 * gamma)[0]
        if len(crossing) == 0:
            records.append(
                {
                    "check": "monotonicity_2d",
                    "predicted": 2.0 * gamma,
                    "measured": float(np.min(z)),
                    "tol": 0.0,
                    "pass": True,  # threshold never reached inside the horizon
                }
            )
            return records
        i0 = int(crossing[0])
        dz = series.values("z:m=1")[i0:]
        rises = dz[1:] - dz[:-1]
        worst = float(np.max(rises / np.maximum(dz[:-1], np.finfo(float).tiny)))
        records.append(
            {
                "check": "monotonicity_2d",
                "predicted": 0.0,
                "measured": worst,
                "tol": 1e-10,
                "pass": bool(worst <= 1e-10),
            }
        )
    return records


def _epsilon_residual_records(snapshots, params):
    if len(snapshots) < 9:
        raise ValueError("epsilon_residual check needs at least 9 snapshots")
    mid = len(snapshots) // 2
    results = {}
    for stride in (4, 2, 1):
        res = epsilon_residual(snapshots, params, stride=stride)
        center = np.argmin(np.abs(res["times"] - snapshots[mid].time))
        results[stride] = (res["residual"][center], res["scale"][center])
    orders = [
        math.log2(results[4][0] / max(results[2][0], 1e-300)),
        math.log2(results[2][0] / max(results[1][0], 1e-300)),
    ]
    order = min(orders)
    ratio = results[1][0] / max(results[1][1], 1e-300)
    return [
        {
            "check": "epsilon_residual_order",
            "predicted": 2.0,
            "measured": float(order),
            "tol": 0.2,
            "pass": bool(order >= 1.8),
        },
        {
            "check": "epsilon_residual_scale",
            "predicted": 0.0,
            "measured": float(ratio),
            "tol": 1e-4,
            "pass": bool(ratio < 1e-4),
        },
    ]


def _oracle_record(spec, z0, final_state):
    if spec.sim.nonlinear:
        raise ValueError("the 'oracle' check applies to linearized runs only")
    oracle = linear_oracle_evolve(z0, spec.sim.params, spec.sim.t_end)
    num = np.concatenate(
        [final_state.u.coeffs.ravel(), final_state.w.coeffs.ravel()]
    )
    ref = np.concatenate([oracle.u.coeffs.ravel(), oracle.w.coeffs.ravel()])
    scale = max(float(np.max(np.abs(ref))), np.finfo(float).tiny)
    err = float(np.max(np.abs(num - ref)) / scale)
    return {
        "check": "oracle",
        "predicted": 0.0,
        "measured": err,
        "tol": 1e-10,
        "pass": bool(err <= 1e-10),
    }


def _bounds_records(spec, z0):
    margin = smallness_margin(z0, spec.sim.params)
    records = [
        {
            "check": "bounds_smallness",
            "predicted": margin["threshold"],
            "measured": margin["value"],
            "tol": 0.0,
            "pass": margin["satisfied"],
        },
        {
            "check": "bounds_h1_smallness",
            "predicted": margin["h1_threshold"],
            "measured": margin["h1_value"],
            "tol": 0.0,
            "pass": margin["h1_satisfied"],
        },
    ]
    if spec.sim.grid.dim == 3:
        records.append(
            {
                "check": "bounds_t_doublestar",
                "predicted": spec.sim.t_end,
                "measured": t_doublestar_bound_3d(spec.sim.params, z0.z_norm(0)),
                "tol": 0.0,
                "pass": True,  # informational: where the bound sits vs the horizon
            }
        )
    return records


def run_experiment(spec):
    """Generate data, simulate, write CSV/meta/report, run the requested checks."""
    spec.out_dir.mkdir(parents=True, exist_ok=True)
    z0 = build_initial_state(spec)
    keep = "epsilon_residual" in spec.checks
    sim = spec.sim
    if keep and not sim.keep_snapshots:
        sim = SimConfig(
            grid=sim.grid,
            params=sim.params,
            dt=sim.dt,
            t_end=sim.t_end,
            record_stride=sim.record_stride,
            seminorm_orders=sim.seminorm_orders,
            dealias=sim.dealias,
            nonlinear=sim.nonlinear,
            blowup_factor=sim.blowup_factor,
            keep_snapshots=True,
        )
    csv_path = spec.out_dir / "series.csv"
    try:
        result = simulate(sim, z0)
    except BlowUpError as err:
        if getattr(err, "partial_series", None) is not None:
            emit_csv(err.partial_series, csv_path)
        raise
    series = result.series
    emit_csv(series, csv_path)
    kc = spec.initdata["kc"]
    if kc is None:
        kc = sim.grid.k0 * max(4, sim.grid.n // 8)
    t_floor = 1.5 / (sim.params.gamma() * kc * kc)
    window = validity_window(series, sim.grid, sim.params, t_floor=t_floor)
    environment = {
        "dim": sim.grid.dim,
        "n": sim.grid.n,
        "box_length": sim.grid.length,
        "mu": sim.params.mu,
        "nu": sim.params.nu,
        "chi": sim.params.chi,
        "kappa": sim.params.kappa,
        "dt": sim.dt,
        "t_end": sim.t_end,
        "seed": spec.seed,
        "initdata": spec.initdata,
        "validity_window": list(window),
        "slope_tol": spec.slope_tol,
    }
    (spec.out_dir / "series.meta.json").write_text(
        json.dumps(environment, indent=2) + "\n"
    )
    save_field(result.final_state.u, spec.out_dir / "final_u.field")
    save_field(result.final_state.w, spec.out_dir / "final_w.field")

    report = Report(experiment_id=spec.experiment_id, environment=environment)
    for check in spec.checks:
        if check == "energy":
            report.records.append(
                _all_pairs_energy_record(series, sim.params, spec.energy_tol)
            )
        elif check == "sync":
            report.records.extend(
                sync_report(
                    series,
                    spec.hypothesis,
                    sim.params,
                    sorted(set(sim.seminorm_orders)),
                    sim.grid.dim,
                    window,
                    slope_tol=spec.slope_tol,
                )
            )
        elif check == "monotonicity":
            report.records.extend(
                _monotonicity_records(series, sim.params, sim.grid.dim, sim.t_end)
            )
        elif check == "epsilon_residual":
            report.records.extend(
                _epsilon_residual_records(result.snapshots, sim.params)
            )
        elif check == "oracle":
            report.records.append(_oracle_record(spec, z0, result.final_state))
        elif check == "bounds":
            report.records.extend(_bounds_records(spec, z0))
    (spec.out_dir / "report.json").write_text(report.to_json() + "\n")
    return report
