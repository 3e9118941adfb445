"""Command line driver: run experiments, re-check recorded series, sweep configs."""

import argparse
import glob
import json
import sys
from pathlib import Path

from .diagnostics import DecayHypothesis, sync_report
from .dynamics import BlowUpError, FluidParams
from .harness import Report, load_config, load_series, run_experiment
from .spectral import Grid


def _print_report(report):
    for r in report.records:
        status = "PASS" if r["pass"] else "FAIL"
        print(
            f"  [{status}] {r['check']}: measured={r['measured']:.6g} "
            f"predicted={r['predicted']:.6g} tol={r['tol']:.3g}"
        )
    print(f"experiment {report.experiment_id}: {'PASS' if report.passed else 'FAIL'}")


def _cmd_run(args):
    overrides = {"out_dir": args.out} if args.out else None
    spec = load_config(args.config, overrides=overrides)
    try:
        report = run_experiment(spec)
    except BlowUpError as err:
        print(f"blow-up: {err}", file=sys.stderr)
        return 2
    _print_report(report)
    return 0 if report.passed else 1


def _parse_hypothesis(tokens):
    kv = {}
    for tok in tokens or []:
        key, _, value = tok.partition("=")
        if not value:
            raise SystemExit(f"--hypothesis entries look like alpha=0.25, got {tok!r}")
        kv[key] = float(value)
    if "alpha" not in kv:
        return None
    return DecayHypothesis(
        alpha=kv["alpha"],
        eta=kv.get("eta"),
        C0=kv.get("C0", 1.0),
        c0=kv.get("c0", 0.0),
        T0=kv.get("T0", 0.0),
        t0=kv.get("t0", 0.0),
    )


def _cmd_report(args):
    series = load_series(args.series)
    meta_path = Path(args.meta) if args.meta else Path(args.series).with_suffix(
        ".meta.json"
    )
    if not meta_path.exists():
        raise SystemExit(f"metadata file {meta_path} not found; pass --meta")
    meta = json.loads(meta_path.read_text())
    params = FluidParams(
        mu=meta["mu"], nu=meta["nu"], chi=meta["chi"], kappa=meta.get("kappa", 0.0)
    )
    grid = Grid(dim=meta["dim"], n=meta["n"], length=meta["box_length"])
    window = tuple(meta["validity_window"])
    report = Report(experiment_id=f"report-{Path(args.series).stem}", environment=meta)
    if args.check == "sync":
        hyp = _parse_hypothesis(args.hypothesis)
        if hyp is None:
            raise SystemExit("the sync check needs --hypothesis alpha=...")
        orders = sorted(
            int(l.split("=")[1]) for l in series.labels() if l.startswith("u:m=")
        )
        report.records.extend(
            sync_report(
                series, hyp, params, orders, grid.dim, window,
                slope_tol=args.slope_tol,
            )
        )
    elif args.check == "energy":
        from .harness import _all_pairs_energy_record

        report.records.append(_all_pairs_energy_record(series, params, 1e-6))
    elif args.check == "monotonicity":
        from .harness import _monotonicity_records

        report.records.extend(
            _monotonicity_records(series, params, grid.dim, float(series.times[-1]))
        )
    else:
        raise SystemExit(
            f"check {args.check!r} needs simulation state; available on recorded "
            "series: energy, sync, monotonicity"
        )
    _print_report(report)
    return 0 if report.passed else 1


def _cmd_sweep(args):
    paths = sorted(glob.glob(args.configs))
    if not paths:
        raise SystemExit(f"no configs match {args.configs!r}")
    ok = True
    for path in paths:
        print(f"== {path}")
        code = _cmd_run(argparse.Namespace(config=path, out=None))
        ok = ok and (code == 0)
    return 0 if ok else 1


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="micropolar",
        description="Pseudo-spectral micropolar flow experiments and decay checks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment config")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", help="override out_dir")
    p_run.set_defaults(func=_cmd_run)

    p_rep = sub.add_parser("report", help="re-run a check on a recorded series CSV")
    p_rep.add_argument("--series", required=True)
    p_rep.add_argument("--check", required=True)
    p_rep.add_argument("--meta", help="metadata JSON (default: <series>.meta.json)")
    p_rep.add_argument(
        "--hypothesis", nargs="*", help="decay hypothesis, e.g. alpha=0.25 C0=2 c0=0.1"
    )
    p_rep.add_argument("--slope-tol", type=float, default=0.2)
    p_rep.set_defaults(func=_cmd_report)

    p_sw = sub.add_parser("sweep", help="run every config matching a glob")
    p_sw.add_argument("--configs", required=True)
    p_sw.set_defaults(func=_cmd_sweep)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
