"""Command line entry point.

    ikzm predict  --config run.ini
    ikzm run      --config run.ini --tau-q 5
    ikzm sweep    --config run.ini --workers 4
    ikzm validate --config run.ini --chi 256
    ikzm fit      --out runs/q2            (or: ikzm fit curve_fermion.csv ...)
    ikzm figures  --out runs/q2

Exit codes: 0 success, 2 config or input error, 3 simulation failure, 4 fit failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import warnings
from pathlib import Path

from . import harness
from .config import ConfigError, RunConfig, load_config
from .figures import FigureInputError, emit_figures
from .model import ValidityWarning, predict
from .scaling import FitError, read_table_csv, segment_regimes, table_csv, table_text, theory_for, theory_table

EXIT_OK, EXIT_CONFIG, EXIT_SIM, EXIT_FIT = 0, 2, 3, 4


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI run configuration")
    common.add_argument("--backend", choices=("fermion", "mps", "both"))
    common.add_argument("--tau-q", dest="tau_q", help="quench time(s), comma separated; replaces the config grid")
    common.add_argument("--out", help="output directory")
    common.add_argument("--workers", type=int)
    common.add_argument("--seed", type=int, help="DMRG initial-state seed")
    common.add_argument("--chi", type=int, help="TEBD bond-dimension cap")
    common.add_argument("--dt", type=float, help="time step (default min(0.01, tau_Q/1000))")

    p = argparse.ArgumentParser(prog="ikzm", description="Kink formation in inhomogeneous Ising quenches")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("predict", parents=[common], help="analytic densities, exponents and crossover")
    sub.add_parser("run", parents=[common], help="one quench")
    sub.add_parser("sweep", parents=[common], help="quench over the tau_Q grid (resumable)")
    sub.add_parser("validate", parents=[common], help="compare fermion and mps trajectories")
    fit = sub.add_parser("fit", parents=[common], help="segment and fit existing curves")
    fit.add_argument("curves", nargs="*", help="curve CSV files (default: curve_*.csv in the output directory)")
    sub.add_parser("figures", parents=[common], help="plot data and SVG figures from an output directory")
    return p


def _config(args, required: bool = True) -> RunConfig | None:
    if args.config is None:
        if required:
            raise CliError("--config is required for this command", EXIT_CONFIG)
        return None
    try:
        cfg = load_config(args.config)
        changes = {}
        if args.backend:
            changes["backend"] = args.backend
        if args.tau_q:
            try:
                changes["tau_grid"] = tuple(float(s) for s in args.tau_q.split(",") if s.strip())
            except ValueError:
                raise ConfigError(f"--tau-q: cannot parse {args.tau_q!r}") from None
        for key in ("out", "workers", "seed", "chi", "dt"):
            v = getattr(args, key)
            if v is not None:
                changes["out_dir" if key == "out" else key] = v
        return cfg.replace(**changes) if changes else cfg
    except ConfigError as exc:
        raise CliError(str(exc), EXIT_CONFIG) from None


def _out_dir(args, cfg) -> Path:
    if args.out:
        return Path(args.out)
    if cfg is not None:
        return Path(cfg.out_dir)
    raise CliError("give --out or --config", EXIT_CONFIG)


def cmd_predict(args):
    cfg = _config(args)
    spec = cfg.spec()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ValidityWarning)
        for tau in cfg.tau_grid:
            pred = predict(spec, cfg.protocol(tau))
            print(json.dumps({"tau_Q": tau, **dataclasses.asdict(pred)}, sort_keys=True, default=str))


def cmd_run(args):
    cfg = _config(args)
    if len(cfg.tau_grid) != 1:
        raise CliError("run needs exactly one tau_Q (use --tau-q)", EXIT_CONFIG)
    store = harness.RecordStore(cfg.out_dir)
    backends = ["fermion", "mps"] if cfg.backend == "both" else [cfg.backend]
    failed = False
    for b in backends:
        snap = cfg.snapshot(cfg.tau_grid[0], b)
        rec = store.load(snap) if store.has(snap) else harness.simulate(snap)
        store.save(rec)
        if rec.ok:
            print(f"{b} tau_Q={rec.tau_Q:g} d_final={rec.d_final:.10g} record={rec.key}")
        else:
            print(f"{b} tau_Q={rec.tau_Q:g} FAILED: {rec.error}", file=sys.stderr)
            failed = True
    if failed:
        raise CliError("simulation failed", EXIT_SIM)


def cmd_sweep(args):
    cfg = _config(args)
    try:
        res = harness.run_sweep(cfg)
    except harness.SimulationError as exc:
        raise CliError(str(exc), EXIT_SIM) from None
    for b, c in res.curves.items():
        print(f"{b}: {len(c)} points -> {Path(cfg.out_dir) / f'curve_{b}.csv'}")
    if res.failures:
        print(f"{len(res.failures)} point(s) failed and were left out", file=sys.stderr)


def cmd_validate(args):
    cfg = _config(args)
    try:
        rep = harness.cross_validate(cfg)
    except harness.SimulationError as exc:
        raise CliError(str(exc), EXIT_SIM) from None
    for r in rep.rows:
        flag = "  EXCEEDS TOLERANCE" if r.flagged else ""
        print(f"tau_Q={r.tau_Q:g} max|dd|={r.max_abs:.3e} mean|dd|={r.mean_abs:.3e}{flag}")
    if rep.flagged:
        raise CliError(f"backend discrepancy above {rep.tolerance:g}", EXIT_SIM)


def _fit_options(cfg):
    return cfg.fit_options() if cfg is not None else {}


def cmd_fit(args):
    cfg = _config(args, required=False)
    out = _out_dir(args, cfg) if (args.out or cfg is not None or not args.curves) else Path(args.curves[0]).parent
    paths = [Path(p) for p in args.curves] or sorted(out.glob("curve_*.csv"))
    if not paths:
        raise CliError(f"no curve files found in {out}", EXIT_CONFIG)
    curves = []
    try:
        for p in paths:
            curves += harness.read_curve_csv(p)
    except (OSError, ValueError) as exc:
        raise CliError(str(exc), EXIT_CONFIG) from None
    reports, qs = [], []
    try:
        for c in curves:
            rep = segment_regimes(c, theory_for(c.metadata), **_fit_options(cfg))
            reports.append(rep)
            qs.append(None if c.metadata["alpha_q"] == 0 else c.metadata["q"])
    except FitError as exc:
        raise CliError(f"fit failed: {exc}", EXIT_FIT) from None
    rows = theory_table(qs, reports)
    out.mkdir(parents=True, exist_ok=True)
    (out / "table.csv").write_text(table_csv(rows))
    (out / "table.txt").write_text(table_text(rows))
    for c, rep in zip(curves, reports):
        m = c.metadata
        line = f"{m['backend']} L={m['L']} q={m['q']:g} alpha={m['alpha_q']:.6g}: "
        if rep.single_regime:
            line += f"single regime beta={rep.kzm_fit.beta:.4f}+-{rep.kzm_fit.delta_beta:.4f}"
        else:
            line += (
                f"beta_fast={rep.kzm_fit.beta:.4f}+-{rep.kzm_fit.delta_beta:.4f} "
                f"beta_slow={rep.ikzm_fit.beta:.4f}+-{rep.ikzm_fit.delta_beta:.4f} "
                f"break={rep.tau_star_fit:.4g}"
            )
        print(line)
    print(table_text(rows), end="")


def cmd_figures(args):
    cfg = _config(args, required=False)
    out = _out_dir(args, cfg)
    try:
        records = harness.RecordStore(out).all_records()
        curves = []
        for p in sorted(out.glob("curve_*.csv")):
            curves += harness.read_curve_csv(p)
        table = out / "table.csv"
        rows = read_table_csv(table.read_text()) if table.exists() else []
    except (OSError, ValueError) as exc:
        raise CliError(str(exc), EXIT_CONFIG) from None
    try:
        written, skipped = emit_figures(out / "figures", records, curves, rows, _fit_options(cfg))
    except FigureInputError as exc:
        raise CliError(f"{out}: {exc}", EXIT_CONFIG) from None
    for name, (data, svg) in written.items():
        print(f"{name}: {data} {svg}")
    for name, why in skipped.items():
        print(f"{name}: skipped ({why})", file=sys.stderr)


COMMANDS = {
    "predict": cmd_predict,
    "run": cmd_run,
    "sweep": cmd_sweep,
    "validate": cmd_validate,
    "fit": cmd_fit,
    "figures": cmd_figures,
}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
