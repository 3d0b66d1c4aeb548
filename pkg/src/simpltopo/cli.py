"""Command-line driver.

Subcommands:
  run      one optimization run; writes convergence.csv and density.pgm
           (and fields.vtk with --vtk) into the output directory.
  compare  simpl-a, simpl-b, and oc on the same configuration; per-method
           artifact directories plus a merged comparison.csv.
  serve    start the REST service.

Exit codes: 0 converged, 1 not converged, 2 configuration error. The env var
SIMPL_LOG in {quiet, info, debug} sets stderr verbosity (default info).
"""

import argparse
import logging
import os
import sys
from pathlib import Path

from .config import ConfigurationError, parse_config
from .optimize import run as run_optimization
from .output import write_convergence_csv, write_density_image, write_vtk
from .physics import Evaluator

log = logging.getLogger("simpltopo")

_LOG_LEVELS = {"quiet": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}


def _setup_logging():
    level_name = os.environ.get("SIMPL_LOG", "info").lower()
    if level_name not in _LOG_LEVELS:
        raise ConfigurationError(
            f"SIMPL_LOG: expected one of {sorted(_LOG_LEVELS)}, got {level_name!r}")
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(message)s"))
    log.addHandler(handler)
    log.setLevel(_LOG_LEVELS[level_name])


def build_parser():
    parser = argparse.ArgumentParser(prog="simpltopo",
                                     description="SiMPL topology optimization")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one optimization run")
    p_run.add_argument("--config", help="JSON configuration file")
    p_run.add_argument("--method", choices=["simpl-a", "simpl-b", "oc", "pgd"])
    p_run.add_argument("--h", type=float, help="uniform mesh size (must divide extents)")
    p_run.add_argument("--max-iters", type=int)
    p_run.add_argument("--out", help="output directory")
    p_run.add_argument("--vtk", action="store_true", help="also write fields.vtk")

    p_cmp = sub.add_parser("compare", help="run simpl-a, simpl-b, and oc on one config")
    p_cmp.add_argument("--config", help="JSON configuration file")
    p_cmp.add_argument("--h", type=float)
    p_cmp.add_argument("--max-iters", type=int)
    p_cmp.add_argument("--out", help="output directory")

    p_srv = sub.add_parser("serve", help="start the REST service")
    p_srv.add_argument("--host", default="127.0.0.1")
    p_srv.add_argument("--port", type=int, default=8000)
    return parser


def _write_run_artifacts(cfg, report, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    mesh = cfg.problem().mesh
    write_convergence_csv(report, out / "convergence.csv")
    write_density_image(report.final_density, mesh, out / "density.pgm")
    if cfg.write_vtk:
        spec = cfg.problem()
        rec = Evaluator(spec, rel_tol=cfg.pde_rel_tol).evaluate(
            report.final_density, need_gradient=True)
        write_vtk({"density": report.final_density,
                   "compliance_gradient": rec.gradient,
                   "filtered_density": rec.rho_tilde,
                   "displacement": rec.displacement},
                  mesh, out / "fields.vtk")
    return out


def _log_report(report):
    tail = report.history[-1]
    log.info("%s: %s after %d iterations, compliance %.8g, stationarity %.3e",
             report.method, "converged" if report.converged else "NOT converged",
             report.iterations, tail.compliance, tail.stationarity)
    if report.failure:
        log.warning("%s: stopped early: %s", report.method, report.failure)
    for rec in report.history if log.isEnabledFor(logging.DEBUG) else []:
        log.debug("iter %3d  F=%.10g  stat=%.3e  step=%.3e  trials=%d",
                  rec.k, rec.compliance, rec.stationarity, rec.step, rec.ls_trials)


def _cmd_run(args):
    overrides = {"method": args.method, "h": args.h, "max_iters": args.max_iters,
                 "out_dir": args.out, "write_vtk": args.vtk}
    cfg = parse_config(args.config, overrides)
    report = run_optimization(cfg)
    out = _write_run_artifacts(cfg, report, cfg.out_dir)
    _log_report(report)
    log.info("artifacts written to %s", out)
    return 0 if report.converged else 1


def _cmd_compare(args):
    overrides = {"h": args.h, "max_iters": args.max_iters, "out_dir": args.out}
    base = parse_config(args.config, overrides)
    out = Path(base.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = ["method,iter,compliance,stationarity_l2"]
    all_converged = True
    for method in ("simpl-a", "simpl-b", "oc"):
        cfg = parse_config(args.config, dict(overrides, method=method))
        report = run_optimization(cfg)
        _log_report(report)
        _write_run_artifacts(cfg, report, out / method)
        all_converged &= report.converged
        for rec in report.history:
            lines.append(f"{method},{rec.k},{format(rec.compliance, '.17g')},"
                         f"{format(rec.stationarity_l2, '.17g')}")
    (out / "comparison.csv").write_text("\n".join(lines) + "\n", encoding="ascii")
    log.info("comparison written to %s", out / "comparison.csv")
    return 0 if all_converged else 1


def _cmd_serve(args):
    import uvicorn

    from .service.app import app
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        _setup_logging()
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "compare":
            return _cmd_compare(args)
        return _cmd_serve(args)
    except ConfigurationError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
