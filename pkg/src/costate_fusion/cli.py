"""
Command line entry point ``costate-fusion``.

Subcommands::

    simulate   synthetic descent telemetry to CSV
    run        co-state pipeline over a telemetry CSV
    ekf        EKF NIS baseline over a telemetry CSV
    compare    co-state vs EKF alarm-time experiment
    calibrate  generator diagnostics of one run
    mpc-demo   closed-loop descent with the risk-aware MPC

Exit codes are 0 on success, 1 on input errors and 2 on numerical failures.
"""
import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np
from pydantic import ValidationError

from costate_fusion import __version__
from costate_fusion.config import RunConfig, load_config
from costate_fusion.descent_sim import simulate_descent, write_telemetry_csv
from costate_fusion.errors import FusionError, InputFormatError, NumericalFailureError
from costate_fusion.experiments import calibrate_generator, compare_detectors, run_ekf
from costate_fusion.mpc import run_mpc_demo
from costate_fusion.pipeline import run_pipeline
from costate_fusion.utility import _CustomEncoder, dump_json

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NUMERICAL = 2


def _config(args) -> RunConfig:
    return load_config(args.config).with_seed(args.seed)


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _echo(payload: dict):
    print(json.dumps(payload, cls=_CustomEncoder, sort_keys=True))


def cmd_simulate(args) -> int:
    config = _config(args)
    result = simulate_descent(config.simulation, config.fault)
    path = write_telemetry_csv(result.samples, _out(args) / "telemetry.csv", emit_truth=args.emit_truth)
    _echo({"telemetry": path, "samples": len(result.samples), "touchdown_t": result.touchdown_t,
           "touchdown_speed": result.touchdown_speed, "fault_onset_t": result.fault_onset_t})
    return EXIT_OK


def cmd_run(args) -> int:
    report = run_pipeline(args.input, _config(args))
    paths = report.write(_out(args))
    _echo({key: report.summary[key] for key in ("first_costate_alarm_t", "first_ekf_alarm_t", "peak_hazard_prob",
                                                 "mean_calibration_error", "touchdown_t")} | {"out": paths})
    return EXIT_OK


def cmd_ekf(args) -> int:
    frame, summary = run_ekf(args.input, _config(args))
    out = _out(args)
    frame.to_csv(out / "ekf_signals.csv", index=False, float_format="%.17g")
    dump_json(summary, out / "ekf_summary.json")
    _echo({"first_ekf_alarm_t": summary["first_ekf_alarm_t"], "mean_nis": summary["mean_nis"]})
    return EXIT_OK


def cmd_compare(args) -> int:
    frame, summary = compare_detectors(_config(args), runs=args.runs, seed=args.seed or 0,
                                       nominal_runs=args.nominal_runs, progress=not args.no_progress,
                                       workers=args.workers)
    out = _out(args)
    frame.to_csv(out / "compare_runs.csv", index=False, float_format="%.17g")
    dump_json(summary, out / "compare_summary.json")
    _echo({k: v for k, v in summary.items() if k != "fault"})
    return EXIT_OK


def cmd_calibrate(args) -> int:
    result = calibrate_generator(args.input, _config(args), seed=args.seed or 0)
    path = _out(args) / "calibration.json"
    dump_json(result, path)
    _echo({"calibration": path, "method": result["method"], "calibration_error": result["calibration_error"],
           "max_real_eigenvalue": max(result["spectral_real_parts"])})
    return EXIT_OK


def cmd_mpc_demo(args) -> int:
    frame, summary = run_mpc_demo(_config(args))
    out = _out(args)
    frame.to_csv(out / "mpc_trace.csv", index=False, float_format="%.17g")
    dump_json(summary, out / "mpc_summary.json")
    _echo({k: v for k, v in summary.items() if k != "config_echo"})
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    """Argument parser with one subparser per command."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML or JSON run configuration")
    common.add_argument("--seed", type=int, default=None, help="seed overriding simulation.seed")
    common.add_argument("--out", default=".", help="output directory, created when missing")
    common.add_argument("--log-level", default="WARNING",
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"], help="logging level, default WARNING")

    parser = argparse.ArgumentParser(prog="costate-fusion",
                                     description="Co-state data fusion for powered-descent risk monitoring")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    simulate = sub.add_parser("simulate", parents=[common], help="simulate a descent and write telemetry.csv")
    simulate.add_argument("--emit-truth", action="store_true", help="append truth_* columns")
    simulate.set_defaults(func=cmd_simulate)

    run = sub.add_parser("run", parents=[common], help="run the co-state pipeline over a telemetry CSV")
    run.add_argument("--input", required=True, help="telemetry CSV")
    run.set_defaults(func=cmd_run)

    ekf = sub.add_parser("ekf", parents=[common], help="run the EKF NIS baseline over a telemetry CSV")
    ekf.add_argument("--input", required=True, help="telemetry CSV")
    ekf.set_defaults(func=cmd_ekf)

    compare = sub.add_parser("compare", parents=[common], help="co-state vs EKF alarm-time experiment")
    compare.add_argument("--runs", type=int, default=100, help="fault-injected runs, default 100")
    compare.add_argument("--nominal-runs", type=int, default=0, help="additional fault-free runs, default 0")
    compare.add_argument("--no-progress", action="store_true", help="hide the progress bar")
    compare.add_argument("--workers", type=int, default=1, help="worker processes for the runs, default 1")
    compare.set_defaults(func=cmd_compare)

    calibrate = sub.add_parser("calibrate", parents=[common], help="generator diagnostics of one run")
    calibrate.add_argument("--input", default=None, help="telemetry CSV, a fresh simulation when omitted")
    calibrate.set_defaults(func=cmd_calibrate)

    mpc = sub.add_parser("mpc-demo", parents=[common], help="closed-loop descent with the risk-aware MPC")
    mpc.set_defaults(func=cmd_mpc_demo)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Run the command line and return the exit code."""
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (NumericalFailureError, ArithmeticError, np.linalg.LinAlgError) as err:
        logger.error("Numerical failure: %s", err)
        return EXIT_NUMERICAL
    except (InputFormatError, FusionError, ValueError, ValidationError, OSError) as err:
        logger.error("Input error: %s", err)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
