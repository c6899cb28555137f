"""
Batch experiments behind the ``ekf``, ``compare`` and ``calibrate`` commands.

The following are available:

    * :func `run_ekf`
    * :func `compare_detectors`
    * :func `calibrate_generator`
"""
from __future__ import annotations

import concurrent.futures
from pathlib import Path
from typing import Optional, Sequence, Tuple, Union
import logging

import numpy as np
import pandas as pd
from tqdm import tqdm

from costate_fusion.config import FaultConfig, RunConfig
from costate_fusion.descent_sim import TelemetrySample, initial_state, simulate_descent
from costate_fusion.ekf_baseline import EkfBaseline, nis_threshold
from costate_fusion.errors import UnreachableHazardError, WarmupIncompleteError
from costate_fusion.generator import (LabeledTrajectory, bootstrap_ci, fit_generator, log_likelihood, mfpt,
                                      spectral_stability)
from costate_fusion.pipeline import ingest_csv, run_pipeline, stream_telemetry
from costate_fusion.regimes import costate_centroids, label_regimes

logger = logging.getLogger(__name__)

DEFAULT_FAULT = FaultConfig(kind="thrust_map_scale", magnitude=0.9, onset_altitude=7000.0)


def _load(telemetry: Union[str, Path, Sequence[TelemetrySample]]) -> list:
    return ingest_csv(telemetry) if isinstance(telemetry, (str, Path)) else list(telemetry)


def run_ekf(telemetry: Union[str, Path, Sequence[TelemetrySample]],
            config: Optional[RunConfig] = None) -> Tuple[pd.DataFrame, dict]:
    """
    Run the EKF baseline alone, in measurement-time order.

    The NIS alarm starts after the same number of samples as the co-state
    warm-up so that both detectors see aligned windows. Non-finite samples
    and repeated timestamps are skipped.

    Returns
    -------
    tuple
        Per-sample frame (t, ekf_nis, ekf_alarm) and a summary dict.
    """
    config = config or RunConfig()
    samples = sorted(_load(telemetry), key=lambda s: s.t)
    pcfg = config.pipeline
    x0 = initial_state(config.simulation) if pcfg.initial_state is None else np.asarray(pcfg.initial_state, dtype=float)
    ekf = EkfBaseline.from_config(x0, config.ekf, config.simulation, pcfg.alarms)
    rows, t_prev, skipped, steps = [], None, 0, 0
    for s in samples:
        y = np.asarray(s.y, dtype=float)
        if not np.all(np.isfinite(y)) or (t_prev is not None and s.t <= t_prev):
            skipped += 1
            continue
        if t_prev is None:
            ekf.step(y)
            t_prev, accel = s.t, np.asarray(s.accel_cmd, dtype=float)
            continue
        _, nis = ekf.step(y, s.t - t_prev, accel)
        steps += 1
        if steps > pcfg.nominal_samples:
            ekf.alarm.update(s.t, nis)
        rows.append({"t": s.t, "ekf_nis": nis, "ekf_alarm": ekf.alarm.alarmed})
        t_prev, accel = s.t, np.asarray(s.accel_cmd, dtype=float)
    frame = pd.DataFrame(rows, columns=["t", "ekf_nis", "ekf_alarm"])
    summary = {"first_ekf_alarm_t": ekf.alarm.alarm_t,
               "nis_threshold": nis_threshold(pcfg.alarms.nis_level),
               "mean_nis": float(frame["ekf_nis"].mean()) if len(frame) else None,
               "windows_seen": ekf.alarm.windows_seen,
               "windows_exceeded": ekf.alarm.windows_exceeded,
               "skipped_samples": skipped,
               "jitter_events": ekf.jitter_events,
               "config_echo": config.model_dump(mode="json")}
    return frame, summary


def _detection_row(seed: int, kind: str, onset_t, summary: dict) -> dict:
    costate_t = summary["first_costate_alarm_t"]
    ekf_t = summary["first_ekf_alarm_t"]
    windows = summary["alarm_windows"]
    return {"seed": seed,
            "kind": kind,
            "fault_onset_t": onset_t,
            "costate_alarm_t": costate_t,
            "ekf_alarm_t": ekf_t,
            "costate_first": costate_t is not None and (ekf_t is None or costate_t < ekf_t),
            "lead_time": (ekf_t - costate_t) if costate_t is not None and ekf_t is not None else None,
            "costate_windows": windows["costate"]["seen"],
            "costate_windows_exceeded": windows["costate"]["exceeded"],
            "ekf_windows": windows["ekf"]["seen"],
            "ekf_windows_exceeded": windows["ekf"]["exceeded"],
            "peak_hazard_prob": summary["peak_hazard_prob"]}


def _detection_run(config: RunConfig, run_seed: int, kind: str, run_fault: FaultConfig) -> dict:
    cfg = config.with_seed(run_seed).model_copy(update={"fault": run_fault})
    sim = simulate_descent(cfg.simulation, cfg.fault)
    report = run_pipeline(sim.samples, cfg)
    return _detection_row(run_seed, kind, sim.fault_onset_t, report.summary)


def compare_detectors(config: Optional[RunConfig] = None,
                      runs: int = 100,
                      seed: int = 0,
                      nominal_runs: int = 0,
                      progress: bool = True,
                      workers: int = 1) -> Tuple[pd.DataFrame, dict]:
    """
    Monte Carlo comparison of the co-state and EKF NIS alarm times.

    Parameters
    ----------
    config : RunConfig, optional
        Base configuration. A ``fault.kind`` of ``"none"`` is replaced by a
        0.9 thrust-map scale fault at 7 km.
    runs : int, optional
        Fault-injected runs with seeds ``seed, seed + 1, ...``. Defaults to 100.
    seed : int, optional
        First seed. Defaults to 0.
    nominal_runs : int, optional
        Additional fault-free runs (seeds following the faulty ones) used to
        count false alarms. Defaults to 0.
    progress : bool, optional
        Show a tqdm progress bar. Defaults to True.
    workers : int, optional
        Worker processes for the runs; 1 runs them in this process.
        Defaults to 1.

    Returns
    -------
    tuple
        One row per run and the aggregate summary.
    """
    config = config or RunConfig()
    fault = config.fault if config.fault.kind != "none" else DEFAULT_FAULT
    plan = [(seed + i, "fault", fault) for i in range(runs)]
    plan += [(seed + runs + i, "nominal", FaultConfig()) for i in range(nominal_runs)]
    if workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as executor:
            futures = [executor.submit(_detection_run, config, *entry) for entry in plan]
            done = concurrent.futures.as_completed(futures)
            for _ in tqdm(done, total=len(futures), disable=not progress, desc="compare"):
                pass
            rows = [fut.result() for fut in futures]
    else:
        rows = [_detection_run(config, *entry) for entry in tqdm(plan, disable=not progress, desc="compare")]
    frame = pd.DataFrame(rows)
    faulty = frame[frame["kind"] == "fault"] if len(frame) else frame
    nominal = frame[frame["kind"] == "nominal"] if len(frame) else frame

    def _rate(df, col):
        seen = int(df[col.replace("_exceeded", "")].sum()) if len(df) else 0
        return float(df[col].sum()) / seen if seen else None

    lead = faulty["lead_time"].dropna() if len(faulty) else pd.Series(dtype=float)
    # runs where the EKF also alarmed decide the race on timing alone
    both = faulty[faulty["costate_alarm_t"].notna() & faulty["ekf_alarm_t"].notna()] if len(faulty) else faulty
    summary = {"runs": int(len(faulty)),
               "costate_first": int(faulty["costate_first"].sum()) if len(faulty) else 0,
               "costate_alarms": int(faulty["costate_alarm_t"].notna().sum()) if len(faulty) else 0,
               "ekf_alarms": int(faulty["ekf_alarm_t"].notna().sum()) if len(faulty) else 0,
               "both_detected": int(len(both)),
               "costate_first_when_both": int(both["costate_first"].sum()) if len(both) else 0,
               "costate_only": int((faulty["costate_alarm_t"].notna() & faulty["ekf_alarm_t"].isna()).sum())
               if len(faulty) else 0,
               "median_lead_time": float(lead.median()) if len(lead) else None,
               "nominal_runs": int(len(nominal)),
               "nominal_costate_alarms": int(nominal["costate_alarm_t"].notna().sum()) if len(nominal) else 0,
               "nominal_ekf_alarms": int(nominal["ekf_alarm_t"].notna().sum()) if len(nominal) else 0,
               "nominal_costate_window_rate": _rate(nominal, "costate_windows_exceeded"),
               "nominal_ekf_window_rate": _rate(nominal, "ekf_windows_exceeded"),
               "fault": fault.model_dump(mode="json")}
    if summary["runs"]:
        summary["costate_first_fraction"] = summary["costate_first"] / summary["runs"]
    logger.info("Co-state alarm first in %d of %d fault runs (%d of %d where both detectors alarmed)",
                summary["costate_first"], summary["runs"], summary["costate_first_when_both"], summary["both_detected"])
    return frame, summary


def calibrate_generator(telemetry: Union[str, Path, Sequence[TelemetrySample], None] = None,
                        config: Optional[RunConfig] = None,
                        seed: int = 0) -> dict:
    """
    Generator diagnostics over one run.

    The full labeled trajectory of the streaming pipeline is refit with the
    moment estimator and the MLE refinement, checked spectrally and
    bootstrapped for confidence intervals of the rates and the MFPT.
    Co-state centroids of the post-warm-up co-states are reported alongside.

    Parameters
    ----------
    telemetry : str, Path or sequence of TelemetrySample, optional
        Telemetry to analyse; a fresh simulation of ``config`` when omitted.
    config : RunConfig, optional
        Run configuration.
    seed : int, optional
        Bootstrap seed. Defaults to 0.

    Raises
    ------
    WarmupIncompleteError
        If the run is too short to label any sample.
    """
    config = config or RunConfig()
    if telemetry is None:
        telemetry = simulate_descent(config.simulation, config.fault).samples
    pipe = stream_telemetry(telemetry, config, keep_mode_log=True)
    report = pipe.finalize()
    if not pipe.mode_log or len(pipe.mode_log) < 2:
        raise WarmupIncompleteError("Run too short to produce a labeled trajectory")
    gc = config.pipeline.generator
    K = config.pipeline.regimes.K
    times, modes, points = zip(*pipe.mode_log)
    traj = LabeledTrajectory(t=np.array(times), modes=np.array(modes), K=K, x=np.vstack(points))
    fit = fit_generator(traj, refine=gc.refine, max_members=gc.max_pair_members, observed_only=gc.observed_support)
    hazard = label_regimes(pipe.clusterer.model).hazard_modes()
    try:
        mfpt_hat = mfpt(fit.L, hazard)
    except UnreachableHazardError as err:
        logger.info("Hazard unreachable from mode(s) %s", err.modes)
        mfpt_hat = None
    ci = bootstrap_ci(traj, B=gc.bootstrap_samples, confidence=gc.confidence, hazard_set=hazard,
                      block_length=gc.block_length, seed=seed)
    frame = report.frame()
    lam = frame.loc[frame["mode"] >= 0, ["lambda_1", "lambda_2", "lambda_3"]].to_numpy()
    centroids = None
    if lam.shape[0] >= K:
        centroids = costate_centroids(lam, K, config.pipeline.regimes.min_separation).lambda_bar
    return {"samples": len(traj),
            "K": K,
            "hazard_modes": hazard,
            "method": fit.method,
            "L": fit.L,
            "L_moment": fit.L_moment,
            "jump_counts": fit.stats.N,
            "dwell_times": fit.stats.T,
            "log_likelihood": fit.log_likelihood,
            "log_likelihood_moment": log_likelihood(fit.L_moment, fit.stats.N, fit.stats.T),
            "calibration_error": fit.calibration_error,
            "spectral_real_parts": spectral_stability(fit.L),
            "mfpt": mfpt_hat,
            "bootstrap": ci,
            "costate_centroids": centroids,
            "calibration_trace": report.summary["calibration_trace"],
            "mode_model": report.summary["mode_model"]}
