"""
Streaming co-state pipeline.

Every arriving sample goes through co-state computation, regime clustering,
generator learning, mode-probability propagation with the co-state
correction and the two alarm detectors. Late samples inside the
retroactive buffer are inserted by restoring the checkpoint taken before the
first later sample and replaying from there.

The following are available:

    * :class `CoStatePipeline`
    * :class `RiskReport`
    * :func `run_pipeline`
    * :func `stream_telemetry`
    * :func `costate_alarm`
    * :func `ingest_csv`
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Union
import logging

import numpy as np
import pandas as pd

from costate_fusion.alarms import WindowedAlarm, run_windowed_alarm
from costate_fusion.bayes_correction import CorrectionGate, correct_probabilities
from costate_fusion.config import RunConfig
from costate_fusion.costate import (InnovationWindow, adaptive_epsilon, compute_costate, costate_step,
                                    info_weighting, lyapunov_value, project_state_update,
                                    rolling_rms_sigma, whitened_innovation)
from costate_fusion.descent_sim import (ACCEL_COLUMNS, MEAS_COLUMNS, TRUTH_COLUMNS, TelemetrySample,
                                        initial_state, phase_of)
from costate_fusion.ekf_baseline import EkfBaseline
from costate_fusion.errors import InputFormatError, UnreachableHazardError
from costate_fusion.generator import (LabeledTrajectory, fit_generator, mfpt, propagate_probabilities,
                                      spectral_stability)
from costate_fusion.measurement_model import MEAS_DIM, STATE_DIM, as_state, eval_dynamics, midpoint_state
from costate_fusion.regimes import HAZARD, NOMINAL, OnlineModeClusterer, extract_features, label_regimes
from costate_fusion.utility import dump_json

logger = logging.getLogger(__name__)

REQUIRED_COLUMNS = ["t", "arrival_t"] + MEAS_COLUMNS


def costate_alarm(norms: Iterable[float],
                  mu: float,
                  sigma: float,
                  kappa: float = 6.0,
                  window: int = 20,
                  consecutive: int = 3,
                  times: Optional[Iterable[float]] = None) -> Optional[float]:
    """
    Windowed co-state alarm over a post-warm-up ||lambda|| series.

    Parameters
    ----------
    norms : iterable of float
        Co-state norms, starting right after warm-up.
    mu : float
        Nominal mean of ||lambda||.
    sigma : float
        Nominal standard deviation of the windowed mean.
    kappa : float, optional
        Threshold multiplier. Defaults to 6.
    window : int, optional
        Samples per window. Defaults to 20.
    consecutive : int, optional
        Consecutive exceeding windows. Defaults to 3.
    times : iterable of float, optional
        Sample times; sample indices are reported when omitted.

    Returns
    -------
    float or None
        First alarm time.
    """
    _, alarm_t, _, _ = run_windowed_alarm(norms, mu + kappa * sigma, window, consecutive, times)
    return alarm_t


def _line_error(message: str, position: int) -> InputFormatError:
    # header is line 1
    return InputFormatError(message, line=position + 2)


def ingest_csv(path: Union[str, Path]) -> List[TelemetrySample]:
    """
    Read and validate a telemetry CSV.

    Missing ``a_cmd_*`` columns mean zero commanded acceleration; ``truth_*``
    columns are attached when present. Non-finite measurements are kept
    and skipped by the pipeline.

    Raises
    ------
    InputFormatError
        On a missing column, a non-numeric field, a timestamp that is not
        finite, ``arrival_t < t`` or decreasing ``arrival_t``.
    """
    path = Path(path)
    try:
        raw = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except pd.errors.EmptyDataError as err:
        raise InputFormatError(f"Telemetry file {path} is empty") from err
    except pd.errors.ParserError as err:
        raise InputFormatError(f"Cannot parse telemetry file {path}: {err}") from err
    missing = [c for c in REQUIRED_COLUMNS if c not in raw.columns]
    if missing:
        raise InputFormatError(f"Telemetry file {path} lacks column(s) {', '.join(missing)}", line=1)
    optional = [c for c in ACCEL_COLUMNS + TRUTH_COLUMNS if c in raw.columns]
    data = {}
    for col in REQUIRED_COLUMNS + optional:
        text = raw[col].str.strip()
        values = pd.to_numeric(text.where(text != "", "nan"), errors="coerce")
        bad = values.isna() & ~text.str.lower().isin(["", "nan"])
        if bad.any():
            pos = int(np.flatnonzero(bad.to_numpy())[0])
            raise _line_error(f"non-numeric value {text.iloc[pos]!r} in column {col}", pos)
        data[col] = values.to_numpy(dtype=float)
    for col in ("t", "arrival_t"):
        bad = ~np.isfinite(data[col])
        if bad.any():
            raise _line_error(f"column {col} must be finite", int(np.flatnonzero(bad)[0]))
    early = data["arrival_t"] < data["t"]
    if early.any():
        raise _line_error("arrival_t precedes t", int(np.flatnonzero(early)[0]))
    back = np.diff(data["arrival_t"]) < 0
    if back.any():
        raise _line_error("arrival_t is not monotone", int(np.flatnonzero(back)[0]) + 1)
    has_accel = all(c in data for c in ACCEL_COLUMNS)
    has_truth = all(c in data for c in TRUTH_COLUMNS)
    samples = []
    for i in range(raw.shape[0]):
        accel = np.array([data[c][i] for c in ACCEL_COLUMNS]) if has_accel else np.zeros(3)
        samples.append(TelemetrySample(t=float(data["t"][i]),
                                       arrival_t=float(data["arrival_t"][i]),
                                       y=np.array([data[c][i] for c in MEAS_COLUMNS]),
                                       accel_cmd=accel,
                                       truth=np.array([data[c][i] for c in TRUTH_COLUMNS]) if has_truth else None))
    logger.info("Read %d telemetry samples from %s", len(samples), path)
    return samples


@dataclass
class RiskReport:
    """
    Per-sample signal rows and the run summary.

    Parameters
    ----------
    rows : list of dict
        One row per processed sample after the first.
    summary : dict
        Summary derived from the rows plus run diagnostics.
    columns : list of str
        Column order of the rows.
    """
    rows: List[dict]
    summary: dict
    columns: List[str] = field(default_factory=list)

    def frame(self) -> pd.DataFrame:
        """Rows as a data frame."""
        return pd.DataFrame(self.rows, columns=self.columns or None)

    def write(self, out_dir: Union[str, Path]) -> Dict[str, Path]:
        """Write ``signals.csv`` and ``summary.json`` into ``out_dir``."""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        signals = out_dir / "signals.csv"
        self.frame().to_csv(signals, index=False, float_format="%.17g")
        summary = out_dir / "summary.json"
        dump_json(self.summary, summary)
        return {"signals": signals, "summary": summary}


@dataclass
class _WarmRecord:
    t: float
    dt: float
    H: np.ndarray
    eps: float
    resid: np.ndarray
    z: float
    state: np.ndarray


# attributes that are only ever rebound, never mutated in place
_REBOUND = ("x", "lam_geo", "y_prev", "t_prev", "a_prev", "steps", "processed", "nominal", "sigma_nom", "delta_scale",
            "lam_prev", "labels", "since_refit", "fit", "L", "mfpt_cache", "p")


class CoStatePipeline:
    """
    Online co-state risk monitor.

    Parameters
    ----------
    config : RunConfig, optional
        Run configuration; the ``pipeline`` section drives the monitor, the
        ``simulation`` and ``ekf`` sections supply the start state, the phase
        boundaries and the EKF noise model.
    keep_mode_log : bool, optional
        Keep every labeled sample (time, mode, standardized feature) in
        ``mode_log`` instead of only the bounded generator history.
        Defaults to False.

    Examples
    --------
    >>> pipe = CoStatePipeline(RunConfig())
    >>> for sample in samples:
    ...     pipe.process(sample)
    >>> report = pipe.finalize()
    """
    def __init__(self, config: Optional[RunConfig] = None, keep_mode_log: bool = False):
        self.config = config or RunConfig()
        cfg = self.config.pipeline
        self.cfg = cfg
        x0 = initial_state(self.config.simulation) if cfg.initial_state is None else cfg.initial_state
        self.x = as_state(x0)
        self.lam_geo = np.zeros(MEAS_DIM)
        self.y_prev: Optional[np.ndarray] = None
        self.t_prev: Optional[float] = None
        self.a_prev = np.zeros(3)
        self.steps = 0
        self.processed = 0
        self.skipped = 0
        self.dropped = 0
        self.window = InnovationWindow(cfg.costate.window, MEAS_DIM)
        self.z_window = InnovationWindow(cfg.costate.whiten_window, MEAS_DIM)
        self.info_q = np.eye(STATE_DIM) if cfg.costate.info_q is None else np.asarray(cfg.costate.info_q, dtype=float)
        self.warm_records: List[_WarmRecord] = []
        self.nominal: Optional[dict] = None
        self.sigma_nom: Optional[np.ndarray] = None
        self.delta_scale: Optional[np.ndarray] = None
        self.lam_prev: Optional[np.ndarray] = None
        self.clusterer = OnlineModeClusterer(cfg.regimes.K, cfg.regimes.warmup, cfg.regimes.min_separation,
                                             lam_dim=MEAS_DIM)
        self.labels: List[str] = []
        self.history: List[tuple] = []
        self._history_offset = 0
        self.since_refit = 0
        self.fit = None
        self.L: Optional[np.ndarray] = None
        self.mfpt_cache: Dict[int, Optional[float]] = {}
        self.calibration_trace: List[dict] = []
        self.mode_log: Optional[List[tuple]] = [] if keep_mode_log else None
        self.p: Optional[np.ndarray] = None
        self.gate = CorrectionGate(cfg.correction)
        self.costate_alarm: Optional[WindowedAlarm] = None
        self.ekf = EkfBaseline.from_config(self.x, self.config.ekf, self.config.simulation, cfg.alarms)
        self.rows: List[dict] = []
        self._buffer = deque(maxlen=cfg.oosm.buffer)

    @property
    def warmed_up(self) -> bool:
        """True once the nominal statistics are frozen."""
        return self.nominal is not None

    @property
    def hazard_modes(self) -> List[int]:
        """Modes currently labeled Hazard."""
        return [k for k, lab in enumerate(self.labels) if lab == HAZARD]

    # checkpoints

    def _snapshot(self) -> dict:
        snap = {name: getattr(self, name) for name in _REBOUND}
        snap.update(window=self.window.copy(),
                    z_window=self.z_window.copy(),
                    clusterer=self.clusterer.copy(),
                    n_history=self._history_offset + len(self.history),
                    gate=self.gate.copy(),
                    costate_alarm=None if self.costate_alarm is None else self.costate_alarm.copy(),
                    ekf=self.ekf.copy(),
                    n_rows=len(self.rows),
                    n_warm=len(self.warm_records),
                    n_calibration=len(self.calibration_trace),
                    n_mode_log=0 if self.mode_log is None else len(self.mode_log))
        return snap

    def _restore(self, snap: dict):
        for name in _REBOUND:
            setattr(self, name, snap[name])
        self.window = snap["window"]
        self.z_window = snap["z_window"]
        self.clusterer = snap["clusterer"]
        self.gate = snap["gate"]
        self.costate_alarm = snap["costate_alarm"]
        self.ekf = snap["ekf"]
        del self.history[snap["n_history"] - self._history_offset:]
        del self.rows[snap["n_rows"]:]
        del self.warm_records[snap["n_warm"]:]
        del self.calibration_trace[snap["n_calibration"]:]
        if self.mode_log is not None:
            del self.mode_log[snap["n_mode_log"]:]

    # streaming entry points

    def process(self, sample: TelemetrySample):
        """
        Consume one sample in arrival order.

        Non-finite samples are skipped; late samples inside the buffer are
        inserted retroactively, older ones and duplicates are dropped.
        """
        y = np.asarray(sample.y, dtype=float)
        accel = np.asarray(sample.accel_cmd, dtype=float)
        if y.shape != (MEAS_DIM,) or not np.all(np.isfinite(y)) or not np.all(np.isfinite(accel)):
            self.skipped += 1
            logger.warning("Skipping sample at t=%.4f with non-finite channel(s): y=%s", sample.t, y)
            return
        if self.t_prev is None or sample.t > self.t_prev:
            self._checkpointed_advance(sample)
        else:
            self._insert_late(sample)

    def _checkpointed_advance(self, sample: TelemetrySample):
        self._buffer.append((sample, self._snapshot()))
        self._advance(sample)

    def _insert_late(self, sample: TelemetrySample):
        times = [s.t for s, _ in self._buffer]
        pos = next((i for i, t in enumerate(times) if t > sample.t), None)
        duplicate = sample.t in times
        too_old = (pos is None or
                   (pos == 0 and self._buffer[0][1]["t_prev"] is not None
                    and self._buffer[0][1]["t_prev"] >= sample.t))
        if duplicate or too_old:
            self.dropped += 1
            logger.warning("Dropping late sample t=%.4f (arrival %.4f): %s", sample.t, sample.arrival_t,
                           "duplicate timestamp" if duplicate else "older than the retroactive buffer")
            return
        snap = self._buffer[pos][1]
        replay = [s for s, _ in list(self._buffer)[pos:]]
        for _ in replay:
            self._buffer.pop()
        self._restore(snap)
        logger.debug("Late sample t=%.4f inserted, replaying %d sample(s)", sample.t, len(replay))
        self._checkpointed_advance(sample)
        for later in replay:
            self._checkpointed_advance(later)

    # one in-order step

    def _weighting(self, H: np.ndarray) -> np.ndarray:
        cc = self.cfg.costate
        if cc.weighting == "info":
            return info_weighting(H, self.info_q, cc.info_alpha, cc.info_beta, cc.sigma_min)
        return rolling_rms_sigma(self.window, cc.sigma_min)

    def _monitor_sigma(self, H: np.ndarray) -> np.ndarray:
        if self.sigma_nom is None:
            return self._weighting(H)
        return self.sigma_nom

    def _features(self, lam: np.ndarray, z: float, t: float, state: np.ndarray) -> np.ndarray:
        with_state = self.cfg.regimes.features == "costate_state"
        return extract_features(lam, z, t, state if with_state else None).as_array()

    @staticmethod
    def _costate_of(H, sigma_sq, resid, dt, eps) -> np.ndarray:
        return compute_costate(H, sigma_sq, resid, np.zeros(MEAS_DIM), dt, eps)

    @staticmethod
    def _whiten(resid, dt, sigma_sq) -> float:
        return whitened_innovation(resid, np.zeros(MEAS_DIM), dt, sigma_sq)

    def _advance(self, sample: TelemetrySample):
        y = np.asarray(sample.y, dtype=float)
        if self.t_prev is None:
            self.ekf.step(y)
            self._hold(sample, y)
            self.processed += 1
            return
        t = float(sample.t)
        dt = t - self.t_prev
        accel = self.a_prev
        cc = self.cfg.costate
        H, _, resid = costate_step(self.x, self.y_prev, y, dt, accel)
        eps = adaptive_epsilon(H, cc.eps_floor, cc.eps_tau, cc.cond_limit, cc.eps_ill_tau)
        self.z_window.push(t, resid)
        z = self._whiten(resid, dt, rolling_rms_sigma(self.z_window, cc.sigma_min))
        lam_geo = self._costate_of(H, np.ones(MEAS_DIM), resid, dt, eps)
        x_new = project_state_update(self.x, lam_geo, H, dt, accel, midpoint=True)
        f_dt = eval_dynamics(midpoint_state(self.x, dt, accel), accel) * dt
        v = lyapunov_value(x_new - self.x, f_dt, H, eps)
        _, nis = self.ekf.step(y, dt, accel)
        monitoring = self.warmed_up
        if monitoring:
            lam, mode, bayes = self._monitor(t, dt, H, eps, resid, z, x_new)
            self.costate_alarm.update(t, float(np.linalg.norm(lam)))
            self.ekf.alarm.update(t, nis)
        else:
            lam = self._costate_of(H, self._weighting(H), resid, dt, eps)
            mode, bayes = -1, False
            self.warm_records.append(_WarmRecord(t=t, dt=dt, H=H, eps=eps, resid=resid, z=z, state=x_new))
        self.window.push(t, resid)
        self.x = x_new
        self.lam_geo = lam_geo
        self.steps += 1
        self.processed += 1
        self._hold(sample, y)
        self.rows.append(self._row(t, lam, z, mode, v, nis, bayes))
        if not monitoring and len(self.warm_records) >= self.cfg.nominal_samples:
            self._finish_warmup()

    def _hold(self, sample: TelemetrySample, y: np.ndarray):
        self.t_prev = float(sample.t)
        self.y_prev = y
        self.a_prev = np.asarray(sample.accel_cmd, dtype=float)

    def _finish_warmup(self):
        cfg = self.cfg
        recs = self.warm_records
        if cfg.costate.weighting == "rolling_rms":
            resid = np.vstack([r.resid for r in recs])
            self.sigma_nom = np.maximum(cfg.costate.sigma_min ** 2, np.mean(resid * resid, axis=0))
        lams = np.vstack([self._costate_of(r.H, self._monitor_sigma(r.H), r.resid, r.dt, r.eps) for r in recs])
        norms = np.linalg.norm(lams, axis=1)
        mu = float(norms.mean())
        sigma = float(norms.std()) / np.sqrt(cfg.alarms.window)
        threshold = mu + cfg.alarms.kappa * sigma
        deltas = np.diff(lams, axis=0)
        scale = deltas.std(axis=0) if deltas.shape[0] > 1 else np.ones(MEAS_DIM)
        self.delta_scale = np.where(scale > 0, scale, 1.0)
        self.nominal = {"mu": mu, "sigma": sigma, "threshold": threshold, "samples": len(recs),
                        "sigma_nom": None if self.sigma_nom is None else self.sigma_nom.tolist()}
        self.costate_alarm = WindowedAlarm(threshold, cfg.alarms.window, cfg.alarms.consecutive, name="Co-state alarm")
        for i, rec in enumerate(recs):
            phi = self._features(lams[i], rec.z, rec.t, rec.state)
            mode = self.clusterer.partial_fit(phi)
            if mode is not None:
                self._record_mode(rec.t, mode, phi)
            if i > 0:
                self.gate.check(float(np.linalg.norm(deltas[i - 1] / self.delta_scale * np.sqrt(rec.dt))))
        self.lam_prev = lams[-1]
        self.p = np.full(cfg.regimes.K, 1.0 / cfg.regimes.K)
        if self.clusterer.ready and not self.labels:
            self.labels = label_regimes(self.clusterer.model).labels
        logger.info("Warm-up complete after %d samples: nominal |lambda| %.4g, co-state threshold %.4g",
                    len(recs), mu, threshold)

    def _monitor(self, t, dt, H, eps, resid, z, x_new):
        lam = self._costate_of(H, self._monitor_sigma(H), resid, dt, eps)
        d_hat = (lam - self.lam_prev) / self.delta_scale * np.sqrt(dt)
        self.lam_prev = lam
        phi = self._features(lam, z, t, x_new)
        mode = self.clusterer.partial_fit(phi)
        if mode is None:
            mode = -1
        else:
            if not self.labels:
                self.labels = label_regimes(self.clusterer.model).labels
            self._record_mode(t, mode, phi)
        if self.L is not None:
            self.p = propagate_probabilities(self.L, self.p, dt)
        armed = not self.cfg.correction.require_costate_excess or self.costate_alarm.exceeding
        bayes = self.gate.check(float(np.linalg.norm(d_hat))) and self.clusterer.ready and armed
        if bayes:
            centroids = self.clusterer.model.centroids[:, :MEAS_DIM]
            self.p = correct_probabilities(self.p, centroids, d_hat, dt, self.cfg.correction)
            logger.debug("Co-state correction applied at t=%.3f", t)
        return lam, mode, bayes

    def _record_mode(self, t: float, mode: int, phi: np.ndarray):
        entry = (t, mode, self.clusterer.model.standardize(phi))
        self.history.append(entry)
        if self.mode_log is not None:
            self.mode_log.append(entry)
        if len(self.history) > 2 * self.cfg.generator.history:
            self._trim_history()
        self.since_refit += 1
        if self.since_refit >= self.cfg.generator.refit_every:
            self._refit(t)

    def _trim_history(self):
        # checkpoints only ever truncate the tail, so entries older than the
        # oldest checkpoint and outside the refit window can go
        total = self._history_offset + len(self.history)
        oldest = min((snap["n_history"] for _, snap in self._buffer), default=total)
        drop = min(oldest, total - self.cfg.generator.history) - self._history_offset
        if drop > 0:
            del self.history[:drop]
            self._history_offset += drop

    def _refit(self, t: float):
        gc = self.cfg.generator
        times, modes, points = zip(*self.history[-gc.history:])
        traj = LabeledTrajectory(t=np.array(times), modes=np.array(modes), K=self.cfg.regimes.K, x=np.vstack(points))
        fit = fit_generator(traj, refine=gc.refine, max_members=gc.max_pair_members,
                            observed_only=gc.observed_support, keep_moment=False)
        spectral_stability(fit.L)
        self.labels = label_regimes(self.clusterer.model).labels
        self.fit, self.L, self.since_refit = fit, fit.L, 0
        hazard = self.hazard_modes
        try:
            self.mfpt_cache = mfpt(fit.L, hazard)
        except UnreachableHazardError as err:
            logger.info("Hazard unreachable from mode(s) %s at t=%.2f", err.modes, t)
            self.mfpt_cache = {k: None for k in range(self.cfg.regimes.K) if k not in hazard}
        self.calibration_trace.append({"t": t,
                                       "samples": len(traj),
                                       "method": fit.method,
                                       "calibration_error": fit.calibration_error,
                                       "log_likelihood": fit.log_likelihood})
        logger.info("Generator refit at t=%.2f on %d samples (%s, calibration error %.4f)",
                    t, len(traj), fit.method, fit.calibration_error)

    def _row(self, t, lam, z, mode, v, nis, bayes) -> dict:
        K = self.cfg.regimes.K
        p = np.full(K, 1.0 / K) if self.p is None else self.p
        hazard = self.hazard_modes
        hazard_prob = float(p[hazard].sum()) if hazard and self.p is not None else 0.0
        mfpt_value = None
        if self.mfpt_cache:
            likely = max(self.mfpt_cache, key=lambda k: (p[k], -k))
            mfpt_value = self.mfpt_cache[likely]
        row = {"t": t, "phase": phase_of(float(self.x[2]), self.config.simulation.phase_boundaries)}
        row.update({f"lambda_{i + 1}": float(v_i) for i, v_i in enumerate(lam)})
        row.update(lambda_norm=float(np.linalg.norm(lam)),
                   z=z,
                   mode=int(mode),
                   regime=self.labels[mode] if mode >= 0 and self.labels else NOMINAL)
        row.update({f"p_{k}": float(p_k) for k, p_k in enumerate(p)})
        row.update(hazard_prob=hazard_prob,
                   mfpt=mfpt_value,
                   lyapunov_v=v,
                   ekf_nis=nis,
                   costate_alarm=bool(self.costate_alarm is not None and self.costate_alarm.alarmed),
                   ekf_alarm=self.ekf.alarm.alarmed,
                   bayes_active=bool(bayes))
        return row

    def columns(self) -> List[str]:
        """Column order of the signal rows."""
        K = self.cfg.regimes.K
        return (["t", "phase"] + [f"lambda_{i + 1}" for i in range(MEAS_DIM)]
                + ["lambda_norm", "z", "mode", "regime"] + [f"p_{k}" for k in range(K)]
                + ["hazard_prob", "mfpt", "lyapunov_v", "ekf_nis", "costate_alarm", "ekf_alarm", "bayes_active"])

    def finalize(self) -> RiskReport:
        """Build the report of everything processed so far."""
        rows = list(self.rows)
        model = None
        if self.clusterer.ready:
            model = self.clusterer.model.copy()
            model.labels = list(self.labels)
        generator = None
        if self.fit is not None:
            generator = {"L": self.L.tolist(),
                         "method": self.fit.method,
                         "log_likelihood": self.fit.log_likelihood,
                         "spectral_real_parts": spectral_stability(self.L),
                         "hazard_modes": self.hazard_modes,
                         "mfpt": self.mfpt_cache}
        calibration = [c["calibration_error"] for c in self.calibration_trace]
        summary = {
            "first_costate_alarm_t": next((r["t"] for r in rows if r["costate_alarm"]), None),
            "first_ekf_alarm_t": next((r["t"] for r in rows if r["ekf_alarm"]), None),
            "peak_hazard_prob": max((r["hazard_prob"] for r in rows), default=0.0),
            "mean_calibration_error": float(np.mean(calibration)) if calibration else None,
            "touchdown_t": rows[-1]["t"] if rows else self.t_prev,
            "config_echo": self.config.model_dump(mode="json"),
            "samples_processed": self.processed,
            "skipped_samples": self.skipped,
            "dropped_late_samples": self.dropped,
            "nominal": self.nominal,
            "calibration_trace": list(self.calibration_trace),
            "generator": generator,
            "mode_model": None if model is None else model.to_dict(),
            "ekf_jitter_events": self.ekf.jitter_events,
            "alarm_windows": {"costate": _window_counts(self.costate_alarm), "ekf": _window_counts(self.ekf.alarm)},
        }
        return RiskReport(rows=rows, summary=summary, columns=self.columns())


def _window_counts(alarm: Optional[WindowedAlarm]) -> dict:
    if alarm is None:
        return {"seen": 0, "exceeded": 0}
    return {"seen": alarm.windows_seen, "exceeded": alarm.windows_exceeded}


def _check_arrival_order(samples: Sequence[TelemetrySample]):
    for i in range(1, len(samples)):
        if samples[i].arrival_t < samples[i - 1].arrival_t:
            raise InputFormatError(f"Telemetry is not sorted by arrival time at sample {i}")


def stream_telemetry(telemetry: Union[str, Path, Sequence[TelemetrySample]],
                     config: Optional[RunConfig] = None,
                     keep_mode_log: bool = False) -> CoStatePipeline:
    """Feed a telemetry source through a new pipeline and return it."""
    samples = ingest_csv(telemetry) if isinstance(telemetry, (str, Path)) else list(telemetry)
    _check_arrival_order(samples)
    pipe = CoStatePipeline(config, keep_mode_log=keep_mode_log)
    for sample in samples:
        pipe.process(sample)
    logger.info("Processed %d samples (%d skipped, %d dropped late)", pipe.processed, pipe.skipped, pipe.dropped)
    return pipe


def run_pipeline(telemetry: Union[str, Path, Sequence[TelemetrySample]],
                 config: Optional[RunConfig] = None) -> RiskReport:
    """
    Run the streaming pipeline over a telemetry source.

    Parameters
    ----------
    telemetry : str, Path or sequence of TelemetrySample
        CSV file or samples in arrival order.
    config : RunConfig, optional
        Run configuration. Defaults to ``RunConfig()``.

    Returns
    -------
    RiskReport

    Raises
    ------
    InputFormatError
        If the telemetry is malformed or not sorted by arrival time.
    """
    return stream_telemetry(telemetry, config).finalize()
