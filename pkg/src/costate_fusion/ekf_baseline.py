"""
Discrete extended Kalman filter on the lander model, used as the
innovation-consistency baseline.

The following are available:

    * :class `EkfState`
    * :class `EkfBaseline`
    * :func `transition_matrix`
    * :func `control_matrix`
    * :func `process_noise`
    * :func `ekf_predict`
    * :func `ekf_update`
    * :func `nis_threshold`
    * :func `nis_alarm`
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence, Tuple
import logging

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError
from scipy.stats import chi2

from costate_fusion.alarms import WindowedAlarm, run_windowed_alarm
from costate_fusion.config import AlarmConfig, DescentConfig, EkfConfig
from costate_fusion.errors import InvalidIntervalError
from costate_fusion.measurement_model import MEAS_DIM, STATE_DIM, eval_h, eval_jacobian

logger = logging.getLogger(__name__)

S_COND_LIMIT = 1e12


@dataclass
class EkfState:
    """Estimate, covariance and the last normalized innovation squared."""
    x_hat: np.ndarray
    P: np.ndarray
    nis: float = float("nan")
    jittered: bool = False


def transition_matrix(dt: float) -> np.ndarray:
    """Exact constant-velocity transition over dt."""
    F = np.eye(STATE_DIM)
    F[:3, 3:] = dt * np.eye(3)
    return F


def control_matrix(dt: float) -> np.ndarray:
    """Input matrix of an acceleration held over dt."""
    return np.vstack([0.5 * dt * dt * np.eye(3), dt * np.eye(3)])


def process_noise(dt: float, accel_std: float) -> np.ndarray:
    """Q_d of a white acceleration held constant over the interval."""
    q = accel_std ** 2
    Q = np.zeros((STATE_DIM, STATE_DIM))
    Q[:3, :3] = 0.25 * dt ** 4 * q * np.eye(3)
    Q[:3, 3:] = Q[3:, :3] = 0.5 * dt ** 3 * q * np.eye(3)
    Q[3:, 3:] = dt ** 2 * q * np.eye(3)
    return Q


def ekf_predict(s: EkfState, dt: float, Q_d: np.ndarray, accel: Optional[np.ndarray] = None) -> EkfState:
    """
    Time update x' = F x + G a, P' = F P F^T + Q_d.

    Without an acceleration this is x' = x + f(x) dt.
    """
    if not dt > 0:
        raise InvalidIntervalError(f"Interval must be positive, got {dt}")
    F = transition_matrix(dt)
    x_new = F @ s.x_hat
    if accel is not None:
        x_new = x_new + control_matrix(dt) @ np.asarray(accel, dtype=float)
    P = F @ s.P @ F.T + Q_d
    return replace(s, x_hat=x_new, P=0.5 * (P + P.T), jittered=False)


def ekf_update(s: EkfState,
               y: np.ndarray,
               R: np.ndarray,
               jitter_scale: float = 1e-9) -> Tuple[EkfState, np.ndarray, float]:
    """
    Measurement update with the Joseph-form covariance.

    Parameters
    ----------
    s : EkfState
        Predicted state.
    y : numpy.ndarray
        Measurement.
    R : numpy.ndarray
        Measurement covariance.
    jitter_scale : float, optional
        Trace-relative jitter added to a numerically singular S.

    Returns
    -------
    tuple
        Updated state, innovation and NIS.
    """
    H = eval_jacobian(s.x_hat)
    nu = np.asarray(y, dtype=float) - eval_h(s.x_hat)
    S = H @ s.P @ H.T + R
    S = 0.5 * (S + S.T)
    jittered = False
    try:
        if np.linalg.cond(S) > S_COND_LIMIT:
            raise LinAlgError("ill-conditioned innovation covariance")
        factor = cho_factor(S, lower=True)
    except LinAlgError:
        scale = float(np.trace(S)) / MEAS_DIM
        S = S + jitter_scale * (scale if scale > 0 else 1.0) * np.eye(MEAS_DIM)
        factor = cho_factor(S, lower=True)
        jittered = True
        logger.warning("Innovation covariance regularized with trace-scaled jitter")
    K = cho_solve(factor, H @ s.P).T
    IKH = np.eye(STATE_DIM) - K @ H
    P = IKH @ s.P @ IKH.T + K @ R @ K.T
    nis = float(nu @ cho_solve(factor, nu))
    return EkfState(x_hat=s.x_hat + K @ nu, P=0.5 * (P + P.T), nis=nis, jittered=jittered), nu, nis


def nis_threshold(level: float = 0.999, dof: int = MEAS_DIM) -> float:
    """Upper chi-square quantile used as the windowed-mean NIS threshold."""
    return float(chi2.ppf(level, dof))


def nis_alarm(nis_history: Iterable[float],
              window: int = 20,
              level: float = 0.999,
              consecutive: int = 3,
              times: Optional[Sequence[float]] = None) -> Tuple[bool, Optional[float]]:
    """
    Alarm on the windowed mean NIS.

    Returns
    -------
    tuple
        Alarm flag and the first alarm time (the sample index when no times
        are given).
    """
    if window < 1:
        raise ValueError("window must be at least 1")
    alarmed, alarm_t, _, _ = run_windowed_alarm(nis_history, nis_threshold(level), window, consecutive, times)
    return alarmed, alarm_t


@dataclass
class EkfBaseline:
    """
    Streaming EKF with its NIS detector.

    Parameters
    ----------
    state : EkfState
        Current estimate.
    accel_std : float
        White acceleration std of the process noise.
    R : numpy.ndarray
        Measurement covariance.
    alarm : WindowedAlarm
        NIS detector.
    jitter_scale : float
        Trace-relative jitter for a singular S.
    """
    state: EkfState
    accel_std: float
    R: np.ndarray
    alarm: WindowedAlarm
    jitter_scale: float = 1e-9
    jitter_events: int = field(default=0)

    @classmethod
    def from_config(cls,
                    x0: np.ndarray,
                    cfg: EkfConfig,
                    sim: DescentConfig,
                    alarms: AlarmConfig) -> "EkfBaseline":
        """Build the filter, taking unset noise levels from the simulator."""
        accel_std = sim.accel_noise_std if cfg.accel_noise_std is None else cfg.accel_noise_std
        noise = np.asarray(sim.noise_std if cfg.noise_std is None else cfg.noise_std, dtype=float)
        # a noise-free world still needs a positive definite R
        R = np.diag(np.maximum(noise, 1e-6) ** 2)
        P0 = np.diag([cfg.initial_position_std ** 2] * 3 + [cfg.initial_velocity_std ** 2] * 3)
        alarm = WindowedAlarm(nis_threshold(alarms.nis_level), alarms.window, alarms.consecutive, name="EKF NIS alarm")
        return cls(state=EkfState(x_hat=np.asarray(x0, dtype=float).copy(), P=P0),
                   accel_std=accel_std, R=R, alarm=alarm, jitter_scale=cfg.jitter_scale)

    def copy(self) -> "EkfBaseline":
        """Independent copy for checkpointing."""
        return replace(self, alarm=self.alarm.copy())

    def step(self, y: np.ndarray, dt: Optional[float] = None, accel: Optional[np.ndarray] = None) -> Tuple[np.ndarray, float]:
        """Predict over dt (skipped when None) and update with y."""
        if dt is not None:
            self.state = ekf_predict(self.state, dt, process_noise(dt, self.accel_std), accel)
        self.state, nu, nis = ekf_update(self.state, y, self.R, self.jitter_scale)
        if self.state.jittered:
            self.jitter_events += 1
        return nu, nis
