"""
Synthetic powered-descent telemetry.

The lander flies a straight glide line toward the landing site at the origin.
A proportional braking law tracks a descent-rate profile that decelerates
from the initial altitude to a slow touchdown; the executed thrust may differ
from the commanded one through an injected fault while the onboard model
keeps assuming the commanded acceleration.

The following are available:

    * :class `TelemetrySample`
    * :class `DescentResult`
    * :func `initial_state`
    * :func `reference_descent_rate`
    * :func `guidance_command`
    * :func `phase_of`
    * :func `simulate_descent`
    * :func `telemetry_frame`
    * :func `write_telemetry_csv`
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Union
import logging

import numpy as np
import pandas as pd

from costate_fusion.config import DescentConfig, FaultConfig
from costate_fusion.measurement_model import eval_h

logger = logging.getLogger(__name__)

MEAS_COLUMNS = ["y_alt", "y_range", "y_vz"]
TRUTH_COLUMNS = ["truth_x", "truth_y", "truth_z", "truth_vx", "truth_vy", "truth_vz"]
ACCEL_COLUMNS = ["a_cmd_x", "a_cmd_y", "a_cmd_z"]

Controller = Callable[[float, "TelemetrySample", np.ndarray], np.ndarray]


@dataclass
class TelemetrySample:
    """
    One delivered measurement.

    ``accel_cmd`` is the commanded net acceleration (thrust plus gravity)
    issued at ``t`` and held until the next sample.
    """
    t: float
    arrival_t: float
    y: np.ndarray
    accel_cmd: np.ndarray = field(default_factory=lambda: np.zeros(3))
    truth: Optional[np.ndarray] = None


@dataclass
class DescentResult:
    """Telemetry in arrival order plus the truth history in time order."""
    samples: List[TelemetrySample]
    times: np.ndarray
    truth: np.ndarray
    touchdown_t: Optional[float]
    touchdown_speed: Optional[float]
    fault_onset_t: Optional[float]

    def in_time_order(self) -> List[TelemetrySample]:
        """Samples sorted by measurement time."""
        return sorted(self.samples, key=lambda s: s.t)


def _glide_direction(cfg: DescentConfig) -> np.ndarray:
    p0 = np.array([cfg.initial_downrange, 0.0, cfg.initial_altitude])
    return p0 / np.linalg.norm(p0)


def reference_descent_rate(altitude: float, cfg: DescentConfig) -> float:
    """Profile v_z(h) = -sqrt(v_td^2 + 2 a_ref h), clipped at h = 0."""
    return -float(np.sqrt(cfg.touchdown_speed ** 2 + 2.0 * cfg.reference_decel * max(altitude, 0.0)))


def initial_state(cfg: DescentConfig) -> np.ndarray:
    """Start on the glide line, moving along it at the reference descent rate."""
    u = _glide_direction(cfg)
    p0 = np.array([cfg.initial_downrange, 0.0, cfg.initial_altitude])
    v0 = reference_descent_rate(cfg.initial_altitude, cfg) / u[2] * u
    return np.concatenate([p0, v0])


def phase_of(sample: Union[float, TelemetrySample, np.ndarray], boundaries: Sequence[float] = (7000.0, 2000.0)) -> int:
    """
    Phase index from altitude: 0 above the upper boundary, 1 between the
    boundaries, 2 below the lower one. A boundary belongs to the band above it.
    """
    if isinstance(sample, TelemetrySample):
        altitude = sample.truth[2] if sample.truth is not None else sample.y[0]
    elif np.ndim(sample) == 1:
        altitude = np.asarray(sample)[2]
    else:
        altitude = float(sample)
    if altitude >= boundaries[0]:
        return 0
    if altitude >= boundaries[1]:
        return 1
    return 2


def guidance_command(state: np.ndarray, cfg: DescentConfig) -> np.ndarray:
    """
    Commanded thrust acceleration of the braking law.

    Feed-forward along the glide line plus proportional velocity tracking,
    gravity compensation and a pull back onto the line, limited to the
    thrust capability.
    """
    u = _glide_direction(cfg)
    p, v = state[:3], state[3:]
    vz_ref = reference_descent_rate(p[2], cfg)
    v_ref = vz_ref / u[2] * u
    a_ff = cfg.reference_decel * abs(v[2]) / abs(vz_ref) / u[2] * u
    p_perp = p - np.dot(p, u) * u
    gain = cfg.velocity_gains[phase_of(p[2], cfg.phase_boundaries)]
    thrust = a_ff + gain * (v_ref - v) - cfg.lateral_gain * p_perp + np.array([0.0, 0.0, cfg.gravity])
    norm = np.linalg.norm(thrust)
    if norm > cfg.max_thrust_accel:
        thrust = thrust * (cfg.max_thrust_accel / norm)
    return thrust


class _FaultModel:
    """Maps commanded to executed thrust once the fault is active."""
    def __init__(self, fault: FaultConfig, cfg: DescentConfig):
        self.fault = fault
        self.cfg = cfg
        self.onset_t: Optional[float] = None
        delay = round(fault.magnitude / cfg.sample_period) if fault.kind == "timing_misalignment" else 0
        self._queue = deque(maxlen=max(delay, 0) + 1)

    def active(self, t: float, altitude: float) -> bool:
        if self.fault.kind == "none":
            return False
        if self.onset_t is None:
            if self.fault.onset_time is not None:
                hit = t >= self.fault.onset_time
            else:
                hit = self.fault.onset_altitude is None or altitude <= self.fault.onset_altitude
            if hit:
                self.onset_t = t
                logger.info("Fault %s active from t=%.2f s (altitude %.1f m)", self.fault.kind, t, altitude)
        return self.onset_t is not None

    def executed(self, thrust: np.ndarray, t: float, altitude: float) -> np.ndarray:
        self._queue.append(thrust)
        if not self.active(t, altitude):
            return thrust
        kind = self.fault.kind
        if kind == "thrust_map_scale":
            return self.fault.magnitude * thrust
        if kind == "timing_misalignment":
            return self._queue[0]
        # saturation_model_error
        limit = self.fault.magnitude * self.cfg.max_thrust_accel
        norm = np.linalg.norm(thrust)
        return thrust if norm <= limit else thrust * (limit / norm)


def _measure(state: np.ndarray, noise_std: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    y = eval_h(state) + rng.normal(0.0, 1.0, 3) * noise_std
    y[1] = max(y[1], 0.0)
    return y


def simulate_descent(cfg: Optional[DescentConfig] = None,
                     fault: Optional[FaultConfig] = None,
                     controller: Optional[Controller] = None) -> DescentResult:
    """
    Simulate one closed-loop descent.

    Parameters
    ----------
    cfg : DescentConfig, optional
        Vehicle, sampling and noise settings.
    fault : FaultConfig, optional
        Injected inconsistency. Defaults to no fault.
    controller : callable, optional
        ``controller(t, sample, thrust_cmd) -> thrust_cmd`` called at every
        sample with the measurement just taken and the braking-law command;
        its return value replaces the command.

    Returns
    -------
    DescentResult
        The run ends cleanly at touchdown, which is located inside the last
        interval; no sample below the surface is emitted.
    """
    cfg = cfg or DescentConfig()
    fault = fault or FaultConfig()
    noise_rng, process_rng, jitter_rng, delay_rng = (np.random.default_rng(s)
                                                     for s in np.random.SeedSequence(cfg.seed).spawn(4))
    noise_std = np.asarray(cfg.noise_std, dtype=float)
    gravity = np.array([0.0, 0.0, -cfg.gravity])
    fault_model = _FaultModel(fault, cfg)
    x = initial_state(cfg)
    t = 0.0
    samples: List[TelemetrySample] = []
    times, truth = [t], [x.copy()]
    touchdown_t = touchdown_speed = None
    y = _measure(x, noise_std, noise_rng)
    while t < cfg.max_duration:
        sample = TelemetrySample(t=t, arrival_t=t, y=y, truth=x.copy())
        thrust = guidance_command(x, cfg)
        if controller is not None:
            thrust = np.asarray(controller(t, sample, thrust), dtype=float)
        sample.accel_cmd = thrust + gravity
        samples.append(sample)
        dt = cfg.sample_period * (1.0 + jitter_rng.uniform(-cfg.sample_jitter, cfg.sample_jitter))
        executed = fault_model.executed(thrust, t, x[2])
        accel = executed + gravity + process_rng.normal(0.0, cfg.accel_noise_std, 3)
        x_new = np.concatenate([x[:3] + x[3:] * dt + 0.5 * accel * dt * dt, x[3:] + accel * dt])
        if x_new[2] <= 0.0:
            # vertical position is quadratic in time over the interval
            roots = np.roots([0.5 * accel[2], x[5], x[2]])
            real = [r.real for r in roots if abs(r.imag) < 1e-12 and 0.0 <= r.real <= dt]
            frac_t = min(real) if real else dt
            touchdown_t = t + frac_t
            touchdown_speed = abs(x[5] + accel[2] * frac_t)
            break
        x, t = x_new, t + dt
        times.append(t)
        truth.append(x.copy())
        y = _measure(x, noise_std, noise_rng)
    else:
        logger.warning("Descent reached the time limit of %.0f s before touchdown", cfg.max_duration)
    for k, sample in enumerate(samples):
        late = delay_rng.random() < cfg.oosm_fraction
        delay = int(delay_rng.integers(1, cfg.max_delay_samples + 1))
        if late and k > 0:
            sample.arrival_t = sample.t + delay * cfg.sample_period
    samples.sort(key=lambda s: (s.arrival_t, s.t))
    if touchdown_speed is not None and fault.kind == "none" and touchdown_speed > cfg.soft_landing_speed:
        logger.warning("Touchdown speed %.2f m/s exceeds the soft-landing bound", touchdown_speed)
    return DescentResult(samples=samples,
                         times=np.array(times),
                         truth=np.vstack(truth),
                         touchdown_t=touchdown_t,
                         touchdown_speed=touchdown_speed,
                         fault_onset_t=fault_model.onset_t)


def telemetry_frame(samples: Sequence[TelemetrySample], emit_truth: bool = False) -> pd.DataFrame:
    """Telemetry rows in the given order with the CSV column layout."""
    rows = []
    for s in samples:
        row = {"t": s.t, "arrival_t": s.arrival_t}
        row.update(zip(MEAS_COLUMNS, s.y))
        row.update(zip(ACCEL_COLUMNS, s.accel_cmd))
        if emit_truth:
            row.update(zip(TRUTH_COLUMNS, s.truth))
        rows.append(row)
    columns = ["t", "arrival_t"] + MEAS_COLUMNS + ACCEL_COLUMNS + (TRUTH_COLUMNS if emit_truth else [])
    return pd.DataFrame(rows, columns=columns)


def write_telemetry_csv(samples: Sequence[TelemetrySample], path: Union[str, Path], emit_truth: bool = False) -> Path:
    """Write telemetry as CSV; floats keep their full precision."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    telemetry_frame(samples, emit_truth).to_csv(path, index=False, float_format="%.17g")
    return path
