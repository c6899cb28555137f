"""
Run configuration.

Every tunable of the simulator, the pipeline, the EKF baseline and the MPC
demonstrator is a pydantic field with a documented default. Files are TOML or
JSON with one table per section::

    [simulation]
    seed = 7

    [fault]
    kind = "thrust_map_scale"
    magnitude = 0.9

The following are available:

    * :class `DescentConfig`
    * :class `FaultConfig`
    * :class `CostateConfig`
    * :class `RegimeConfig`
    * :class `GeneratorConfig`
    * :class `CorrectionConfig`
    * :class `AlarmConfig`
    * :class `OosmConfig`
    * :class `PipelineConfig`
    * :class `EkfConfig`
    * :class `MpcConfig`
    * :class `RunConfig`
    * :func `load_config`
"""
import json
import logging
from pathlib import Path
from typing import List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

from costate_fusion.errors import InputFormatError

logger = logging.getLogger(__name__)


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DescentConfig(_Section):
    """
    Synthetic powered descent along a straight glide line toward the landing site.
    """
    initial_altitude: float = Field(default=30000.0, gt=0, description="initial altitude in meters")
    initial_downrange: float = Field(default=22500.0, ge=0, description="initial horizontal distance to the site along x in meters")
    phase_boundaries: List[float] = Field(default=[7000.0, 2000.0], description="altitudes in meters separating the three phases, strictly decreasing")
    reference_decel: float = Field(default=1.0, gt=0, description="deceleration of the reference descent-rate profile in m/s^2")
    touchdown_speed: float = Field(default=1.0, gt=0, description="reference descent rate at zero altitude in m/s")
    velocity_gains: List[float] = Field(default=[0.4, 0.5, 0.6], description="per-phase proportional braking gains in 1/s")
    lateral_gain: float = Field(default=0.05, ge=0, description="gain pulling the lander back onto the glide line in 1/s^2")
    max_thrust_accel: float = Field(default=5.0, gt=0, description="thrust acceleration limit in m/s^2")
    gravity: float = Field(default=1.62, gt=0, description="lunar gravity in m/s^2")
    sample_period: float = Field(default=0.1, gt=0, description="nominal sample period in seconds")
    sample_jitter: float = Field(default=0.2, ge=0, lt=1, description="relative half-width of the uniform sample period jitter")
    accel_noise_std: float = Field(default=0.1, ge=0, description="std of the white acceleration disturbance held over each interval in m/s^2")
    noise_std: List[float] = Field(default=[1.0, 1.0, 0.005], description="sensor noise std for altitude (m), range (m) and vertical velocity (m/s)")
    oosm_fraction: float = Field(default=0.05, ge=0, le=1, description="fraction of samples delivered late")
    max_delay_samples: int = Field(default=5, ge=1, description="largest delivery delay in sample periods")
    soft_landing_speed: float = Field(default=2.0, gt=0, description="touchdown vertical speed bound in m/s")
    max_duration: float = Field(default=900.0, gt=0, description="simulation time limit in seconds")
    seed: int = Field(default=0, ge=0, description="seed of the run")

    @field_validator("phase_boundaries")
    @classmethod
    def _decreasing(cls, value):
        if len(value) != 2 or not value[0] > value[1] > 0:
            raise ValueError("phase_boundaries must be two strictly decreasing positive altitudes")
        return value

    @field_validator("velocity_gains")
    @classmethod
    def _three_gains(cls, value):
        if len(value) != 3 or min(value) <= 0:
            raise ValueError("velocity_gains needs one positive gain per phase")
        return value

    @field_validator("noise_std")
    @classmethod
    def _noise(cls, value):
        if len(value) != 3 or min(value) < 0:
            raise ValueError("noise_std needs three non-negative entries")
        return value


class FaultConfig(_Section):
    """
    Internal-model inconsistency injected into the executed dynamics.

    ``magnitude`` is the executed/commanded thrust ratio for
    ``thrust_map_scale``, the command delay in seconds for
    ``timing_misalignment`` and the fraction of the thrust limit that is
    actually available for ``saturation_model_error``.
    """
    kind: Literal["none", "thrust_map_scale", "timing_misalignment", "saturation_model_error"] = Field(default="none", description="fault kind")
    magnitude: float = Field(default=0.9, description="fault magnitude, meaning depends on the kind")
    onset_altitude: Optional[float] = Field(default=7000.0, description="fault becomes active below this truth altitude")
    onset_time: Optional[float] = Field(default=None, description="fault becomes active after this time; overrides onset_altitude")

    @model_validator(mode="after")
    def _check(self):
        if self.magnitude != self.magnitude or abs(self.magnitude) == float("inf"):
            raise ValueError("fault magnitude must be finite")
        if self.kind == "timing_misalignment" and self.magnitude < 0:
            raise ValueError("timing misalignment must be non-negative")
        if self.kind == "saturation_model_error" and not 0 < self.magnitude <= 1:
            raise ValueError("saturation fraction must lie in (0, 1]")
        return self


class CostateConfig(_Section):
    """Co-state computation and innovation weighting."""
    window: int = Field(default=50, ge=1, description="rolling RMS window W in samples")
    whiten_window: int = Field(default=500, ge=2, description="rolling RMS window of the whitened innovation z, current innovation included")
    sigma_min: float = Field(default=1e-3, gt=0, description="per-channel std floor")
    weighting: Literal["rolling_rms", "info"] = Field(default="rolling_rms", description="innovation weighting source")
    info_alpha: float = Field(default=1.0, ge=0, description="information term weight of the info weighting")
    info_beta: float = Field(default=1.0, gt=0, description="identity term weight of the info weighting")
    info_q: Optional[List[List[float]]] = Field(default=None, description="6x6 process sensitivity proxy, identity when unset")
    eps_floor: float = Field(default=1e-9, gt=0, description="lower bound of the adaptive regularizer")
    eps_tau: float = Field(default=1e-8, gt=0, description="regularizer scale relative to tr(HH^T)/m")
    eps_ill_tau: float = Field(default=1e-3, gt=0, description="regularizer scale used when HH^T is ill conditioned")
    cond_limit: float = Field(default=1e8, gt=1, description="condition number above which the regularizer is raised")


class RegimeConfig(_Section):
    """Online clustering into behavioral modes."""
    K: int = Field(default=3, ge=2, description="number of modes")
    warmup: int = Field(default=200, ge=2, description="warm-up length N_w in samples")
    min_separation: float = Field(default=0.5, gt=0, description="seed separation in standardized units")
    features: Literal["costate", "costate_state"] = Field(default="costate", description="(lambda, |lambda|, z) optionally followed by the state estimate")


class GeneratorConfig(_Section):
    """Generator learning cadence and diagnostics."""
    refit_every: int = Field(default=100, ge=1, description="labeled samples between refits N_g")
    history: int = Field(default=1000, ge=10, description="labeled samples used per refit")
    refine: bool = Field(default=True, description="use the MLE refinement when jumps were observed")
    observed_support: bool = Field(default=True, description="zero the rates of transitions never observed in the history")
    max_pair_members: int = Field(default=256, ge=2, description="member thinning for Euclidean inter-cluster distances")
    bootstrap_samples: int = Field(default=200, ge=100, description="bootstrap replicates B")
    confidence: float = Field(default=0.95, gt=0, lt=1, description="bootstrap interval level")
    block_length: int = Field(default=1, ge=1, description="sampling intervals per bootstrap block")


class CorrectionConfig(_Section):
    """Co-state probability correction."""
    enabled: bool = Field(default=True, description="apply the correction when activated")
    temper_threshold: float = Field(default=30.0, gt=0, description="log-weight spread beyond which tempering applies")
    temper_scale: float = Field(default=0.5, gt=0, le=1, description="multiplier of the log-weight excess beyond the threshold")
    activation_percentile: float = Field(default=90.0, ge=0, le=100, description="percentile of recent increments that activates the correction")
    activation_history: int = Field(default=200, ge=1, description="recent increments kept for the activation percentile")
    min_history: int = Field(default=20, ge=1, description="increments required before activation is possible")
    require_costate_excess: bool = Field(default=True, description="activate only while the last co-state alarm window exceeds the nominal threshold")


class AlarmConfig(_Section):
    """Windowed alarm detectors."""
    window: int = Field(default=20, ge=1, description="samples per window")
    consecutive: int = Field(default=3, ge=1, description="consecutive exceeding windows W_a")
    kappa: float = Field(default=6.0, gt=0, description="co-state threshold in nominal standard deviations of the windowed mean")
    nis_level: float = Field(default=0.999, gt=0, lt=1, description="chi-square quantile of the NIS threshold")


class OosmConfig(_Section):
    """Out-of-sequence handling."""
    buffer: int = Field(default=10, ge=1, description="retroactive buffer B_max in samples")


class PipelineConfig(_Section):
    """Streaming co-state pipeline."""
    nominal_samples: int = Field(default=200, ge=2, description="samples used to freeze the nominal statistics")
    costate: CostateConfig = Field(default_factory=CostateConfig)
    regimes: RegimeConfig = Field(default_factory=RegimeConfig)
    generator: GeneratorConfig = Field(default_factory=GeneratorConfig)
    correction: CorrectionConfig = Field(default_factory=CorrectionConfig)
    alarms: AlarmConfig = Field(default_factory=AlarmConfig)
    oosm: OosmConfig = Field(default_factory=OosmConfig)
    initial_state: Optional[List[float]] = Field(default=None, description="initial state estimate, the simulator start when unset")


class EkfConfig(_Section):
    """EKF baseline; noise levels default to the simulator configuration."""
    accel_noise_std: Optional[float] = Field(default=None, ge=0, description="white acceleration std of Q_d")
    noise_std: Optional[List[float]] = Field(default=None, description="measurement noise std of R")
    initial_position_std: float = Field(default=1.0, gt=0, description="initial position std in meters")
    initial_velocity_std: float = Field(default=0.1, gt=0, description="initial velocity std in m/s")
    jitter_scale: float = Field(default=1e-9, gt=0, description="trace-relative jitter added to a singular S")


class MpcConfig(_Section):
    """Risk-aware receding-horizon demonstrator on the vertical thrust channel."""
    horizon: int = Field(default=10, ge=1, description="horizon N in steps")
    dt: float = Field(default=1.0, gt=0, description="step length in seconds")
    q_velocity: float = Field(default=1.0, ge=0, description="weight of the descent-rate tracking error")
    q_altitude: float = Field(default=0.0, ge=0, description="weight of the altitude deviation from the reference altitude")
    r_control: float = Field(default=0.1, ge=0, description="weight of the control deviation from the hover command")
    gamma: float = Field(default=0.0, ge=0, description="co-state penalty weight")
    rho: float = Field(default=1.0, ge=0, description="inverse MFPT penalty weight")
    risk_metric: Optional[List[List[float]]] = Field(default=None, description="KxK PSD risk metric W, Hazard indicator when unset")
    risk_bound: float = Field(default=0.25, gt=0, description="risk bound R_max")
    u_min: Optional[float] = Field(default=0.0, description="lower vertical thrust bound, unbounded when null")
    u_max: Optional[float] = Field(default=5.0, description="upper vertical thrust bound, unbounded when null")
    iterations: int = Field(default=100, ge=1, description="projected gradient iterations")
    replan_every: int = Field(default=10, ge=1, description="samples between solves in the closed-loop demo")


class RunConfig(_Section):
    """Complete configuration of a run."""
    simulation: DescentConfig = Field(default_factory=DescentConfig)
    fault: FaultConfig = Field(default_factory=FaultConfig)
    pipeline: PipelineConfig = Field(default_factory=PipelineConfig)
    ekf: EkfConfig = Field(default_factory=EkfConfig)
    mpc: MpcConfig = Field(default_factory=MpcConfig)

    def with_seed(self, seed: Optional[int]) -> "RunConfig":
        """Copy with the simulation seed replaced; unchanged when seed is None."""
        if seed is None:
            return self
        return self.model_copy(update={"simulation": self.simulation.model_copy(update={"seed": int(seed)})})


def load_config(path: Union[str, Path, None]) -> RunConfig:
    """
    Read a TOML or JSON run configuration.

    Parameters
    ----------
    path : str or Path or None
        Configuration file. None yields the defaults.

    Raises
    ------
    InputFormatError
        If the file cannot be parsed or fails validation.
    """
    if path is None:
        return RunConfig()
    path = Path(path)
    raw = path.read_bytes()
    try:
        if path.suffix.lower() == ".json":
            data = json.loads(raw.decode("utf-8"))
        else:
            data = tomllib.loads(raw.decode("utf-8"))
    except (ValueError, tomllib.TOMLDecodeError) as err:
        raise InputFormatError(f"Cannot parse configuration {path}: {err}") from err
    try:
        config = RunConfig.model_validate(data)
    except ValidationError as err:
        raise InputFormatError(f"Invalid configuration {path}: {err}") from err
    logger.info("Loaded configuration from %s", path)
    return config
