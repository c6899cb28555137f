"""
This module contains the tools for the detector comparison, the generator calibration and the MPC demonstration.

The following classes are available:

    * :class `CompareDetectors`
    * :class `CalibrateGenerator`
    * :class `MpcDemo`
"""
import logging
from pathlib import Path
from typing import Optional, Type
from pydantic import BaseModel, Field

from langchain_core.tools import BaseTool

from costate_fusion.config import RunConfig
from costate_fusion.experiments import calibrate_generator, compare_detectors
from costate_fusion.mpc import run_mpc_demo
from costate_fusion.tools.utility import TOOL_ERRORS, _dumps, _error, _resolve_config
from costate_fusion.utility import dump_json
logger = logging.getLogger(__name__)

class CompareDetectorsInput(BaseModel):
    """
    The input schema for the CompareDetectors tool.
    """
    runs: int = Field(description="the number of fault-injected runs. If not provided, ask the user. Do not guess.")
    seed: Optional[int] = Field(description="the first seed, it is optional", default=None)
    nominal_runs: Optional[int] = Field(description="the number of additional fault-free runs used to count false alarms, it is optional", default=None)
    config_file: Optional[str] = Field(description="path of a TOML or JSON run configuration, it is optional", default=None)

class CompareDetectors(BaseTool):
    """
    This tool compares the co-state alarm with the EKF NIS alarm over seeded fault-injected descents.

    Parameters
    ----------
    run_config : RunConfig, optional
        Configuration used when no configuration file is passed.

    Returns
    -------
    str
        How often the co-state alarm came first, the median lead time and the nominal false alarms.

        .. note::

            args_schema is used to define the schema of the inputs as follows:

            .. list-table::
                :widths: 15 50
                :header-rows: 1

                * - Field
                  - Description
                * - runs
                  - the number of fault-injected runs. If not provided, ask the user. Do not guess.
                * - seed
                  - the first seed, it is optional
                * - nominal_runs
                  - the number of additional fault-free runs used to count false alarms, it is optional
                * - config_file
                  - path of a TOML or JSON run configuration, it is optional
    """
    name: str = "compare_detectors"
    """Name of the tool."""
    description: str = "To compare co-state and EKF innovation alarm times over simulated fault-injected descents. "
    """Description of the tool."""
    run_config: Optional[RunConfig] = None
    """Configuration used when no configuration file is passed."""
    args_schema: Type[BaseModel] = CompareDetectorsInput
    return_direct: bool = False

    def __init__(
        self,
        run_config: Optional[RunConfig] = None,
        return_direct: bool = False
    ) -> None:
        super().__init__(  # type: ignore[call-arg]
            run_config=run_config,
            return_direct=return_direct
        )

    def _run(
      self,
      **kwargs
    ) -> str:
        """Use the tool."""

        if "kwargs" in kwargs:
            kwargs = kwargs["kwargs"]
        runs = kwargs.get("runs", None)
        if runs is None:
            return "Number of runs is required"
        seed = kwargs.get("seed", None)
        nominal_runs = kwargs.get("nominal_runs", None)
        config_file = kwargs.get("config_file", None)
        try:
            _, summary = compare_detectors(_resolve_config(self.run_config, config_file),
                                           runs=int(runs),
                                           seed=seed or 0,
                                           nominal_runs=nominal_runs or 0,
                                           progress=False)
        except TOOL_ERRORS as err:
            return _error(err)
        return _dumps(summary)

    async def _arun(
        self, **kwargs
    ) -> str:
        """Use the tool asynchronously."""
        return self._run(
            **kwargs
        )

class CalibrateGeneratorInput(BaseModel):
    """
    The input schema for the CalibrateGenerator tool.
    """
    telemetry_file: Optional[str] = Field(description="the telemetry CSV file, a fresh simulation is used when not provided, it is optional", default=None)
    seed: Optional[int] = Field(description="the seed of the simulation and the bootstrap, it is optional", default=None)
    out_dir: Optional[str] = Field(description="the directory calibration.json is written to, it is optional", default=None)
    config_file: Optional[str] = Field(description="path of a TOML or JSON run configuration, it is optional", default=None)

class CalibrateGenerator(BaseTool):
    """
    This tool learns the regime generator of one run and reports its diagnostics.

    Parameters
    ----------
    run_config : RunConfig, optional
        Configuration used when no configuration file is passed.

    Returns
    -------
    str
        The generator, its estimation method, spectral real parts, MFPT to the hazard regime and bootstrap intervals.

        .. note::

            args_schema is used to define the schema of the inputs as follows:

            .. list-table::
                :widths: 15 50
                :header-rows: 1

                * - Field
                  - Description
                * - telemetry_file
                  - the telemetry CSV file, a fresh simulation is used when not provided, it is optional
                * - seed
                  - the seed of the simulation and the bootstrap, it is optional
                * - out_dir
                  - the directory calibration.json is written to, it is optional
                * - config_file
                  - path of a TOML or JSON run configuration, it is optional
    """
    name: str = "calibrate_generator"
    """Name of the tool."""
    description: str = "To estimate the regime transition generator of a descent with calibration, spectral and bootstrap diagnostics. "
    """Description of the tool."""
    run_config: Optional[RunConfig] = None
    """Configuration used when no configuration file is passed."""
    args_schema: Type[BaseModel] = CalibrateGeneratorInput
    return_direct: bool = False

    def __init__(
        self,
        run_config: Optional[RunConfig] = None,
        return_direct: bool = False
    ) -> None:
        super().__init__(  # type: ignore[call-arg]
            run_config=run_config,
            return_direct=return_direct
        )

    def _run(
      self,
      **kwargs
    ) -> str:
        """Use the tool."""

        if "kwargs" in kwargs:
            kwargs = kwargs["kwargs"]
        telemetry_file = kwargs.get("telemetry_file", None)
        seed = kwargs.get("seed", None)
        out_dir = kwargs.get("out_dir", None)
        config_file = kwargs.get("config_file", None)
        try:
            result = calibrate_generator(telemetry_file, _resolve_config(self.run_config, config_file, seed), seed=seed or 0)
            if out_dir is not None:
                dump_json(result, Path(out_dir) / "calibration.json")
        except TOOL_ERRORS as err:
            return _error(err)
        return _dumps({key: result[key] for key in ("samples", "method", "L", "hazard_modes", "mfpt",
                                                    "calibration_error", "spectral_real_parts", "bootstrap")})

    async def _arun(
        self, **kwargs
    ) -> str:
        """Use the tool asynchronously."""
        return self._run(
            **kwargs
        )

class MpcDemoInput(BaseModel):
    """
    The input schema for the MpcDemo tool.
    """
    seed: Optional[int] = Field(description="the seed of the simulation, it is optional", default=None)
    out_dir: Optional[str] = Field(description="the directory mpc_trace.csv is written to, it is optional", default=None)
    config_file: Optional[str] = Field(description="path of a TOML or JSON run configuration, it is optional", default=None)

class MpcDemo(BaseTool):
    """
    This tool flies a simulated descent with the risk-aware MPC setting the vertical thrust.

    Parameters
    ----------
    run_config : RunConfig, optional
        Configuration used when no configuration file is passed.

    Returns
    -------
    str
        Touchdown time and speed, the number of solves and of braking fallbacks.

        .. note::

            args_schema is used to define the schema of the inputs as follows:

            .. list-table::
                :widths: 15 50
                :header-rows: 1

                * - Field
                  - Description
                * - seed
                  - the seed of the simulation, it is optional
                * - out_dir
                  - the directory mpc_trace.csv is written to, it is optional
                * - config_file
                  - path of a TOML or JSON run configuration, it is optional
    """
    name: str = "mpc_demo"
    """Name of the tool."""
    description: str = "To run a closed-loop simulated descent controlled by the risk-aware receding-horizon controller. "
    """Description of the tool."""
    run_config: Optional[RunConfig] = None
    """Configuration used when no configuration file is passed."""
    args_schema: Type[BaseModel] = MpcDemoInput
    return_direct: bool = False

    def __init__(
        self,
        run_config: Optional[RunConfig] = None,
        return_direct: bool = False
    ) -> None:
        super().__init__(  # type: ignore[call-arg]
            run_config=run_config,
            return_direct=return_direct
        )

    def _run(
      self,
      **kwargs
    ) -> str:
        """Use the tool."""

        if "kwargs" in kwargs:
            kwargs = kwargs["kwargs"]
        seed = kwargs.get("seed", None)
        out_dir = kwargs.get("out_dir", None)
        config_file = kwargs.get("config_file", None)
        try:
            frame, summary = run_mpc_demo(_resolve_config(self.run_config, config_file, seed))
            if out_dir is not None:
                out = Path(out_dir)
                out.mkdir(parents=True, exist_ok=True)
                frame.to_csv(out / "mpc_trace.csv", index=False, float_format="%.17g")
        except TOOL_ERRORS as err:
            return _error(err)
        return _dumps({key: value for key, value in summary.items() if key != "config_echo"})

    async def _arun(
        self, **kwargs
    ) -> str:
        """Use the tool asynchronously."""
        return self._run(
            **kwargs
        )
