"""
This module contains the tools for running the co-state pipeline and the EKF baseline over telemetry.

The following classes are available:

    * :class `RunCoStatePipeline`
    * :class `RunEkfBaseline`
"""
import logging
from pathlib import Path
from typing import Optional, Type
from pydantic import BaseModel, Field

from langchain_core.tools import BaseTool

from costate_fusion.config import RunConfig
from costate_fusion.experiments import run_ekf
from costate_fusion.pipeline import run_pipeline
from costate_fusion.tools.utility import TOOL_ERRORS, _dumps, _error, _resolve_config
from costate_fusion.utility import dump_json
logger = logging.getLogger(__name__)

SUMMARY_KEYS = ("first_costate_alarm_t", "first_ekf_alarm_t", "peak_hazard_prob", "mean_calibration_error",
                "touchdown_t", "samples_processed", "skipped_samples", "dropped_late_samples")

class RunCoStatePipelineInput(BaseModel):
    """
    The input schema for the RunCoStatePipeline tool.
    """
    telemetry_file: str = Field(description="the telemetry CSV file. If not provided, ask the user. Do not guess.")
    out_dir: Optional[str] = Field(description="the directory signals.csv and summary.json are written to, it is optional", default=None)
    config_file: Optional[str] = Field(description="path of a TOML or JSON run configuration, it is optional", default=None)

class RunCoStatePipeline(BaseTool):
    """
    This tool runs the streaming co-state pipeline over a telemetry file and reports the alarms and the hazard probability.

    Parameters
    ----------
    run_config : RunConfig, optional
        Configuration used when no configuration file is passed.

    Returns
    -------
    str
        The first co-state and EKF alarm times, the peak hazard probability, the mean calibration error and the sample counts.

        .. note::

            args_schema is used to define the schema of the inputs as follows:

            .. list-table::
                :widths: 15 50
                :header-rows: 1

                * - Field
                  - Description
                * - telemetry_file
                  - the telemetry CSV file. If not provided, ask the user. Do not guess.
                * - out_dir
                  - the directory signals.csv and summary.json are written to, it is optional
                * - config_file
                  - path of a TOML or JSON run configuration, it is optional
    """
    name: str = "run_costate_pipeline"
    """Name of the tool."""
    description: str = "To run the co-state risk monitor over descent telemetry and report alarms, regimes and hazard probability. "
    """Description of the tool."""
    run_config: Optional[RunConfig] = None
    """Configuration used when no configuration file is passed."""
    args_schema: Type[BaseModel] = RunCoStatePipelineInput
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
        if telemetry_file is None:
            return "Telemetry file is required"
        out_dir = kwargs.get("out_dir", None)
        config_file = kwargs.get("config_file", None)
        try:
            report = run_pipeline(telemetry_file, _resolve_config(self.run_config, config_file))
            results = {key: report.summary[key] for key in SUMMARY_KEYS}
            results["regimes"] = None if report.summary["mode_model"] is None else report.summary["mode_model"]["labels"]
            if out_dir is not None:
                results["files"] = report.write(out_dir)
        except TOOL_ERRORS as err:
            return _error(err)
        return _dumps(results)

    async def _arun(
        self, **kwargs
    ) -> str:
        """Use the tool asynchronously."""
        return self._run(
            **kwargs
        )

class RunEkfBaselineInput(BaseModel):
    """
    The input schema for the RunEkfBaseline tool.
    """
    telemetry_file: str = Field(description="the telemetry CSV file. If not provided, ask the user. Do not guess.")
    out_dir: Optional[str] = Field(description="the directory ekf_signals.csv and ekf_summary.json are written to, it is optional", default=None)
    config_file: Optional[str] = Field(description="path of a TOML or JSON run configuration, it is optional", default=None)

class RunEkfBaseline(BaseTool):
    """
    This tool runs the EKF baseline with its NIS alarm over a telemetry file.

    Parameters
    ----------
    run_config : RunConfig, optional
        Configuration used when no configuration file is passed.

    Returns
    -------
    str
        The first NIS alarm time, the NIS threshold and the mean NIS.

        .. note::

            args_schema is used to define the schema of the inputs as follows:

            .. list-table::
                :widths: 15 50
                :header-rows: 1

                * - Field
                  - Description
                * - telemetry_file
                  - the telemetry CSV file. If not provided, ask the user. Do not guess.
                * - out_dir
                  - the directory ekf_signals.csv and ekf_summary.json are written to, it is optional
                * - config_file
                  - path of a TOML or JSON run configuration, it is optional
    """
    name: str = "run_ekf_baseline"
    """Name of the tool."""
    description: str = "To run the EKF innovation (NIS) consistency baseline over descent telemetry. "
    """Description of the tool."""
    run_config: Optional[RunConfig] = None
    """Configuration used when no configuration file is passed."""
    args_schema: Type[BaseModel] = RunEkfBaselineInput
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
        if telemetry_file is None:
            return "Telemetry file is required"
        out_dir = kwargs.get("out_dir", None)
        config_file = kwargs.get("config_file", None)
        try:
            frame, summary = run_ekf(telemetry_file, _resolve_config(self.run_config, config_file))
            if out_dir is not None:
                out = Path(out_dir)
                out.mkdir(parents=True, exist_ok=True)
                frame.to_csv(out / "ekf_signals.csv", index=False, float_format="%.17g")
                dump_json(summary, out / "ekf_summary.json")
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
