"""
This module contains the tool for simulating descent telemetry.

The following class is available:

    * :class `SimulateDescent`
"""
import logging
from pathlib import Path
from typing import Optional, Type
from pydantic import BaseModel, Field

from langchain_core.tools import BaseTool

from costate_fusion.config import FaultConfig, RunConfig
from costate_fusion.descent_sim import simulate_descent, write_telemetry_csv
from costate_fusion.tools.utility import TOOL_ERRORS, _dumps, _error, _resolve_config
logger = logging.getLogger(__name__)

class SimulateDescentInput(BaseModel):
    """
    The input schema for the SimulateDescent tool.
    """
    out_dir: str = Field(description="the directory the telemetry.csv file is written to. If not provided, ask the user. Do not guess.")
    seed: Optional[int] = Field(description="the seed of the simulation, it is optional", default=None)
    fault_kind: Optional[str] = Field(description="the injected fault chosen from {'none', 'thrust_map_scale', 'timing_misalignment', 'saturation_model_error'}, it is optional", default=None)
    fault_magnitude: Optional[float] = Field(description="the fault magnitude, it is optional", default=None)
    emit_truth: Optional[bool] = Field(description="whether to append the truth state columns, it is optional", default=None)
    config_file: Optional[str] = Field(description="path of a TOML or JSON run configuration, it is optional", default=None)

class SimulateDescent(BaseTool):
    """
    This tool simulates a powered descent and writes its telemetry as CSV.

    Parameters
    ----------
    run_config : RunConfig, optional
        Configuration used when no configuration file is passed.

    Returns
    -------
    str
        The telemetry file, the number of samples, the touchdown time and speed and the fault onset time.

        .. note::

            args_schema is used to define the schema of the inputs as follows:

            .. list-table::
                :widths: 15 50
                :header-rows: 1

                * - Field
                  - Description
                * - out_dir
                  - the directory the telemetry.csv file is written to. If not provided, ask the user. Do not guess.
                * - seed
                  - the seed of the simulation, it is optional
                * - fault_kind
                  - the injected fault chosen from {'none', 'thrust_map_scale', 'timing_misalignment', 'saturation_model_error'}, it is optional
                * - fault_magnitude
                  - the fault magnitude, it is optional
                * - emit_truth
                  - whether to append the truth state columns, it is optional
                * - config_file
                  - path of a TOML or JSON run configuration, it is optional
    """
    name: str = "simulate_descent"
    """Name of the tool."""
    description: str = "To simulate a powered lunar descent, optionally with an injected fault, and write the telemetry CSV. "
    """Description of the tool."""
    run_config: Optional[RunConfig] = None
    """Configuration used when no configuration file is passed."""
    args_schema: Type[BaseModel] = SimulateDescentInput
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
        out_dir = kwargs.get("out_dir", None)
        if out_dir is None:
            return "Output directory is required"
        seed = kwargs.get("seed", None)
        fault_kind = kwargs.get("fault_kind", None)
        fault_magnitude = kwargs.get("fault_magnitude", None)
        emit_truth = kwargs.get("emit_truth", None)
        config_file = kwargs.get("config_file", None)
        try:
            config = _resolve_config(self.run_config, config_file, seed)
            fault = config.fault.model_dump()
            if fault_kind is not None:
                fault["kind"] = fault_kind
            if fault_magnitude is not None:
                fault["magnitude"] = fault_magnitude
            fault = FaultConfig.model_validate(fault)
            result = simulate_descent(config.simulation, fault)
            path = write_telemetry_csv(result.samples, Path(out_dir) / "telemetry.csv", emit_truth=bool(emit_truth))
        except TOOL_ERRORS as err:
            return _error(err)
        return _dumps({"telemetry_file": path,
                       "samples": len(result.samples),
                       "touchdown_t": result.touchdown_t,
                       "touchdown_speed": result.touchdown_speed,
                       "fault_onset_t": result.fault_onset_t})

    async def _arun(
        self, **kwargs
    ) -> str:
        """Use the tool asynchronously."""
        return self._run(**kwargs)
