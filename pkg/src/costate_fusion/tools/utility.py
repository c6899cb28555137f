"""
Utility functions for the co-state fusion tools.
"""
import json
import logging
from typing import Optional

import numpy as np
from pydantic import ValidationError

from costate_fusion.config import RunConfig, load_config
from costate_fusion.errors import FusionError
from costate_fusion.utility import _CustomEncoder

logger = logging.getLogger(__name__)

TOOL_ERRORS = (FusionError, ValueError, ValidationError, OSError, ArithmeticError, np.linalg.LinAlgError)


def _resolve_config(base: Optional[RunConfig],
                    config_file: Optional[str] = None,
                    seed: Optional[int] = None) -> RunConfig:
    """Configuration of a tool call: the file when given, else the tool's own, else the defaults."""
    if config_file is not None:
        config = load_config(config_file)
    else:
        config = base if base is not None else RunConfig()
    return config.with_seed(seed)


def _error(err: Exception) -> str:
    """Error payload returned to the agent instead of raising."""
    logger.error("Tool call failed: %s", err)
    return json.dumps({"error": f"{type(err).__name__}: {err}"}, cls=_CustomEncoder)


def _dumps(payload: dict) -> str:
    return json.dumps(payload, cls=_CustomEncoder)
