"""
Utility functions shared by the pipeline, the CLI and the tools.
"""
import json
import logging
import math
from datetime import datetime, date
from pathlib import Path
from typing import Union

import numpy as np
from pandas import Timestamp

logger = logging.getLogger(__name__)


class _CustomEncoder(json.JSONEncoder):
    """
    This class is used to encode numpy and pandas values into JSON string.
    Non-finite floats are written as null.
    """
    def default(self, obj): #pylint: disable=arguments-renamed
        if isinstance(obj, (Timestamp, datetime, date)):
            return obj.isoformat()
        if isinstance(obj, (np.integer, np.bool_)):
            return obj.item()
        if isinstance(obj, np.floating):
            return _finite_or_none(float(obj))
        if isinstance(obj, np.ndarray):
            return sanitize(obj.tolist())
        if isinstance(obj, Path):
            return str(obj)
        return super().default(obj)

    def iterencode(self, o, _one_shot=False):
        return super().iterencode(sanitize(o), _one_shot)


def _finite_or_none(value: float):
    return value if math.isfinite(value) else None


def sanitize(obj):
    """Recursively replace NaN and infinities by None and stringify dict keys."""
    if isinstance(obj, float):
        return _finite_or_none(obj)
    if isinstance(obj, np.floating):
        return _finite_or_none(float(obj))
    if isinstance(obj, dict):
        return {str(k): sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [sanitize(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return sanitize(obj.tolist())
    return obj


def dump_json(obj, path: Union[str, Path, None] = None) -> str:
    """
    Serialize deterministically (sorted keys, two-space indent) and optionally
    write the text to ``path``.
    """
    text = json.dumps(obj, cls=_CustomEncoder, indent=2, sort_keys=True, allow_nan=False)
    if path is not None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text + "\n", encoding="utf-8")
        logger.info("Wrote %s", path)
    return text
