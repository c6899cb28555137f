"""
Windowed persistence detector shared by the co-state and NIS alarms.

A statistic is averaged over consecutive non-overlapping windows; the alarm
fires at the last sample of the ``consecutive``-th window in a row whose mean
exceeds the threshold and then stays latched.

The following are available:

    * :class `WindowedAlarm`
    * :func `run_windowed_alarm`
"""
from typing import Iterable, Optional, Tuple
import logging

import numpy as np

logger = logging.getLogger(__name__)


class WindowedAlarm:
    """
    Parameters
    ----------
    threshold : float
        Level the windowed mean must exceed.
    window : int, optional
        Samples per window. Defaults to 20.
    consecutive : int, optional
        Consecutive exceeding windows W_a. Defaults to 3.
    name : str, optional
        Label used in log messages.
    """
    def __init__(self, threshold: float, window: int = 20, consecutive: int = 3, name: str = "alarm"):
        self.threshold = float(threshold)
        self.window = int(window)
        self.consecutive = int(consecutive)
        self.name = name
        self.alarm_t: Optional[float] = None
        self.last_mean: Optional[float] = None
        self.windows_seen = 0
        self.windows_exceeded = 0
        self._sum = 0.0
        self._count = 0
        self._run = 0

    @property
    def alarmed(self) -> bool:
        """Latched alarm state."""
        return self.alarm_t is not None

    @property
    def exceeding(self) -> bool:
        """True while the last completed window is above the threshold."""
        return self.last_mean is not None and self.last_mean > self.threshold

    def copy(self) -> "WindowedAlarm":
        """Independent copy for checkpointing."""
        other = WindowedAlarm(self.threshold, self.window, self.consecutive, self.name)
        other.__dict__.update(self.__dict__)
        return other

    def update(self, t: float, value: float) -> bool:
        """
        Add one sample.

        Returns
        -------
        bool
            True only at the sample where the alarm first fires.
        """
        self._sum += float(value)
        self._count += 1
        if self._count < self.window:
            return False
        self.last_mean = self._sum / self._count
        self._sum, self._count = 0.0, 0
        self.windows_seen += 1
        if self.last_mean > self.threshold:
            self.windows_exceeded += 1
            self._run += 1
        else:
            self._run = 0
        if self.alarm_t is None and self._run >= self.consecutive:
            self.alarm_t = float(t)
            logger.info("%s raised at t=%.3f (window mean %.4g > %.4g)", self.name, t, self.last_mean, self.threshold)
            return True
        return False


def run_windowed_alarm(values: Iterable[float],
                       threshold: float,
                       window: int = 20,
                       consecutive: int = 3,
                       times: Optional[Iterable[float]] = None) -> Tuple[bool, Optional[float], int, int]:
    """
    Run the detector over a finished series.

    Returns
    -------
    tuple
        ``(alarmed, first alarm time or sample index, windows evaluated, windows exceeding)``.
    """
    values = np.asarray(list(values), dtype=float)
    times = np.arange(values.shape[0], dtype=float) if times is None else np.asarray(list(times), dtype=float)
    alarm = WindowedAlarm(threshold, window, consecutive)
    for t, v in zip(times, values):
        alarm.update(t, v)
    return alarm.alarmed, alarm.alarm_t, alarm.windows_seen, alarm.windows_exceeded
