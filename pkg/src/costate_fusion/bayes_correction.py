"""
Exponential co-state correction of mode probabilities.

Each mode k is reweighted by ``exp(lam_k . d_lam - |lam_k|^2 dt / 2)`` where
``lam_k`` is the mode's co-state centroid and ``d_lam`` the observed co-state
increment. Weights are formed in the log domain.

The following are available:

    * :class `CorrectionGate`
    * :func `log_weights`
    * :func `temper_log_weights`
    * :func `correct_probabilities`
"""
from collections import deque
from typing import Optional, Union
import logging

import numpy as np

from costate_fusion.config import CorrectionConfig
from costate_fusion.errors import InvalidIntervalError, InvalidPriorError
from costate_fusion.regimes import CoStateCentroids

logger = logging.getLogger(__name__)


def log_weights(lambda_bar: np.ndarray, delta_lambda: np.ndarray, dt: float) -> np.ndarray:
    """Untempered log-weights lam_k . d_lam - |lam_k|^2 dt / 2."""
    lambda_bar = np.atleast_2d(np.asarray(lambda_bar, dtype=float))
    return lambda_bar @ np.asarray(delta_lambda, dtype=float) - 0.5 * np.sum(lambda_bar ** 2, axis=1) * dt


def temper_log_weights(logw: np.ndarray, threshold: float, scale: float) -> np.ndarray:
    """
    Compress log-weights whose distance below the largest exceeds ``threshold``.

    The excess beyond the threshold is multiplied by ``scale``. The map is
    monotone, so the ordering of the weights is kept.
    """
    centered = np.asarray(logw, dtype=float) - np.max(logw)
    return np.where(centered < -threshold, -threshold + scale * (centered + threshold), centered)


def correct_probabilities(p: np.ndarray,
                          centroids: Union[CoStateCentroids, np.ndarray],
                          delta_lambda: np.ndarray,
                          dt: float,
                          cfg: Optional[CorrectionConfig] = None) -> np.ndarray:
    """
    Reweight mode probabilities by the co-state increment.

    Parameters
    ----------
    p : numpy.ndarray
        Prior mode probabilities.
    centroids : CoStateCentroids or numpy.ndarray
        One co-state centroid per mode, paired by index.
    delta_lambda : numpy.ndarray
        Observed co-state increment over the step.
    dt : float
        Step length in seconds.
    cfg : CorrectionConfig, optional
        Tempering settings. Defaults to ``CorrectionConfig()``.

    Returns
    -------
    numpy.ndarray
        Posterior on the simplex; zero prior entries stay zero.

    Raises
    ------
    InvalidPriorError
        If ``p`` carries no mass.
    """
    cfg = cfg or CorrectionConfig()
    if not dt > 0:
        raise InvalidIntervalError(f"Interval must be positive, got {dt}")
    p = np.asarray(p, dtype=float)
    lambda_bar = centroids.lambda_bar if isinstance(centroids, CoStateCentroids) else np.asarray(centroids, dtype=float)
    if lambda_bar.shape[0] != p.shape[0]:
        raise ValueError(f"Need one centroid per mode, got {lambda_bar.shape[0]} for {p.shape[0]} modes")
    if not np.any(p > 0):
        raise InvalidPriorError("Prior probabilities are all zero")
    support = p > 0
    logw = temper_log_weights(log_weights(lambda_bar, delta_lambda, dt)[support],
                              cfg.temper_threshold, cfg.temper_scale)
    logpost = np.log(p[support]) + logw
    logpost -= np.max(logpost)
    post = np.zeros_like(p)
    post[support] = np.exp(logpost)
    return post / post.sum()


class CorrectionGate:
    """
    Activation rule of the correction.

    A step activates when its increment norm exceeds the configured
    percentile of the preceding increments.
    """
    def __init__(self, cfg: Optional[CorrectionConfig] = None):
        self.cfg = cfg or CorrectionConfig()
        self.history = deque(maxlen=self.cfg.activation_history)

    def copy(self) -> "CorrectionGate":
        """Independent copy for checkpointing."""
        other = CorrectionGate(self.cfg)
        other.history.extend(self.history)
        return other

    def check(self, norm: float) -> bool:
        """Decide activation for ``norm`` and record it."""
        active = (self.cfg.enabled
                  and len(self.history) >= self.cfg.min_history
                  and norm > np.percentile(np.fromiter(self.history, float), self.cfg.activation_percentile))
        self.history.append(float(norm))
        return bool(active)
