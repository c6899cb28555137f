"""
Regularized algebraic co-state and consistency diagnostics.

The co-state is the multiplier that pulls the propagated state onto the
measurement-consistent manifold over one sampling interval::

    lambda = (H H^T + eps I)^-1 Sigma^-1 (dy_obs - eta dt) / dt

The following are available:

    * :class `InnovationWindow`
    * :func `regularized_gram_inverse`
    * :func `adaptive_epsilon`
    * :func `compute_costate`
    * :func `project_state_update`
    * :func `whitened_innovation`
    * :func `rolling_rms_sigma`
    * :func `info_weighting`
    * :func `lyapunov_value`
    * :func `regularized_projector`
    * :func `exact_projector`
    * :func `suppress_roundoff`
    * :func `costate_step`
"""
from collections import deque
from typing import Optional, Tuple
import logging

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError

from costate_fusion.errors import InvalidIntervalError, NumericalFailureError
from costate_fusion.measurement_model import eval_dynamics, eval_jacobian, midpoint_state, predicted_increment

logger = logging.getLogger(__name__)

EPS_FLOOR = 1e-9
EPS_TAU = 1e-8
EPS_ILL_TAU = 1e-3
COND_LIMIT = 1e8
ROUNDOFF_ULPS = 1024
"""Residual channels within this many ulps of their operands count as zero."""


def _gram_factor(H: np.ndarray, eps: float):
    H = np.asarray(H, dtype=float)
    gram = H @ H.T + eps * np.eye(H.shape[0])
    try:
        return cho_factor(gram, lower=True, check_finite=True)
    except (LinAlgError, ValueError) as err:
        raise NumericalFailureError(f"Gram matrix is not positive definite (eps={eps}): {err}") from err


def regularized_gram_inverse(H: np.ndarray, eps: float) -> np.ndarray:
    """
    Return (H H^T + eps I)^-1 through a Cholesky factorization.

    Parameters
    ----------
    H : numpy.ndarray
        Measurement Jacobian of shape (m, n).
    eps : float
        Spectral regularizer, strictly positive.
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    factor = _gram_factor(H, eps)
    inv = cho_solve(factor, np.eye(np.shape(H)[0]))
    return 0.5 * (inv + inv.T)


def adaptive_epsilon(H: np.ndarray,
                     eps_floor: float = EPS_FLOOR,
                     tau: float = EPS_TAU,
                     cond_limit: float = COND_LIMIT,
                     ill_tau: float = EPS_ILL_TAU) -> float:
    """
    Spectrally scaled regularizer.

    ``eps = max(eps_floor, tau * tr(HH^T) / m)``, raised to
    ``ill_tau * tr(HH^T) / m`` when the condition number of HH^T exceeds
    ``cond_limit``.
    """
    H = np.asarray(H, dtype=float)
    gram = H @ H.T
    scale = float(np.trace(gram)) / gram.shape[0]
    eps = max(eps_floor, tau * scale)
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > cond_limit:
        eps = max(eps, ill_tau * scale)
    return eps


def compute_costate(H: np.ndarray,
                    sigma_sq: np.ndarray,
                    dy_obs: np.ndarray,
                    eta: np.ndarray,
                    dt: float,
                    eps: float) -> np.ndarray:
    """
    Compute the regularized co-state over one interval.

    Parameters
    ----------
    H : numpy.ndarray
        Measurement Jacobian (m, n).
    sigma_sq : numpy.ndarray
        Diagonal of the innovation weighting Sigma (variances, length m).
    dy_obs : numpy.ndarray
        Observed measurement increment.
    eta : numpy.ndarray
        Predicted measurement rate.
    dt : float
        Interval length in seconds.
    eps : float
        Regularizer. Zero is accepted when H has full row rank.

    Returns
    -------
    numpy.ndarray
        Co-state of length m.

    Raises
    ------
    InvalidIntervalError
        If ``dt <= 0``.
    """
    if not dt > 0:
        raise InvalidIntervalError(f"Interval must be positive, got {dt}")
    resid = np.asarray(dy_obs, dtype=float) - np.asarray(eta, dtype=float) * dt
    if not np.any(resid):
        return np.zeros_like(resid)
    rhs = resid / np.asarray(sigma_sq, dtype=float) / dt
    return cho_solve(_gram_factor(H, eps), rhs)


def project_state_update(x: np.ndarray,
                         lam: np.ndarray,
                         H: np.ndarray,
                         dt: float,
                         accel: Optional[np.ndarray] = None,
                         midpoint: bool = False) -> np.ndarray:
    """
    Euler step of the augmented dynamics, x + f(x) dt + H^T lambda dt.

    With ``midpoint`` the drift is taken at x + f(x) dt / 2.
    """
    if not dt > 0:
        raise InvalidIntervalError(f"Interval must be positive, got {dt}")
    drift_at = midpoint_state(x, dt, accel) if midpoint else x
    return np.asarray(x, dtype=float) + eval_dynamics(drift_at, accel) * dt + np.asarray(H).T @ np.asarray(lam) * dt


def whitened_innovation(dy_obs: np.ndarray, eta: np.ndarray, dt: float, sigma_sq: np.ndarray) -> float:
    """Return z = sqrt(r^T Sigma^-1 r) with r = dy_obs - eta dt."""
    if not dt > 0:
        raise InvalidIntervalError(f"Interval must be positive, got {dt}")
    resid = np.asarray(dy_obs, dtype=float) - np.asarray(eta, dtype=float) * dt
    return float(np.sqrt(np.sum(resid * resid / np.asarray(sigma_sq, dtype=float))))


class InnovationWindow:
    """
    Ring buffer of the last ``size`` raw innovations with their timestamps.

    Parameters
    ----------
    size : int
        Window length W.
    dim : int, optional
        Innovation dimension. Defaults to 3.
    """
    def __init__(self, size: int = 50, dim: int = 3):
        self.size = int(size)
        self.dim = int(dim)
        self._times = deque(maxlen=self.size)
        self._values = deque(maxlen=self.size)

    def __len__(self):
        return len(self._values)

    def push(self, t: float, innovation: np.ndarray):
        """Append an innovation; timestamps must increase strictly."""
        if self._times and not t > self._times[-1]:
            raise InvalidIntervalError(f"Innovation timestamp {t} does not follow {self._times[-1]}")
        self._times.append(float(t))
        self._values.append(np.asarray(innovation, dtype=float).copy())

    def values(self) -> np.ndarray:
        """Innovations as an array of shape (len, dim)."""
        if not self._values:
            return np.zeros((0, self.dim))
        return np.vstack(self._values)

    def copy(self) -> "InnovationWindow":
        """Copy of the window; stored arrays are never mutated and are shared."""
        other = InnovationWindow(self.size, self.dim)
        other._times.extend(self._times)
        other._values.extend(self._values)
        return other


def rolling_rms_sigma(window: InnovationWindow, sigma_min: float = 1e-3) -> np.ndarray:
    """
    Per-channel variance from the windowed RMS of the innovations.

    An empty window yields ``sigma_min**2`` on all channels.
    """
    floor = sigma_min ** 2
    vals = window.values()
    if vals.shape[0] == 0:
        return np.full(window.dim, floor)
    return np.maximum(floor, np.mean(vals * vals, axis=0))


def info_weighting(H: np.ndarray,
                   Q: np.ndarray,
                   alpha: float,
                   beta: float,
                   sigma_min: float = 1e-3) -> np.ndarray:
    """
    Information-based weighting.

    Channel weights are ``diag(alpha H Q H^T + beta I)`` scaled so that the
    largest equals one; the returned variances are their reciprocals,
    floored at ``sigma_min**2``.
    """
    H = np.asarray(H, dtype=float)
    weight = alpha * np.diag(H @ np.asarray(Q, dtype=float) @ H.T) + beta
    weight = weight / np.max(weight)
    return np.maximum(sigma_min ** 2, 1.0 / weight)


def lyapunov_value(dx: np.ndarray, f_dt: np.ndarray, H: np.ndarray, eps: float) -> float:
    """
    Consistency functional V = e^T (HH^T + eps I)^-1 e / 2 with e = H (dx - f dt).
    """
    err = np.asarray(H, dtype=float) @ (np.asarray(dx, dtype=float) - np.asarray(f_dt, dtype=float))
    if not np.any(err):
        return 0.0
    sol = cho_solve(_gram_factor(H, eps), err)
    return max(0.0, 0.5 * float(err @ sol))


def regularized_projector(H: np.ndarray, eps: float) -> np.ndarray:
    """H^T (HH^T + eps I)^-1 H."""
    H = np.asarray(H, dtype=float)
    return H.T @ regularized_gram_inverse(H, eps) @ H


def exact_projector(H: np.ndarray) -> np.ndarray:
    """Orthogonal projector onto the row space of H, via the pseudo-inverse."""
    H = np.asarray(H, dtype=float)
    return np.linalg.pinv(H) @ H


def suppress_roundoff(resid: np.ndarray, *operands: np.ndarray, ulps: float = ROUNDOFF_ULPS) -> np.ndarray:
    """
    Zero residual channels that are indistinguishable from round-off.

    A channel is cleared when its magnitude does not exceed ``ulps`` units in
    the last place of the summed magnitudes of the operands it was formed
    from.
    """
    resid = np.asarray(resid, dtype=float)
    scale = sum(np.abs(np.asarray(op, dtype=float)) for op in operands) if operands else np.abs(resid)
    return np.where(np.abs(resid) <= ulps * np.finfo(float).eps * scale, 0.0, resid)


def costate_step(x: np.ndarray,
                 y_prev: np.ndarray,
                 y_new: np.ndarray,
                 dt: float,
                 accel: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Geometry of one interval: Jacobian, predicted rate and raw innovation.

    H and eta are evaluated at the held-acceleration midpoint of the onboard
    prediction. Innovation channels at round-off level are returned as exact
    zeros, so consistent telemetry produces a vanishing co-state.
    """
    mid = midpoint_state(x, dt, accel)
    H = eval_jacobian(mid)
    eta = predicted_increment(mid, accel)
    y_new = np.asarray(y_new, dtype=float)
    y_prev = np.asarray(y_prev, dtype=float)
    resid = suppress_roundoff(y_new - y_prev - eta * dt, y_new, y_prev, eta * dt)
    return H, eta, resid
