"""
Lander dynamics and measurement model.

State vectors are ``[x, y, z, vx, vy, vz]`` in meters and m/s, measurements
are ``[altitude, range, vertical velocity]``.

The following functions are available:

    * :func `as_state`
    * :func `eval_dynamics`
    * :func `eval_h`
    * :func `eval_jacobian`
    * :func `predicted_increment`
    * :func `midpoint_state`
"""
from typing import Optional

import numpy as np

from costate_fusion.errors import InvalidStateError

STATE_DIM = 6
MEAS_DIM = 3
EPS_RANGE = 1e-6
"""Range guard in meters; only active near p = 0."""


def as_state(state) -> np.ndarray:
    """
    Validate and convert a state to a float array of shape (6,).

    Raises
    ------
    InvalidStateError
        If the state has the wrong shape or a non-finite component.
    """
    arr = np.asarray(state, dtype=float)
    if arr.shape != (STATE_DIM,):
        raise InvalidStateError(f"State must have shape ({STATE_DIM},), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidStateError(f"State has non-finite components: {arr}")
    return arr


def _accel(accel: Optional[np.ndarray]) -> np.ndarray:
    if accel is None:
        return np.zeros(3)
    accel = np.asarray(accel, dtype=float)
    if accel.shape != (3,) or not np.all(np.isfinite(accel)):
        raise InvalidStateError(f"Acceleration must be a finite 3-vector, got {accel}")
    return accel


def eval_dynamics(state, accel: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Evaluate the kinematic prior f(x) = (v, a).

    Parameters
    ----------
    state : array_like
        State vector.
    accel : array_like, optional
        Commanded net acceleration held over the interval. Defaults to zero,
        which gives the constant-velocity prior.

    Returns
    -------
    numpy.ndarray
        State derivative of shape (6,).
    """
    x = as_state(state)
    return np.concatenate([x[3:], _accel(accel)])


def eval_h(state) -> np.ndarray:
    """Return the measurement (z, max(||p||, eps_r), v_z)."""
    x = as_state(state)
    rng = max(float(np.linalg.norm(x[:3])), EPS_RANGE)
    return np.array([x[2], rng, x[5]])


def eval_jacobian(state) -> np.ndarray:
    """
    Jacobian of :func:`eval_h` with the guarded range in the denominator.

    Returns
    -------
    numpy.ndarray
        Matrix of shape (3, 6).
    """
    x = as_state(state)
    rng = max(float(np.linalg.norm(x[:3])), EPS_RANGE)
    jac = np.zeros((MEAS_DIM, STATE_DIM))
    jac[0, 2] = 1.0
    jac[1, :3] = x[:3] / rng
    jac[2, 5] = 1.0
    return jac


def predicted_increment(state, accel: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Model-predicted measurement rate eta = H f.

    The altitude rate is v_z, the range rate is p.v / r and the vertical
    velocity rate is the held vertical acceleration (zero by default).
    """
    x = as_state(state)
    a = _accel(accel)
    rng = max(float(np.linalg.norm(x[:3])), EPS_RANGE)
    return np.array([x[5], float(np.dot(x[:3], x[3:])) / rng, a[2]])


def midpoint_state(state, dt: float, accel: Optional[np.ndarray] = None) -> np.ndarray:
    """Onboard prediction half an interval ahead, x + f(x) dt / 2."""
    x = as_state(state)
    return x + 0.5 * dt * eval_dynamics(x, accel)
