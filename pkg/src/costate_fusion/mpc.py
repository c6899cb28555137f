"""
Risk-aware receding-horizon control of the vertical thrust.

The horizon is predicted with the co-state projected dynamics and a held
co-state forecast, the mode probabilities with the learned generator. The
cost adds a co-state penalty and a probability-weighted inverse MFPT to a
quadratic tracking cost; a quadratic risk bound on the mode probabilities
must hold at every horizon step.

The following are available:

    * :class `MpcResult`
    * :class `MpcDemoController`
    * :func `rollout`
    * :func `mpc_cost`
    * :func `solve_mpc`
    * :func `brute_force_mpc`
    * :func `run_mpc_demo`
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product
from typing import Dict, List, Optional, Sequence, Tuple
import logging

import numpy as np
import pandas as pd

from costate_fusion.config import DescentConfig, MpcConfig, RunConfig
from costate_fusion.costate import project_state_update
from costate_fusion.descent_sim import TelemetrySample, reference_descent_rate, simulate_descent
from costate_fusion.errors import UnreachableHazardError
from costate_fusion.generator import expm_generator, mfpt
from costate_fusion.measurement_model import MEAS_DIM, as_state, eval_jacobian
from costate_fusion.pipeline import CoStatePipeline

logger = logging.getLogger(__name__)

FD_STEP = 1e-6
ARMIJO_C = 1e-4


@dataclass
class MpcResult:
    """
    Solution of one receding-horizon problem.

    ``controls[0]`` is the vertical thrust acceleration to apply.
    """
    controls: np.ndarray
    cost: float
    cost_history: List[float]
    infeasible: bool
    states: np.ndarray
    probabilities: np.ndarray
    risk: np.ndarray
    terminal_mfpt: Optional[float]
    iterations: int = 0


@dataclass
class _Problem:
    x0: np.ndarray
    lam: np.ndarray
    probs: np.ndarray
    cfg: MpcConfig
    descent: DescentConfig
    lateral: np.ndarray
    inv_mfpt: np.ndarray
    mfpt: Dict[int, Optional[float]] = field(default_factory=dict)


def rollout(x0: np.ndarray,
            controls: Sequence[float],
            lambda_pred: np.ndarray,
            dt: float,
            gravity: float,
            lateral: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Predict the state over the horizon.

    Each step applies the projected Euler update with net acceleration
    ``(lateral, u_k - gravity)`` and the forecast co-state of that step.

    Returns
    -------
    numpy.ndarray
        States of shape (N + 1, 6), starting with ``x0``.
    """
    lateral = np.zeros(2) if lateral is None else np.asarray(lateral, dtype=float)
    states = [as_state(x0)]
    for k, u in enumerate(controls):
        x = states[-1]
        accel = np.array([lateral[0], lateral[1], float(u) - gravity])
        states.append(project_state_update(x, lambda_pred[k], eval_jacobian(x), dt, accel))
    return np.vstack(states)


def _forecast(lambda_pred, horizon: int) -> np.ndarray:
    lam = np.atleast_2d(np.asarray(lambda_pred, dtype=float))
    if lam.shape[0] == 1:
        lam = np.repeat(lam, horizon, axis=0)
    if lam.shape != (horizon, MEAS_DIM):
        raise ValueError(f"Co-state forecast must have shape ({horizon}, {MEAS_DIM}), got {lam.shape}")
    return lam


def _risk_metric(cfg: MpcConfig, K: int, hazard_set: Sequence[int]) -> np.ndarray:
    if cfg.risk_metric is None:
        W = np.zeros((K, K))
        W[list(hazard_set), list(hazard_set)] = 1.0
        return W
    W = np.asarray(cfg.risk_metric, dtype=float)
    if W.shape != (K, K) or not np.allclose(W, W.T) or np.linalg.eigvalsh(0.5 * (W + W.T)).min() < -1e-12:
        raise ValueError("risk_metric must be a symmetric positive semidefinite KxK matrix")
    return W


def _mean_passage(probs: np.ndarray, times: Dict[int, Optional[float]]) -> Optional[float]:
    # expected hitting time from the transient part of a distribution
    finite = {k: m for k, m in times.items() if m is not None}
    if not finite or len(finite) < len(times):
        return None
    mass = sum(probs[k] for k in finite)
    if mass <= 0:
        return None
    return float(sum(probs[k] * m for k, m in finite.items()) / mass)


def mpc_cost(controls: np.ndarray, problem: _Problem) -> Tuple[float, np.ndarray]:
    """Horizon cost and predicted states for a control sequence."""
    cfg, descent = problem.cfg, problem.descent
    states = rollout(problem.x0, controls, problem.lam, cfg.dt, descent.gravity, problem.lateral)
    h_ref = float(problem.x0[2])
    cost = 0.0
    for k in range(1, states.shape[0]):
        h_ref += reference_descent_rate(h_ref, descent) * cfg.dt
        h, vz = states[k, 2], states[k, 5]
        cost += cfg.q_velocity * (vz - reference_descent_rate(h, descent)) ** 2
        cost += cfg.q_altitude * (h - h_ref) ** 2
    cost += cfg.r_control * float(np.sum((np.asarray(controls) - descent.gravity) ** 2))
    cost += cfg.gamma * float(np.sum(np.abs(problem.lam)))
    cost += cfg.rho * float(np.sum(problem.probs[1:] @ problem.inv_mfpt))
    return float(cost), states


def _bounds(cfg: MpcConfig) -> Tuple[float, float]:
    lower = -np.inf if cfg.u_min is None else cfg.u_min
    upper = np.inf if cfg.u_max is None else cfg.u_max
    if lower > upper:
        raise ValueError(f"u_min {lower} exceeds u_max {upper}")
    return lower, upper


def _setup(x, p, L, lambda_pred, cfg, hazard_set, descent, lateral) -> Tuple[_Problem, np.ndarray]:
    p = np.asarray(p, dtype=float)
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise ValueError("Mode probabilities must lie on the simplex")
    L = np.asarray(L, dtype=float)
    K = p.shape[0]
    hazard = sorted(set(int(h) for h in hazard_set))
    step = expm_generator(L * cfg.dt)
    probs = [p]
    for _ in range(cfg.horizon):
        probs.append(step @ probs[-1])
    probs = np.vstack(probs)
    inv_mfpt = np.zeros(K)
    times: Dict[int, Optional[float]] = {}
    if hazard and len(hazard) < K:
        try:
            times = mfpt(L, hazard)
            for k, m in times.items():
                inv_mfpt[k] = 1.0 / m if m > 0 else 0.0
        except UnreachableHazardError as err:
            logger.debug("MFPT term disabled, hazard unreachable from %s", err.modes)
            times = {k: None for k in range(K) if k not in hazard}
    problem = _Problem(x0=as_state(x), lam=_forecast(lambda_pred, cfg.horizon), probs=probs, cfg=cfg,
                       descent=descent, lateral=np.zeros(2) if lateral is None else np.asarray(lateral, dtype=float),
                       inv_mfpt=inv_mfpt, mfpt=times)
    W = _risk_metric(cfg, K, hazard)
    risk = np.einsum("ki,ij,kj->k", probs, W, probs)
    return problem, risk


def _gradient(controls: np.ndarray, problem: _Problem) -> np.ndarray:
    grad = np.zeros_like(controls)
    for k in range(controls.shape[0]):
        up, down = controls.copy(), controls.copy()
        up[k] += FD_STEP
        down[k] -= FD_STEP
        grad[k] = (mpc_cost(up, problem)[0] - mpc_cost(down, problem)[0]) / (2.0 * FD_STEP)
    return grad


def solve_mpc(x: np.ndarray,
              p: np.ndarray,
              L: np.ndarray,
              lambda_pred: np.ndarray,
              cfg: Optional[MpcConfig] = None,
              hazard_set: Sequence[int] = (),
              descent: Optional[DescentConfig] = None,
              lateral: Optional[np.ndarray] = None,
              tol: float = 1e-9) -> MpcResult:
    """
    Solve the risk-aware horizon problem by projected gradient descent.

    Parameters
    ----------
    x : numpy.ndarray
        Current state estimate.
    p : numpy.ndarray
        Current mode probabilities.
    L : numpy.ndarray
        Generator, column convention.
    lambda_pred : numpy.ndarray
        Co-state forecast, one row per horizon step or a single row held
        over the horizon.
    cfg : MpcConfig, optional
        Weights, bounds and iteration limit.
    hazard_set : sequence of int, optional
        Hazard modes for the MFPT term and the default risk metric.
    descent : DescentConfig, optional
        Gravity, reference descent profile and maximum thrust.
    lateral : numpy.ndarray, optional
        Horizontal net acceleration held over the horizon. Defaults to zero.
    tol : float, optional
        Stop when a projected step changes the controls by less than this.

    Returns
    -------
    MpcResult
        On a violated risk bound the fallback applies maximum braking
        (``u_max``, else the thrust limit) on every step and
        ``infeasible`` is set.

    Notes
    -----
    The iteration starts from the zero-control sequence projected onto the
    bounds; the step length is chosen by Armijo backtracking so the cost
    never increases.
    """
    cfg = cfg or MpcConfig()
    descent = descent or DescentConfig()
    problem, risk = _setup(x, p, L, lambda_pred, cfg, hazard_set, descent, lateral)
    lower, upper = _bounds(cfg)
    if np.any(risk > cfg.risk_bound + 1e-9):
        first = int(np.flatnonzero(risk > cfg.risk_bound + 1e-9)[0])
        logger.warning("Risk bound %.3g violated at horizon step %d (risk %.3g), braking fallback",
                       cfg.risk_bound, first, risk[first])
        brake = cfg.u_max if cfg.u_max is not None else descent.max_thrust_accel
        controls = np.full(cfg.horizon, float(brake))
        cost, states = mpc_cost(controls, problem)
        return MpcResult(controls=controls, cost=cost, cost_history=[cost], infeasible=True, states=states,
                         probabilities=problem.probs, risk=risk,
                         terminal_mfpt=_mean_passage(problem.probs[-1], problem.mfpt))
    controls = np.clip(np.zeros(cfg.horizon), lower, upper)
    cost, states = mpc_cost(controls, problem)
    history = [cost]
    alpha = 1.0
    iterations = 0
    for iterations in range(1, cfg.iterations + 1):
        grad = _gradient(controls, problem)
        accepted = False
        while alpha > 1e-14:
            trial = np.clip(controls - alpha * grad, lower, upper)
            trial_cost, trial_states = mpc_cost(trial, problem)
            if trial_cost <= cost + ARMIJO_C * float(grad @ (trial - controls)):
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            break
        change = float(np.max(np.abs(trial - controls)))
        controls, cost, states = trial, trial_cost, trial_states
        history.append(cost)
        alpha *= 2.0
        if change < tol:
            break
    return MpcResult(controls=controls, cost=cost, cost_history=history, infeasible=False, states=states,
                     probabilities=problem.probs, risk=risk,
                     terminal_mfpt=_mean_passage(problem.probs[-1], problem.mfpt), iterations=iterations)


def brute_force_mpc(x: np.ndarray,
                    p: np.ndarray,
                    L: np.ndarray,
                    lambda_pred: np.ndarray,
                    cfg: Optional[MpcConfig] = None,
                    levels: Sequence[float] = (),
                    hazard_set: Sequence[int] = (),
                    descent: Optional[DescentConfig] = None,
                    lateral: Optional[np.ndarray] = None) -> Tuple[np.ndarray, float]:
    """
    Exhaustive search over a control grid, used as an optimality reference.

    Returns
    -------
    tuple
        Best control sequence and its cost.
    """
    cfg = cfg or MpcConfig()
    descent = descent or DescentConfig()
    problem, _ = _setup(x, p, L, lambda_pred, cfg, hazard_set, descent, lateral)
    best, best_cost = None, np.inf
    for combo in product([float(v) for v in levels], repeat=cfg.horizon):
        controls = np.array(combo)
        cost = mpc_cost(controls, problem)[0]
        if cost < best_cost:
            best, best_cost = controls, cost
    return best, float(best_cost)


class MpcDemoController:
    """
    Simulator hook running the co-state pipeline in the loop.

    Until the pipeline has a generator and regime labels the braking law of
    the simulator flies the vehicle; afterwards the horizon problem is
    re-solved every ``replan_every`` samples and its vertical thrust for the
    elapsed time is applied. The horizontal thrust stays with the braking law.
    """
    def __init__(self, config: RunConfig):
        self.config = config
        self.pipeline = CoStatePipeline(config)
        self.plan: Optional[MpcResult] = None
        self.plan_t = 0.0
        self.since_plan = 0
        self.rows: List[dict] = []
        self.infeasible_solves = 0
        self.solves = 0

    def _ready(self) -> bool:
        pipe = self.pipeline
        return pipe.L is not None and pipe.p is not None and bool(pipe.hazard_modes)

    def __call__(self, t: float, sample: TelemetrySample, thrust: np.ndarray) -> np.ndarray:
        mcfg = self.config.mpc
        descent = self.config.simulation
        thrust = np.asarray(thrust, dtype=float).copy()
        if self._ready() and (self.plan is None or self.since_plan >= mcfg.replan_every):
            pipe = self.pipeline
            lateral = pipe.a_prev[:2]
            self.plan = solve_mpc(pipe.x, pipe.p, pipe.L, pipe.lam_geo, mcfg, pipe.hazard_modes, descent, lateral)
            self.plan_t, self.since_plan = t, 0
            self.solves += 1
            self.infeasible_solves += int(self.plan.infeasible)
        source = "guidance"
        if self.plan is not None:
            k = min(int((t - self.plan_t) // mcfg.dt), mcfg.horizon - 1)
            thrust[2] = self.plan.controls[k]
            source = "mpc_fallback" if self.plan.infeasible else "mpc"
        self.since_plan += 1
        gravity = np.array([0.0, 0.0, -descent.gravity])
        self.pipeline.process(TelemetrySample(t=sample.t, arrival_t=sample.t, y=sample.y, accel_cmd=thrust + gravity))
        last = self.pipeline.rows[-1] if self.pipeline.rows else {}
        self.rows.append({"t": t,
                          "altitude": float(sample.truth[2]) if sample.truth is not None else float(sample.y[0]),
                          "vz": float(sample.truth[5]) if sample.truth is not None else float(sample.y[2]),
                          "thrust_z": float(thrust[2]),
                          "source": source,
                          "lambda_norm": last.get("lambda_norm"),
                          "hazard_prob": last.get("hazard_prob"),
                          "mfpt": last.get("mfpt"),
                          "terminal_mfpt": None if self.plan is None else self.plan.terminal_mfpt})
        return thrust


def run_mpc_demo(config: Optional[RunConfig] = None) -> Tuple[pd.DataFrame, dict]:
    """
    Closed-loop descent with the MPC setting the vertical thrust.

    Returns
    -------
    tuple
        Trace frame and summary (touchdown, solves, fallbacks, pipeline summary).
    """
    config = config or RunConfig()
    controller = MpcDemoController(config)
    result = simulate_descent(config.simulation, config.fault, controller=controller)
    report = controller.pipeline.finalize()
    summary = {"touchdown_t": result.touchdown_t,
               "touchdown_speed": result.touchdown_speed,
               "solves": controller.solves,
               "infeasible_solves": controller.infeasible_solves,
               "first_costate_alarm_t": report.summary["first_costate_alarm_t"],
               "peak_hazard_prob": report.summary["peak_hazard_prob"],
               "config_echo": config.model_dump(mode="json")}
    logger.info("MPC demo finished: %d solves, %d fallbacks", controller.solves, controller.infeasible_solves)
    return pd.DataFrame(controller.rows), summary
