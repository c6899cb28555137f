"""
Continuous-time Markov generator over behavioral modes.

Column convention throughout: ``L[l, k]`` is the rate of jumps from mode k
to mode l, columns sum to zero and probabilities propagate as
``p(t + dt) = expm(L dt) p(t)``.

The following are available:

    * :class `LabeledTrajectory`
    * :class `TransitionStats`
    * :class `GeneratorFit`
    * :func `transition_stats`
    * :func `intercluster_distances`
    * :func `estimate_drift`
    * :func `estimate_diffusion`
    * :func `assemble_generator`
    * :func `enforce_generator_validity`
    * :func `restrict_to_observed`
    * :func `expm_generator`
    * :func `propagate_probabilities`
    * :func `mfpt`
    * :func `mle_generator`
    * :func `log_likelihood`
    * :func `calibration_error`
    * :func `one_step_calibration`
    * :func `bootstrap_ci`
    * :func `spectral_stability`
    * :func `fit_generator`
    * :func `simulate_ctmc`
    * :func `sample_hitting_times`
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple
import logging
import math

import numpy as np
from scipy.spatial.distance import cdist

from costate_fusion.errors import (DegenerateClusterError, DegenerateDwellError,
                                   InvalidIntervalError, UnreachableHazardError)

logger = logging.getLogger(__name__)

SPECTRAL_TOL = 1e-9
RENORM_TOL = 1e-12


@dataclass
class LabeledTrajectory:
    """
    Mode-labeled samples with strictly increasing timestamps.

    Parameters
    ----------
    t : numpy.ndarray
        Sample times, shape (n,).
    modes : numpy.ndarray
        Mode indices in [0, K), shape (n,).
    K : int
        Number of modes.
    x : numpy.ndarray, optional
        Feature-space points, shape (n, d). Defaults to zeros of width 1.
    """
    t: np.ndarray
    modes: np.ndarray
    K: int
    x: Optional[np.ndarray] = None

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.modes = np.asarray(self.modes, dtype=int)
        if self.x is None:
            self.x = np.zeros((self.t.shape[0], 1))
        self.x = np.asarray(self.x, dtype=float)
        if self.x.ndim == 1:
            self.x = self.x[:, None]
        if not self.t.shape[0] == self.modes.shape[0] == self.x.shape[0]:
            raise ValueError("t, modes and x must have the same length")
        if np.any(np.diff(self.t) <= 0):
            raise InvalidIntervalError("Trajectory timestamps must be strictly increasing")
        if self.modes.size and (self.modes.min() < 0 or self.modes.max() >= self.K):
            raise ValueError(f"Mode indices must lie in [0, {self.K})")

    def __len__(self):
        return self.t.shape[0]


@dataclass
class TransitionStats:
    """
    Transition bookkeeping of a trajectory.

    ``index_sets[k][l]`` holds the sample indices i with a jump from mode k
    at i to mode l at i + 1, ``N[k, l]`` their count and ``T[k]`` the dwell
    time accumulated in mode k. ``l_full`` and ``l_coord`` are the
    inter-cluster distances (zero for unoccupied modes).
    """
    index_sets: List[List[List[int]]]
    N: np.ndarray
    T: np.ndarray
    occupied: List[int]
    l_full: Optional[np.ndarray] = None
    l_coord: Optional[np.ndarray] = None


@dataclass
class GeneratorFit:
    """Result of :func:`fit_generator`; ``L_moment`` is None when it was skipped."""
    L: np.ndarray
    L_moment: Optional[np.ndarray]
    stats: TransitionStats
    method: str
    log_likelihood: float
    calibration_error: float


def transition_stats(traj: LabeledTrajectory) -> TransitionStats:
    """Jump index sets, jump counts and dwell times."""
    K = traj.K
    index_sets = [[[] for _ in range(K)] for _ in range(K)]
    N = np.zeros((K, K))
    T = np.zeros(K)
    if len(traj) > 1:
        dts = np.diff(traj.t)
        np.add.at(T, traj.modes[:-1], dts)
        for i in np.flatnonzero(traj.modes[:-1] != traj.modes[1:]):
            k, l = traj.modes[i], traj.modes[i + 1]
            index_sets[k][l].append(int(i))
            N[k, l] += 1
    occupied = sorted(set(int(m) for m in traj.modes))
    return TransitionStats(index_sets=index_sets, N=N, T=T, occupied=occupied)


def _mean_abs_pairwise(a: np.ndarray, b: np.ndarray) -> float:
    # exact mean of |a_i - b_j| over all pairs via sorting and prefix sums
    b_sorted = np.sort(b)
    prefix = np.concatenate([[0.0], np.cumsum(b_sorted)])
    cnt = np.searchsorted(b_sorted, a, side="right")
    below = a * cnt - prefix[cnt]
    above = (prefix[-1] - prefix[cnt]) - a * (b_sorted.shape[0] - cnt)
    return float(np.sum(below + above) / (a.shape[0] * b_sorted.shape[0]))


def _thin(points: np.ndarray, max_members: Optional[int]) -> np.ndarray:
    if max_members is None or points.shape[0] <= max_members:
        return points
    idx = np.linspace(0, points.shape[0] - 1, max_members).round().astype(int)
    return points[idx]


def intercluster_distances(traj: LabeledTrajectory,
                           modes: Optional[Iterable[int]] = None,
                           max_members: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Mean pairwise distances between mode member sets.

    Parameters
    ----------
    traj : LabeledTrajectory
        Labeled samples.
    modes : iterable of int, optional
        Modes to evaluate. Defaults to all K modes; pairs involving other
        modes are left at zero.
    max_members : int, optional
        Evenly thin member sets above this size for the Euclidean distance.
        The per-coordinate distances are always exact.

    Returns
    -------
    (numpy.ndarray, numpy.ndarray)
        ``l_full`` of shape (K, K) and ``l_coord`` of shape (K, K, d).

    Raises
    ------
    DegenerateClusterError
        If a requested mode has no members.
    """
    K, d = traj.K, traj.x.shape[1]
    modes = list(range(K)) if modes is None else sorted(set(int(m) for m in modes))
    members = {}
    for k in modes:
        pts = traj.x[traj.modes == k]
        if pts.shape[0] == 0:
            raise DegenerateClusterError(f"Mode {k} has no members")
        members[k] = pts
    l_full = np.zeros((K, K))
    l_coord = np.zeros((K, K, d))
    for a, k in enumerate(modes):
        for l in modes[a:]:
            full = float(cdist(_thin(members[k], max_members), _thin(members[l], max_members)).mean())
            coord = np.array([_mean_abs_pairwise(members[k][:, q], members[l][:, q]) for q in range(d)])
            l_full[k, l] = l_full[l, k] = full
            l_coord[k, l] = l_coord[l, k] = coord
    return l_full, l_coord


def _coord_distances(traj: LabeledTrajectory, stats: TransitionStats) -> np.ndarray:
    if stats.l_coord is None:
        stats.l_full, stats.l_coord = intercluster_distances(traj, modes=stats.occupied)
    return stats.l_coord


def _increments(traj: LabeledTrajectory, idx: Sequence[int]) -> Tuple[np.ndarray, np.ndarray]:
    idx = np.asarray(idx, dtype=int)
    dx = np.abs(traj.x[idx + 1] - traj.x[idx])
    dt = traj.t[idx + 1] - traj.t[idx]
    return dx, dt


def estimate_drift(traj: LabeledTrajectory, stats: TransitionStats) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Drift intensities from absolute increments across mode transitions.

    Returns
    -------
    tuple of numpy.ndarray
        ``a_kl_q`` (K, K, d): mean of |dx_q| / dt over the k -> l jumps;
        ``a_bar_k_q`` (K, d): sum over l of a_kl_q / |l_kl_q|;
        ``a_bar_kl`` (K, K): sum over q of a_kl_q / l_kl_q, the pair rate.
        Coordinates with a vanishing distance are excluded and logged.
    """
    K, d = traj.K, traj.x.shape[1]
    l_coord = _coord_distances(traj, stats)
    a_kl_q = np.zeros((K, K, d))
    a_bar_k_q = np.zeros((K, d))
    a_bar_kl = np.zeros((K, K))
    for k in range(K):
        for l in range(K):
            idx = stats.index_sets[k][l]
            if k == l or not idx:
                continue
            dx, dt = _increments(traj, idx)
            a_kl_q[k, l] = np.mean(dx / dt[:, None], axis=0)
            for q in range(d):
                if l_coord[k, l, q] > 0:
                    a_bar_k_q[k, q] += a_kl_q[k, l, q] / abs(l_coord[k, l, q])
                    a_bar_kl[k, l] += a_kl_q[k, l, q] / l_coord[k, l, q]
                elif a_kl_q[k, l, q] != 0:
                    logger.warning("Excluding coordinate %d of pair %d->%d: zero inter-cluster distance", q, k, l)
    return a_kl_q, a_bar_k_q, a_bar_kl


def estimate_diffusion(traj: LabeledTrajectory,
                       stats: TransitionStats,
                       a_kl_q: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Diffusion intensities from sqrt(dt)-normalized absolute increments.

    ``sigma_kl_pq`` is zero for pairs with at most one jump; ``sigma_bar_kl``
    is zero whenever one of its denominators vanishes.
    """
    K, d = traj.K, traj.x.shape[1]
    l_coord = _coord_distances(traj, stats)
    sigma_pq = np.zeros((K, K, d, d))
    sigma_bar = np.zeros((K, K))
    for k in range(K):
        for l in range(K):
            idx = stats.index_sets[k][l]
            if k == l or len(idx) <= 1:
                continue
            dx, dt = _increments(traj, idx)
            sq = np.sqrt(dt)[:, None]
            dev = dx / sq - a_kl_q[k, l][None, :] * sq
            sigma_pq[k, l] = dev.T @ dev / (len(idx) - 1)
            denom = np.outer(l_coord[k, l], l_coord[k, l])
            if np.all(denom > 0):
                sigma_bar[k, l] = float(np.sum(sigma_pq[k, l] / denom))
    return sigma_pq, sigma_bar


def _reset_diagonal(L: np.ndarray) -> np.ndarray:
    np.fill_diagonal(L, 0.0)
    np.fill_diagonal(L, -L.sum(axis=0))
    return L


def assemble_generator(a_bar: np.ndarray, sigma_bar: np.ndarray) -> np.ndarray:
    """
    Raw generator L = L1out + L1in + L2.

    ``(L1out)_lk = a_kl``, ``(L1in)_lk = -a_lk`` and
    ``(L2)_lk = (sigma_kl + sigma_lk) / 2`` off the diagonal, each with the
    diagonal closing its columns. Off-diagonal entries may be negative.
    """
    a_bar = np.asarray(a_bar, dtype=float)
    sigma_bar = np.asarray(sigma_bar, dtype=float)
    K = a_bar.shape[0]
    off = ~np.eye(K, dtype=bool)
    l1out = np.where(off, a_bar.T, 0.0)
    l1in = np.where(off, -a_bar, 0.0)
    l2 = np.where(off, 0.5 * (sigma_bar + sigma_bar.T), 0.0)
    for mat in (l1out, l1in, l2):
        np.fill_diagonal(mat, -mat.sum(axis=0))
    return _reset_diagonal(l1out + l1in + l2)


def enforce_generator_validity(L: np.ndarray) -> np.ndarray:
    """Clip negative off-diagonals to zero and close each column on the diagonal."""
    L = np.array(L, dtype=float)
    off = ~np.eye(L.shape[0], dtype=bool)
    L[off & (L < 0)] = 0.0
    return _reset_diagonal(L)


def restrict_to_observed(L: np.ndarray, N: np.ndarray) -> np.ndarray:
    """
    Zero the rate of every k -> l transition with no observed jump
    (``N[k, l] == 0``) and close the columns on the diagonal.
    """
    L = np.array(L, dtype=float)
    unseen = (np.asarray(N, dtype=float).T == 0) & ~np.eye(L.shape[0], dtype=bool)
    L[unseen] = 0.0
    return _reset_diagonal(L)


def expm_generator(A: np.ndarray) -> np.ndarray:
    """
    Matrix exponential by scaling and squaring around a truncated Taylor core.

    The squaring count s makes ||A||_1 / 2^s <= 0.5; the series stops once a
    term falls below the unit roundoff relative to the partial sum, which
    bounds the tail by the same amount.
    """
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    norm = float(np.max(np.sum(np.abs(A), axis=0))) if n else 0.0
    s = 0 if norm <= 0.5 else int(math.ceil(math.log2(norm / 0.5)))
    B = A / (2.0 ** s)
    result = np.eye(n)
    term = np.eye(n)
    for j in range(1, 40):
        term = term @ B / j
        result = result + term
        if np.max(np.abs(term)) <= np.finfo(float).eps * np.max(np.abs(result)):
            break
    for _ in range(s):
        result = result @ result
    return result


def propagate_probabilities(L: np.ndarray, p: np.ndarray, dt: float) -> np.ndarray:
    """
    Propagate mode probabilities over dt and keep them on the simplex.
    """
    if dt < 0:
        raise InvalidIntervalError(f"Propagation interval must be non-negative, got {dt}")
    p_new = expm_generator(np.asarray(L, dtype=float) * dt) @ np.asarray(p, dtype=float)
    p_new = np.maximum(p_new, 0.0)
    total = p_new.sum()
    if abs(total - 1.0) > RENORM_TOL:
        p_new = p_new / total
    return p_new


def _reaches(L: np.ndarray, hazard: set) -> set:
    # modes with a positive-rate path into the hazard set
    K = L.shape[0]
    reach = set(hazard)
    changed = True
    while changed:
        changed = False
        for k in range(K):
            if k not in reach and any(L[l, k] > 0 for l in reach):
                reach.add(k)
                changed = True
    return reach


def mfpt(L: np.ndarray, hazard_set: Iterable[int]) -> Dict[int, float]:
    """
    Mean first-passage times into the hazard set.

    Solves ``Lt^T m = -1`` on the transient (non-hazard) modes.

    Returns
    -------
    dict
        Transient mode index to expected hitting time in seconds.

    Raises
    ------
    UnreachableHazardError
        If some transient mode cannot reach the hazard set.
    """
    L = np.asarray(L, dtype=float)
    K = L.shape[0]
    hazard = set(int(h) for h in hazard_set)
    if not hazard or len(hazard) >= K or not hazard.issubset(range(K)):
        raise ValueError(f"Hazard set must be a non-empty proper subset of range({K}), got {sorted(hazard)}")
    transient = [k for k in range(K) if k not in hazard]
    unreachable = [k for k in transient if k not in _reaches(L, hazard)]
    if unreachable:
        raise UnreachableHazardError(unreachable)
    sub = L[np.ix_(transient, transient)]
    try:
        times = np.linalg.solve(sub.T, -np.ones(len(transient)))
    except np.linalg.LinAlgError as err:
        raise UnreachableHazardError(transient) from err
    return {k: float(max(m, 0.0)) for k, m in zip(transient, times)}


def mle_generator(N: np.ndarray, T: np.ndarray) -> np.ndarray:
    """
    Maximum-likelihood generator from jump counts and dwell times.

    The rate of k -> l jumps is ``N[k, l] / T[k]``, stored at ``L[l, k]``.

    Raises
    ------
    DegenerateDwellError
        If a mode with observed jumps has zero dwell time.
    """
    N = np.asarray(N, dtype=float)
    T = np.asarray(T, dtype=float)
    K = N.shape[0]
    L = np.zeros((K, K))
    for k in range(K):
        jumps = N[k].sum() - N[k, k]
        if T[k] <= 0:
            if jumps > 0:
                raise DegenerateDwellError(f"Mode {k} has {int(jumps)} jumps but no dwell time")
            continue
        for l in range(K):
            if l != k:
                L[l, k] = N[k, l] / T[k]
    return _reset_diagonal(L)


def log_likelihood(L: np.ndarray, N: np.ndarray, T: np.ndarray) -> float:
    """Sum of N_kl log(rate k->l) minus exit rates times dwell times."""
    L = np.asarray(L, dtype=float)
    N = np.asarray(N, dtype=float)
    K = L.shape[0]
    total = 0.0
    for k in range(K):
        for l in range(K):
            if l != k and N[k, l] > 0:
                rate = L[l, k]
                if rate <= 0:
                    return -math.inf
                total += N[k, l] * math.log(rate)
        total += L[k, k] * float(T[k])
    return total


def calibration_error(L: np.ndarray, dt: float, p_k: np.ndarray, empirical_hist: np.ndarray) -> float:
    """L1 distance between the one-step prediction and the empirical histogram."""
    pred = expm_generator(np.asarray(L, dtype=float) * dt) @ np.asarray(p_k, dtype=float)
    return float(np.sum(np.abs(pred - np.asarray(empirical_hist, dtype=float))))


def one_step_calibration(traj: LabeledTrajectory, L: np.ndarray) -> float:
    """
    Occupancy-weighted one-step calibration error of a trajectory.

    For every mode the prediction from a point mass over the mean sampling
    interval is compared with the histogram of the next-sample modes.
    """
    if len(traj) < 2:
        return 0.0
    K = traj.K
    src, dst = traj.modes[:-1], traj.modes[1:]
    dts = np.diff(traj.t)
    total, weight = 0.0, 0
    for k in range(K):
        mask = src == k
        n_k = int(mask.sum())
        if n_k == 0:
            continue
        hist = np.bincount(dst[mask], minlength=K) / n_k
        total += n_k * calibration_error(L, float(dts[mask].mean()), np.eye(K)[k], hist)
        weight += n_k
    return total / weight


def bootstrap_ci(traj: LabeledTrajectory,
                 B: int = 200,
                 confidence: float = 0.95,
                 hazard_set: Optional[Iterable[int]] = None,
                 block_length: Optional[int] = None,
                 seed: int = 0) -> dict:
    """
    Block-bootstrap intervals for the MLE generator and the MFPT.

    Consecutive sampling intervals are grouped into blocks that are resampled
    with replacement; every replicate is re-estimated along the MLE path.

    Parameters
    ----------
    traj : LabeledTrajectory
        Labeled samples.
    B : int, optional
        Number of replicates, at least 100. Defaults to 200.
    confidence : float, optional
        Two-sided level. Defaults to 0.95.
    hazard_set : iterable of int, optional
        When given, MFPT intervals are reported as well.
    block_length : int, optional
        Intervals per block. Defaults to 1.
    seed : int, optional
        Resampling seed. Defaults to 0.

    Returns
    -------
    dict
        ``L_lower``, ``L_upper`` (K, K), ``L_hat`` and, with a hazard set,
        ``mfpt_lower``/``mfpt_upper`` keyed by transient mode (None where
        too few replicates reach the hazard).
    """
    if B < 100:
        raise ValueError(f"At least 100 bootstrap replicates are required, got {B}")
    K = traj.K
    n_int = len(traj) - 1
    if n_int < 1:
        raise ValueError("Bootstrap needs at least one sampling interval")
    block_length = max(1, int(block_length or 1))
    n_blocks = int(math.ceil(n_int / block_length))
    block_id = np.arange(n_int) // block_length
    src, dst = traj.modes[:-1], traj.modes[1:]
    dts = np.diff(traj.t)
    block_N = np.zeros((n_blocks, K, K))
    block_T = np.zeros((n_blocks, K))
    jumps = src != dst
    np.add.at(block_N, (block_id[jumps], src[jumps], dst[jumps]), 1.0)
    np.add.at(block_T, (block_id, src), dts)
    rng = np.random.default_rng(seed)
    hazard = None if hazard_set is None else sorted(set(int(h) for h in hazard_set))
    samples_L = np.zeros((B, K, K))
    transient = [] if hazard is None else [k for k in range(K) if k not in hazard]
    samples_m = np.full((B, len(transient)), np.nan)
    for b in range(B):
        pick = rng.integers(0, n_blocks, size=n_blocks)
        L_b = _mle_lenient(block_N[pick].sum(axis=0), block_T[pick].sum(axis=0))
        samples_L[b] = L_b
        if hazard is not None:
            try:
                times = mfpt(L_b, hazard)
                samples_m[b] = [times[k] for k in transient]
            except UnreachableHazardError:
                pass
    alpha = 0.5 * (1.0 - confidence)
    stats = transition_stats(traj)
    out = {"B": B,
           "confidence": confidence,
           "L_hat": _mle_lenient(stats.N, stats.T),
           "L_lower": np.quantile(samples_L, alpha, axis=0),
           "L_upper": np.quantile(samples_L, 1.0 - alpha, axis=0)}
    if hazard is not None:
        lower, upper = {}, {}
        for j, k in enumerate(transient):
            col = samples_m[:, j]
            col = col[np.isfinite(col)]
            if col.shape[0] < 0.5 * B:
                lower[k] = upper[k] = None
            else:
                lower[k] = float(np.quantile(col, alpha))
                upper[k] = float(np.quantile(col, 1.0 - alpha))
        out["mfpt_lower"] = lower
        out["mfpt_upper"] = upper
    return out


def _mle_lenient(N: np.ndarray, T: np.ndarray) -> np.ndarray:
    # resampled blocks can never create jumps without dwell, but guard anyway
    try:
        return mle_generator(N, T)
    except DegenerateDwellError:
        return mle_generator(np.where(T[:, None] > 0, N, 0.0), T)


def spectral_stability(L: np.ndarray, tol: float = SPECTRAL_TOL) -> List[float]:
    """
    Real parts of the eigenvalues of L in descending order.

    A real part above ``tol`` is logged as a validity violation.
    """
    real = sorted((float(v) for v in np.linalg.eigvals(np.asarray(L, dtype=float)).real), reverse=True)
    if real and real[0] > tol:
        logger.warning("Generator has an eigenvalue with real part %.3e > %.1e", real[0], tol)
    return real


def _moment_generator(traj: LabeledTrajectory, stats: TransitionStats, max_members: Optional[int]) -> np.ndarray:
    stats.l_full, stats.l_coord = intercluster_distances(traj, modes=stats.occupied, max_members=max_members)
    a_kl_q, _, a_bar = estimate_drift(traj, stats)
    _, sigma_bar = estimate_diffusion(traj, stats, a_kl_q)
    return enforce_generator_validity(assemble_generator(a_bar, sigma_bar))


def fit_generator(traj: LabeledTrajectory,
                  refine: bool = True,
                  max_members: Optional[int] = 256,
                  observed_only: bool = False,
                  keep_moment: bool = True) -> GeneratorFit:
    """
    Moment-based generator with optional maximum-likelihood refinement.

    The moment estimate is assembled from drift and diffusion statistics and
    made valid. With ``refine`` and at least one observed jump the MLE is
    returned instead; a degenerate dwell falls back to the moment estimate.

    Parameters
    ----------
    traj : LabeledTrajectory
        Labeled samples.
    refine : bool, optional
        Prefer the MLE when jumps were observed. Defaults to True.
    max_members : int, optional
        Member thinning of the Euclidean inter-cluster distances.
    observed_only : bool, optional
        Zero the moment-estimate rates of transitions without an observed
        jump. The MLE has this support already. Defaults to False.
    keep_moment : bool, optional
        Compute the moment estimate even when the MLE is returned.
        Defaults to True.
    """
    stats = transition_stats(traj)
    L = method = L_moment = None
    if refine and stats.N.sum() > 0:
        try:
            L, method = mle_generator(stats.N, stats.T), "mle"
        except DegenerateDwellError as err:
            logger.warning("MLE refinement skipped: %s", err)
    if L is None or keep_moment:
        L_moment = _moment_generator(traj, stats, max_members)
        if observed_only:
            L_moment = restrict_to_observed(L_moment, stats.N)
    if L is None:
        L, method = L_moment, "moment"
    return GeneratorFit(L=L,
                        L_moment=L_moment,
                        stats=stats,
                        method=method,
                        log_likelihood=log_likelihood(L, stats.N, stats.T),
                        calibration_error=one_step_calibration(traj, L))


def simulate_ctmc(L: np.ndarray, start: int, horizon: float, rng: np.random.Generator) -> LabeledTrajectory:
    """
    Sample a CTMC path up to ``horizon`` seconds.

    The trajectory holds the start, every jump and a closing sample at the
    horizon, so dwell times include the censored last sojourn.
    """
    L = np.asarray(L, dtype=float)
    K = L.shape[0]
    times, modes = [0.0], [int(start)]
    t, k = 0.0, int(start)
    while True:
        exit_rate = -L[k, k]
        if exit_rate <= 0:
            break
        t += rng.exponential(1.0 / exit_rate)
        if t >= horizon:
            break
        probs = np.clip(L[:, k], 0.0, None)
        probs[k] = 0.0
        k = int(rng.choice(K, p=probs / probs.sum()))
        times.append(t)
        modes.append(k)
    times.append(float(horizon))
    modes.append(modes[-1])
    return LabeledTrajectory(t=np.array(times), modes=np.array(modes), K=K)


def sample_hitting_times(L: np.ndarray,
                         start: int,
                         hazard_set: Iterable[int],
                         n_paths: int,
                         rng: np.random.Generator,
                         max_jumps: int = 100000) -> np.ndarray:
    """
    Monte Carlo first-passage times into the hazard set, vectorized over paths.
    """
    L = np.asarray(L, dtype=float)
    K = L.shape[0]
    hazard = np.zeros(K, dtype=bool)
    hazard[list(hazard_set)] = True
    exit_rate = -np.diag(L)
    jump = np.clip(L, 0.0, None)
    np.fill_diagonal(jump, 0.0)
    cdf = np.cumsum(jump, axis=0)
    cdf = cdf / np.where(cdf[-1] > 0, cdf[-1], 1.0)[None, :]
    state = np.full(n_paths, int(start))
    clock = np.zeros(n_paths)
    active = ~hazard[state]
    for _ in range(max_jumps):
        if not active.any():
            break
        idx = np.flatnonzero(active)
        rates = exit_rate[state[idx]]
        stuck = rates <= 0
        if stuck.any():
            clock[idx[stuck]] = np.inf
            active[idx[stuck]] = False
            idx, rates = idx[~stuck], rates[~stuck]
        clock[idx] += rng.exponential(1.0, size=idx.shape[0]) / rates
        u = rng.random(idx.shape[0])
        nxt = np.sum(cdf[:, state[idx]].T <= u[:, None], axis=1)
        state[idx] = np.minimum(nxt, K - 1)
        active[idx] = ~hazard[state[idx]]
    return clock
