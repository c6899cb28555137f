"""
Behavioral regimes from co-state features.

Features are ``phi = (lambda, ||lambda||, z)``, optionally followed by the
state estimate. They are standardized with statistics frozen at the end of
warm-up and clustered by sequential k-means with a count-based learning rate.

The following are available:

    * :class `FeatureVector`
    * :class `ModeModel`
    * :class `OnlineModeClusterer`
    * :class `CoStateCentroids`
    * :func `extract_features`
    * :func `cluster_online`
    * :func `assign_mode`
    * :func `label_regimes`
    * :func `costate_centroids`
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Union
import logging

import numpy as np

from costate_fusion.errors import WarmupIncompleteError

logger = logging.getLogger(__name__)

NOMINAL = "Nominal"
CORRECTIVE = "Corrective"
HAZARD = "Hazard"


@dataclass
class FeatureVector:
    """
    Clustering feature of one processed sample.
    """
    lam: np.ndarray
    lambda_norm: float
    z: float
    t: float
    state: Optional[np.ndarray] = None

    def as_array(self) -> np.ndarray:
        """Flat feature array (lambda, ||lambda||, z[, state])."""
        parts = [self.lam, [self.lambda_norm, self.z]]
        if self.state is not None:
            parts.append(self.state)
        return np.concatenate(parts).astype(float)


def extract_features(lam: np.ndarray, z: float, t: float, state: Optional[np.ndarray] = None) -> FeatureVector:
    """
    Build the feature vector of a co-state sample.

    Parameters
    ----------
    lam : numpy.ndarray
        Co-state.
    z : float
        Whitened innovation.
    t : float
        Sample time in seconds.
    state : numpy.ndarray, optional
        State estimate appended to the feature when given.
    """
    lam = np.asarray(lam, dtype=float).copy()
    return FeatureVector(lam=lam,
                         lambda_norm=float(np.linalg.norm(lam)),
                         z=float(z),
                         t=float(t),
                         state=None if state is None else np.asarray(state, dtype=float).copy())


@dataclass
class ModeModel:
    """
    Centroids in standardized feature space together with the frozen
    standardization, per-mode tallies and semantic labels.
    """
    centroids: np.ndarray
    counts: np.ndarray
    mean: np.ndarray
    scale: np.ndarray
    lam_dim: int = 3
    labels: List[str] = field(default_factory=list)

    @property
    def K(self) -> int: #pylint: disable=invalid-name
        """Number of modes."""
        return self.centroids.shape[0]

    def standardize(self, x: np.ndarray) -> np.ndarray:
        """Map a raw feature into the clustering space."""
        return (np.asarray(x, dtype=float) - self.mean) / self.scale

    def raw_centroids(self) -> np.ndarray:
        """Centroids mapped back to raw feature units."""
        return self.centroids * self.scale + self.mean

    def hazard_modes(self) -> List[int]:
        """Indices of Hazard-labeled modes."""
        return [k for k, lab in enumerate(self.labels) if lab == HAZARD]

    def copy(self) -> ModeModel:
        """Deep copy."""
        return ModeModel(centroids=self.centroids.copy(),
                         counts=self.counts.copy(),
                         mean=self.mean.copy(),
                         scale=self.scale.copy(),
                         lam_dim=self.lam_dim,
                         labels=list(self.labels))

    def to_dict(self) -> dict:
        """JSON-ready representation."""
        return {"K": self.K,
                "centroids": self.raw_centroids().tolist(),
                "standardized_centroids": self.centroids.tolist(),
                "counts": self.counts.astype(int).tolist(),
                "mean": self.mean.tolist(),
                "scale": self.scale.tolist(),
                "lam_dim": self.lam_dim,
                "labels": list(self.labels)}

    @classmethod
    def from_dict(cls, data: dict) -> ModeModel:
        """Inverse of :meth:`to_dict`."""
        return cls(centroids=np.asarray(data["standardized_centroids"], dtype=float),
                   counts=np.asarray(data["counts"], dtype=float),
                   mean=np.asarray(data["mean"], dtype=float),
                   scale=np.asarray(data["scale"], dtype=float),
                   lam_dim=int(data["lam_dim"]),
                   labels=list(data["labels"]))


def _seed_indices(points: np.ndarray, K: int, separation: float) -> List[int]:
    seeds: List[int] = []
    for i, pnt in enumerate(points):
        if all(np.linalg.norm(pnt - points[j]) >= separation and np.any(pnt != points[j]) for j in seeds):
            seeds.append(i)
            if len(seeds) == K:
                break
    return seeds


class OnlineModeClusterer:
    """
    Streaming sequential k-means.

    Samples are buffered until ``warmup`` of them are available. The
    standardization is then frozen from the buffer, the first ``K`` samples
    that are at least ``min_separation`` standard deviations apart seed the
    centroids and the remaining buffered samples are replayed through the
    sequential update. If no such seeds exist the oldest sample is dropped
    and initialization is retried with the next one.

    Parameters
    ----------
    K : int
        Number of modes.
    warmup : int, optional
        Warm-up length N_w. Defaults to 200.
    min_separation : float, optional
        Seed separation in standardized units. Defaults to 0.5.
    lam_dim : int, optional
        Number of co-state components at the head of each feature. Defaults to 3.
    standardize : bool, optional
        Freeze a per-feature standardization at warm-up end. Defaults to True.
    """
    def __init__(self,
                 K: int,
                 warmup: int = 200,
                 min_separation: float = 0.5,
                 lam_dim: int = 3,
                 standardize: bool = True):
        if K < 1:
            raise ValueError(f"K must be at least 1, got {K}")
        self.K = int(K)
        self.warmup = max(int(warmup), self.K)
        self.min_separation = float(min_separation)
        self.lam_dim = int(lam_dim)
        self.standardize = standardize
        self.model: Optional[ModeModel] = None
        self._buffer = deque(maxlen=self.warmup)

    @property
    def ready(self) -> bool:
        """True once the centroids are initialized."""
        return self.model is not None

    def copy(self) -> OnlineModeClusterer:
        """Independent copy for checkpointing."""
        other = OnlineModeClusterer(self.K, self.warmup, self.min_separation, self.lam_dim, self.standardize)
        other.model = None if self.model is None else self.model.copy()
        other._buffer.extend(self._buffer)
        return other

    def try_initialize(self) -> bool:
        """
        Attempt to freeze the standardization and seed the centroids.

        Returns
        -------
        bool
            Whether the model is ready.
        """
        if self.model is not None:
            return True
        if len(self._buffer) < self.warmup:
            return False
        data = np.vstack(self._buffer)
        mean = data.mean(axis=0)
        scale = data.std(axis=0)
        scale = np.where(scale > 0, scale, 1.0)
        if not self.standardize:
            mean = np.zeros_like(mean)
            scale = np.ones_like(scale)
        std_data = (data - mean) / scale
        separation = self.min_separation
        if not self.standardize:
            separation = self.min_separation * float(np.sqrt(np.mean(data.var(axis=0))))
        seeds = _seed_indices(std_data, self.K, separation)
        if len(seeds) < self.K:
            return False
        model = ModeModel(centroids=std_data[seeds].copy(),
                          counts=np.ones(self.K),
                          mean=mean,
                          scale=scale,
                          lam_dim=self.lam_dim)
        seed_set = set(seeds)
        for i, pnt in enumerate(std_data):
            if i not in seed_set:
                _sequential_update(model, pnt)
        self.model = model
        self._buffer.clear()
        logger.info("Mode clustering initialized with %d modes after %d samples", self.K, self.warmup)
        return True

    def partial_fit(self, x: np.ndarray) -> Optional[int]:
        """
        Feed one raw feature.

        Returns
        -------
        int or None
            Assigned mode once warm, None while warming up.
        """
        x = np.asarray(x, dtype=float)
        if self.model is None:
            self._buffer.append(x.copy())
            self.try_initialize()
            return None
        return _sequential_update(self.model, self.model.standardize(x))


def _sequential_update(model: ModeModel, pnt: np.ndarray) -> int:
    dist = np.sum((model.centroids - pnt) ** 2, axis=1)
    k = int(np.argmin(dist))
    model.counts[k] += 1
    model.centroids[k] += (pnt - model.centroids[k]) / model.counts[k]
    return k


def _feature_matrix(stream: Iterable[Union[FeatureVector, np.ndarray]]) -> np.ndarray:
    rows = [s.as_array() if isinstance(s, FeatureVector) else np.asarray(s, dtype=float) for s in stream]
    if not rows:
        return np.zeros((0, 0))
    return np.vstack(rows)


def cluster_online(stream: Sequence[Union[FeatureVector, np.ndarray]],
                   K: int,
                   warmup: int = 200,
                   min_separation: float = 0.5,
                   lam_dim: int = 3) -> ModeModel:
    """
    Cluster a feature stream into K modes.

    The warm-up is shortened to the stream length when the stream is
    shorter than ``warmup``.

    Raises
    ------
    WarmupIncompleteError
        If fewer than K separated samples exist in the warm-up.
    """
    data = _feature_matrix(stream)
    if data.shape[0] < K:
        raise WarmupIncompleteError(f"{data.shape[0]} samples cannot seed {K} modes")
    clusterer = OnlineModeClusterer(K, warmup=min(warmup, data.shape[0]),
                                    min_separation=min_separation, lam_dim=lam_dim)
    for row in data:
        clusterer.partial_fit(row)
    if not clusterer.ready:
        raise WarmupIncompleteError(f"Fewer than {K} separated samples during warm-up")
    return clusterer.model


def assign_mode(phi: Union[FeatureVector, np.ndarray], model: ModeModel) -> int:
    """
    Index of the nearest centroid in standardized space, lowest index on ties.
    """
    x = phi.as_array() if isinstance(phi, FeatureVector) else np.asarray(phi, dtype=float)
    dist = np.sum((model.centroids - model.standardize(x)) ** 2, axis=1)
    return int(np.argmin(dist))


def label_regimes(model: ModeModel) -> ModeModel:
    """
    Attach Nominal/Corrective/Hazard labels.

    Hazard is the mode with the largest centroid ||lambda|| (ties toward the
    larger z), Nominal the smallest, every other mode Corrective. Only the
    labels change.
    """
    if model.K < 2:
        raise ValueError("Labeling requires at least two modes")
    raw = model.raw_centroids()
    norms = raw[:, model.lam_dim]
    zs = raw[:, model.lam_dim + 1]
    order = sorted(range(model.K), key=lambda k: (norms[k], zs[k], -k))
    labels = [CORRECTIVE] * model.K
    labels[order[-1]] = HAZARD
    labels[order[0]] = NOMINAL
    labeled = model.copy()
    labeled.labels = labels
    return labeled


@dataclass
class CoStateCentroids:
    """Centroids of reachable co-state values."""
    lambda_bar: np.ndarray

    @property
    def K(self) -> int: #pylint: disable=invalid-name
        """Number of centroids."""
        return self.lambda_bar.shape[0]


def costate_centroids(samples: Sequence[np.ndarray], K: int, min_separation: float = 0.5) -> CoStateCentroids:
    """
    Cluster raw co-state values with the sequential k-means routine.

    Fewer than K centroids are returned when the samples do not contain K
    separated values; identical samples collapse to one centroid.

    Raises
    ------
    WarmupIncompleteError
        If fewer than K samples are given.
    """
    data = _feature_matrix(samples)
    if data.shape[0] < K or data.shape[0] == 0:
        raise WarmupIncompleteError(f"{data.shape[0]} co-state samples cannot seed {K} centroids")
    k_eff = K
    while k_eff > 1:
        clusterer = OnlineModeClusterer(k_eff, warmup=data.shape[0], min_separation=min_separation,
                                        lam_dim=data.shape[1], standardize=False)
        for row in data:
            clusterer.partial_fit(row)
        if clusterer.ready:
            return CoStateCentroids(lambda_bar=clusterer.model.raw_centroids())
        k_eff -= 1
    logger.info("Co-state samples collapse to a single centroid")
    return CoStateCentroids(lambda_bar=data.mean(axis=0, keepdims=True))
