"""
Trajectory clustering for enumerating local equilibria.

Solved trajectories from many random seeds are flattened into position
features and grouped with k-means; each cluster stands for one
qualitatively different equilibrium (e.g. one passing order).
"""

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from sklearn.cluster import KMeans

from simulator.errors import DimensionError
from simulator.trajectory import Trajectory

logger = logging.getLogger(__name__)

KMEANS_RESTARTS = 20
ELBOW_THRESHOLD = 0.15


def trajectory_features(trajectories: Sequence[Trajectory]) -> np.ndarray:
    """
    One row per trajectory: the flattened (p_x, p_y) sequence of all players.

    Raises:
        DimensionError: if trajectories differ in horizon or player count
    """
    if len(trajectories) == 0:
        raise ValueError("no trajectories to featurize")
    rows = [t.positions().reshape(-1) for t in trajectories]
    width = rows[0].shape[0]
    if any(row.shape[0] != width for row in rows):
        raise DimensionError("trajectories must share horizon and player count")
    return np.stack(rows)


@dataclass
class ClusterReport:
    """
    Result of clustering a set of solved trajectories.

    Attributes:
        k: number of clusters
        labels: cluster index of every input
        members: per cluster, indices of its inputs (a partition of all inputs)
        inertia: k-means objective of the kept restart
        representatives: per cluster, index of the member closest to the centroid
        mean_costs: (k, N) mean total cost per cluster and player (None without costs)
        trajectories: per cluster, the representative trajectory (None without trajectories)
    """

    k: int
    labels: np.ndarray
    members: List[List[int]]
    inertia: float
    representatives: List[int]
    mean_costs: Optional[np.ndarray] = None
    trajectories: Optional[List[Trajectory]] = field(default=None, repr=False)

    def sizes(self) -> List[int]:
        return [len(m) for m in self.members]

    def cost_order(self) -> List[int]:
        """Cluster indices sorted by total (summed over players) mean cost."""
        if self.mean_costs is None:
            raise ValueError("report has no costs")
        return [int(c) for c in np.argsort(self.mean_costs.sum(axis=1), kind="stable")]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "k": self.k,
            "inertia": self.inertia,
            "labels": self.labels.tolist(),
            "members": self.members,
            "representatives": self.representatives,
            "mean_costs": None if self.mean_costs is None else self.mean_costs.tolist(),
            "trajectories": None if self.trajectories is None else [t.to_dict() for t in self.trajectories],
        }

    def to_json(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2))
        return path

    def to_csv(self, path) -> Path:
        """One row per cluster: size, representative and per-player mean cost."""
        path = Path(path)
        num_players = 0 if self.mean_costs is None else self.mean_costs.shape[1]
        with path.open("w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(
                ["cluster", "size", "representative"] + [f"mean_cost_{i}" for i in range(num_players)]
            )
            for c in range(self.k):
                costs = [] if self.mean_costs is None else [f"{v:.17g}" for v in self.mean_costs[c]]
                writer.writerow([c, len(self.members[c]), self.representatives[c]] + costs)
        return path


def _fit(features: np.ndarray, k: int, rng_seed: int) -> KMeans:
    return KMeans(n_clusters=k, init="k-means++", n_init=KMEANS_RESTARTS, random_state=rng_seed).fit(features)


def kmeans_cluster(
    features: np.ndarray,
    k: int,
    rng_seed: int = 0,
    costs: Optional[np.ndarray] = None,
    trajectories: Optional[Sequence[Trajectory]] = None,
) -> ClusterReport:
    """
    k-means with k-means++ initialization, keeping the best of 20 restarts.

    Args:
        features: (S, D) feature matrix
        k: number of clusters, at most S
        rng_seed: seed of the restarts
        costs: optional (S, N) per-sample player costs
        trajectories: optional per-sample trajectories for representatives

    Raises:
        ValueError: on empty input or k out of range
    """
    features = np.asarray(features, dtype=float)
    if features.ndim != 2 or features.shape[0] == 0:
        raise ValueError("features must be a non-empty (S, D) matrix")
    num_samples = features.shape[0]
    if not 1 <= k <= num_samples:
        raise ValueError(f"k must be in [1, {num_samples}], got {k}")

    model = _fit(features, k, rng_seed)
    labels = np.asarray(model.labels_, dtype=int)
    members = [np.flatnonzero(labels == c).tolist() for c in range(k)]

    representatives = []
    for c, idx in enumerate(members):
        if not idx:
            representatives.append(-1)
            continue
        distances = np.linalg.norm(features[idx] - model.cluster_centers_[c], axis=1)
        representatives.append(idx[int(np.argmin(distances))])

    mean_costs = None
    if costs is not None:
        costs = np.asarray(costs, dtype=float)
        mean_costs = np.array([
            costs[idx].mean(axis=0) if idx else np.full(costs.shape[1], np.nan) for idx in members
        ])

    reps = None
    if trajectories is not None:
        reps = [trajectories[r] if r >= 0 else None for r in representatives]

    logger.info("k-means: %d samples, k=%d, inertia %.6g", num_samples, k, model.inertia_)
    return ClusterReport(
        k=k,
        labels=labels,
        members=members,
        inertia=float(model.inertia_),
        representatives=representatives,
        mean_costs=mean_costs,
        trajectories=reps,
    )


def select_k(features: np.ndarray, k_max: int, rng_seed: int = 0, threshold: float = ELBOW_THRESHOLD) -> int:
    """
    Elbow rule: the smallest k whose next cluster improves inertia by less
    than `threshold` (relative).
    """
    if k_max < 1:
        raise ValueError(f"k_max must be positive, got {k_max}")
    features = np.asarray(features, dtype=float)
    distinct = np.unique(features, axis=0).shape[0]
    k_max = min(k_max, distinct)

    previous = _fit(features, 1, rng_seed).inertia_
    if previous <= 0.0:
        return 1
    for k in range(1, k_max):
        current = _fit(features, k + 1, rng_seed).inertia_
        improvement = (previous - current) / previous
        logger.debug("k=%d -> %d: relative improvement %.3f", k, k + 1, improvement)
        if improvement < threshold:
            return k
        if current <= 0.0:
            return k + 1
        previous = current
    return k_max


def rotation_handedness(trajectory: Trajectory) -> float:
    """
    Mean angular momentum (per unit mass) of the players about their centroid.

    Positive for counter-clockwise motion, negative for clockwise.
    """
    p = trajectory.positions()
    r = p - p.mean(axis=1, keepdims=True)
    v = np.gradient(p, trajectory.dt, axis=0)
    return float(np.mean(r[..., 0] * v[..., 1] - r[..., 1] * v[..., 0]))
