"""Online adaptive clustering of environment feature vectors.

Feature vectors stream in one at a time. The nearest cluster (Euclidean
distance to the mean) wins each vector; the vector belongs to the winner only
if every element lies within n standard deviations of the winner's mean, and
otherwise (any element out of tolerance) it seeds a new cluster. Cluster
statistics are exact incremental first and second moments, so a cluster's
mean/variance always equal the batch mean and population variance of the
vectors it absorbed.

The tolerance test uses a floored per-element sigma. Binary feature streams
drive a pure cluster's variance toward zero, which would let arbitrarily
small deviations seed new clusters; the floor gives "deviates" a fixed
meaning (a unit flip seeds iff n * sigma_floor <= 1), which is what makes the
cluster count collapse once n grows past ~1/sigma_floor regardless of the
seed variance.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


@dataclass(frozen=True)
class ClusterParams:
    tolerance_n: float = 1.0
    seed_variance: float = 1.0
    variance_floor: float = 1e-6
    gate_sigma_floor: float = 0.7

    def __post_init__(self):
        if self.tolerance_n <= 0:
            raise ValueError("tolerance_n must be positive")
        if self.seed_variance <= 0:
            raise ValueError("seed_variance must be positive")
        if not (0 < self.variance_floor <= self.seed_variance):
            raise ValueError("variance_floor must be in (0, seed_variance]")
        if self.gate_sigma_floor <= 0:
            raise ValueError("gate_sigma_floor must be positive")


class Cluster:
    """Running mean/variance/count for one feature-space region."""

    __slots__ = ("mean", "variance", "count")

    def __init__(self, mean: np.ndarray, variance: np.ndarray, count: int = 1):
        self.mean = np.asarray(mean, dtype=float).copy()
        self.variance = np.asarray(variance, dtype=float).copy()
        self.count = int(count)

    def update(self, f: np.ndarray, variance_floor: float = 0.0) -> None:
        """Absorb one vector into the running moments.

        The sum of squares is recovered with the old mean and the new mean is
        subtracted, which is the unique ordering that keeps the incremental
        variance equal to the batch population variance.
        """
        n = self.count
        mu = self.mean
        mu_new = (n * mu + f) / (n + 1)
        var_new = (n * (self.variance + mu * mu) + f * f) / (n + 1) - mu_new * mu_new
        if variance_floor > 0.0:
            np.maximum(var_new, variance_floor, out=var_new)
        self.mean = mu_new
        self.variance = var_new
        self.count = n + 1


class AssignResult(NamedTuple):
    winner: int
    created: bool


class ClusterStore:
    """Ordered collection of clusters; indices are stable creation order."""

    def __init__(self, dim: int, params: ClusterParams):
        self.dim = dim
        self.params = params
        self.clusters: list[Cluster] = []
        self.assign_count = 0
        self._means = np.zeros((8, dim))  # row i mirrors clusters[i].mean

    def __len__(self) -> int:
        return len(self.clusters)

    @property
    def means_matrix(self) -> np.ndarray:
        """(n_clusters, dim) view of all cluster means, creation order."""
        return self._means[: len(self.clusters)]

    def add(self, cluster: Cluster) -> int:
        """Append a pre-built cluster (tests and snapshot restore)."""
        self.clusters.append(cluster)
        idx = len(self.clusters) - 1
        if idx == len(self._means):
            self._means = np.vstack([self._means, np.zeros_like(self._means)])
        self._means[idx] = cluster.mean
        return idx

    def _seed(self, f: np.ndarray) -> int:
        seed_var = np.full(self.dim, self.params.seed_variance)
        return self.add(Cluster(f, seed_var, count=1))

    def gate_sigma(self, cluster: Cluster) -> np.ndarray:
        """Per-element sigma used by the seeding test (floored)."""
        return np.maximum(np.sqrt(cluster.variance), self.params.gate_sigma_floor)

    def assign(self, f_e) -> AssignResult:
        """Route one feature vector: absorb it into the winning cluster when
        every element lies within n sigma of the winner's mean, seed a new
        cluster as soon as any element deviates by n sigma or more."""
        f = np.asarray(f_e, dtype=float)
        if f.shape != (self.dim,):
            raise ValueError(f"expected feature vector of shape ({self.dim},), got {f.shape}")
        self.assign_count += 1
        if not self.clusters:
            return AssignResult(self._seed(f), True)
        means = self._means[: len(self.clusters)]
        win = int(np.argmin(((means - f) ** 2).sum(axis=1)))
        winner = self.clusters[win]
        dev = np.abs(f - winner.mean)
        if bool(np.any(dev >= self.params.tolerance_n * self.gate_sigma(winner))):
            return AssignResult(self._seed(f), True)
        winner.update(f, self.params.variance_floor)
        self._means[win] = winner.mean
        return AssignResult(win, False)

    def cluster_means(self) -> list[np.ndarray]:
        return [c.mean.copy() for c in self.clusters]

    def snapshot(self) -> dict:
        return {
            "dim": self.dim,
            "params": {
                "tolerance_n": self.params.tolerance_n,
                "seed_variance": self.params.seed_variance,
                "variance_floor": self.params.variance_floor,
                "gate_sigma_floor": self.params.gate_sigma_floor,
            },
            "assign_count": self.assign_count,
            "clusters": [
                {"mean": c.mean.tolist(), "variance": c.variance.tolist(), "count": c.count}
                for c in self.clusters
            ],
        }

    @classmethod
    def from_snapshot(cls, snap: dict) -> "ClusterStore":
        store = cls(dim=snap["dim"], params=ClusterParams(**snap["params"]))
        store.assign_count = snap["assign_count"]
        for c in snap["clusters"]:
            store.add(Cluster(np.array(c["mean"]), np.array(c["variance"]), c["count"]))
        return store
