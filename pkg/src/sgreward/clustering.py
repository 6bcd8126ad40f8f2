"""Density clustering of triplet embeddings into semantic prototypes.

Distance is cosine distance (1 - cosine) on unit vectors. The labeling is
fully declarative so results do not depend on scan order: clusters are the
connected components of the core-point graph (cores adjacent when within
eps), border points attach to their lowest-indexed core neighbor, and the
remaining points are noise. Cluster ids count up in order of each cluster's
lowest member index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .embeddings import reward_sim
from .errors import EmptyInputError

NOISE = -1


@dataclass(frozen=True)
class DbscanParams:
    eps: float = 0.15
    min_pts: int = 2

    def __post_init__(self):
        if not (0 < self.eps < 2):
            raise ValueError("eps must lie in (0, 2) for cosine distance")
        if self.min_pts < 1:
            raise ValueError("min_pts must be >= 1")


@dataclass(frozen=True)
class Cluster:
    members: tuple[int, ...]
    centroid: np.ndarray


@dataclass(frozen=True)
class ClusterSet:
    clusters: tuple[Cluster, ...]
    assignment: dict[int, int]  # input index -> cluster id

    def __len__(self) -> int:
        return len(self.clusters)


def dbscan(points, params: DbscanParams) -> list[int]:
    """Label each point with a cluster id, or NOISE (-1).

    Core points have at least ``min_pts`` neighbors within ``eps`` (inclusive,
    counting themselves). Neighborhoods use cosine distance on unit vectors.
    """
    vectors = np.asarray(points, dtype=np.float64)
    if vectors.ndim != 2 or vectors.shape[0] == 0:
        raise EmptyInputError("dbscan needs at least one point")
    n = vectors.shape[0]

    distance = 1.0 - np.clip(vectors @ vectors.T, -1.0, 1.0)
    adjacency = distance <= params.eps
    neighbor_counts = adjacency.sum(axis=1)
    is_core = neighbor_counts >= params.min_pts

    labels = [NOISE] * n
    next_id = 0
    for seed in range(n):
        if not is_core[seed] or labels[seed] != NOISE:
            continue
        # flood the core graph from this seed
        component = [seed]
        labels[seed] = next_id
        queue = [seed]
        while queue:
            node = queue.pop()
            for other in np.flatnonzero(adjacency[node]):
                if is_core[other] and labels[other] == NOISE:
                    labels[other] = next_id
                    component.append(int(other))
                    queue.append(int(other))
        next_id += 1

    # border points join the cluster of their lowest-indexed core neighbor
    for idx in range(n):
        if is_core[idx] or labels[idx] != NOISE:
            continue
        for other in np.flatnonzero(adjacency[idx]):
            if is_core[other]:
                labels[idx] = labels[other]
                break

    return _renumber(labels)


def _renumber(labels: list[int]) -> list[int]:
    """Relabel clusters by order of first appearance; NOISE stays put."""
    mapping: dict[int, int] = {}
    out = []
    for label in labels:
        if label == NOISE:
            out.append(NOISE)
            continue
        if label not in mapping:
            mapping[label] = len(mapping)
        out.append(mapping[label])
    return out


def build_prototypes(embeddings, params: DbscanParams) -> ClusterSet:
    """Cluster ground-truth triplet embeddings; noise becomes singletons.

    Every input index lands in exactly one cluster, so rare semantics still
    count toward coverage. Centroids are member means re-normalized to unit
    length.
    """
    vectors = [np.asarray(v, dtype=np.float64) for v in embeddings]
    if not vectors:
        raise EmptyInputError("build_prototypes needs at least one embedding")
    labels = dbscan(vectors, params)

    members: dict[int, list[int]] = {}
    next_id = max((l for l in labels if l != NOISE), default=-1) + 1
    assignment: dict[int, int] = {}
    for idx, label in enumerate(labels):
        if label == NOISE:
            label = next_id
            next_id += 1
        members.setdefault(label, []).append(idx)
        assignment[idx] = label

    # reorder by lowest member index so singleton promotion keeps ids stable
    ordered = sorted(members.items(), key=lambda kv: kv[1][0])
    remap = {old: new for new, (old, _) in enumerate(ordered)}
    clusters = []
    for old, idxs in ordered:
        mean = np.mean([vectors[i] for i in idxs], axis=0)
        norm = float(np.linalg.norm(mean))
        if norm < 1e-12:
            raise ValueError(f"cluster {remap[old]} has a degenerate (near-zero) centroid")
        centroid = mean / norm
        centroid.setflags(write=False)
        clusters.append(Cluster(members=tuple(idxs), centroid=centroid))
    return ClusterSet(
        clusters=tuple(clusters),
        assignment={idx: remap[label] for idx, label in assignment.items()},
    )


def assign_prediction(pred: np.ndarray, clusters: ClusterSet, tau: float) -> int | None:
    """Best-matching cluster id if its centroid similarity reaches tau, else None.

    Ties break toward the lowest cluster id, and each prediction belongs to at
    most one cluster so density counts stay well defined.
    """
    if not clusters.clusters:
        raise EmptyInputError("assign_prediction needs a non-empty cluster set")
    best_id, best_sim = None, -1.0
    for cluster_id, cluster in enumerate(clusters.clusters):
        sim = reward_sim(pred, cluster.centroid)
        if sim > best_sim:
            best_id, best_sim = cluster_id, sim
    return best_id if best_sim >= tau else None
