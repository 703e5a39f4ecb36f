"""k-means++ clustering, meta-cluster identification, and anchor detection.

Clustering operates on whatever point matrix the caller passes; the pipeline
feeds it the warmup model's deep representations by default.  Distances are
squared Euclidean throughout.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import AnchorShortageError, ConfigurationError

_LOSS_SLACK = 1e-9


@dataclass
class ClusterModel:
    """Hard k-means clustering: centroids, assignment, objective value."""

    centroids: np.ndarray       # (k, q)
    assignment: np.ndarray      # (n,) int
    loss: float
    meta_cluster: int | None = None
    class_of_cluster: dict[int, int] | None = None

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.k)


def _sq_dists(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """(n, k) squared Euclidean distances."""
    # ||x - mu||^2 expanded; clip tiny negatives from cancellation
    d2 = (
        (points ** 2).sum(axis=1, keepdims=True)
        - 2.0 * points @ centroids.T
        + (centroids ** 2).sum(axis=1)
    )
    return np.maximum(d2, 0.0)


def _init_plus_plus(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    first = int(rng.integers(n))
    centroids = [points[first]]
    d2 = ((points - points[first]) ** 2).sum(axis=1)
    for _ in range(k - 1):
        total = d2.sum()
        if total <= 0.0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centroids.append(points[idx])
        d2 = np.minimum(d2, ((points - points[idx]) ** 2).sum(axis=1))
    return np.stack(centroids)


_POLISH_LIMIT = 512  # single-point move polish only pays off on small problems


def _move_polish(points: np.ndarray, assignment: np.ndarray, k: int) -> np.ndarray:
    """Hartigan-style refinement: greedily move single points between clusters
    while the exact objective decreases.  Lloyd alone stalls in a local
    optimum on a small fraction of instances; move-stability is strictly
    stronger."""
    n = points.shape[0]
    assignment = assignment.copy()
    sizes = np.bincount(assignment, minlength=k).astype(np.float64)
    sums = np.zeros((k, points.shape[1]))
    np.add.at(sums, assignment, points)
    idx = np.arange(n)
    for _ in range(10 * n):
        mu = sums / sizes[:, None]
        d2 = _sq_dists(points, mu)
        own = assignment
        removable = sizes[own] > 1  # never empty a cluster by moving its last point
        remove_gain = sizes[own] / np.maximum(sizes[own] - 1.0, 1.0) * d2[idx, own]
        add_cost = sizes / (sizes + 1.0) * d2
        delta = add_cost - remove_gain[:, None]
        delta[~removable] = np.inf
        delta[idx, own] = np.inf
        mover = int(np.argmin(delta))
        i, j = divmod(mover, k)
        if delta[i, j] >= -1e-12:
            break
        src = assignment[i]
        sums[src] -= points[i]
        sums[j] += points[i]
        sizes[src] -= 1
        sizes[j] += 1
        assignment[i] = j
    return assignment


def _lloyd(points: np.ndarray, k: int, rng: np.random.Generator, max_iters: int):
    n = points.shape[0]
    centroids = _init_plus_plus(points, k, rng)
    prev = None
    prev_loss = np.inf
    for _ in range(max_iters):
        d2 = _sq_dists(points, centroids)
        assignment = np.argmin(d2, axis=1)
        loss = float(d2[np.arange(n), assignment].sum())
        assert loss <= prev_loss + _LOSS_SLACK * max(1.0, prev_loss), "k-means loss increased"
        prev_loss = loss
        # repair empty clusters: seize the point currently farthest from its centroid
        sizes = np.bincount(assignment, minlength=k)
        for empty in np.flatnonzero(sizes == 0):
            cost = d2[np.arange(n), assignment].copy()
            cost[sizes[assignment] <= 1] = -np.inf  # do not empty a singleton
            victim = int(np.argmax(cost))
            sizes[assignment[victim]] -= 1
            assignment[victim] = empty
            sizes[empty] = 1
            centroids[empty] = points[victim]
        if prev is not None and np.array_equal(assignment, prev):
            break
        prev = assignment
        for j in range(k):
            centroids[j] = points[assignment == j].mean(axis=0)
    if n <= _POLISH_LIMIT and k > 1:
        polished = _move_polish(points, assignment, k)
        if not np.array_equal(polished, assignment):
            assignment = polished
            for j in range(k):
                centroids[j] = points[assignment == j].mean(axis=0)
    final = float(_sq_dists(points, centroids)[np.arange(n), assignment].sum())
    return centroids, assignment, final


def kmeans(
    points: np.ndarray,
    k: int,
    seed: int,
    max_iters: int = 100,
    restarts: int = 10,
) -> ClusterModel:
    """k-means++ initialization plus Lloyd iterations, best of ``restarts``."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise ConfigurationError("points must be a 2-d matrix")
    n = points.shape[0]
    if k < 1 or n < k:
        raise ConfigurationError(f"cannot form {k} clusters from {n} points")
    if max_iters < 1:
        raise ConfigurationError("max_iters must be >= 1")
    if restarts < 1:
        raise ConfigurationError("restarts must be >= 1")
    if seed < 0:
        raise ConfigurationError("seed must be a nonnegative integer")
    best = None
    for r in range(restarts):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=(int(seed), r)))
        centroids, assignment, loss = _lloyd(points, k, rng, max_iters)
        if best is None or loss < best[0]:
            best = (loss, centroids, assignment)
    loss, centroids, assignment = best
    return ClusterModel(centroids, assignment.astype(np.int64), loss)


def identify_meta_cluster(model: ClusterModel, c: int) -> int:
    """The smallest of the c+1 clusters is deemed the meta (open-set) cluster.

    Ties break toward the lowest cluster index; the choice is recorded on the
    model.
    """
    if model.k != c + 1:
        raise ConfigurationError(f"expected {c + 1} clusters, found {model.k}")
    meta = int(np.argmin(model.sizes()))
    model.meta_cluster = meta
    return meta


def _matching_bruteforce(counts: np.ndarray) -> tuple[int, ...]:
    """Max-total bijection classes->clusters, lexicographically smallest."""
    c = counts.shape[1]
    best_total = -1
    best = None
    for perm in itertools.permutations(range(counts.shape[0]), c):
        total = sum(counts[perm[j], j] for j in range(c))
        if total > best_total:
            best_total = total
            best = perm
    return best


def assign_classes(
    model: ClusterModel,
    noisy_labels: np.ndarray,
    c: int,
    method: str = "matching",
) -> dict[int, int]:
    """Map each closed (non-meta) cluster to a noisy class.

    ``matching`` solves the maximum-weight bipartite matching on the
    (cluster, class) count matrix, guaranteeing a bijection; ties prefer the
    lowest cluster for the lowest class.  ``greedy`` applies the
    most-examples rule per class, restricted to still-unassigned clusters.
    """
    if model.meta_cluster is None:
        raise ConfigurationError("identify the meta cluster before assigning classes")
    noisy_labels = np.asarray(noisy_labels, dtype=np.int64)
    if noisy_labels.shape[0] != model.assignment.shape[0]:
        raise ConfigurationError("noisy_labels length does not match clustering")
    closed = [r for r in range(model.k) if r != model.meta_cluster]
    if len(closed) < c:
        raise ConfigurationError(f"only {len(closed)} closed clusters for {c} classes")
    counts = np.zeros((len(closed), c), dtype=np.int64)
    for row, r in enumerate(closed):
        in_r = noisy_labels[model.assignment == r]
        counts[row] = np.bincount(in_r, minlength=c)[:c]
    if method == "matching":
        if len(closed) <= 8:
            perm = _matching_bruteforce(counts)
        else:
            from scipy.optimize import linear_sum_assignment

            rows, cols = linear_sum_assignment(-counts)
            by_class = {int(j): int(r) for r, j in zip(rows, cols)}
            perm = tuple(by_class[j] for j in range(c))
    elif method == "greedy":
        perm = []
        taken = set()
        for j in range(c):
            order = np.argsort(-counts[:, j], kind="stable")
            pick = next(int(r) for r in order if int(r) not in taken)
            taken.add(pick)
            perm.append(pick)
        perm = tuple(perm)
    else:
        raise ConfigurationError(f"unknown assignment method {method!r}")
    mapping = {closed[perm[j]]: j for j in range(c)}
    model.class_of_cluster = mapping
    return mapping


def matched_count(counts: np.ndarray, mapping_rows: tuple[int, ...]) -> int:
    return int(sum(counts[r, j] for j, r in enumerate(mapping_rows)))


# ---------------------------------------------------------------------------
# anchor detection
# ---------------------------------------------------------------------------


@dataclass
class AnchorRow:
    """Anchor examples for one transition row plus their noisy posteriors."""

    indices: np.ndarray     # dataset indices (train split)
    posteriors: np.ndarray  # (m, c) warmup outputs at those examples


@dataclass
class AnchorSet:
    """Rows keyed by closed class index (int) plus the string key 'meta'."""

    rows: dict = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)


def percentile_rank_start(n: int, percentile: float) -> int:
    """0-based start position of the percentile pick on a descending ranking.

    percentile=100 selects the top point; percentile=97 on 100 points starts
    at the 3rd from the top.
    """
    if not (0.0 < percentile <= 100.0):
        raise ConfigurationError("percentile must lie in (0, 100]")
    rank = int(np.ceil((100.0 - percentile) * n / 100.0 - 1e-12))
    return max(1, rank) - 1


def select_by_percentile(scores: np.ndarray, percentile: float, m: int) -> np.ndarray:
    """Positions (into ``scores``) of the m points at the percentile, ranked
    downward; stable ties."""
    n = scores.shape[0]
    if m < 1:
        raise ConfigurationError("m must be >= 1")
    if n < m:
        raise AnchorShortageError(f"need {m} candidates, have {n}")
    order = np.argsort(-scores, kind="stable")
    start = min(percentile_rank_start(n, percentile), n - m)
    return order[start:start + m]


def detect_closed_anchors(
    warmup,
    data,
    model: ClusterModel,
    percentile: float = 97.0,
    m: int = 5,
) -> AnchorSet:
    """Anchors for every closed class from the class-matched clusters.

    Candidates for class i are the train points of the cluster mapped to i; a
    cluster with fewer than m points falls back to the global (un-clustered)
    train pool.  Selection ranks the warmup posterior for class i downward
    and takes the m points at the percentile.
    """
    if model.class_of_cluster is None:
        raise ConfigurationError("assign classes to clusters before anchor detection")
    train_idx = data.indices("train")
    if model.assignment.shape[0] != len(train_idx):
        raise ConfigurationError("cluster assignment does not cover the train split")
    posteriors = warmup.posteriors(data.features[train_idx])
    cluster_of_class = {cls: r for r, cls in model.class_of_cluster.items()}
    anchors = AnchorSet()
    for i in range(data.c):
        pool = np.flatnonzero(model.assignment == cluster_of_class[i])
        if len(pool) < m:
            anchors.warnings.append(
                f"class {i}: cluster has {len(pool)} points, falling back to the global pool"
            )
            pool = np.arange(len(train_idx))
        if len(pool) < m:
            raise AnchorShortageError(f"class {i}: only {len(pool)} candidate anchors")
        chosen = pool[select_by_percentile(posteriors[pool, i], percentile, m)]
        anchors.rows[i] = AnchorRow(train_idx[chosen], posteriors[chosen])
    return anchors


def detect_meta_anchors(
    warmup,
    data,
    model: ClusterModel,
    m: int = 5,
    reps: np.ndarray | None = None,
) -> AnchorSet:
    """Meta-class anchors: the m meta-cluster points nearest its centroid.

    Distances use the same representation space the clustering ran in
    (recomputed from the warmup model unless ``reps`` is given).  If the meta
    cluster holds fewer than m points, m shrinks with a warning record.
    """
    if model.meta_cluster is None:
        raise ConfigurationError("identify the meta cluster before meta anchor detection")
    if m < 1:
        raise ConfigurationError("m must be >= 1")
    train_idx = data.indices("train")
    members = np.flatnonzero(model.assignment == model.meta_cluster)
    anchors = AnchorSet()
    if len(members) == 0:
        raise AnchorShortageError("meta cluster is empty")
    if len(members) < m:
        anchors.warnings.append(f"meta cluster has {len(members)} points; reducing m from {m}")
        m = len(members)
    if reps is None:
        reps = warmup.representations(data.features[train_idx])
    d2 = ((reps[members] - model.centroids[model.meta_cluster]) ** 2).sum(axis=1)
    order = np.argsort(d2, kind="stable")
    chosen = members[order[:m]]
    posteriors = warmup.posteriors(data.features[train_idx[chosen]])
    anchors.rows["meta"] = AnchorRow(train_idx[chosen], posteriors)
    return anchors


# ---------------------------------------------------------------------------
# clusters.json
# ---------------------------------------------------------------------------


def save_clusters(model: ClusterModel, path: str | Path) -> None:
    payload = {
        "centroids": model.centroids.tolist(),
        "assignment": model.assignment.tolist(),
        "loss": model.loss,
        "meta_cluster": model.meta_cluster,
        "class_of_cluster": (
            {str(k): v for k, v in model.class_of_cluster.items()}
            if model.class_of_cluster is not None
            else None
        ),
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True)
        fh.write("\n")


def load_clusters(path: str | Path) -> ClusterModel:
    with open(path) as fh:
        payload = json.load(fh)
    mapping = payload["class_of_cluster"]
    return ClusterModel(
        np.array(payload["centroids"], dtype=np.float64),
        np.array(payload["assignment"], dtype=np.int64),
        payload["loss"],
        payload["meta_cluster"],
        {int(k): v for k, v in mapping.items()} if mapping is not None else None,
    )
