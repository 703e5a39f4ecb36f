"""The extended transition matrix: estimation, cluster-dependent variants,
slack-variable revision, and the l1 estimation-error metric.

An extended matrix has shape (c+1, c): rows 0..c-1 describe how closed-set
classes flip into observed labels, the final row describes how the meta
(open-set) class flips into them.  At an anchor point of row r the noisy
class posterior equals the row itself, so rows are estimated as the mean
warmup posterior over a handful of detected anchors.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .clusterkit import (
    AnchorRow,
    ClusterModel,
    assign_classes,
    detect_closed_anchors,
    detect_meta_anchors,
    identify_meta_cluster,
    kmeans,
    select_by_percentile,
)
from .errors import (
    AnchorShortageError,
    ConfigurationError,
    DivergenceError,
    ShapeError,
)
from . import netcore
from .netcore import Adam, LossAux

_ROW_TOL = 1e-9

ORIGINS = ("true", "estimated", "revised")


@dataclass
class ExtendedTransitionMatrix:
    """(c+1) x c row-stochastic matrix; validated on construction."""

    entries: np.ndarray
    c: int
    origin: str = "estimated"
    cluster_id: int | None = None
    fallback_rows: tuple = ()  # provenance: row keys that fell back to the global row

    def __post_init__(self):
        self.entries = np.asarray(self.entries, dtype=np.float64)
        if self.origin not in ORIGINS:
            raise ConfigurationError(f"unknown origin {self.origin!r}")
        if self.entries.shape != (self.c + 1, self.c):
            raise ShapeError(
                f"extended matrix must be {(self.c + 1, self.c)}, got {self.entries.shape}"
            )
        if np.any(self.entries < -_ROW_TOL) or np.any(self.entries > 1.0 + _ROW_TOL):
            raise ConfigurationError("entries must lie in [0, 1]")
        sums = self.entries.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > _ROW_TOL):
            raise ConfigurationError(f"rows must sum to 1 within {_ROW_TOL}")

    @property
    def top_block(self) -> np.ndarray:
        """The closed-set c x c block."""
        return self.entries[: self.c]

    @property
    def meta_row(self) -> np.ndarray:
        return self.entries[self.c]


@dataclass
class TransitionBundle:
    """One extended matrix per coarse cluster plus the routing model."""

    matrices: list[ExtendedTransitionMatrix]
    cluster_model: ClusterModel
    space: str = "representations"  # which space the routing centroids live in

    @property
    def k(self) -> int:
        return len(self.matrices)

    def stack(self) -> np.ndarray:
        return np.stack([m.entries for m in self.matrices])


@dataclass
class AnchorConfig:
    """Knobs for the anchor-based estimation pipeline."""

    m: int = 5
    percentile: float = 97.0
    seed: int = 0
    restarts: int = 10
    max_iters: int = 100
    fine_space: str = "representations"    # or "features" (debugging aid)
    coarse_space: str = "representations"  # or "features"
    assign_method: str = "matching"        # or "greedy"

    def validate(self) -> None:
        if self.m < 1:
            raise ConfigurationError("anchor count m must be >= 1")
        if not (0.0 < self.percentile <= 100.0):
            raise ConfigurationError("percentile must lie in (0, 100]")
        for space in (self.fine_space, self.coarse_space):
            if space not in ("representations", "features"):
                raise ConfigurationError(f"unknown clustering space {space!r}")


def noisy_posterior(T, g: np.ndarray) -> np.ndarray:
    """Map a clean posterior over c+1 classes to the noisy posterior: T^T g."""
    entries = T.entries if hasattr(T, "entries") else np.asarray(T, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if g.shape != (entries.shape[0],):
        raise ShapeError(f"posterior has shape {g.shape}, expected ({entries.shape[0]},)")
    return entries.T @ g


def estimate_row(anchor_row: AnchorRow) -> np.ndarray:
    """Mean anchor posterior, renormalized to sum to 1 (to within one ulp)."""
    if anchor_row is None or len(anchor_row.indices) == 0:
        raise AnchorShortageError("empty anchor list")
    row = np.asarray(anchor_row.posteriors, dtype=np.float64).mean(axis=0)
    row = np.clip(row, 0.0, None)
    total = row.sum()
    if total <= 0.0:
        raise AnchorShortageError("anchor posteriors sum to zero")
    row = row / total
    row[np.argmax(row)] += 1.0 - row.sum()  # absorb division rounding
    return row


def _points_in(warmup, data, space: str) -> np.ndarray:
    train = data.features[data.indices("train")]
    if space == "features":
        return train
    return warmup.representations(train)


def fine_clustering(warmup, data, cfg: AnchorConfig) -> tuple[ClusterModel, np.ndarray]:
    """Cluster the train split into c+1 groups, identify the meta cluster and
    match the rest to classes.  Returns (model, points used)."""
    cfg.validate()
    pts = _points_in(warmup, data, cfg.fine_space)
    model = kmeans(pts, data.c + 1, seed=cfg.seed, max_iters=cfg.max_iters, restarts=cfg.restarts)
    identify_meta_cluster(model, data.c)
    train_idx = data.indices("train")
    assign_classes(model, data.noisy_labels[train_idx], data.c, method=cfg.assign_method)
    return model, pts


def estimate_extended(
    warmup,
    data,
    fine_clusters: ClusterModel,
    anchor_cfg: AnchorConfig | None = None,
) -> ExtendedTransitionMatrix:
    """Anchor-based estimate of the global extended matrix.

    Rows 0..c-1 come from per-class anchors in the matched clusters; the meta
    row from the points nearest the meta-cluster centroid.
    """
    cfg = anchor_cfg or AnchorConfig()
    cfg.validate()
    if fine_clusters.meta_cluster is None or fine_clusters.class_of_cluster is None:
        raise ConfigurationError("fine clustering needs meta cluster and class map")
    closed = detect_closed_anchors(warmup, data, fine_clusters, cfg.percentile, cfg.m)
    reps = _points_in(warmup, data, cfg.fine_space)
    meta = detect_meta_anchors(warmup, data, fine_clusters, cfg.m, reps=reps)
    entries = np.empty((data.c + 1, data.c))
    for i in range(data.c):
        entries[i] = estimate_row(closed.rows[i])
    entries[data.c] = estimate_row(meta.rows["meta"])
    return ExtendedTransitionMatrix(entries, c=data.c, origin="estimated")


def estimate_cluster_dependent(
    warmup,
    data,
    k: int,
    anchor_cfg: AnchorConfig | None = None,
    fine: ClusterModel | None = None,
) -> TransitionBundle:
    """One extended matrix per coarse cluster.

    With k = 1 this reduces exactly to the global procedure (one coarse
    cluster restricts nothing).  For k > 1 the anchor procedure reruns
    restricted to each coarse cluster's points: candidates for a closed row
    i are the cluster's points observed with noisy label i (meta-flagged
    points excluded; flags inherited from the global c+1 clustering), and
    meta anchors are the cluster's meta-flagged points nearest their local
    centroid.  Rows with fewer than m candidates fall back to the global
    matrix row, recorded in ``fallback_rows``.

    A precomputed ``fine`` clustering (from ``fine_clustering`` with the
    same config) can be passed to avoid rerunning it.
    """
    cfg = anchor_cfg or AnchorConfig()
    cfg.validate()
    train_idx = data.indices("train")
    n_train = len(train_idx)
    if k < 1 or k > n_train:
        raise ConfigurationError(f"cannot form {k} coarse clusters from {n_train} points")

    if fine is None:
        fine, fine_pts = fine_clustering(warmup, data, cfg)
    else:
        if fine.meta_cluster is None or fine.class_of_cluster is None:
            raise ConfigurationError("precomputed fine clustering needs meta cluster and class map")
        fine_pts = _points_in(warmup, data, cfg.fine_space)
    global_matrix = estimate_extended(warmup, data, fine, cfg)

    coarse_pts = fine_pts if cfg.coarse_space == cfg.fine_space else _points_in(warmup, data, cfg.coarse_space)
    coarse = kmeans(
        coarse_pts, k, seed=cfg.seed + 1, max_iters=cfg.max_iters, restarts=cfg.restarts
    )
    if k == 1:
        only = ExtendedTransitionMatrix(
            global_matrix.entries.copy(), c=data.c, origin="estimated", cluster_id=0
        )
        return TransitionBundle([only], coarse, space=cfg.coarse_space)

    posteriors = warmup.posteriors(data.features[train_idx])
    noisy = data.noisy_labels[train_idx]
    meta_flags = fine.assignment == fine.meta_cluster

    matrices = []
    for r in range(k):
        in_r = coarse.assignment == r
        entries = np.empty((data.c + 1, data.c))
        fell_back: list = []
        for i in range(data.c):
            pool = np.flatnonzero(in_r & ~meta_flags & (noisy == i))
            if len(pool) < cfg.m:
                entries[i] = global_matrix.entries[i]
                fell_back.append(i)
                continue
            chosen = pool[select_by_percentile(posteriors[pool, i], cfg.percentile, cfg.m)]
            entries[i] = estimate_row(AnchorRow(train_idx[chosen], posteriors[chosen]))
        members = np.flatnonzero(in_r & meta_flags)
        if len(members) == 0:
            entries[data.c] = global_matrix.meta_row
            fell_back.append("meta")
        else:
            m_eff = min(cfg.m, len(members))
            centroid = fine_pts[members].mean(axis=0)
            d2 = ((fine_pts[members] - centroid) ** 2).sum(axis=1)
            order = np.argsort(d2, kind="stable")
            chosen = members[order[:m_eff]]
            entries[data.c] = estimate_row(AnchorRow(train_idx[chosen], posteriors[chosen]))
        matrices.append(
            ExtendedTransitionMatrix(
                entries, c=data.c, origin="estimated", cluster_id=r,
                fallback_rows=tuple(fell_back),
            )
        )
    return TransitionBundle(matrices, coarse, space=cfg.coarse_space)


def l1_error(estimate: ExtendedTransitionMatrix, truth: ExtendedTransitionMatrix) -> float:
    """Total entrywise absolute difference between two extended matrices."""
    a = estimate.entries if hasattr(estimate, "entries") else np.asarray(estimate)
    b = truth.entries if hasattr(truth, "entries") else np.asarray(truth)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.abs(a - b).sum())


def _project_rows(T: np.ndarray) -> np.ndarray:
    """Clamp entries to [0, 1] and renormalize every row to sum 1."""
    T = np.clip(T, 0.0, 1.0)
    sums = T.sum(axis=1, keepdims=True)
    degenerate = sums[:, 0] <= 1e-300
    if degenerate.any():
        T[degenerate] = 1.0 / T.shape[1]
        sums = T.sum(axis=1, keepdims=True)
    return T / sums


def _route_train(bundle: TransitionBundle, warmup, data) -> np.ndarray:
    """Coarse-cluster index for every train example (nearest routing centroid)."""
    from .robusttrain import route_examples

    train = data.features[data.indices("train")]
    return route_examples(bundle, warmup, train)


def _revise_impl(
    bundle: TransitionBundle,
    data,
    warmup,
    params,
    epochs: int,
    lr: float,
    clf_lr: float,
    batch_size: int,
    epsilon: float,
    weight_mode: str,
    seed: int,
):
    """Joint slack revision.

    Each epoch takes one full-batch gradient step on every matrix and then
    fine-tunes the classifier on mini-batches.  Both parts run on the
    cross entropy through T (the mapped-posterior likelihood): importance
    weights evaluated at a near-one-hot classifier silence exactly the
    flipped-label examples that carry flip-rate information, so weighted
    gradients drag the slack toward a sharpened fixpoint instead of the
    conditional-likelihood optimum.  The slack gradient is centered per
    row (the feasible directions of a row-stochastic matrix) and every
    step ends with a clamp to [0, 1] plus row renormalization.
    """
    if epochs < 0:
        raise ConfigurationError("revision epochs must be >= 0")
    if epochs == 0:
        return bundle, params, []
    train_idx = data.indices("train")
    X = data.features[train_idx]
    y = data.noisy_labels[train_idx]
    t_index = _route_train(bundle, warmup, data)
    T_stack = bundle.stack().copy()
    params = params.copy()
    kind = "forward_corrected"
    opt_p = Adam(clf_lr)
    rng = np.random.default_rng(seed)
    n = X.shape[0]
    history = []
    last_good = (T_stack.copy(), params.copy())
    for epoch in range(epochs):
        # full-batch slack step: the matrices hold only O(k c^2) numbers, so
        # mini-batch noise would dominate their signal
        aux_full = LossAux(T_stack, t_index, epsilon, weight_mode)
        G, _ = netcore.forward_batch(params, X)
        t_grads = netcore._loss_t_grads(G, y, aux_full, "forward_corrected")
        t_grads -= t_grads.mean(axis=2, keepdims=True)
        T_stack -= lr * t_grads
        flat = _project_rows(T_stack.reshape(-1, T_stack.shape[-1]))
        T_stack[:] = flat.reshape(T_stack.shape)

        order = rng.permutation(n)
        floored = 0
        for start in range(0, n, batch_size):
            sel = order[start:start + batch_size]
            aux = LossAux(T_stack, t_index[sel], epsilon, weight_mode)
            loss, grads, nfl = netcore.batch_backward(params, X[sel], y[sel], kind, aux)
            if not np.isfinite(loss):
                raise DivergenceError(
                    f"non-finite revision loss at epoch {epoch}",
                    payload=_bundle_from_stack(bundle, last_good[0], origin="revised"),
                )
            floored += nfl
            opt_p.step(params, grads)
        train_loss = netcore.evaluate_loss(
            params, X, y, kind, LossAux(T_stack, t_index, epsilon, weight_mode)
        )
        if not np.isfinite(train_loss) or not np.isfinite(T_stack).all():
            raise DivergenceError(
                f"non-finite revision state at epoch {epoch}",
                payload=_bundle_from_stack(bundle, last_good[0], origin="revised"),
            )
        last_good = (T_stack.copy(), params.copy())
        history.append(
            {"epoch": epoch, "train_loss": train_loss, "val_loss": np.nan,
             "floor_rate": floored / n, "lr": lr, "stage": "revise"}
        )
    revised = _bundle_from_stack(bundle, T_stack, origin="revised")
    return revised, params, history


def _bundle_from_stack(bundle: TransitionBundle, stack: np.ndarray, origin: str) -> TransitionBundle:
    mats = [
        ExtendedTransitionMatrix(
            stack[i], c=m.c, origin=origin, cluster_id=m.cluster_id,
            fallback_rows=m.fallback_rows,
        )
        for i, m in enumerate(bundle.matrices)
    ]
    return TransitionBundle(mats, bundle.cluster_model, bundle.space)


def revise(bundle: TransitionBundle, data, robust_cfg, params=None, warmup=None) -> TransitionBundle:
    """Learn an additive slack on every matrix by gradient descent on the
    reweighted objective, jointly fine-tuning the classifier at the same
    small learning rate.  After every step entries are clamped to [0, 1] and
    rows renormalized.

    ``params`` is the initial robust classifier trained with the bundle;
    ``warmup`` supplies routing representations when k > 1.
    """
    if params is None:
        raise ConfigurationError("revision needs the initial robust classifier params")
    revised, _, _ = _revise_impl(
        bundle,
        data,
        warmup,
        params,
        epochs=robust_cfg.revise_epochs,
        lr=robust_cfg.revise_lr,
        clf_lr=robust_cfg.revise_clf_lr,
        batch_size=robust_cfg.train.batch_size,
        epsilon=robust_cfg.epsilon,
        weight_mode=robust_cfg.weight_mode,
        seed=robust_cfg.train.seed,
    )
    return revised


# ---------------------------------------------------------------------------
# transition.json
# ---------------------------------------------------------------------------


def save_bundle(bundle: TransitionBundle, path: str | Path, fine: ClusterModel | None = None) -> None:
    payload = {
        "space": bundle.space,
        "matrices": [
            {
                "entries": m.entries.tolist(),
                "c": m.c,
                "origin": m.origin,
                "cluster_id": m.cluster_id,
                "fallback_rows": [str(r) for r in m.fallback_rows],
            }
            for m in bundle.matrices
        ],
        "coarse": {
            "centroids": bundle.cluster_model.centroids.tolist(),
            "assignment": bundle.cluster_model.assignment.tolist(),
            "loss": bundle.cluster_model.loss,
        },
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True)
        fh.write("\n")


def load_bundle(path: str | Path) -> TransitionBundle:
    with open(path) as fh:
        payload = json.load(fh)
    matrices = []
    for m in payload["matrices"]:
        rows = tuple(int(r) if r != "meta" else "meta" for r in m["fallback_rows"])
        matrices.append(
            ExtendedTransitionMatrix(
                np.array(m["entries"], dtype=np.float64),
                c=m["c"],
                origin=m["origin"],
                cluster_id=m["cluster_id"],
                fallback_rows=rows,
            )
        )
    coarse = payload["coarse"]
    model = ClusterModel(
        np.array(coarse["centroids"], dtype=np.float64),
        np.array(coarse["assignment"], dtype=np.int64),
        coarse["loss"],
    )
    return TransitionBundle(matrices, model, payload["space"])
