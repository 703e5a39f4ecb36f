"""Robust (c+1)-output training with the importance-reweighted risk, plus the
forward-correction and plain-CE baselines, and closed-set test prediction.

Per-example transition matrices are routed by the coarse cluster of the
example's frozen warmup representation, so routing stays stable while the
robust model trains.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import netcore
from .errors import ConfigurationError, ShapeError
from .netcore import ClassifierParams, LossAux, TrainConfig
from .transition import TransitionBundle, _revise_impl

OBJECTIVES = ("ce", "forward", "reweighted")

_KIND_OF = {"ce": "ce", "forward": "forward_corrected", "reweighted": "reweighted"}


@dataclass
class RobustConfig:
    """Objective, transition bundle and optimization settings for the robust model."""

    objective: str = "reweighted"
    bundle: TransitionBundle | None = None
    train: TrainConfig = field(default_factory=TrainConfig)
    epsilon: float = 1e-8
    revise: bool = False
    revise_lr: float = 5e-7
    revise_clf_lr: float = 5e-7
    revise_epochs: int = 10
    weight_mode: str = "stop_grad"  # or "full": differentiate through the ratio
    warm_start: bool = False        # reuse the warmup body instead of a fresh init

    def validate(self) -> None:
        if self.objective not in OBJECTIVES:
            raise ConfigurationError(f"unknown objective {self.objective!r}")
        if not (0.0 < self.epsilon <= 1e-3):
            raise ConfigurationError("epsilon must lie in (0, 1e-3]")
        if self.objective != "ce" and self.bundle is None:
            raise ConfigurationError(f"objective {self.objective!r} needs a transition bundle")
        if self.weight_mode not in ("stop_grad", "full"):
            raise ConfigurationError(f"unknown weight_mode {self.weight_mode!r}")
        self.train.validate()


def reweighted_loss(g: np.ndarray, noisy_label: int, T, epsilon: float = 1e-8) -> float:
    """w * (-log f_y) with f = T^T g and w = g_y / max(f_y, epsilon)."""
    aux = LossAux.single(T, epsilon=epsilon)
    g = np.asarray(g, dtype=np.float64)
    losses, _ = netcore.batch_loss(g[None, :], np.array([noisy_label]), "reweighted", aux)
    return float(losses[0])


def forward_loss(g: np.ndarray, noisy_label: int, T, epsilon: float = 1e-8) -> float:
    """Cross entropy on the mapped noisy posterior: -log max((T^T g)_y, epsilon)."""
    aux = LossAux.single(T, epsilon=epsilon)
    g = np.asarray(g, dtype=np.float64)
    losses, _ = netcore.batch_loss(g[None, :], np.array([noisy_label]), "forward_corrected", aux)
    return float(losses[0])


def route_examples(bundle: TransitionBundle, warmup, X: np.ndarray) -> np.ndarray:
    """Coarse-cluster index per example, by nearest routing centroid.

    Routing uses the space the bundle was built in: frozen warmup
    representations by default, raw features when the coarse clustering ran
    on features.
    """
    if bundle.k == 1:
        return np.zeros(X.shape[0], dtype=np.intp)
    if bundle.space == "features":
        pts = np.asarray(X, dtype=np.float64)
    else:
        if warmup is None:
            raise ConfigurationError("routing with k > 1 needs the warmup model")
        pts = warmup.representations(X)
    cen = bundle.cluster_model.centroids
    d2 = (
        (pts ** 2).sum(axis=1, keepdims=True)
        - 2.0 * pts @ cen.T
        + (cen ** 2).sum(axis=1)
    )
    return np.argmin(d2, axis=1).astype(np.intp)


@dataclass
class TrainHistory:
    """Per-epoch metrics, plus the revised bundle when revision ran."""

    records: list
    revised_bundle: TransitionBundle | None = None


def train_robust(data, cfg: RobustConfig, warmup=None) -> tuple[ClassifierParams, TrainHistory]:
    """Minimize the selected objective over the noisy train split.

    The model has c+1 outputs (the extra one is the meta class).  Model
    selection keeps the checkpoint with the lowest noisy-validation
    objective.  With ``cfg.revise`` a slack-revision stage follows, jointly
    fine-tuning the matrices and the classifier.
    """
    cfg.validate()
    tr = data.indices("train")
    if len(tr) == 0:
        raise ConfigurationError("empty train split")
    va = data.indices("val")
    X, y = data.features[tr], data.noisy_labels[tr]
    Xv = data.features[va] if len(va) else None
    yv = data.noisy_labels[va] if len(va) else None

    kind = _KIND_OF[cfg.objective]
    # The importance weight is a training-time risk correction, not a proper
    # validation score: parking mass on the meta output (or the minority
    # label) sends every weight to zero and the reweighted loss spuriously
    # toward zero, so checkpoints are selected on the unweighted mapped
    # posterior likelihood instead.
    val_kind = "forward_corrected" if kind == "reweighted" else kind
    aux = val_aux = None
    if cfg.objective != "ce":
        stack = cfg.bundle.stack()
        t_idx = route_examples(cfg.bundle, warmup, X)
        aux = LossAux(stack, t_idx, cfg.epsilon, cfg.weight_mode)
        if Xv is not None:
            val_aux = LossAux(stack, route_examples(cfg.bundle, warmup, Xv), cfg.epsilon, cfg.weight_mode)

    init = None
    if cfg.warm_start:
        if warmup is None:
            raise ConfigurationError("warm_start needs the warmup model")
        init = _warm_started(warmup, data.c + 1)

    params, records = netcore.fit_classifier(
        X, y, Xv, yv, cfg.train, out_dim=data.c + 1,
        loss_kind=kind, aux=aux, val_aux=val_aux, val_kind=val_kind, init=init,
    )
    history = TrainHistory(records)

    if cfg.revise:
        if cfg.objective == "ce":
            raise ConfigurationError("revision needs a transition-matrix objective")
        bundle2, params2, rev_records = _revise_impl(
            cfg.bundle, data, warmup, params,
            epochs=cfg.revise_epochs, lr=cfg.revise_lr, clf_lr=cfg.revise_clf_lr,
            batch_size=cfg.train.batch_size, epsilon=cfg.epsilon,
            weight_mode=cfg.weight_mode, seed=cfg.train.seed,
        )
        params = params2
        history.records = records + rev_records
        history.revised_bundle = bundle2
    return params, history


def _warm_started(warmup: ClassifierParams, out_dim: int) -> ClassifierParams:
    """Extend the warmup model to c+1 outputs: body and closed-class head
    columns are copied, the meta column starts at zero.  The robust model
    then begins at the warmup's noisy-posterior fit instead of a random
    point, which keeps the importance weights informative from step one."""
    weights = [w.copy() for w in warmup.weights[:-1]]
    biases = [b.copy() for b in warmup.biases[:-1]]
    head_w = warmup.weights[-1]
    head_b = warmup.biases[-1]
    c = head_w.shape[1]
    if out_dim <= c:
        raise ConfigurationError("warm start expects more outputs than the warmup model")
    w = np.zeros((head_w.shape[0], out_dim))
    b = np.zeros(out_dim)
    w[:, :c] = head_w
    b[:c] = head_b
    weights.append(w)
    biases.append(b)
    return ClassifierParams(weights, biases, warmup.activation)


def predict(params: ClassifierParams, x: np.ndarray) -> int:
    """Predicted closed-set class: argmax of g over the first c coordinates.

    The meta output is excluded; ties break toward the lowest index.
    """
    probs, _ = netcore.forward(params, x)
    if probs.shape[0] < 2:
        raise ShapeError("model must have at least two outputs")
    return int(np.argmax(probs[:-1]))


def predict_batch(params: ClassifierParams, X: np.ndarray) -> np.ndarray:
    probs, _ = netcore.forward_batch(params, X)
    return np.argmax(probs[:, :-1], axis=1).astype(np.int64)


# ---------------------------------------------------------------------------
# artifacts: history.csv and predictions.csv
# ---------------------------------------------------------------------------


def save_history(history: TrainHistory, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "val_loss", "floor_rate", "lr"])
        for rec in history.records:
            writer.writerow(
                [
                    rec["epoch"],
                    f"{rec['train_loss']:.17g}",
                    f"{rec['val_loss']:.17g}",
                    f"{rec['floor_rate']:.17g}",
                    f"{rec['lr']:.17g}",
                ]
            )


def save_predictions(pred: np.ndarray, truth: np.ndarray, indices: np.ndarray, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "predicted", "true"])
        for i, p, t in zip(indices, pred, truth):
            writer.writerow([int(i), int(p), int(t)])
