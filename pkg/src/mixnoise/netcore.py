"""Feed-forward softmax classifiers with hand-written backpropagation.

All three per-example losses used by the pipeline live here so that the loss
values, their analytic gradients, and the finite-difference checker share one
definition:

* ``ce``                 cross-entropy on the model's own softmax output
* ``forward_corrected``  cross-entropy on the mapped posterior f = T^T g
* ``reweighted``         importance-weighted variant w * (-log f_y) with
                         w = g_y / f_y; the weight is a stop-gradient constant
                         by default (``weight_mode="stop_grad"``) because the
                         ratio is a reweighting scheme, not part of the model.
                         ``weight_mode="full"`` differentiates through it.

Probabilities are floored at PROB_FLOOR inside logs; mapped posteriors are
floored at the configured epsilon, and floor activations are counted so the
"no truncation needed" claim stays auditable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DivergenceError, ShapeError

PROB_FLOOR = 1e-12

_ACTIVATIONS = ("relu", "sigmoid")


@dataclass
class ClassifierParams:
    """Weights and biases of a feed-forward net with a softmax head.

    Hidden layers apply the activation; the final layer is affine and feeds
    the softmax.  The post-activation output of the last hidden layer is the
    deep representation of an input.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activation: str = "relu"

    def __post_init__(self):
        if self.activation not in _ACTIVATIONS:
            raise ConfigurationError(f"unknown activation {self.activation!r}")
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ConfigurationError("weights and biases must be nonempty and parallel")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ShapeError(f"layer {i}: bias shape {b.shape} incompatible with weight {w.shape}")
            if i and self.weights[i - 1].shape[1] != w.shape[0]:
                raise ShapeError(f"layer {i}: input dim {w.shape[0]} does not match previous output")
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise ConfigurationError(f"layer {i}: non-finite parameters")

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[1]

    @property
    def layers(self) -> list[tuple[np.ndarray, np.ndarray]]:
        return list(zip(self.weights, self.biases))

    def copy(self) -> "ClassifierParams":
        return ClassifierParams(
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.activation,
        )

    def posteriors(self, X: np.ndarray) -> np.ndarray:
        """Softmax outputs for a batch, shape (n, out_dim)."""
        return forward_batch(self, X)[0]

    def representations(self, X: np.ndarray) -> np.ndarray:
        """Deep representations for a batch (input itself for 1-layer nets)."""
        return forward_batch(self, X)[1]


def init_params(layer_dims: list[int], activation: str = "relu", seed: int = 0) -> ClassifierParams:
    """He-style Gaussian init for relu, Xavier for sigmoid; zero biases."""
    if len(layer_dims) < 2:
        raise ConfigurationError("need at least input and output dimensions")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
        if activation == "relu":
            scale = np.sqrt(2.0 / fan_in)
        else:
            scale = np.sqrt(1.0 / fan_in)
        weights.append(rng.standard_normal((fan_in, fan_out)) * scale)
        biases.append(np.zeros(fan_out))
    return ClassifierParams(weights, biases, activation)


def _activate(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return np.maximum(z, 0.0)
    # numerically stable logistic
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _activation_grad(z: np.ndarray, a: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return (z > 0.0).astype(z.dtype)
    return a * (1.0 - a)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max subtraction."""
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _forward_trace(params: ClassifierParams, X: np.ndarray):
    """Forward pass keeping pre-activations and activations for backprop."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != params.in_dim:
        raise ShapeError(f"input has shape {X.shape}, expected (*, {params.in_dim})")
    acts = [X]
    pres = []
    h = X
    for w, b in params.layers[:-1]:
        z = h @ w + b
        h = _activate(z, params.activation)
        pres.append(z)
        acts.append(h)
    w, b = params.layers[-1]
    logits = h @ w + b
    probs = softmax(logits)
    return probs, acts, pres


def forward_batch(params: ClassifierParams, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Batch forward pass -> (softmax probabilities, deep representations)."""
    probs, acts, _ = _forward_trace(params, X)
    return probs, acts[-1]


def forward(params: ClassifierParams, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Single-example forward pass -> (probability simplex, representation)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError("forward expects a single feature vector")
    probs, hidden = forward_batch(params, x[None, :])
    return probs[0], hidden[0]


def ce_loss(probs: np.ndarray, label: int) -> float:
    """Cross entropy -log p[label] with the probability floored at 1e-12."""
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 1:
        raise ShapeError("ce_loss expects a probability vector")
    if not (0 <= int(label) < probs.shape[0]):
        raise ShapeError(f"label {label} out of range for {probs.shape[0]} classes")
    return float(-np.log(max(probs[int(label)], PROB_FLOOR)))


# ---------------------------------------------------------------------------
# loss core: values and dL/dg for every loss kind, batched
# ---------------------------------------------------------------------------

LOSS_KINDS = ("ce", "forward_corrected", "reweighted")


@dataclass
class LossAux:
    """Extra inputs for the transition-matrix losses.

    ``T_stack`` holds one or more (c+1, c) matrices; ``t_index`` routes each
    example to its matrix (all zeros for a single global matrix).
    """

    T_stack: np.ndarray | None = None
    t_index: np.ndarray | None = None
    epsilon: float = 1e-8
    weight_mode: str = "stop_grad"  # or "full"

    @classmethod
    def single(cls, T, epsilon: float = 1e-8, weight_mode: str = "stop_grad") -> "LossAux":
        entries = T.entries if hasattr(T, "entries") else np.asarray(T, dtype=np.float64)
        return cls(T_stack=entries[None, :, :], epsilon=epsilon, weight_mode=weight_mode)

    def matrices_for(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        if self.T_stack is None:
            raise ConfigurationError("this loss kind needs a transition matrix in aux")
        idx = self.t_index
        if idx is None:
            idx = np.zeros(n, dtype=np.intp)
        return self.T_stack, np.asarray(idx, dtype=np.intp)


def _mapped_posterior(G: np.ndarray, labels: np.ndarray, aux: LossAux):
    """Per-example f_y = (T^T g)_y plus the floored value and floor mask."""
    T_stack, t_index = aux.matrices_for(G.shape[0])
    cols = T_stack[t_index, :, labels]          # (n, c+1): column y of each example's T
    f_y = np.einsum("ij,ij->i", cols, G)
    f_floored = np.maximum(f_y, aux.epsilon)
    return cols, f_y, f_floored, f_y < aux.epsilon


def batch_loss(G: np.ndarray, labels: np.ndarray, kind: str, aux: LossAux | None):
    """Per-example losses for softmax outputs G -> (losses, floor_mask)."""
    labels = np.asarray(labels, dtype=np.intp)
    n = G.shape[0]
    if kind == "ce":
        p = np.maximum(G[np.arange(n), labels], PROB_FLOOR)
        return -np.log(p), np.zeros(n, dtype=bool)
    if aux is None:
        raise ConfigurationError(f"loss kind {kind!r} needs aux with a transition matrix")
    _, _, f_floored, floored = _mapped_posterior(G, labels, aux)
    fwd = -np.log(f_floored)
    if kind == "forward_corrected":
        return fwd, floored
    if kind == "reweighted":
        w = G[np.arange(n), labels] / f_floored
        return w * fwd, floored
    raise ConfigurationError(f"unknown loss kind {kind!r}")


def _dlogits(G: np.ndarray, labels: np.ndarray, kind: str, aux: LossAux | None) -> tuple[np.ndarray, np.ndarray]:
    """d(per-example loss)/d(logits) -> (gradient matrix, floor mask)."""
    n, k = G.shape
    idx = np.arange(n)
    if kind == "ce":
        dz = G.copy()
        dz[idx, labels] -= 1.0
        # dead gradient where the floor is active (loss constant there)
        p = G[idx, labels]
        dz[p < PROB_FLOOR] = 0.0
        return dz, np.zeros(n, dtype=bool)
    if aux is None:
        raise ConfigurationError(f"loss kind {kind!r} needs aux with a transition matrix")
    cols, f_y, f_floored, floored = _mapped_posterior(G, labels, aux)
    g_y = G[idx, labels]
    dg = np.zeros_like(G)
    live = ~floored
    if kind == "forward_corrected":
        dg[live] = -cols[live] / f_floored[live, None]
    elif kind == "reweighted":
        if aux.weight_mode == "stop_grad":
            w = g_y / f_floored
            dg[live] = -(w[live, None]) * cols[live] / f_floored[live, None]
        elif aux.weight_mode == "full":
            logf = np.log(f_floored)
            # d/dg_k of -(g_y/f) log f  =  -d_ky log f / f  -  g_y T_ky (1 - log f)/f^2
            dg[live] = -(g_y[live] * (1.0 - logf[live]) / f_floored[live] ** 2)[:, None] * cols[live]
            dg[idx[live], labels[live]] += -logf[live] / f_floored[live]
            # below the floor only the numerator is live: L = -(g_y/eps) log eps
            dg[idx[floored], labels[floored]] = -np.log(aux.epsilon) / aux.epsilon
        else:
            raise ConfigurationError(f"unknown weight_mode {aux.weight_mode!r}")
    else:
        raise ConfigurationError(f"unknown loss kind {kind!r}")
    # chain through softmax: dz_j = g_j * (dg_j - sum_k g_k dg_k)
    inner = (G * dg).sum(axis=1, keepdims=True)
    return G * (dg - inner), floored


def _loss_t_grads(G: np.ndarray, labels: np.ndarray, aux: LossAux, kind: str) -> np.ndarray:
    """Mean gradient of the batch loss w.r.t. each routed transition matrix.

    Only column y of each example's matrix receives gradient.  Used by the
    slack-variable revision; respects the stop-gradient weight convention.
    """
    T_stack, t_index = aux.matrices_for(G.shape[0])
    n = G.shape[0]
    idx = np.arange(n)
    _, f_y, f_floored, floored = _mapped_posterior(G, labels, aux)
    g_y = G[idx, labels]
    grads = np.zeros_like(T_stack)
    live = ~floored
    if kind == "forward_corrected":
        coef = np.where(live, -1.0 / f_floored, 0.0)
    elif kind == "reweighted":
        if aux.weight_mode == "full":
            coef = np.where(live, -g_y * (1.0 - np.log(f_floored)) / f_floored ** 2, 0.0)
        else:
            coef = np.where(live, -(g_y / f_floored) / f_floored, 0.0)
    else:
        raise ConfigurationError(f"loss kind {kind!r} has no transition gradient")
    contrib = coef[:, None] * G / n  # (n, c+1)
    np.add.at(grads, (t_index, slice(None), labels), contrib)
    return grads


@dataclass
class Gradients:
    """Gradient structure matching ClassifierParams."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]


def batch_backward(
    params: ClassifierParams,
    X: np.ndarray,
    labels: np.ndarray,
    kind: str,
    aux: LossAux | None = None,
):
    """Mean loss and mean parameter gradients over a batch.

    Returns (mean_loss, Gradients, floor_count).
    """
    if kind not in LOSS_KINDS:
        raise ConfigurationError(f"unknown loss kind {kind!r}")
    labels = np.asarray(labels, dtype=np.intp)
    G, acts, pres = _forward_trace(params, X)
    if kind == "ce" or aux is None or aux.T_stack is None:
        n_labels = G.shape[1]
    else:
        n_labels = aux.T_stack.shape[2]  # transition losses index noisy classes
    if labels.min(initial=0) < 0 or labels.max(initial=-1) >= n_labels:
        raise ShapeError("label out of range")
    losses, floored = batch_loss(G, labels, kind, aux)
    n = X.shape[0]
    delta, _ = _dlogits(G, labels, kind, aux)
    delta = delta / n
    gw = [None] * len(params.weights)
    gb = [None] * len(params.biases)
    for i in range(len(params.weights) - 1, -1, -1):
        gw[i] = acts[i].T @ delta
        gb[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ params.weights[i].T) * _activation_grad(
                pres[i - 1], acts[i], params.activation
            )
    return float(losses.mean()), Gradients(gw, gb), int(floored.sum())


def backward(
    params: ClassifierParams,
    x: np.ndarray,
    label: int,
    loss_kind: str,
    aux: LossAux | None = None,
) -> Gradients:
    """Analytic gradients of the selected per-example loss."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError("backward expects a single feature vector")
    _, grads, _ = batch_backward(params, x[None, :], np.array([label]), loss_kind, aux)
    return grads


def loss_value(
    params: ClassifierParams,
    x: np.ndarray,
    label: int,
    loss_kind: str,
    aux: LossAux | None = None,
) -> float:
    """The per-example loss that ``backward`` differentiates."""
    probs, _ = forward(params, x)
    losses, _ = batch_loss(probs[None, :], np.array([label]), loss_kind, aux)
    return float(losses[0])


def grad_check(
    params: ClassifierParams,
    x: np.ndarray,
    label: int,
    loss_kind: str,
    aux: LossAux | None = None,
    h: float = 1e-5,
) -> float:
    """Max relative error of analytic vs central finite-difference gradients.

    For the default stop-gradient reweighted loss the finite differences are
    taken with the importance weight frozen at the base parameters, matching
    what the analytic gradient differentiates.
    """
    analytic = backward(params, x, label, loss_kind, aux)
    if loss_kind == "reweighted" and (aux is None or aux.weight_mode == "stop_grad"):
        if aux is None:
            raise ConfigurationError("reweighted loss needs aux with a transition matrix")
        g0, _ = forward(params, x)
        T_stack, t_index = aux.matrices_for(1)
        f0 = T_stack[t_index[0]].T @ g0
        w0 = g0[label] / max(f0[label], aux.epsilon)

        def value(p):
            return w0 * loss_value(p, x, label, "forward_corrected", aux)
    else:

        def value(p):
            return loss_value(p, x, label, loss_kind, aux)

    worst = 0.0
    work = params.copy()
    for store, ana in ((work.weights, analytic.weights), (work.biases, analytic.biases)):
        for arr, g in zip(store, ana):
            flat = arr.ravel()
            gflat = g.ravel()
            for j in range(flat.size):
                orig = flat[j]
                flat[j] = orig + h
                lp = value(work)
                flat[j] = orig - h
                lm = value(work)
                flat[j] = orig
                numeric = (lp - lm) / (2.0 * h)
                err = abs(gflat[j] - numeric) / max(abs(gflat[j]) + abs(numeric), 1e-8)
                worst = max(worst, err)
    return worst


# ---------------------------------------------------------------------------
# optimizers
# ---------------------------------------------------------------------------


class SGD:
    """SGD with classical momentum and coupled L2 weight decay."""

    def __init__(self, lr: float, momentum: float = 0.0, weight_decay: float = 0.0):
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self._vel = None

    def step(self, params: ClassifierParams, grads: Gradients) -> None:
        tensors = params.weights + params.biases
        gradients = grads.weights + grads.biases
        if self._vel is None:
            self._vel = [np.zeros_like(t) for t in tensors]
        for t, g, v in zip(tensors, gradients, self._vel):
            if self.weight_decay and t.ndim == 2:  # decay weights, not biases
                g = g + self.weight_decay * t
            v *= self.momentum
            v -= self.lr * g
            t += v


class Adam:
    """Adam over an arbitrary list of arrays (used for slack revision too)."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self._m = None
        self._v = None
        self._t = 0

    def step_arrays(self, tensors: list[np.ndarray], gradients: list[np.ndarray]) -> None:
        if self._m is None:
            self._m = [np.zeros_like(t) for t in tensors]
            self._v = [np.zeros_like(t) for t in tensors]
        self._t += 1
        b1t = 1.0 - self.beta1 ** self._t
        b2t = 1.0 - self.beta2 ** self._t
        for t, g, m, v in zip(tensors, gradients, self._m, self._v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            t -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)

    def step(self, params: ClassifierParams, grads: Gradients) -> None:
        self.step_arrays(params.weights + params.biases, grads.weights + grads.biases)


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


@dataclass
class TrainConfig:
    """Optimization settings for one classifier.

    ``lr_schedule`` is a list of (epoch, divisor) pairs; None picks the
    default divisor-10 drops at 40% and 80% of the epoch budget.
    """

    learning_rate: float = 1e-2
    lr_schedule: tuple[tuple[int, float], ...] | None = None
    epochs: int = 60
    batch_size: int = 128
    weight_decay: float = 5e-4
    momentum: float = 0.9
    seed: int = 0
    hidden: tuple[int, ...] = (32, 32)
    activation: str = "relu"
    optimizer: str = "sgd"

    def validate(self) -> None:
        if self.epochs < 1:
            raise ConfigurationError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ConfigurationError("learning_rate must be positive")
        if not (0.0 <= self.momentum < 1.0):
            raise ConfigurationError("momentum must lie in [0, 1)")
        if self.weight_decay < 0:
            raise ConfigurationError("weight_decay must be nonnegative")
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigurationError(f"unknown optimizer {self.optimizer!r}")

    def resolved_schedule(self) -> tuple[tuple[int, float], ...]:
        if self.lr_schedule is not None:
            return tuple((int(e), float(d)) for e, d in self.lr_schedule)
        return ((int(0.4 * self.epochs), 10.0), (int(0.8 * self.epochs), 10.0))


def fit_classifier(
    X: np.ndarray,
    y: np.ndarray,
    X_val: np.ndarray | None,
    y_val: np.ndarray | None,
    cfg: TrainConfig,
    out_dim: int,
    loss_kind: str = "ce",
    aux: LossAux | None = None,
    val_aux: LossAux | None = None,
    init: ClassifierParams | None = None,
    val_kind: str | None = None,
):
    """Mini-batch training loop shared by the warmup and robust models.

    Model selection keeps the epoch checkpoint with the lowest validation
    objective (training objective when no validation split exists); the
    validation loss kind may differ from the training one via ``val_kind``.
    Returns (best_params, history) where history is a list of per-epoch
    dicts with train_loss, val_loss, floor_rate and lr.
    """
    cfg.validate()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.intp)
    if X.shape[0] == 0:
        raise ConfigurationError("empty train split")
    rng = np.random.default_rng(cfg.seed)
    if init is None:
        dims = [X.shape[1], *cfg.hidden, out_dim]
        params = init_params(dims, cfg.activation, seed=int(rng.integers(2 ** 31)))
    else:
        params = init.copy()
    if cfg.optimizer == "adam":
        opt = Adam(cfg.learning_rate)
    else:
        opt = SGD(cfg.learning_rate, cfg.momentum, cfg.weight_decay)
    schedule = dict(cfg.resolved_schedule())
    n = X.shape[0]
    has_val = X_val is not None and len(X_val) > 0
    if val_aux is None:
        val_aux = aux
    if val_kind is None:
        val_kind = loss_kind
    history = []
    best = (np.inf, params.copy())
    lr = cfg.learning_rate
    for epoch in range(cfg.epochs):
        if epoch in schedule:
            lr /= schedule[epoch]
            opt.lr = lr
        order = rng.permutation(n)
        floored = 0
        for start in range(0, n, cfg.batch_size):
            sel = order[start:start + cfg.batch_size]
            batch_aux = _slice_aux(aux, sel)
            loss, grads, nfl = batch_backward(params, X[sel], y[sel], loss_kind, batch_aux)
            if not np.isfinite(loss):
                raise DivergenceError(f"non-finite loss at epoch {epoch}", payload=best[1])
            floored += nfl
            opt.step(params, grads)
        train_loss = evaluate_loss(params, X, y, loss_kind, aux)
        if has_val:
            val_loss = evaluate_loss(params, X_val, y_val, val_kind, val_aux)
        else:
            val_loss = evaluate_loss(params, X, y, val_kind, aux) if val_kind != loss_kind else train_loss
        if not np.isfinite(train_loss):
            raise DivergenceError(f"non-finite loss at epoch {epoch}", payload=best[1])
        history.append(
            {
                "epoch": epoch,
                "train_loss": train_loss,
                "val_loss": val_loss,
                "floor_rate": floored / n,
                "lr": lr,
            }
        )
        if val_loss < best[0]:
            best = (val_loss, params.copy())
    return best[1], history


def _slice_aux(aux: LossAux | None, sel: np.ndarray) -> LossAux | None:
    if aux is None:
        return None
    idx = aux.t_index[sel] if aux.t_index is not None else None
    return LossAux(aux.T_stack, idx, aux.epsilon, aux.weight_mode)


def evaluate_loss(
    params: ClassifierParams,
    X: np.ndarray,
    y: np.ndarray,
    kind: str = "ce",
    aux: LossAux | None = None,
) -> float:
    G, _ = forward_batch(params, X)
    losses, _ = batch_loss(G, np.asarray(y, dtype=np.intp), kind, aux)
    return float(losses.mean())


def train_warmup(data, cfg: TrainConfig) -> ClassifierParams:
    """Train the c-output warmup model on the noisy labels (plain CE).

    Model selection uses the noisy validation loss.
    """
    tr = data.indices("train")
    if len(tr) == 0:
        raise ConfigurationError("empty train split")
    va = data.indices("val")
    params, _ = fit_classifier(
        data.features[tr],
        data.noisy_labels[tr],
        data.features[va] if len(va) else None,
        data.noisy_labels[va] if len(va) else None,
        cfg,
        out_dim=data.c,
    )
    return params


# ---------------------------------------------------------------------------
# checkpoint serialization (model.json)
# ---------------------------------------------------------------------------


def save_params(params: ClassifierParams, path: str | Path) -> None:
    payload = {
        "activation": params.activation,
        "out_dim": params.out_dim,
        "layers": [
            {"w": w.tolist(), "b": b.tolist()} for w, b in params.layers
        ],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True)
        fh.write("\n")


def load_params(path: str | Path) -> ClassifierParams:
    with open(path) as fh:
        payload = json.load(fh)
    weights = [np.array(layer["w"], dtype=np.float64) for layer in payload["layers"]]
    biases = [np.array(layer["b"], dtype=np.float64) for layer in payload["layers"]]
    return ClassifierParams(weights, biases, payload["activation"])
