"""Mini-batch Adam training and evaluation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ArgumentError, SchemaError, TrainingDivergedError
from ..io import Dataset
from .labels import make_labels
from .metrics import Metrics, classification_metrics, regression_metrics
from .models import ModelConfig, build_network, loss_fn, softmax
from .nn import Sequential


class Adam:
    def __init__(self, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, net: Sequential):
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for name, layer, key in net.named_params():
            g = layer.grads[key]
            if name not in self.m:
                self.m[name] = np.zeros_like(g)
                self.v[name] = np.zeros_like(g)
            m, v = self.m[name], self.v[name]
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            layer.params[key] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass
class TrainedModel:
    cfg: ModelConfig
    net: Sequential
    feature_names: list[str]
    x_mean: np.ndarray
    x_std: np.ndarray
    history: dict = field(default_factory=dict)

    def _prep(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.cfg.input_dim:
            raise SchemaError(f"expected (n, {self.cfg.input_dim}) features, got {X.shape}")
        return (X - self.x_mean) / self.x_std

    def output(self, X):
        return self.net.forward(self._prep(X), training=False)

    def predict_proba(self, X):
        if not self.cfg.is_classifier:
            raise ArgumentError("regression model has no class probabilities")
        return softmax(self.output(X))

    def predict(self, X):
        """Class indices (classification) or ages in years (regression)."""
        out = self.output(X)
        return np.argmax(out, axis=1) if self.cfg.is_classifier else out.reshape(-1)


def targets(ds: Dataset, task):
    return make_labels(ds.labels, task)


def _check_features(cfg, ds):
    if ds.X.shape[1] != cfg.input_dim:
        raise SchemaError(f"model expects {cfg.input_dim} features, dataset has {ds.X.shape[1]}")


def init_model(cfg: ModelConfig, train: Dataset) -> TrainedModel:
    """Fresh network with input scaling fitted on ``train``."""
    _check_features(cfg, train)
    rng = np.random.default_rng([cfg.seed, 0])
    net = build_network(cfg, rng)
    mean = train.X.mean(axis=0)
    std = train.X.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    if not cfg.is_classifier:
        # start the regression output at the mean age so the ReLU head is live
        out = next(l for l in net.layers if l.name == "out")
        out.params["b"][:] = float(np.mean(train.labels))
    return TrainedModel(cfg, net, list(train.feature_names), mean, std)


def batch_loss(model: TrainedModel, Xs, y, training=True):
    """Objective (data loss + weight penalty) on standardised inputs; runs backward."""
    out = model.net.forward(Xs, training=training)
    loss, g = loss_fn(model.cfg)(out, y)
    model.net.backward(g)
    return loss + model.net.penalty()


def _fold_record(model, ds, y, hist, prefix, with_loss):
    out = model.output(ds.X)
    if with_loss:
        loss, _ = loss_fn(model.cfg)(out, y)
        hist[f"{prefix}_loss"].append(loss + model.net.penalty())
    if model.cfg.is_classifier:
        m = classification_metrics(y, softmax(out), model.cfg.task)
        hist[f"{prefix}_accuracy"].append(m.accuracy)
        hist[f"{prefix}_auc"].append(m.auc if m.auc is not None else float("nan"))
    else:
        hist[f"{prefix}_mae"].append(float(np.mean(np.abs(out.reshape(-1) - y))))


def train(cfg: ModelConfig, train: Dataset, val: Dataset | None = None) -> TrainedModel:
    """Fit ``cfg`` on ``train`` (age labels are mapped to ``cfg.task`` targets).

    Per-epoch curves go to ``model.history``: ``train_loss`` is the
    sample-weighted mean mini-batch objective during the epoch; the
    ``train_*`` metrics, ``val_loss`` and the ``val_*`` metrics are computed
    in eval mode at the end of the epoch.

    Raises
    ------
    TrainingDivergedError
        When a mini-batch loss becomes NaN or infinite.
    """
    model = init_model(cfg, train)
    y = targets(train, cfg.task)
    yv = targets(val, cfg.task) if val is not None and val.n else None
    Xs = model._prep(train.X)
    opt = Adam(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps)
    rng = np.random.default_rng([cfg.seed, 1])
    hist = {"epoch": [], "train_loss": [], "val_loss": []}
    for prefix in ("train", "val"):
        keys = ("accuracy", "auc") if cfg.is_classifier else ("mae",)
        hist.update({f"{prefix}_{k}": [] for k in keys})

    n = train.n
    for epoch in range(1, cfg.epochs + 1):
        perm = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            loss = batch_loss(model, Xs[idx], y[idx])
            if not math.isfinite(loss):
                raise TrainingDivergedError(f"loss became {loss} in epoch {epoch}", epoch=epoch)
            opt.step(model.net)
            total += loss * idx.size
        hist["epoch"].append(epoch)
        hist["train_loss"].append(total / n)
        _fold_record(model, train, y, hist, "train", with_loss=False)
        if yv is not None:
            _fold_record(model, val, yv, hist, "val", with_loss=True)
    if yv is None:
        hist = {k: v for k, v in hist.items() if not k.startswith("val_")}
    model.history = hist
    return model


def evaluate(model: TrainedModel, test: Dataset) -> Metrics:
    if test is None or test.n == 0:
        raise ArgumentError("cannot evaluate on an empty test set")
    _check_features(model.cfg, test)
    y = targets(test, model.cfg.task)
    if model.cfg.is_classifier:
        return classification_metrics(y, model.predict_proba(test.X), model.cfg.task)
    return regression_metrics(y, model.predict(test.X))
