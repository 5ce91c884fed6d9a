"""Model configurations, architectures and loss heads."""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace

import numpy as np

from ..errors import ArgumentError
from .nn import BatchNorm, Conv1D, Dense, Dropout, ELU, ReLU, Reshape, Sequential

KINDS = ("linear", "logistic", "ffnn", "cnn")
TASKS = ("binary", "three_class", "regression")
N_CLASSES = {"binary": 2, "three_class": 3, "regression": 1}
DEFAULT_LR = {"linear": 1e-2, "logistic": 1e-2, "ffnn": 1e-2, "cnn": 2e-2}


def normalize_task(task):
    t = str(task).replace("-", "_")
    if t not in TASKS:
        raise ArgumentError(f"unknown task {task!r}; expected one of {TASKS}")
    return t


@dataclass(frozen=True)
class ModelConfig:
    kind: str = "ffnn"
    task: str = "binary"
    input_dim: int = 26
    learning_rate: float | None = None
    epochs: int = 300
    batch_size: int = 32
    l1: float = 1e-4
    l2: float = 1e-4
    dropout_rate: float = 0.2
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    bn_momentum: float = 0.99
    bn_eps: float = 1e-3
    hidden: tuple[int, int] = (40, 10)
    conv_layers: int = 4
    conv_filters: int = 2
    conv_kernel: int = 4

    def __post_init__(self):
        object.__setattr__(self, "task", normalize_task(self.task))
        object.__setattr__(self, "hidden", tuple(self.hidden))
        if self.learning_rate is None:
            object.__setattr__(self, "learning_rate", DEFAULT_LR.get(self.kind, 1e-2))
        self.validate()

    def validate(self):
        if self.kind not in KINDS:
            raise ArgumentError(f"unknown model kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "linear" and self.task != "regression":
            raise ArgumentError("linear model only supports the regression task")
        if self.kind == "logistic" and self.task == "regression":
            raise ArgumentError("logistic model only supports classification tasks")
        if self.input_dim <= 0:
            raise ArgumentError("input_dim must be positive")
        if not self.learning_rate > 0:
            raise ArgumentError("learning_rate must be positive")
        if self.epochs < 1 or self.batch_size < 1:
            raise ArgumentError("epochs and batch_size must be >= 1")
        if not 0 <= self.dropout_rate < 1:
            raise ArgumentError("dropout_rate must lie in [0, 1)")

    @property
    def n_out(self):
        return N_CLASSES[self.task]

    @property
    def is_classifier(self):
        return self.task != "regression"

    def to_dict(self):
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "hidden" in d:
            d["hidden"] = tuple(d["hidden"])
        return cls(**d)

    def with_(self, **kw):
        return replace(self, **kw)


def build_network(cfg: ModelConfig, rng) -> Sequential:
    """Layer stack for ``cfg``; classification heads output logits."""
    f, out = cfg.input_dim, cfg.n_out
    layers = []
    if cfg.kind in ("linear", "logistic"):
        layers.append(Dense(f, out, rng, name="out"))
    elif cfg.kind == "ffnn":
        h1, h2 = cfg.hidden
        layers += [
            Dense(f, h1, rng, name="dense1"), ReLU(),
            BatchNorm(h1, cfg.bn_momentum, cfg.bn_eps, name="bn1"),
            Dense(h1, h2, rng, name="dense2"),
        ]
        relu2 = ReLU()
        relu2.name = "relu2"
        layers += [relu2, BatchNorm(h2, cfg.bn_momentum, cfg.bn_eps, name="bn2"),
                   Dense(h2, out, rng, name="out")]
    else:
        layers.append(Reshape((f, 1), name="to_seq"))
        c_in = 1
        for i in range(1, cfg.conv_layers + 1):
            layers.append(Conv1D(c_in, cfg.conv_filters, cfg.conv_kernel, rng,
                                 l1=cfg.l1, l2=cfg.l2, name=f"conv{i}"))
            act = ELU()
            act.name = f"elu{i}"
            layers.append(act)
            if i >= 2 and cfg.dropout_rate > 0:
                layers.append(Dropout(cfg.dropout_rate, rng, name=f"drop{i}"))
            c_in = cfg.conv_filters
        layers.append(Reshape((f * cfg.conv_filters,), name="flatten"))
        layers.append(Dense(f * cfg.conv_filters, out, rng, name="out"))
    if cfg.task == "regression" and cfg.kind != "linear":
        head = ReLU()
        head.name = "out_relu"
        layers.append(head)
    return Sequential(layers)


# -- losses -------------------------------------------------------------------


def softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(logits, y):
    """Mean categorical cross-entropy and its gradient w.r.t. the logits."""
    y = np.asarray(y, dtype=int)
    n = logits.shape[0]
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    loss = -logp[np.arange(n), y].mean()
    g = np.exp(logp)
    g[np.arange(n), y] -= 1.0
    return float(loss), g / n


def mean_absolute_error(pred, y):
    """Mean |pred - y| with subgradient 0 where they are equal."""
    d = pred.reshape(-1) - np.asarray(y, dtype=float)
    loss = float(np.abs(d).mean())
    return loss, (np.sign(d) / d.size).reshape(pred.shape)


def loss_fn(cfg: ModelConfig):
    return cross_entropy if cfg.is_classifier else mean_absolute_error
