"""Minimal layers with hand-written backward passes (float64, numpy).

Each layer keeps what its backward pass needs from the last forward call.
Parameters and their gradients live in ``params`` / ``grads`` dicts keyed
by short names; :class:`Sequential` prefixes them with the layer name.
"""

from __future__ import annotations

import numpy as np


class Layer:
    name = "layer"

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.state: dict[str, np.ndarray] = {}  # non-trainable (BatchNorm running stats)

    def forward(self, x, training):
        raise NotImplementedError

    def backward(self, dy):
        raise NotImplementedError

    def penalty(self):
        return 0.0


def glorot_uniform(rng, fan_in, fan_out, shape):
    lim = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-lim, lim, size=shape)


def lecun_uniform(rng, fan_in, shape):
    lim = np.sqrt(3.0 / fan_in)
    return rng.uniform(-lim, lim, size=shape)


class Dense(Layer):
    def __init__(self, n_in, n_out, rng, name="dense"):
        super().__init__()
        self.name = name
        self.params["W"] = glorot_uniform(rng, n_in, n_out, (n_in, n_out))
        self.params["b"] = np.zeros(n_out)

    def forward(self, x, training):
        self._x = x
        return x @ self.params["W"] + self.params["b"]

    def backward(self, dy):
        self.grads["W"] = self._x.T @ dy
        self.grads["b"] = dy.sum(axis=0)
        return dy @ self.params["W"].T


class ReLU(Layer):
    name = "relu"

    def forward(self, x, training):
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, dy):
        return dy * self._mask


class ELU(Layer):
    name = "elu"

    def forward(self, x, training):
        self._x = x
        return np.where(x > 0, x, np.expm1(np.minimum(x, 0.0)))

    def backward(self, dy):
        x = self._x
        return dy * np.where(x > 0, 1.0, np.exp(np.minimum(x, 0.0)))


class BatchNorm(Layer):
    """Batch normalisation over the leading axis.

    Training mode normalises with batch statistics and updates running
    averages ``r <- momentum * r + (1 - momentum) * batch``; eval mode uses
    the running averages only.
    """

    def __init__(self, n, momentum=0.99, eps=1e-3, name="bn"):
        super().__init__()
        self.name = name
        self.momentum = momentum
        self.eps = eps
        self.params["gamma"] = np.ones(n)
        self.params["beta"] = np.zeros(n)
        self.state["mean"] = np.zeros(n)
        self.state["var"] = np.ones(n)
        self.update_running = True

    def forward(self, x, training):
        g, b = self.params["gamma"], self.params["beta"]
        if not training:
            return (x - self.state["mean"]) / np.sqrt(self.state["var"] + self.eps) * g + b
        mu = x.mean(axis=0)
        var = x.var(axis=0)
        inv = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mu) * inv
        self._cache = (xhat, inv)
        if self.update_running:
            m = self.momentum
            self.state["mean"] = m * self.state["mean"] + (1 - m) * mu
            self.state["var"] = m * self.state["var"] + (1 - m) * var
        return xhat * g + b

    def backward(self, dy):
        xhat, inv = self._cache
        n = dy.shape[0]
        self.grads["gamma"] = (dy * xhat).sum(axis=0)
        self.grads["beta"] = dy.sum(axis=0)
        dxhat = dy * self.params["gamma"]
        return inv / n * (n * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0))


class Dropout(Layer):
    """Inverted dropout; identity in eval mode.

    ``freeze()`` keeps the current mask for later training-mode calls,
    which finite-difference checks need.
    """

    def __init__(self, rate, rng, name="dropout"):
        super().__init__()
        self.name = name
        self.rate = rate
        self.rng = rng
        self._frozen = None

    def freeze(self):
        self._frozen = self._mask

    def forward(self, x, training):
        if not training or self.rate == 0:
            self._mask = None
            return x
        if self._frozen is not None and self._frozen.shape == x.shape:
            self._mask = self._frozen
        else:
            keep = 1.0 - self.rate
            self._mask = (self.rng.random(x.shape) < keep) / keep
        return x * self._mask

    def backward(self, dy):
        return dy if self._mask is None else dy * self._mask


class Conv1D(Layer):
    """'same'-padded 1-D convolution, input ``(N, T, C_in)``.

    Even kernels pad one more sample on the right than on the left.
    Optional L1/L2 penalty on the kernel only.
    """

    def __init__(self, c_in, c_out, kernel, rng, l1=0.0, l2=0.0, name="conv"):
        super().__init__()
        self.name = name
        self.k = kernel
        self.l1, self.l2 = l1, l2
        self.params["W"] = lecun_uniform(rng, kernel * c_in, (kernel, c_in, c_out))
        self.params["b"] = np.zeros(c_out)
        total = kernel - 1
        self.pad = (total // 2, total - total // 2)

    def forward(self, x, training):
        N, T, C = x.shape
        xp = np.pad(x, ((0, 0), self.pad, (0, 0)))
        # patches[n, t, j, c] = xp[n, t + j, c]
        idx = np.arange(T)[:, None] + np.arange(self.k)[None, :]
        patches = xp[:, idx, :]
        self._shape = (N, T, C)
        self._patches = patches.reshape(N * T, self.k * C)
        W = self.params["W"].reshape(self.k * C, -1)
        return (self._patches @ W).reshape(N, T, -1) + self.params["b"]

    def backward(self, dy):
        N, T, C = self._shape
        k = self.k
        dy2 = dy.reshape(N * T, -1)
        W = self.params["W"]
        gW = (self._patches.T @ dy2).reshape(W.shape)
        if self.l1:
            gW = gW + self.l1 * np.sign(W)
        if self.l2:
            gW = gW + 2.0 * self.l2 * W
        self.grads["W"] = gW
        self.grads["b"] = dy2.sum(axis=0)
        dpatch = (dy2 @ W.reshape(k * C, -1).T).reshape(N, T, k, C)
        dxp = np.zeros((N, T + k - 1, C))
        for j in range(k):
            dxp[:, j : j + T, :] += dpatch[:, :, j, :]
        lo = self.pad[0]
        return dxp[:, lo : lo + T, :]

    def penalty(self):
        W = self.params["W"]
        return self.l1 * np.abs(W).sum() + self.l2 * (W * W).sum()


class Reshape(Layer):
    def __init__(self, shape, name="reshape"):
        super().__init__()
        self.name = name
        self.shape = shape

    def forward(self, x, training):
        self._in = x.shape
        return x.reshape((x.shape[0],) + self.shape)

    def backward(self, dy):
        return dy.reshape(self._in)


class Sequential:
    def __init__(self, layers):
        names = [l.name for l in layers]
        if len(set(names)) != len(names):
            raise ValueError(f"layer names must be unique: {names}")
        self.layers = layers

    def forward(self, x, training=False):
        for layer in self.layers:
            x = layer.forward(x, training)
        return x

    def backward(self, dy):
        for layer in reversed(self.layers):
            dy = layer.backward(dy)
        return dy

    def penalty(self):
        return sum(l.penalty() for l in self.layers)

    def named_params(self):
        for l in self.layers:
            for k, v in l.params.items():
                yield f"{l.name}.{k}", l, k

    def param_dict(self):
        return {n: l.params[k] for n, l, k in self.named_params()}

    def grad_dict(self):
        return {n: l.grads[k] for n, l, k in self.named_params()}

    def state_dict(self):
        """Trainable parameters and running statistics, in a fixed order."""
        out = {}
        for l in self.layers:
            for k, v in l.params.items():
                out[f"{l.name}.{k}"] = v
            for k, v in l.state.items():
                out[f"{l.name}.{k}"] = v
        return out

    def load_state_dict(self, d):
        for l in self.layers:
            for store in (l.params, l.state):
                for k in store:
                    key = f"{l.name}.{k}"
                    if key not in d:
                        raise KeyError(f"missing tensor {key}")
                    arr = np.asarray(d[key], dtype=float)
                    if arr.shape != store[k].shape:
                        raise ValueError(f"{key}: shape {arr.shape}, expected {store[k].shape}")
                    store[k] = arr.copy()
