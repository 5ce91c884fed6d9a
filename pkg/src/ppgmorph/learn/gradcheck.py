"""Finite-difference check of the hand-written backward passes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ArgumentError, GradCheckError
from ..io import Dataset
from .models import ModelConfig, loss_fn
from .nn import BatchNorm, Dropout, ReLU
from .train import init_model, targets

MAX_BATCH = 8
# Denominator floor: a gradient that is exactly zero analytically comes
# back from central differences as ~1e-10 of round-off.
NORM_FLOOR = 1e-4


@dataclass
class GradCheckResult:
    max_rel_error: float
    per_tensor: dict
    analytic: dict
    skipped: int = 0  # elements whose +-h probe crossed a ReLU/MAE kink

    def worst(self):
        return max(self.per_tensor.items(), key=lambda kv: kv[1])


def _rel_error(a, n):
    """``||a - n|| / max(||a|| + ||n||, NORM_FLOOR)``."""
    den = max(np.linalg.norm(a) + np.linalg.norm(n), NORM_FLOOR)
    return float(np.linalg.norm(a - n) / den)


def grad_check(cfg: ModelConfig, batch: Dataset, h=1e-5, tol=1e-4, raise_on_fail=True):
    """Compare backprop gradients with central differences for every tensor.

    The objective is the training-mode loss (batch-statistics BatchNorm,
    dropout with a mask drawn once and then held fixed) plus the weight
    penalty. Ages in ``batch.labels`` are mapped to ``cfg.task`` targets.

    An element whose +-h probe flips a ReLU gate or the sign of an MAE
    residual is left out of the comparison and counted in ``skipped``.

    Raises
    ------
    GradCheckError
        If any tensor's relative error exceeds ``tol``; names the tensor.
    """
    if batch.n < 1 or batch.n > MAX_BATCH:
        raise ArgumentError(f"gradient check wants 1..{MAX_BATCH} rows, got {batch.n}")
    model = init_model(cfg, batch)
    net = model.net
    for layer in net.layers:
        if isinstance(layer, BatchNorm):
            layer.update_running = False
    Xs = model._prep(batch.X)
    y = targets(batch, cfg.task)
    loss = loss_fn(cfg)

    relus = [l for l in net.layers if isinstance(l, ReLU)]

    def objective():
        out = net.forward(Xs, training=True)
        sig = [l._mask.tobytes() for l in relus]
        if not cfg.is_classifier:
            sig.append(np.sign(out.reshape(-1) - y).tobytes())
        return loss(out, y)[0] + net.penalty(), sig

    net.forward(Xs, training=True)
    for layer in net.layers:
        if isinstance(layer, Dropout):
            layer.freeze()
    base_val, base_sig = objective()
    out = net.forward(Xs, training=True)
    _, g = loss(out, y)
    net.backward(g)
    analytic = {k: v.copy() for k, v in net.grad_dict().items()}

    per_tensor = {}
    skipped = 0
    for name, layer, key in net.named_params():
        p = layer.params[key]
        num = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            old = p[i]
            p[i] = old + h
            fp, sp = objective()
            p[i] = old - h
            fm, sm = objective()
            p[i] = old
            if sp != base_sig or sm != base_sig:
                # the difference quotient straddles a kink; it says nothing
                # about the one-sided derivative backprop computes
                num[i] = analytic[name][i]
                skipped += 1
            else:
                num[i] = (fp - fm) / (2 * h)
        per_tensor[name] = _rel_error(analytic[name], num)

    res = GradCheckResult(max(per_tensor.values()), per_tensor, analytic, skipped)
    if raise_on_fail and res.max_rel_error > tol:
        name, err = res.worst()
        raise GradCheckError(f"gradient of {name} off by relative error {err:.3g}", tensor=name,
                             rel_error=err)
    return res
