"""Adam training loop over toy datasets.

Datasets are lists of (input, target) pairs of (1, c, h, w) arrays. Batches
are assembled by concatenation along the batch axis in an order drawn from
default_rng(seed), reshuffled each epoch, so runs are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import metrics, net as netmod, ops

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

LOSSES = {
    "mse": metrics.mse_loss,
    "psnr": metrics.psnr_loss,
}


class TrainingDiverged(ArithmeticError):
    """Raised when a training step produces a non-finite loss, activation or
    gradient. step is the 0-based optimizer step that failed."""

    def __init__(self, step: int, detail: str):
        super().__init__(f"training diverged at step {step}: {detail}")
        self.step = step


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def adam_step(params, grads: dict, state: AdamState, lr: float):
    """One Adam update, in place, over (name, array) parameter pairs."""
    state.t += 1
    t = state.t
    bc1 = 1.0 - ADAM_BETA1**t
    bc2 = 1.0 - ADAM_BETA2**t
    for name, p in params:
        g = grads[name]
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m = state.m[name]
        v = state.v[name]
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * (g * g)
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + ADAM_EPS)


@dataclass
class TrainResult:
    steps: int
    loss_curve: list
    final_loss: float


def train_adam(
    network: netmod.Net,
    dataset,
    steps: int,
    lr: float = 1e-3,
    batch_size: int = 8,
    seed: int = 0,
    loss: str = "mse",
) -> TrainResult:
    """Train in place for a fixed number of optimizer steps.

    loss is 'mse' or 'psnr' (negative PSNR, floored). Raises TrainingDiverged
    with the step index if the loss ever goes non-finite.
    """
    if loss not in LOSSES:
        raise ValueError(f"unknown loss {loss!r}; choose from {sorted(LOSSES)}")
    if not dataset:
        raise ValueError("dataset is empty")
    loss_fn = LOSSES[loss]
    batch_size = min(batch_size, len(dataset))
    rng = np.random.default_rng(seed)
    params = netmod.named_parameters(network)
    state = AdamState()
    curve = []
    order: list[int] = []
    dtype = params[0][1].dtype
    for step in range(steps):
        if len(order) < batch_size:
            order.extend(rng.permutation(len(dataset)).tolist())
        take, order = order[:batch_size], order[batch_size:]
        xb = np.concatenate([np.asarray(dataset[i][0], dtype=dtype) for i in take], axis=0)
        yb = np.concatenate([np.asarray(dataset[i][1], dtype=dtype) for i in take], axis=0)
        try:
            pred, cache = netmod.forward_cached(network, xb)
            value, grad = loss_fn(pred, yb)
            if not np.isfinite(value):
                raise TrainingDiverged(step, f"{loss} loss is {float(value)!r}")
            grads, _ = netmod.backward(network, cache, grad)
        except ops.NotFiniteError as exc:
            raise TrainingDiverged(step, str(exc)) from None
        adam_step(params, grads, state, lr)
        curve.append(float(value))
    return TrainResult(steps=steps, loss_curve=curve, final_loss=curve[-1] if curve else float("nan"))


def dataset_psnr(network: netmod.Net, dataset) -> float:
    """Mean per-image PSNR of the network's outputs against the targets."""
    vals = []
    dtype = netmod.named_parameters(network)[0][1].dtype
    for x, y in dataset:
        pred = netmod.forward(network, np.asarray(x, dtype=dtype))
        vals.append(metrics.psnr(pred, np.asarray(y, dtype=np.float64)))
    return float(np.mean(vals))
