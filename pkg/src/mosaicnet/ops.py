"""Dense 4-D tensor kernel: convolution, pixel shuffle, channel norm, gating.

All operations work on numpy arrays of shape (n, c, h, w) and come with
hand-written backward passes. Two precisions are supported: float64 for
oracles and gradient checks, float32 for training runs. Every public op
validates shapes up front and checks the result for non-finite values.
"""

from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

HIGH = np.float64
STANDARD = np.float32

LAYER_NORM_EPS = 1e-6


class ShapeError(ValueError):
    """Raised when an operand does not match the op's shape contract."""


class NotFiniteError(ArithmeticError):
    """Raised when an op produces NaN or infinity."""


def dtype_for(precision: str):
    if precision == "high":
        return HIGH
    if precision == "standard":
        return STANDARD
    raise ValueError(f"unknown precision {precision!r} (use 'standard' or 'high')")


def check_finite(x: np.ndarray, where: str) -> np.ndarray:
    if not np.isfinite(x).all():
        raise NotFiniteError(f"non-finite values produced by {where}")
    return x


def _require(cond: bool, msg: str):
    if not cond:
        raise ShapeError(msg)


# ---------------------------------------------------------------------------
# Operation counting. A counter, when installed, tallies convolution
# multiply-accumulates and the elementwise work of norms, gates and scaled
# residual adds, in separate buckets so they can be compared against the
# analytical cost model one bucket at a time.


@dataclass
class OpCount:
    macs: int = 0
    elementwise: int = 0


_counter: OpCount | None = None


@contextmanager
def count_ops():
    global _counter
    prev = _counter
    _counter = OpCount()
    try:
        yield _counter
    finally:
        _counter = prev


def _tally_macs(n: int):
    if _counter is not None:
        _counter.macs += n


def _tally_elementwise(n: int):
    if _counter is not None:
        _counter.elementwise += n


# ---------------------------------------------------------------------------
# Convolution


@dataclass(frozen=True)
class ConvSpec:
    """Static description of a 2-D convolution layer.

    c_in/c_out are total channel counts, k the square kernel size, stride and
    pad the usual scalars, groups the channel group count. Weights have shape
    (c_out, c_in // groups, k, k); bias, when present, shape (c_out,).
    """

    c_in: int
    c_out: int
    k: int
    stride: int = 1
    pad: int = 0
    groups: int = 1

    def __post_init__(self):
        _require(self.c_in >= 1 and self.c_out >= 1, "channel counts must be >= 1")
        _require(self.k >= 1 and self.stride >= 1, "k and stride must be >= 1")
        _require(self.pad >= 0, "pad must be >= 0")
        _require(
            self.c_in % self.groups == 0 and self.c_out % self.groups == 0,
            f"groups={self.groups} must divide c_in={self.c_in} and c_out={self.c_out}",
        )

    def out_hw(self, h: int, w: int) -> tuple[int, int]:
        eff_h, eff_w = h + 2 * self.pad, w + 2 * self.pad
        _require(
            eff_h >= self.k and eff_w >= self.k,
            f"spatial {h}x{w} (+pad {self.pad}) smaller than kernel {self.k}",
        )
        return (eff_h - self.k) // self.stride + 1, (eff_w - self.k) // self.stride + 1


def _check_conv_operands(x, weight, bias, spec: ConvSpec):
    _require(x.ndim == 4, f"input must be 4-D, got {x.shape}")
    _require(x.shape[1] == spec.c_in, f"input has {x.shape[1]} channels, spec wants {spec.c_in}")
    wshape = (spec.c_out, spec.c_in // spec.groups, spec.k, spec.k)
    _require(weight.shape == wshape, f"weight shape {weight.shape} != {wshape}")
    _require(x.dtype == weight.dtype, "input and weight dtypes differ")
    if bias is not None:
        _require(bias.shape == (spec.c_out,), f"bias shape {bias.shape} != ({spec.c_out},)")
        _require(bias.dtype == x.dtype, "bias dtype differs from input")


def _im2col(x: np.ndarray, spec: ConvSpec):
    """Column matrix (n, g, c_in/g * k * k, h_out * w_out) of the padded
    input, plus the padded shape and output extents. 1x1/stride-1 convs get a
    copy-free reshape; the general path gathers strided windows."""
    n, c, h, w = x.shape
    h_out, w_out = spec.out_hw(h, w)
    g = spec.groups
    cpg = c // g
    if spec.k == 1 and spec.stride == 1 and spec.pad == 0:
        col = x.reshape(n, g, cpg, h * w)
        return col, x.shape, (h_out, w_out)
    if spec.pad:
        x = np.pad(x, ((0, 0), (0, 0), (spec.pad, spec.pad), (spec.pad, spec.pad)))
    s0, s1, s2, s3 = x.strides
    windows = np.lib.stride_tricks.as_strided(
        x,
        shape=(n, c, spec.k, spec.k, h_out, w_out),
        strides=(s0, s1, s2, s3, s2 * spec.stride, s3 * spec.stride),
        writeable=False,
    )
    col = windows.reshape(n, g, cpg * spec.k * spec.k, h_out * w_out)
    return col, x.shape, (h_out, w_out)


def conv2d(x: np.ndarray, weight: np.ndarray, bias: np.ndarray | None, spec: ConvSpec) -> np.ndarray:
    """Cross-correlation with symmetric zero padding.

    out(n, o, i, j) = bias(o) + sum over c', u, v of
    weight(o, c', u, v) * x_padded(n, group_base + c', i*stride + u, j*stride + v).
    """
    _check_conv_operands(x, weight, bias, spec)
    col, _, (h_out, w_out) = _im2col(x, spec)
    n = x.shape[0]
    g = spec.groups
    w2 = weight.reshape(g, spec.c_out // g, (spec.c_in // g) * spec.k * spec.k)
    out = np.matmul(w2[None], col).reshape(n, spec.c_out, h_out, w_out)
    if bias is not None:
        out = out + bias[None, :, None, None]
    _tally_macs(out.size * (spec.c_in // g) * spec.k * spec.k)
    return check_finite(out, "conv2d")


def conv2d_backward(
    grad_out: np.ndarray, x: np.ndarray, weight: np.ndarray, spec: ConvSpec
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of conv2d w.r.t. input, weight and bias.

    grad_out has the forward output's shape. Returns (grad_x, grad_weight,
    grad_bias); grad_bias is returned unconditionally (callers without a bias
    simply ignore it).
    """
    _check_conv_operands(x, weight, None, spec)
    h_out, w_out = spec.out_hw(x.shape[2], x.shape[3])
    _require(
        grad_out.shape == (x.shape[0], spec.c_out, h_out, w_out),
        f"grad_out shape {grad_out.shape} != {(x.shape[0], spec.c_out, h_out, w_out)}",
    )
    n = x.shape[0]
    g = spec.groups
    cpg = spec.c_in // g
    col, padded_shape, _ = _im2col(x, spec)
    w2 = weight.reshape(g, spec.c_out // g, cpg * spec.k * spec.k)
    go = grad_out.reshape(n, g, spec.c_out // g, h_out * w_out)

    grad_weight = np.matmul(go, col.transpose(0, 1, 3, 2)).sum(axis=0).reshape(weight.shape)
    grad_bias = grad_out.sum(axis=(0, 2, 3))

    col_grad = np.matmul(w2.transpose(0, 2, 1)[None], go)
    if spec.k == 1 and spec.stride == 1 and spec.pad == 0:
        grad_x = col_grad.reshape(x.shape)
    else:
        # Scatter the per-window input gradient back onto the padded canvas.
        cg = col_grad.reshape(n, g, cpg, spec.k, spec.k, h_out, w_out)
        grad_pad = np.zeros(padded_shape, dtype=x.dtype).reshape(
            n, g, cpg, padded_shape[2], padded_shape[3]
        )
        st = spec.stride
        for u in range(spec.k):
            for v in range(spec.k):
                grad_pad[:, :, :, u : u + st * h_out : st, v : v + st * w_out : st] += cg[:, :, :, u, v]
        grad_pad = grad_pad.reshape(padded_shape)
        p = spec.pad
        grad_x = grad_pad[:, :, p : padded_shape[2] - p, p : padded_shape[3] - p] if p else grad_pad
    check_finite(grad_weight, "conv2d_backward")
    return np.ascontiguousarray(grad_x), grad_weight, grad_bias


# ---------------------------------------------------------------------------
# Pixel shuffle


def pixel_shuffle(x: np.ndarray, r: int) -> np.ndarray:
    """Rearrange (n, c*r^2, h, w) -> (n, c, h*r, w*r).

    out(n, c, h*r + i, w*r + j) = x(n, c*r^2 + i*r + j, h, w).
    """
    _require(x.ndim == 4, f"input must be 4-D, got {x.shape}")
    _require(r >= 1, "r must be >= 1")
    n, c, h, w = x.shape
    _require(c % (r * r) == 0, f"channels {c} not divisible by r^2 = {r * r}")
    co = c // (r * r)
    out = x.reshape(n, co, r, r, h, w).transpose(0, 1, 4, 2, 5, 3).reshape(n, co, h * r, w * r)
    return np.ascontiguousarray(out)


def pixel_unshuffle(x: np.ndarray, r: int) -> np.ndarray:
    """Inverse of pixel_shuffle: (n, c, h*r, w*r) -> (n, c*r^2, h, w)."""
    _require(x.ndim == 4, f"input must be 4-D, got {x.shape}")
    _require(r >= 1, "r must be >= 1")
    n, c, h, w = x.shape
    _require(h % r == 0 and w % r == 0, f"spatial {h}x{w} not divisible by r = {r}")
    out = (
        x.reshape(n, c, h // r, r, w // r, r)
        .transpose(0, 1, 3, 5, 2, 4)
        .reshape(n, c * r * r, h // r, w // r)
    )
    return np.ascontiguousarray(out)


# ---------------------------------------------------------------------------
# Channel layer norm: normalize each pixel's channel vector.


def layer_norm_channels(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray):
    """Per-pixel normalization across channels, then affine per channel.

    Returns (out, cache); cache feeds layer_norm_channels_backward. The
    variance is the biased (divide by c) estimate and the epsilon sits inside
    the square root.
    """
    _require(x.ndim == 4, f"input must be 4-D, got {x.shape}")
    c = x.shape[1]
    _require(gamma.shape == (c,) and beta.shape == (c,), "gamma/beta must have shape (c,)")
    mu = x.mean(axis=1, keepdims=True)
    var = x.var(axis=1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + np.asarray(LAYER_NORM_EPS, dtype=x.dtype))
    xhat = (x - mu) * inv_std
    out = gamma[None, :, None, None] * xhat + beta[None, :, None, None]
    _tally_elementwise(7 * x.size)
    return check_finite(out, "layer_norm_channels"), (xhat, inv_std, gamma)


def layer_norm_channels_backward(grad_out: np.ndarray, cache):
    """Gradients (grad_x, grad_gamma, grad_beta) for layer_norm_channels."""
    xhat, inv_std, gamma = cache
    _require(grad_out.shape == xhat.shape, "grad_out shape mismatch")
    grad_gamma = (grad_out * xhat).sum(axis=(0, 2, 3))
    grad_beta = grad_out.sum(axis=(0, 2, 3))
    gy = grad_out * gamma[None, :, None, None]
    m1 = gy.mean(axis=1, keepdims=True)
    m2 = (gy * xhat).mean(axis=1, keepdims=True)
    grad_x = (gy - m1 - xhat * m2) * inv_std
    return check_finite(grad_x, "layer_norm_channels_backward"), grad_gamma, grad_beta


# ---------------------------------------------------------------------------
# Simple gate: split channels in half, multiply the halves.


def simple_gate(x: np.ndarray) -> np.ndarray:
    """(n, 2c, h, w) -> (n, c, h, w), out = first half * second half."""
    _require(x.ndim == 4, f"input must be 4-D, got {x.shape}")
    _require(x.shape[1] % 2 == 0, f"channel count {x.shape[1]} must be even")
    c = x.shape[1] // 2
    out = x[:, :c] * x[:, c:]
    _tally_elementwise(out.size)
    return check_finite(out, "simple_gate")


def simple_gate_backward(grad_out: np.ndarray, x: np.ndarray) -> np.ndarray:
    c = x.shape[1] // 2
    _require(grad_out.shape == (x.shape[0], c, x.shape[2], x.shape[3]), "grad_out shape mismatch")
    grad_x = np.concatenate([grad_out * x[:, c:], grad_out * x[:, :c]], axis=1)
    return check_finite(grad_x, "simple_gate_backward")


def scaled_residual(x: np.ndarray, branch: np.ndarray, scale) -> np.ndarray:
    """x + scale * branch with the elementwise work tallied (one mul, one add)."""
    _require(x.shape == branch.shape, "residual shapes differ")
    out = x + scale * branch
    _tally_elementwise(2 * x.size)
    return check_finite(out, "scaled_residual")


# ---------------------------------------------------------------------------
# Finite differences


def finite_difference_grad(f, x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of scalar f at x, one element at a time.

    Intended for float64 oracle checks on small tensors; cost is 2 * x.size
    evaluations of f.
    """
    x = np.asarray(x, dtype=HIGH)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = float(f(x))
        flat[i] = orig - eps
        fm = float(f(x))
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * eps)
    return grad


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    """max |a - b| / max(1, ||a||_inf, ||b||_inf), the gradcheck acceptance metric."""
    denom = max(1.0, float(np.abs(a).max(initial=0.0)), float(np.abs(b).max(initial=0.0)))
    return float(np.abs(a - b).max(initial=0.0)) / denom
