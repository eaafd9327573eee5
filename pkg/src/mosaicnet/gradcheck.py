"""Randomized finite-difference validation of every hand-written backward.

Each case builds small random float64 operands, contracts the op's output
against a fixed random cotangent to get a scalar, and compares the analytic
gradient with central differences. The acceptance metric is
max|a - b| / max(1, |a|_inf, |b|_inf).
"""

from __future__ import annotations

import numpy as np

from . import ops

DEFAULT_TOL = 1e-5
OPS = ("conv2d", "layer_norm", "simple_gate", "pixel_shuffle", "scaled_residual")


def _rand(rng, *shape):
    return rng.uniform(-1.0, 1.0, size=shape)


def _conv_case(rng: np.random.Generator):
    g = int(rng.choice([1, 1, 2, 3]))
    cpg_in = int(rng.integers(1, 4))
    cpg_out = int(rng.integers(1, 4))
    c_in, c_out = g * cpg_in, g * cpg_out
    k = int(rng.integers(1, 4))
    stride = int(rng.integers(1, 3))
    pad = int(rng.integers(0, 2))
    n = int(rng.integers(1, 3))
    h = int(rng.integers(max(k - 2 * pad, 1), max(k - 2 * pad, 1) + 4))
    w = int(rng.integers(max(k - 2 * pad, 1), max(k - 2 * pad, 1) + 4))
    spec = ops.ConvSpec(c_in=c_in, c_out=c_out, k=k, stride=stride, pad=pad, groups=g)
    x = _rand(rng, n, c_in, h, w)
    weight = _rand(rng, c_out, cpg_in, k, k)
    bias = _rand(rng, c_out)
    h_out, w_out = spec.out_hw(h, w)
    cot = _rand(rng, n, c_out, h_out, w_out)

    gx, gw, gb = ops.conv2d_backward(cot, x, weight, spec)
    errs = [
        ops.relative_error(gx, ops.finite_difference_grad(lambda v: float((ops.conv2d(v, weight, bias, spec) * cot).sum()), x)),
        ops.relative_error(gw, ops.finite_difference_grad(lambda v: float((ops.conv2d(x, v, bias, spec) * cot).sum()), weight)),
        ops.relative_error(gb, ops.finite_difference_grad(lambda v: float((ops.conv2d(x, weight, v, spec) * cot).sum()), bias)),
    ]
    return max(errs)


def _layer_norm_case(rng: np.random.Generator):
    n = int(rng.integers(1, 3))
    c = int(rng.integers(2, 7))
    h = int(rng.integers(1, 5))
    w = int(rng.integers(1, 5))
    x = _rand(rng, n, c, h, w)
    gamma = _rand(rng, c)
    beta = _rand(rng, c)
    cot = _rand(rng, n, c, h, w)
    _, cache = ops.layer_norm_channels(x, gamma, beta)
    gx, gg, gb = ops.layer_norm_channels_backward(cot, cache)

    def loss(xx, gg_, bb):
        out, _ = ops.layer_norm_channels(xx, gg_, bb)
        return float((out * cot).sum())

    errs = [
        ops.relative_error(gx, ops.finite_difference_grad(lambda v: loss(v, gamma, beta), x)),
        ops.relative_error(gg, ops.finite_difference_grad(lambda v: loss(x, v, beta), gamma)),
        ops.relative_error(gb, ops.finite_difference_grad(lambda v: loss(x, gamma, v), beta)),
    ]
    return max(errs)


def _simple_gate_case(rng: np.random.Generator):
    n = int(rng.integers(1, 3))
    c = 2 * int(rng.integers(1, 5))
    h = int(rng.integers(1, 6))
    w = int(rng.integers(1, 6))
    x = _rand(rng, n, c, h, w)
    cot = _rand(rng, n, c // 2, h, w)
    gx = ops.simple_gate_backward(cot, x)
    fd = ops.finite_difference_grad(lambda v: float((ops.simple_gate(v) * cot).sum()), x)
    return ops.relative_error(gx, fd)


def _pixel_shuffle_case(rng: np.random.Generator):
    r = int(rng.integers(1, 4))
    n = int(rng.integers(1, 3))
    c = int(rng.integers(1, 4)) * r * r
    h = int(rng.integers(1, 5))
    w = int(rng.integers(1, 5))
    x = _rand(rng, n, c, h, w)
    cot = _rand(rng, n, c // (r * r), h * r, w * r)
    gx = ops.pixel_unshuffle(cot, r)  # the shuffle is a permutation
    fd = ops.finite_difference_grad(lambda v: float((ops.pixel_shuffle(v, r) * cot).sum()), x)
    return ops.relative_error(gx, fd)


def _scaled_residual_case(rng: np.random.Generator):
    n = int(rng.integers(1, 3))
    c = int(rng.integers(1, 5))
    h = int(rng.integers(1, 6))
    w = int(rng.integers(1, 6))
    x = _rand(rng, n, c, h, w)
    branch = _rand(rng, n, c, h, w)
    scale = float(rng.uniform(-1, 1))
    cot = _rand(rng, n, c, h, w)
    gx = cot
    gbranch = cot * scale
    gscale = float((cot * branch).sum())
    errs = [
        ops.relative_error(gx, ops.finite_difference_grad(lambda v: float((ops.scaled_residual(v, branch, scale) * cot).sum()), x)),
        ops.relative_error(gbranch, ops.finite_difference_grad(lambda v: float((ops.scaled_residual(x, v, scale) * cot).sum()), branch)),
        ops.relative_error(
            np.asarray(gscale),
            ops.finite_difference_grad(
                lambda v: float((ops.scaled_residual(x, branch, float(v.reshape(-1)[0])) * cot).sum()),
                np.full((1, 1, 1, 1), scale),
            ),
        ),
    ]
    return max(errs)


_CASES = {
    "conv2d": _conv_case,
    "layer_norm": _layer_norm_case,
    "simple_gate": _simple_gate_case,
    "pixel_shuffle": _pixel_shuffle_case,
    "scaled_residual": _scaled_residual_case,
}


def run_gradcheck(trials: int = 30, seed: int = 0, tol: float = DEFAULT_TOL, op_names=OPS) -> dict:
    """Run `trials` random cases per op; returns a per-op report dict with
    keys cases, max_rel_err, failures, plus overall 'passed'."""
    rng = np.random.default_rng(seed)
    report = {"tol": tol, "seed": seed, "ops": {}}
    passed = True
    for name in op_names:
        if name not in _CASES:
            raise ValueError(f"unknown op {name!r}; choose from {sorted(_CASES)}")
        worst = 0.0
        failures = 0
        for _ in range(trials):
            err = _CASES[name](rng)
            worst = max(worst, err)
            if err >= tol:
                failures += 1
        report["ops"][name] = {"cases": trials, "max_rel_err": worst, "failures": failures}
        passed = passed and failures == 0
    report["passed"] = passed
    return report
