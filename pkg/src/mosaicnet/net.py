"""Network assembly, forward/backward passes, and checkpointing.

The network is a d x d stride-d stem convolution to width w, B identical
gated conv blocks, a 1x1 tail convolution to c_out * d^2 channels, and a
depth-to-space rearrangement back to full resolution. There is no global
input-to-output skip. Each block has two residual branches whose outputs are
multiplied by learnable scalar scales initialized to zero, so a freshly built
network computes exactly shuffle(tail(stem(x))).

Backward passes are hand-written; gradients flow through every op via the
kernels in ops.py. Parameters are plain numpy arrays addressed by stable
dotted names (stem.weight, block.0.conv1.weight, ..., tail.bias) used both by
the optimizer and the on-disk checkpoint format.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from . import archmodel, ops, tensorio
from .archmodel import ArchConfig
from .ops import ConvSpec


@dataclass
class ConvLayer:
    spec: ConvSpec
    weight: np.ndarray
    bias: np.ndarray


@dataclass
class NormLayer:
    gamma: np.ndarray
    beta: np.ndarray


@dataclass
class Block:
    norm1: NormLayer
    conv1: ConvLayer
    dconv: ConvLayer
    conv3: ConvLayer
    norm2: NormLayer
    conv4: ConvLayer
    conv5: ConvLayer
    sca: ConvLayer | None
    scale1: np.ndarray  # 0-d
    scale2: np.ndarray  # 0-d


@dataclass
class Net:
    config: ArchConfig
    with_sca: bool
    seed: int
    precision: str
    stem: ConvLayer
    blocks: list
    tail: ConvLayer


def _init_conv(rng: np.random.Generator, spec: ConvSpec, dtype) -> ConvLayer:
    fan_in = (spec.c_in // spec.groups) * spec.k * spec.k
    bound = 1.0 / np.sqrt(fan_in)
    shape = (spec.c_out, spec.c_in // spec.groups, spec.k, spec.k)
    weight = rng.uniform(-bound, bound, size=shape).astype(dtype)
    bias = np.zeros(spec.c_out, dtype=dtype)
    return ConvLayer(spec=spec, weight=weight, bias=bias)


def build(config: ArchConfig, seed: int, with_sca: bool = False, precision: str = "standard") -> Net:
    """Build a network with reproducible init.

    Conv weights are uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) drawn from
    default_rng(seed) in a fixed order (stem, then each block's convs in
    execution order, then tail); biases are zero, norm gains one, offsets
    zero, residual scales zero. Same seed twice gives bit-identical nets.
    """
    dtype = ops.dtype_for(precision)
    rng = np.random.default_rng(seed)
    stem = _init_conv(rng, archmodel.stem_conv_spec(config), dtype)
    blocks = []
    specs = archmodel.block_conv_specs(config.w)
    w = config.w
    for _ in range(config.B):
        conv1 = _init_conv(rng, specs[0], dtype)
        dconv = _init_conv(rng, specs[1], dtype)
        conv3 = _init_conv(rng, specs[2], dtype)
        conv4 = _init_conv(rng, specs[3], dtype)
        conv5 = _init_conv(rng, specs[4], dtype)
        sca = _init_conv(rng, ConvSpec(c_in=w, c_out=w, k=1), dtype) if with_sca else None
        blocks.append(
            Block(
                norm1=NormLayer(gamma=np.ones(w, dtype=dtype), beta=np.zeros(w, dtype=dtype)),
                conv1=conv1,
                dconv=dconv,
                conv3=conv3,
                norm2=NormLayer(gamma=np.ones(w, dtype=dtype), beta=np.zeros(w, dtype=dtype)),
                conv4=conv4,
                conv5=conv5,
                sca=sca,
                scale1=np.zeros((), dtype=dtype),
                scale2=np.zeros((), dtype=dtype),
            )
        )
    tail = _init_conv(rng, archmodel.tail_conv_spec(config), dtype)
    return Net(config=config, with_sca=with_sca, seed=seed, precision=precision, stem=stem, blocks=blocks, tail=tail)


def named_parameters(net: Net) -> list:
    """(name, array) pairs in canonical order; the arrays are the live ones."""
    out = [("stem.weight", net.stem.weight), ("stem.bias", net.stem.bias)]
    for i, blk in enumerate(net.blocks):
        p = f"block.{i}"
        out.extend(
            [
                (f"{p}.norm1.gamma", blk.norm1.gamma),
                (f"{p}.norm1.beta", blk.norm1.beta),
                (f"{p}.conv1.weight", blk.conv1.weight),
                (f"{p}.conv1.bias", blk.conv1.bias),
                (f"{p}.dconv.weight", blk.dconv.weight),
                (f"{p}.dconv.bias", blk.dconv.bias),
                (f"{p}.conv3.weight", blk.conv3.weight),
                (f"{p}.conv3.bias", blk.conv3.bias),
                (f"{p}.norm2.gamma", blk.norm2.gamma),
                (f"{p}.norm2.beta", blk.norm2.beta),
                (f"{p}.conv4.weight", blk.conv4.weight),
                (f"{p}.conv4.bias", blk.conv4.bias),
                (f"{p}.conv5.weight", blk.conv5.weight),
                (f"{p}.conv5.bias", blk.conv5.bias),
            ]
        )
        if blk.sca is not None:
            out.extend([(f"{p}.sca.weight", blk.sca.weight), (f"{p}.sca.bias", blk.sca.bias)])
        out.extend([(f"{p}.scale1", blk.scale1), (f"{p}.scale2", blk.scale2)])
    out.extend([("tail.weight", net.tail.weight), ("tail.bias", net.tail.bias)])
    return out


def parameter_count(net: Net) -> int:
    return sum(arr.size for _, arr in named_parameters(net))


def _conv(layer: ConvLayer, x: np.ndarray) -> np.ndarray:
    return ops.conv2d(x, layer.weight, layer.bias, layer.spec)


@dataclass
class BlockCache:
    x_in: np.ndarray
    ln1_cache: tuple
    ln1_out: np.ndarray
    c1_out: np.ndarray
    dc_out: np.ndarray
    g1_out: np.ndarray
    pooled: np.ndarray | None
    att: np.ndarray | None
    g1_eff: np.ndarray
    c3_out: np.ndarray
    y: np.ndarray
    ln2_cache: tuple
    ln2_out: np.ndarray
    c4_out: np.ndarray
    g2_out: np.ndarray
    c5_out: np.ndarray


def _check_input(net: Net, x: np.ndarray):
    cfg = net.config
    if x.ndim != 4 or x.shape[1] != cfg.c_in:
        raise ops.ShapeError(f"input must be (n, {cfg.c_in}, h, w), got {x.shape}")
    if x.shape[2] % cfg.d or x.shape[3] % cfg.d:
        raise ops.ShapeError(
            f"spatial {x.shape[2]}x{x.shape[3]} not divisible by d={cfg.d}; pad first"
        )


def forward(net: Net, x: np.ndarray) -> np.ndarray:
    y, _ = forward_cached(net, x, keep_cache=False)
    return y


def forward_cached(net: Net, x: np.ndarray, keep_cache: bool = True):
    """Run the network; optionally keep every intermediate for backward().

    Output has shape (n, c_out, h, w) for input (n, c_in, h, w) with h, w
    divisible by d.
    """
    _check_input(net, x)
    h = _conv(net.stem, x)
    bcaches = []
    for blk in net.blocks:
        x_in = h
        ln1_out, ln1_c = ops.layer_norm_channels(x_in, blk.norm1.gamma, blk.norm1.beta)
        c1_out = _conv(blk.conv1, ln1_out)
        dc_out = _conv(blk.dconv, c1_out)
        g1_out = ops.simple_gate(dc_out)
        if blk.sca is not None:
            pooled = g1_out.mean(axis=(2, 3), keepdims=True)
            att = _conv(blk.sca, pooled)
            g1_eff = g1_out * att
        else:
            pooled = att = None
            g1_eff = g1_out
        c3_out = _conv(blk.conv3, g1_eff)
        y = ops.scaled_residual(x_in, c3_out, blk.scale1)
        ln2_out, ln2_c = ops.layer_norm_channels(y, blk.norm2.gamma, blk.norm2.beta)
        c4_out = _conv(blk.conv4, ln2_out)
        g2_out = ops.simple_gate(c4_out)
        c5_out = _conv(blk.conv5, g2_out)
        h = ops.scaled_residual(y, c5_out, blk.scale2)
        if keep_cache:
            bcaches.append(
                BlockCache(
                    x_in=x_in,
                    ln1_cache=ln1_c,
                    ln1_out=ln1_out,
                    c1_out=c1_out,
                    dc_out=dc_out,
                    g1_out=g1_out,
                    pooled=pooled,
                    att=att,
                    g1_eff=g1_eff,
                    c3_out=c3_out,
                    y=y,
                    ln2_cache=ln2_c,
                    ln2_out=ln2_out,
                    c4_out=c4_out,
                    g2_out=g2_out,
                    c5_out=c5_out,
                )
            )
    tail_in = h
    t_out = _conv(net.tail, tail_in)
    out = ops.pixel_shuffle(t_out, net.config.d)
    cache = (x, bcaches, tail_in) if keep_cache else None
    return out, cache


def backward(net: Net, cache, grad_out: np.ndarray):
    """Gradients of a scalar loss w.r.t. every parameter and the input.

    cache comes from forward_cached. Returns (grads, grad_x) where grads maps
    parameter names (as in named_parameters) to arrays of matching shape.
    """
    x, bcaches, tail_in = cache
    d = net.config.d
    grads: dict[str, np.ndarray] = {}

    g = ops.pixel_unshuffle(grad_out, d)
    g, gw, gb = ops.conv2d_backward(g, tail_in, net.tail.weight, net.tail.spec)
    grads["tail.weight"], grads["tail.bias"] = gw, gb

    for i in reversed(range(len(net.blocks))):
        blk = net.blocks[i]
        bc = bcaches[i]
        p = f"block.{i}"

        # h = y + scale2 * c5_out
        grads[f"{p}.scale2"] = np.asarray((g * bc.c5_out).sum(), dtype=g.dtype)
        g_c5 = g * blk.scale2
        g_g2, gw5, gb5 = ops.conv2d_backward(g_c5, bc.g2_out, blk.conv5.weight, blk.conv5.spec)
        grads[f"{p}.conv5.weight"], grads[f"{p}.conv5.bias"] = gw5, gb5
        g_c4 = ops.simple_gate_backward(g_g2, bc.c4_out)
        g_ln2, gw4, gb4 = ops.conv2d_backward(g_c4, bc.ln2_out, blk.conv4.weight, blk.conv4.spec)
        grads[f"{p}.conv4.weight"], grads[f"{p}.conv4.bias"] = gw4, gb4
        g_from_ln2, gg2, gb2 = ops.layer_norm_channels_backward(g_ln2, bc.ln2_cache)
        grads[f"{p}.norm2.gamma"], grads[f"{p}.norm2.beta"] = gg2, gb2
        g_y = g + g_from_ln2

        # y = x_in + scale1 * c3_out
        grads[f"{p}.scale1"] = np.asarray((g_y * bc.c3_out).sum(), dtype=g.dtype)
        g_c3 = g_y * blk.scale1
        g_g1eff, gw3, gb3 = ops.conv2d_backward(g_c3, bc.g1_eff, blk.conv3.weight, blk.conv3.spec)
        grads[f"{p}.conv3.weight"], grads[f"{p}.conv3.bias"] = gw3, gb3
        if blk.sca is not None:
            g_g1 = g_g1eff * bc.att
            g_att = (g_g1eff * bc.g1_out).sum(axis=(2, 3), keepdims=True)
            g_pooled, gws, gbs = ops.conv2d_backward(g_att, bc.pooled, blk.sca.weight, blk.sca.spec)
            grads[f"{p}.sca.weight"], grads[f"{p}.sca.bias"] = gws, gbs
            area = bc.g1_out.shape[2] * bc.g1_out.shape[3]
            g_g1 = g_g1 + g_pooled / area
        else:
            g_g1 = g_g1eff
        g_dc = ops.simple_gate_backward(g_g1, bc.dc_out)
        g_c1, gwd, gbd = ops.conv2d_backward(g_dc, bc.c1_out, blk.dconv.weight, blk.dconv.spec)
        grads[f"{p}.dconv.weight"], grads[f"{p}.dconv.bias"] = gwd, gbd
        g_ln1, gw1, gb1 = ops.conv2d_backward(g_c1, bc.ln1_out, blk.conv1.weight, blk.conv1.spec)
        grads[f"{p}.conv1.weight"], grads[f"{p}.conv1.bias"] = gw1, gb1
        g_from_ln1, gg1, gb1n = ops.layer_norm_channels_backward(g_ln1, bc.ln1_cache)
        grads[f"{p}.norm1.gamma"], grads[f"{p}.norm1.beta"] = gg1, gb1n
        g = g_y + g_from_ln1

    grad_x, gw, gb = ops.conv2d_backward(g, x, net.stem.weight, net.stem.spec)
    grads["stem.weight"], grads["stem.bias"] = gw, gb
    return grads, grad_x


# ---------------------------------------------------------------------------
# Checkpoints: a directory with a JSON manifest and one tensor blob per
# parameter, named after the parameter with a .tns suffix.


def _to_blob_shape(arr: np.ndarray) -> np.ndarray:
    if arr.ndim == 4:
        return arr
    if arr.ndim == 1:
        return arr.reshape(1, arr.shape[0], 1, 1)
    if arr.ndim == 0:
        return arr.reshape(1, 1, 1, 1)
    raise ValueError(f"unexpected parameter rank {arr.ndim}")


def save_checkpoint(net: Net, path, step: int = 0, extra: dict | None = None):
    os.makedirs(path, exist_ok=True)
    names = [name for name, _ in named_parameters(net)]
    manifest = {
        "format": "mosaicnet-checkpoint",
        "version": 1,
        "config": archmodel.config_to_dict(net.config),
        "with_sca": net.with_sca,
        "seed": net.seed,
        "precision": net.precision,
        "step": step,
        "parameters": names,
    }
    if extra:
        manifest["extra"] = extra
    with open(os.path.join(path, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    for name, arr in named_parameters(net):
        tensorio.save_tensor(os.path.join(path, name + ".tns"), _to_blob_shape(arr))


def load_checkpoint(path) -> tuple[Net, dict]:
    """Rebuild a net from a checkpoint directory; returns (net, manifest)."""
    with open(os.path.join(path, "manifest.json")) as fh:
        manifest = json.load(fh)
    if manifest.get("format") != "mosaicnet-checkpoint":
        raise ValueError(f"{path} is not a checkpoint directory")
    config = archmodel.config_from_dict(manifest["config"])
    net = build(config, seed=manifest["seed"], with_sca=manifest["with_sca"], precision=manifest["precision"])
    for name, arr in named_parameters(net):
        blob = tensorio.load_tensor(os.path.join(path, name + ".tns"))
        if blob.size != arr.size:
            raise ValueError(f"parameter {name}: stored size {blob.size} != expected {arr.size}")
        arr[...] = blob.reshape(arr.shape).astype(arr.dtype)
    return net, manifest
