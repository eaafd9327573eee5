"""Closed-form cost and capacity models for the downsampled isotropic network.

The network family is fixed: a d x d stride-d stem conv taking c_in channels
to width w, B identical gated conv blocks at constant width, a 1x1 tail conv
to c_out * d^2 channels, and a depth-to-space rearrangement back to full
resolution. Every model here is a pure function of the (d, w, B, c_in, c_out)
configuration, so the search can evaluate millions of candidates without
building networks.

Flops accounting (calibrated against the reference design points):

  flops = 2 * (stem_macs + trunk_macs + tail_macs) + elementwise_total

with trunk pixel count P = floor(h/d) * floor(w/d) (valid stride-d stem) and
per-block elementwise overhead of 20*w ops per trunk pixel, itemized as two
channel norms (7 ops/element), two gates (1 op/element of the halved output)
and two scaled residual adds (2 ops/element). Convolution biases are excluded.
All flops values are exact Python integers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .ops import ConvSpec

EXPANSION = 2  # channel expansion inside a block; the gate halves it again
DW_KERNEL = 3  # depthwise kernel size inside a block

# Elementwise ops per trunk pixel per block, per channel of width w:
# 2 norms * 7 + 2 gates * 1 + 2 scaled residuals * 2.
BLOCK_ELEMENTWISE_PER_PIXEL = 20


@dataclass(frozen=True)
class ArchConfig:
    """One point in the design space.

    d: downsampling ratio of the stem (1 keeps full resolution).
    w: trunk width in channels.
    B: number of gated conv blocks.
    c_in: network input channels (1 raw plane, plus 4 when the one-hot CFA
          planes are appended).
    c_out: output channels (3 for RGB).
    """

    d: int
    w: int
    B: int
    c_in: int = 4
    c_out: int = 3

    def __post_init__(self):
        if self.d < 1:
            raise ValueError(f"d must be >= 1, got {self.d}")
        if self.w < 4:
            raise ValueError(f"w must be >= 4, got {self.w}")
        if self.B < 0:
            raise ValueError(f"B must be >= 0, got {self.B}")
        if self.c_in < 1 or self.c_out < 1:
            raise ValueError("channel counts must be >= 1")


def block_conv_specs(w: int) -> list[ConvSpec]:
    """The five convolutions of one block, in execution order."""
    e = EXPANSION
    return [
        ConvSpec(c_in=w, c_out=e * w, k=1),                      # conv1: expand
        ConvSpec(c_in=e * w, c_out=e * w, k=DW_KERNEL, pad=1, groups=e * w),  # dconv
        ConvSpec(c_in=e * w // 2, c_out=w, k=1),                 # conv3: project after gate
        ConvSpec(c_in=w, c_out=e * w, k=1),                      # conv4: expand
        ConvSpec(c_in=e * w // 2, c_out=w, k=1),                 # conv5: project after gate
    ]


def stem_conv_spec(config: ArchConfig) -> ConvSpec:
    return ConvSpec(c_in=config.c_in, c_out=config.w, k=config.d, stride=config.d)


def tail_conv_spec(config: ArchConfig) -> ConvSpec:
    return ConvSpec(c_in=config.w, c_out=config.c_out * config.d * config.d, k=1)


def conv_layer_list(config: ArchConfig) -> list[ConvSpec]:
    """Every convolution in the network: stem, B blocks of five, tail."""
    layers = [stem_conv_spec(config)]
    block = block_conv_specs(config.w)
    for _ in range(config.B):
        layers.extend(block)
    layers.append(tail_conv_spec(config))
    return layers


# ---------------------------------------------------------------------------
# Flops and parameters


@dataclass(frozen=True)
class FlopsReport:
    """Itemized cost of one forward pass at a given input resolution.

    MAC fields count multiply-accumulates; flops = 2 * total_macs +
    elementwise_total. trunk_h/trunk_w are the post-stem spatial extents.
    """

    config: ArchConfig
    h: int
    w_img: int
    trunk_h: int
    trunk_w: int
    stem_macs: int
    per_block_macs: int
    trunk_macs: int
    tail_macs: int
    total_macs: int
    per_block_elementwise: int
    elementwise_total: int
    flops: int

    @property
    def gflops(self) -> float:
        return self.flops / 1e9

    def to_dict(self) -> dict:
        return {
            "config": config_to_dict(self.config),
            "resolution": [self.h, self.w_img],
            "trunk_resolution": [self.trunk_h, self.trunk_w],
            "stem_macs": self.stem_macs,
            "per_block_macs": self.per_block_macs,
            "trunk_macs": self.trunk_macs,
            "tail_macs": self.tail_macs,
            "total_macs": self.total_macs,
            "per_block_elementwise": self.per_block_elementwise,
            "elementwise_total": self.elementwise_total,
            "flops": self.flops,
            "gflops": self.gflops,
        }


def block_macs_per_pixel(w: int) -> int:
    """MACs per trunk pixel for one block: 6*w^2 + 18*w at expansion 2."""
    total = 0
    for spec in block_conv_specs(w):
        total += spec.c_out * (spec.c_in // spec.groups) * spec.k * spec.k
    return total


def flops(config: ArchConfig, h: int, w_img: int) -> FlopsReport:
    """Exact integer cost model at input resolution h x w_img."""
    if h < config.d or w_img < config.d:
        raise ValueError(f"resolution {h}x{w_img} smaller than stem stride d={config.d}")
    trunk_h, trunk_w = h // config.d, w_img // config.d
    p = trunk_h * trunk_w
    stem = p * config.w * config.c_in * config.d * config.d
    per_block = p * block_macs_per_pixel(config.w)
    trunk = config.B * per_block
    tail = p * config.w * config.c_out * config.d * config.d
    total = stem + trunk + tail
    per_block_elem = BLOCK_ELEMENTWISE_PER_PIXEL * config.w * p
    elem_total = config.B * per_block_elem
    return FlopsReport(
        config=config,
        h=h,
        w_img=w_img,
        trunk_h=trunk_h,
        trunk_w=trunk_w,
        stem_macs=stem,
        per_block_macs=per_block,
        trunk_macs=trunk,
        tail_macs=tail,
        total_macs=total,
        per_block_elementwise=per_block_elem,
        elementwise_total=elem_total,
        flops=2 * total + elem_total,
    )


def params(config: ArchConfig, with_sca: bool = False) -> int:
    """Learnable parameter count, matching the built network exactly.

    Per block: five convs with biases, two channel norms (gain + offset) and
    two scalar residual scales; optionally one channel-attention 1x1 conv.
    """
    w, d = config.w, config.d
    count = config.c_in * d * d * w + w  # stem weight + bias
    per_block = 0
    for spec in block_conv_specs(w):
        per_block += spec.c_out * (spec.c_in // spec.groups) * spec.k * spec.k + spec.c_out
    per_block += 2 * (2 * w)  # two norms, gain and offset each of size w
    per_block += 2  # two scalar residual scales
    if with_sca:
        per_block += w * w + w  # 1x1 attention conv on the gated w channels
    count += config.B * per_block
    count += config.c_out * d * d * w + config.c_out * d * d  # tail weight + bias
    return count


# ---------------------------------------------------------------------------
# Entropy scores


@dataclass(frozen=True)
class EntropyReport:
    """score = density_term * sum(layer_terms); the terms are reproducible
    from the stored list (layer i contributes log(c_in_i * k_i^2 / groups_i))."""

    config: ArchConfig
    density_term: float
    layer_terms: tuple
    sum_term: float
    score: float

    def to_dict(self) -> dict:
        return {
            "config": config_to_dict(self.config),
            "density_term": self.density_term,
            "sum_term": self.sum_term,
            "score": self.score,
            "layer_count": len(self.layer_terms),
        }


def layer_entropy_term(spec: ConvSpec) -> float:
    """log of the layer's effective input density c_in * k^2 / groups."""
    return math.log(spec.c_in * spec.k * spec.k / spec.groups)


def density_term_invariant(config: ArchConfig) -> float:
    """log(w / d^2): output-channel density per unit input area, resolution-free."""
    return math.log(config.w / (config.d * config.d))


def _sum_layer_terms(terms) -> float:
    s = 0.0
    for t in terms:
        s += t
    return s


def entropy_invariant(config: ArchConfig) -> EntropyReport:
    """Resolution-invariant expressiveness score used by the search.

    score = log(w / d^2) * sum over all convs of log(c_in * k^2 / groups).
    Bigger trunks (wider, deeper, less downsampled) score higher; the density
    term penalizes downsampling, the sum rewards width and depth.
    """
    terms = tuple(layer_entropy_term(s) for s in conv_layer_list(config))
    sum_term = _sum_layer_terms(terms)
    density = density_term_invariant(config)
    return EntropyReport(
        config=config,
        density_term=density,
        layer_terms=terms,
        sum_term=sum_term,
        score=density * sum_term,
    )


def entropy_at_resolution(config: ArchConfig, h: int, w_img: int) -> EntropyReport:
    """Resolution-dependent variant with density log(r_h * r_w * w), where
    r_h = ceil(h/d) and r_w = ceil(w_img/d) are the trunk extents.

    Differs from entropy_invariant by exactly log(r_h * r_w * d^2) * sum_term,
    so the two rank identically at any fixed resolution.
    """
    if h < 1 or w_img < 1:
        raise ValueError("resolution must be positive")
    r_h = -(-h // config.d)
    r_w = -(-w_img // config.d)
    terms = tuple(layer_entropy_term(s) for s in conv_layer_list(config))
    sum_term = _sum_layer_terms(terms)
    density = math.log(r_h * r_w * config.w)
    return EntropyReport(
        config=config,
        density_term=density,
        layer_terms=terms,
        sum_term=sum_term,
        score=density * sum_term,
    )


def config_to_dict(config: ArchConfig) -> dict:
    return {"d": config.d, "w": config.w, "B": config.B, "c_in": config.c_in, "c_out": config.c_out}


def config_from_dict(data: dict) -> ArchConfig:
    return ArchConfig(
        d=int(data["d"]),
        w=int(data["w"]),
        B=int(data["B"]),
        c_in=int(data.get("c_in", 4)),
        c_out=int(data.get("c_out", 3)),
    )
