"""Desk-scale experiments: procedural toy data, FLOP-matched comparisons,
and text reports over the JSON/CSV artifacts.

Toy images are mixtures of linear gradients, soft oriented edges and
band-limited texture, normalized to [0, 1]. They are cheap to generate,
deterministic per seed, and hard enough that a classical interpolator leaves
visible headroom for learned models.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import archmodel, cfa, metrics, net as netmod, train
from .archmodel import ArchConfig


def _bilinear_resize(grid: np.ndarray, h: int, w: int) -> np.ndarray:
    """Upsample a small 2-D grid to (h, w) with bilinear interpolation."""
    gh, gw = grid.shape
    cy = np.linspace(0, gh - 1, h)
    cx = np.linspace(0, gw - 1, w)
    y0 = np.clip(np.floor(cy).astype(int), 0, gh - 2)
    x0 = np.clip(np.floor(cx).astype(int), 0, gw - 2)
    ty = (cy - y0)[:, None]
    tx = (cx - x0)[None, :]
    a = grid[np.ix_(y0, x0)]
    b = grid[np.ix_(y0, x0 + 1)]
    c = grid[np.ix_(y0 + 1, x0)]
    d = grid[np.ix_(y0 + 1, x0 + 1)]
    return (a * (1 - ty) * (1 - tx) + b * (1 - ty) * tx + c * ty * (1 - tx) + d * ty * tx)


def _toy_image(rng: np.random.Generator, patch: int) -> np.ndarray:
    """One (3, patch, patch) float64 image in [0, 1]."""
    ys, xs = np.meshgrid(np.linspace(0, 1, patch), np.linspace(0, 1, patch), indexing="ij")
    img = np.empty((3, patch, patch))
    coef = rng.uniform(-1.0, 1.0, size=(3, 3))
    for c in range(3):
        img[c] = coef[c, 0] + coef[c, 1] * xs + coef[c, 2] * ys
    for _ in range(int(rng.integers(2, 5))):
        theta = rng.uniform(0, 2 * np.pi)
        cx, cy = rng.uniform(0.15, 0.85, size=2)
        sharp = rng.uniform(10.0, 60.0)
        edge = np.tanh(sharp * ((xs - cx) * np.cos(theta) + (ys - cy) * np.sin(theta)))
        img += rng.uniform(-0.5, 0.5, size=(3, 1, 1)) * edge
    coarse = rng.normal(size=(patch // 8 + 2, patch // 8 + 2))
    texture = _bilinear_resize(coarse, patch, patch)
    img += rng.uniform(-0.3, 0.3, size=(3, 1, 1)) * texture
    lo, hi = img.min(), img.max()
    return (img - lo) / (hi - lo + 1e-9)


def make_toy_dataset(
    count: int,
    patch: int,
    seed: int,
    pattern: cfa.CFAPattern = cfa.BAYER,
    phase=(0, 0),
    noise=None,
    append_cfa: bool = False,
    dtype=np.float32,
):
    """List of (input, target) pairs of (1, c, patch, patch) arrays.

    input channel 0 is the raw mosaic (optionally noisy); when append_cfa is
    set, channels 1..4 are the one-hot CFA planes. target is the clean RGB.
    """
    if count < 0:
        raise ValueError("count must be >= 0")
    gain, read_sigma = cfa.noise_params(noise)
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        img = _toy_image(rng, patch)[None]
        raw = cfa.mosaic(img, pattern, phase)
        if gain > 0 or read_sigma > 0:
            noise_seed = int(rng.integers(0, 2**63 - 1))
            raw = cfa.add_noise(raw, gain, read_sigma, noise_seed, pattern, phase)
        x = cfa.append_cfa_planes(raw, pattern, phase) if append_cfa else raw
        out.append((x.astype(dtype), img.astype(dtype)))
    return out


def input_channels(append_cfa: bool) -> int:
    return 5 if append_cfa else 1


# ---------------------------------------------------------------------------
# FLOP-matched comparison between a downsampled and a full-resolution arm


def match_flops(
    reference: ArchConfig,
    patch: int,
    d: int = 1,
    w_range=(4, 64),
    b_range=(1, 16),
) -> ArchConfig:
    """The (d, w, B) config whose flops at patch resolution sit closest to the
    reference's. Any integer w is allowed here; the search grid constraint
    only binds configurations produced by the searcher."""
    target = archmodel.flops(reference, patch, patch).flops
    best = None
    best_err = None
    for w in range(w_range[0], w_range[1] + 1):
        for b in range(b_range[0], b_range[1] + 1):
            cand = ArchConfig(d=d, w=w, B=b, c_in=reference.c_in, c_out=reference.c_out)
            err = abs(archmodel.flops(cand, patch, patch).flops - target)
            if best_err is None or err < best_err:
                best, best_err = cand, err
    return best


@dataclass
class ExperimentSpec:
    arm_a: ArchConfig
    arm_b: ArchConfig
    patch: int = 48
    train_count: int = 64
    test_count: int = 16
    steps: int = 3000
    batch_size: int = 8
    lr: float = 1e-3
    seed: int = 0
    pattern_name: str = "bayer"
    phase: tuple = (0, 0)
    noise: object = None
    append_cfa: bool = True
    loss: str = "mse"
    flop_tolerance: float = 0.05

    def validate(self):
        pattern = cfa.get_pattern(self.pattern_name)
        c_in = input_channels(self.append_cfa)
        for name, cfg in (("arm_a", self.arm_a), ("arm_b", self.arm_b)):
            if cfg.c_in != c_in:
                raise ValueError(f"{name} has c_in={cfg.c_in}, inputs have {c_in} channels")
            if self.patch % cfg.d:
                raise ValueError(f"patch {self.patch} not divisible by {name}'s d={cfg.d}")
        fa = archmodel.flops(self.arm_a, self.patch, self.patch).flops
        fb = archmodel.flops(self.arm_b, self.patch, self.patch).flops
        ratio = fa / fb
        if abs(ratio - 1.0) > self.flop_tolerance:
            raise ValueError(
                f"arms are not FLOP-matched at patch {self.patch}: ratio {ratio:.4f} "
                f"outside 1 +- {self.flop_tolerance}"
            )
        return pattern, ratio


def default_comparison_spec(**overrides) -> ExperimentSpec:
    """A d=2 arm versus a FLOP-matched d=1 arm on noisy Bayer data with the
    CFA planes appended to both. Keyword overrides go to ExperimentSpec.

    The default adds iso3200 sensor noise: reconstruction from a noisy mosaic
    is the regime where a trained network separates from classical
    interpolation, which passes noise straight through.
    """
    c_in = input_channels(overrides.get("append_cfa", True))
    patch = overrides.get("patch", 48)
    overrides.setdefault("noise", "iso3200")
    arm_a = overrides.pop("arm_a", ArchConfig(d=2, w=24, B=3, c_in=c_in, c_out=3))
    arm_b = overrides.pop("arm_b", match_flops(arm_a, patch))
    return ExperimentSpec(arm_a=arm_a, arm_b=arm_b, **overrides)


@dataclass
class ArmReport:
    name: str
    config: ArchConfig
    flops_at_patch: int
    final_train_loss: float | None
    train_psnr: float | None
    test_psnr: float | None
    test_ssim: float | None
    diverged_at: int | None = None

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "config": archmodel.config_to_dict(self.config),
            "flops_at_patch": self.flops_at_patch,
            "final_train_loss": self.final_train_loss,
            "train_psnr": self.train_psnr,
            "test_psnr": self.test_psnr,
            "test_ssim": self.test_ssim,
            "diverged_at": self.diverged_at,
        }


@dataclass
class ComparisonReport:
    spec_summary: dict
    arms: list
    baseline_psnr: float
    baseline_ssim: float
    flop_ratio: float
    downsampled_minus_fullres_db: float | None

    def to_dict(self) -> dict:
        return {
            "spec": self.spec_summary,
            "arms": [a.to_dict() for a in self.arms],
            "baseline": {"test_psnr": self.baseline_psnr, "test_ssim": self.baseline_ssim},
            "flop_ratio": self.flop_ratio,
            "downsampled_minus_fullres_db": self.downsampled_minus_fullres_db,
            "margins_over_baseline_db": [
                None if a.test_psnr is None else a.test_psnr - self.baseline_psnr for a in self.arms
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def evaluate_net(network: netmod.Net, dataset) -> tuple:
    """(mean per-image PSNR, mean SSIM) of the network on a dataset."""
    psnrs, ssims = [], []
    dtype = netmod.named_parameters(network)[0][1].dtype
    for x, y in dataset:
        pred = netmod.forward(network, np.asarray(x, dtype=dtype))
        psnrs.append(metrics.psnr(pred, y))
        ssims.append(metrics.ssim(pred, y))
    return float(np.mean(psnrs)), float(np.mean(ssims))


def baseline_scores(dataset, pattern: cfa.CFAPattern, phase=(0, 0)) -> tuple:
    """Bilinear-demosaic PSNR/SSIM using each input's raw plane (channel 0)."""
    psnrs, ssims = [], []
    for x, y in dataset:
        rgb = cfa.bilinear_demosaic(np.asarray(x)[:, :1].astype(np.float64), pattern, phase)
        psnrs.append(metrics.psnr(rgb, y))
        ssims.append(metrics.ssim(rgb, y))
    return float(np.mean(psnrs)), float(np.mean(ssims))


def run_comparison(spec: ExperimentSpec) -> ComparisonReport:
    """Train both arms on identical data and score them against the
    classical baseline on a held-out set."""
    pattern, ratio = spec.validate()
    train_set = make_toy_dataset(
        spec.train_count, spec.patch, seed=spec.seed, pattern=pattern, phase=spec.phase,
        noise=spec.noise, append_cfa=spec.append_cfa,
    )
    test_set = make_toy_dataset(
        spec.test_count, spec.patch, seed=spec.seed + 1, pattern=pattern, phase=spec.phase,
        noise=spec.noise, append_cfa=spec.append_cfa,
    )
    arms = []
    for name, cfg in (("downsampled", spec.arm_a), ("fullres", spec.arm_b)):
        network = netmod.build(cfg, seed=spec.seed + 2)
        flops_at_patch = archmodel.flops(cfg, spec.patch, spec.patch).flops
        try:
            result = train.train_adam(
                network, train_set, steps=spec.steps, lr=spec.lr,
                batch_size=spec.batch_size, seed=spec.seed + 3, loss=spec.loss,
            )
        except train.TrainingDiverged as exc:
            # Report the failed arm and keep going: the other arm's result is
            # still meaningful.
            arms.append(
                ArmReport(
                    name=name, config=cfg, flops_at_patch=flops_at_patch,
                    final_train_loss=None, train_psnr=None, test_psnr=None,
                    test_ssim=None, diverged_at=exc.step,
                )
            )
            continue
        train_psnr = train.dataset_psnr(network, train_set)
        test_psnr, test_ssim = evaluate_net(network, test_set)
        arms.append(
            ArmReport(
                name=name,
                config=cfg,
                flops_at_patch=flops_at_patch,
                final_train_loss=result.final_loss,
                train_psnr=train_psnr,
                test_psnr=test_psnr,
                test_ssim=test_ssim,
            )
        )
    base_psnr, base_ssim = baseline_scores(test_set, pattern, spec.phase)
    gap = None
    if arms[0].test_psnr is not None and arms[1].test_psnr is not None:
        gap = arms[0].test_psnr - arms[1].test_psnr
    return ComparisonReport(
        spec_summary={
            "patch": spec.patch,
            "train_count": spec.train_count,
            "test_count": spec.test_count,
            "steps": spec.steps,
            "batch_size": spec.batch_size,
            "lr": spec.lr,
            "seed": spec.seed,
            "pattern": spec.pattern_name,
            "noise": str(spec.noise),
            "append_cfa": spec.append_cfa,
            "loss": spec.loss,
        },
        arms=arms,
        baseline_psnr=base_psnr,
        baseline_ssim=base_ssim,
        flop_ratio=ratio,
        downsampled_minus_fullres_db=gap,
    )


# ---------------------------------------------------------------------------
# Text tables


def report_table(rows: list, columns: list | None = None) -> str:
    """Align a list of flat dicts into a fixed-width text table."""
    if not rows:
        return "(no rows)\n"
    if columns is None:
        columns = []
        for row in rows:
            for key in row:
                if key not in columns:
                    columns.append(key)
    def fmt(v):
        if v is None:
            return ""
        if isinstance(v, float):
            return f"{v:.6g}"
        return str(v)
    table = [[fmt(row.get(c)) for c in columns] for row in rows]
    widths = [max(len(c), *(len(r[i]) for r in table)) for i, c in enumerate(columns)]
    lines = ["  ".join(c.ljust(widths[i]) for i, c in enumerate(columns)).rstrip()]
    lines.append("  ".join("-" * widths[i] for i in range(len(columns))).rstrip())
    for r in table:
        lines.append("  ".join(r[i].ljust(widths[i]) for i in range(len(columns))).rstrip())
    return "\n".join(lines) + "\n"
