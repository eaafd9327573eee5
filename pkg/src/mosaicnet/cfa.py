"""Color filter array simulation: patterns, mosaicing, noise, and a
classical bilinear demosaicing baseline.

Images are (n, c, h, w) float arrays in [0, 1], linear space. A raw mosaic is
single-channel; channel index 0 of a network input is always the raw plane,
with the four one-hot CFA planes appended after it when requested.

Patterns are periodic tilings of the labels R, G, B and E (Event). Event
cells carry no light signal: mosaicing writes exact zeros there and noise is
not applied to them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ops import check_finite

CHANNEL_LABELS = "RGBE"
R, G, B, EVENT = 0, 1, 2, 3


@dataclass(frozen=True)
class CFAPattern:
    """A periodic cell layout. cells[y][x] is one of 'R', 'G', 'B', 'E'.

    The pixel at image coordinates (y, x) under phase (py, px) sees cell
    ((y + py) % period_h, (x + px) % period_w).
    """

    name: str
    cells: tuple

    def __post_init__(self):
        if not self.cells or not self.cells[0]:
            raise ValueError("pattern must be non-empty")
        width = len(self.cells[0])
        labels = set()
        for row in self.cells:
            if len(row) != width:
                raise ValueError("pattern rows must have equal length")
            for lab in row:
                if lab not in CHANNEL_LABELS:
                    raise ValueError(f"unknown cell label {lab!r}")
                labels.add(lab)
        for lab in "RGB":
            if lab not in labels:
                raise ValueError(f"pattern {self.name!r} never samples channel {lab}")

    @property
    def period(self) -> tuple:
        return len(self.cells), len(self.cells[0])

    @property
    def has_events(self) -> bool:
        return any("E" in row for row in self.cells)

    def index_tile(self) -> np.ndarray:
        return np.array([[CHANNEL_LABELS.index(lab) for lab in row] for row in self.cells], dtype=np.int64)

    def index_grid(self, h: int, w: int, phase=(0, 0)) -> np.ndarray:
        """(h, w) array of channel indices (R=0, G=1, B=2, E=3)."""
        ph, pw = self.period
        py, px = phase
        tile = self.index_tile()
        ys = (np.arange(h) + py) % ph
        xs = (np.arange(w) + px) % pw
        return tile[np.ix_(ys, xs)]


def _expand(base, factor: int):
    out = []
    for row in base:
        expanded = tuple(lab for lab in row for _ in range(factor))
        for _ in range(factor):
            out.append(expanded)
    return tuple(out)


_BAYER_CELLS = (("R", "G"), ("G", "B"))


def hybrid_event_pattern(event_cells=((0, 0), (1, 1))) -> CFAPattern:
    """Quad layout with Event cells at the given tile coordinates.

    The default places two Event cells per 4x4 tile on the diagonal of the
    red 2x2 quad, leaving the other two red cells intact.
    """
    cells = [list(row) for row in _expand(_BAYER_CELLS, 2)]
    for y, x in event_cells:
        cells[y % 4][x % 4] = "E"
    return CFAPattern(name="hybridevs", cells=tuple(tuple(row) for row in cells))


BAYER = CFAPattern(name="bayer", cells=_BAYER_CELLS)
QUAD = CFAPattern(name="quad", cells=_expand(_BAYER_CELLS, 2))
NONA = CFAPattern(name="nona", cells=_expand(_BAYER_CELLS, 3))
HYBRIDEVS = hybrid_event_pattern()

PATTERNS = {p.name: p for p in (BAYER, QUAD, NONA, HYBRIDEVS)}


def get_pattern(name: str) -> CFAPattern:
    try:
        return PATTERNS[name]
    except KeyError:
        raise ValueError(f"unknown pattern {name!r}; choose from {sorted(PATTERNS)}") from None


# ---------------------------------------------------------------------------
# Mosaic and CFA planes


def mosaic(img: np.ndarray, pattern: CFAPattern, phase=(0, 0)) -> np.ndarray:
    """Sample an RGB image (n, 3, h, w) through the CFA into (n, 1, h, w).

    Each pixel keeps the one channel its cell passes; Event cells are 0.
    """
    if img.ndim != 4 or img.shape[1] != 3:
        raise ValueError(f"expected (n, 3, h, w), got {img.shape}")
    idx = pattern.index_grid(img.shape[2], img.shape[3], phase)
    raw = np.zeros((img.shape[0], 1, img.shape[2], img.shape[3]), dtype=img.dtype)
    for c in (R, G, B):
        mask = idx == c
        raw[:, 0][:, mask] = img[:, c][:, mask]
    return check_finite(raw, "mosaic")


def cfa_channels(pattern: CFAPattern, h: int, w: int, phase=(0, 0), dtype=np.float32) -> np.ndarray:
    """One-hot location planes (1, 4, h, w) in R, G, B, Event order."""
    idx = pattern.index_grid(h, w, phase)
    planes = np.stack([(idx == c).astype(dtype) for c in (R, G, B, EVENT)])
    return planes[None]


def append_cfa_planes(raw: np.ndarray, pattern: CFAPattern, phase=(0, 0)) -> np.ndarray:
    """(n, 1, h, w) raw -> (n, 5, h, w) with the one-hot planes appended."""
    if raw.ndim != 4 or raw.shape[1] != 1:
        raise ValueError(f"expected (n, 1, h, w), got {raw.shape}")
    planes = cfa_channels(pattern, raw.shape[2], raw.shape[3], phase, dtype=raw.dtype)
    planes = np.broadcast_to(planes, (raw.shape[0], 4, raw.shape[2], raw.shape[3]))
    return np.concatenate([raw, planes], axis=1)


# ---------------------------------------------------------------------------
# Sensor noise

# preset -> (gain, read_sigma); gain is the signal quantum (bigger = noisier),
# read_sigma the additive Gaussian sigma. Both rise monotonically with ISO.
ISO_PRESETS = {
    "iso400": (1.0 / 4096.0, 0.005),
    "iso800": (1.0 / 2048.0, 0.010),
    "iso1600": (1.0 / 1024.0, 0.020),
    "iso3200": (1.0 / 512.0, 0.040),
}


def noise_params(preset) -> tuple:
    """Accepts a preset name, a (gain, read_sigma) pair, or None (clean)."""
    if preset is None:
        return 0.0, 0.0
    if isinstance(preset, str):
        if preset in ("none", "clean"):
            return 0.0, 0.0
        try:
            return ISO_PRESETS[preset]
        except KeyError:
            raise ValueError(f"unknown noise preset {preset!r}; choose from {sorted(ISO_PRESETS)}") from None
    gain, sigma = preset
    return float(gain), float(sigma)


def add_noise(
    raw: np.ndarray,
    gain: float,
    read_sigma: float,
    seed: int,
    pattern: CFAPattern | None = None,
    phase=(0, 0),
) -> np.ndarray:
    """Shot + read noise: clamp(Poisson(v / gain) * gain + N(0, read_sigma), 0, 1).

    gain = 0 skips the Poisson stage, read_sigma = 0 the Gaussian one, so
    (0, 0) is the identity. When a pattern with Event cells is given, those
    cells are forced back to exact 0.
    """
    if gain < 0 or read_sigma < 0:
        raise ValueError("gain and read_sigma must be >= 0")
    if np.min(raw) < 0 or np.max(raw) > 1:
        raise ValueError("raw values must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    out = raw.astype(np.float64)
    if gain > 0:
        out = rng.poisson(out / gain).astype(np.float64) * gain
    if read_sigma > 0:
        out = out + rng.normal(0.0, read_sigma, size=out.shape)
    if gain > 0 or read_sigma > 0:
        out = np.clip(out, 0.0, 1.0)
    if pattern is not None and pattern.has_events:
        idx = pattern.index_grid(raw.shape[2], raw.shape[3], phase)
        out[:, :, idx == EVENT] = 0.0
    return check_finite(out.astype(raw.dtype), "add_noise")


# ---------------------------------------------------------------------------
# Classical baseline: per-channel normalized convolution with a tent kernel.


def _conv1d_same(x: np.ndarray, k: np.ndarray, axis: int) -> np.ndarray:
    r = (len(k) - 1) // 2
    pads = [(0, 0)] * x.ndim
    pads[axis] = (r, r)
    xp = np.pad(x, pads)
    win = np.lib.stride_tricks.sliding_window_view(xp, len(k), axis=axis)
    return np.tensordot(win, k, axes=([-1], [0]))


def _tent_kernel(radius: int) -> np.ndarray:
    xs = np.arange(-radius, radius + 1, dtype=np.float64)
    return 1.0 - np.abs(xs) / radius


def _event_donors(pattern: CFAPattern):
    """For each Event tile cell, the offset to its nearest non-Event cell.

    Distance is Euclidean on the infinite tiling; ties break by (dy, dx) scan
    order, so the choice is deterministic.
    """
    ph, pw = pattern.period
    tile = pattern.index_tile()
    offsets = sorted(
        ((dy * dy + dx * dx, dy, dx) for dy in range(-ph, ph + 1) for dx in range(-pw, pw + 1)),
    )
    donors = {}
    for y in range(ph):
        for x in range(pw):
            if tile[y, x] != EVENT:
                continue
            for d2, dy, dx in offsets:
                if d2 == 0:
                    continue
                if tile[(y + dy) % ph, (x + dx) % pw] != EVENT:
                    donors[(y, x)] = (dy, dx)
                    break
            else:
                raise ValueError("pattern has no non-Event cells")
    return donors


def _prefill_events(raw2d: np.ndarray, idx: np.ndarray, pattern: CFAPattern, phase):
    """Replace Event pixels with their nearest non-Event neighbor's value and
    label. raw2d is (n, h, w); borders clamp the donor coordinates."""
    h, w = idx.shape
    ph, pw = pattern.period
    py, px = phase
    filled = raw2d.copy()
    idx_filled = idx.copy()
    ys, xs = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    for (cy, cx), (dy, dx) in _event_donors(pattern).items():
        cell_mask = (((ys + py) % ph) == cy) & (((xs + px) % pw) == cx)
        if not cell_mask.any():
            continue
        donor_y = np.clip(ys + dy, 0, h - 1)
        donor_x = np.clip(xs + dx, 0, w - 1)
        filled[:, cell_mask] = raw2d[:, donor_y[cell_mask], donor_x[cell_mask]]
        idx_filled[cell_mask] = idx[donor_y[cell_mask], donor_x[cell_mask]]
    return filled, idx_filled


def bilinear_demosaic(raw: np.ndarray, pattern: CFAPattern, phase=(0, 0)) -> np.ndarray:
    """Classical demosaic: per-channel normalized tent interpolation.

    Each color channel is rebuilt from its own samples with a separable tent
    kernel of the smallest radius that covers every pixel; sampled positions
    are then written back exactly. Event cells are pre-filled from their
    nearest non-Event neighbor before interpolation. Returns (n, 3, h, w).
    """
    if raw.ndim != 4 or raw.shape[1] != 1:
        raise ValueError(f"expected (n, 1, h, w), got {raw.shape}")
    n, _, h, w = raw.shape
    idx = pattern.index_grid(h, w, phase)
    values = raw[:, 0].astype(np.float64)
    if pattern.has_events:
        values, idx = _prefill_events(values, idx, pattern, phase)
    ph, pw = pattern.period
    out = np.zeros((n, 3, h, w), dtype=np.float64)
    for c in (R, G, B):
        mask = (idx == c).astype(np.float64)
        if not mask.any():
            raise ValueError(f"channel {CHANNEL_LABELS[c]} has no samples in this image")
        den = num = None
        for radius in range(1, 2 * max(ph, pw) + 1):
            k = _tent_kernel(radius)
            den = _conv1d_same(_conv1d_same(mask, k, 0), k, 1)
            if (den > 1e-12).all():
                num = _conv1d_same(_conv1d_same(values * mask, k, 1), k, 2)
                break
        if num is None:
            raise ValueError(f"no tent radius covers channel {CHANNEL_LABELS[c]}")
        out[:, c] = num / den
        sampled = mask.astype(bool)
        out[:, c][:, sampled] = values[:, sampled]
    return check_finite(out.astype(raw.dtype), "bilinear_demosaic")


# ---------------------------------------------------------------------------
# Padding helpers


def pad_to_multiple(img: np.ndarray, multiple: int) -> tuple:
    """Reflect-pad bottom/right so h and w are multiples; returns (img, pads)."""
    if img.ndim != 4:
        raise ValueError(f"expected (n, c, h, w), got {img.shape}")
    if multiple < 1:
        raise ValueError("multiple must be >= 1")
    h, w = img.shape[2], img.shape[3]
    pad_h = (-h) % multiple
    pad_w = (-w) % multiple
    if pad_h >= h or pad_w >= w:
        raise ValueError(f"cannot reflect-pad {h}x{w} to a multiple of {multiple}")
    if pad_h or pad_w:
        img = np.pad(img, ((0, 0), (0, 0), (0, pad_h), (0, pad_w)), mode="reflect")
    return img, (pad_h, pad_w)


def crop_pad(img: np.ndarray, pads: tuple) -> np.ndarray:
    """Undo pad_to_multiple."""
    pad_h, pad_w = pads
    h = img.shape[2] - pad_h
    w = img.shape[3] - pad_w
    return np.ascontiguousarray(img[:, :, :h, :w])
