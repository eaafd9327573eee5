"""Color-filter-array simulation: layouts, sampling, noise and the
classical reconstruction baseline."""

import numpy as np
import pytest

from mosaicnet import cfa, metrics


def labels(grid):
    return [["RGBE"[v] for v in row] for row in np.asarray(grid)]


def test_bayer_layout():
    assert labels(cfa.BAYER.index_tile()) == [["R", "G"], ["G", "B"]]
    assert cfa.BAYER.period == (2, 2)
    assert not cfa.BAYER.has_events


def test_quad_layout_is_bayer_expanded_twice():
    want = [
        ["R", "R", "G", "G"],
        ["R", "R", "G", "G"],
        ["G", "G", "B", "B"],
        ["G", "G", "B", "B"],
    ]
    assert labels(cfa.QUAD.index_tile()) == want


def test_nona_layout_is_bayer_expanded_thrice():
    tile = labels(cfa.NONA.index_tile())
    assert cfa.NONA.period == (6, 6)
    for y in range(6):
        for x in range(6):
            assert tile[y][x] == labels(cfa.BAYER.index_tile())[y // 3][x // 3]


def test_hybridevs_layout():
    tile = labels(cfa.HYBRIDEVS.index_tile())
    quad = labels(cfa.QUAD.index_tile())
    assert tile[0][0] == "E" and tile[1][1] == "E"
    for y in range(4):
        for x in range(4):
            if (y, x) not in ((0, 0), (1, 1)):
                assert tile[y][x] == quad[y][x]
    assert cfa.HYBRIDEVS.has_events
    # Two event cells per 16-pixel tile.
    assert (cfa.HYBRIDEVS.index_grid(4, 4) == cfa.EVENT).sum() == 2


def test_index_grid_phase_shifts_the_tile():
    grid = cfa.BAYER.index_grid(2, 2, phase=(1, 0))
    assert labels(grid) == [["G", "B"], ["R", "G"]]
    grid = cfa.BAYER.index_grid(2, 2, phase=(0, 1))
    assert labels(grid) == [["G", "R"], ["B", "G"]]
    # Phase wraps modulo the period.
    assert np.array_equal(cfa.BAYER.index_grid(4, 4, phase=(2, 2)), cfa.BAYER.index_grid(4, 4))


def test_get_pattern():
    assert cfa.get_pattern("bayer") is cfa.BAYER
    with pytest.raises(ValueError):
        cfa.get_pattern("xtrans")


def test_pattern_validation_requires_rgb():
    with pytest.raises(ValueError):
        cfa.CFAPattern(name="bad", cells=(("R", "G"), ("G", "G")))
    with pytest.raises(ValueError):
        cfa.CFAPattern(name="bad", cells=(("R", "Q"), ("G", "B")))


def test_custom_event_positions():
    pat = cfa.hybrid_event_pattern(event_cells=((2, 3),))
    assert labels(pat.index_tile())[2][3] == "E"
    assert (pat.index_grid(4, 4) == cfa.EVENT).sum() == 1


def test_mosaic_hand_case():
    img = np.zeros((1, 3, 2, 2))
    img[0, 0] = [[0.1, 0.2], [0.3, 0.4]]   # R
    img[0, 1] = [[0.5, 0.6], [0.7, 0.8]]   # G
    img[0, 2] = [[0.9, 1.0], [0.2, 0.6]]   # B
    raw = cfa.mosaic(img, cfa.BAYER)
    want = np.array([[0.1, 0.6], [0.7, 0.6]])
    assert raw.shape == (1, 1, 2, 2)
    assert np.allclose(raw[0, 0], want)


def test_mosaic_events_are_zero():
    img = np.ones((1, 3, 8, 8))
    raw = cfa.mosaic(img, cfa.HYBRIDEVS)
    grid = cfa.HYBRIDEVS.index_grid(8, 8)
    assert np.array_equal(raw[0, 0] == 0.0, grid == cfa.EVENT)
    assert (raw[0, 0][grid != cfa.EVENT] == 1.0).all()


def test_cfa_channels_one_hot():
    planes = cfa.cfa_channels(cfa.HYBRIDEVS, 8, 12)
    assert planes.shape == (1, 4, 8, 12)
    assert planes.dtype == np.float32
    assert np.array_equal(planes.sum(axis=1), np.ones((1, 8, 12), np.float32))
    grid = cfa.HYBRIDEVS.index_grid(8, 12)
    for ch in range(4):
        assert np.array_equal(planes[0, ch] == 1.0, grid == ch)


def test_append_cfa_planes():
    raw = np.random.default_rng(0).random((2, 1, 4, 4)).astype(np.float32)
    packed = cfa.append_cfa_planes(raw, cfa.BAYER)
    assert packed.shape == (2, 5, 4, 4)
    assert np.array_equal(packed[:, :1], raw)
    assert packed.dtype == raw.dtype


def test_noise_params():
    assert cfa.noise_params(None) == (0.0, 0.0)
    assert cfa.noise_params("none") == (0.0, 0.0)
    assert cfa.noise_params("iso800") == cfa.ISO_PRESETS["iso800"]
    assert cfa.noise_params((0.001, 0.02)) == (0.001, 0.02)
    with pytest.raises(ValueError):
        cfa.noise_params("iso51200")


def test_add_noise_identity_and_determinism():
    rng = np.random.default_rng(1)
    raw = cfa.mosaic(rng.random((1, 3, 16, 16)), cfa.BAYER)
    assert np.array_equal(cfa.add_noise(raw, 0.0, 0.0, seed=0), raw)
    a = cfa.add_noise(raw, *cfa.ISO_PRESETS["iso1600"], seed=7)
    b = cfa.add_noise(raw, *cfa.ISO_PRESETS["iso1600"], seed=7)
    c = cfa.add_noise(raw, *cfa.ISO_PRESETS["iso1600"], seed=8)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert a.dtype == raw.dtype


def test_add_noise_moments_and_clipping():
    # On a large constant field the Poisson stage preserves the mean and its
    # variance scales with the gain; the Gaussian stage adds read noise.
    level = 0.5
    raw = np.full((1, 1, 200, 200), level)
    gain, sigma = 1.0 / 1024.0, 0.02
    noisy = cfa.add_noise(raw, gain, sigma, seed=3)
    assert noisy.min() >= 0.0 and noisy.max() <= 1.0
    assert abs(float(noisy.mean()) - level) < 3e-3
    want_var = level * gain + sigma * sigma
    assert float(noisy.var()) == pytest.approx(want_var, rel=0.05)


def test_add_noise_mse_grows_with_iso():
    rng = np.random.default_rng(2)
    raw = cfa.mosaic(rng.random((1, 3, 64, 64)), cfa.BAYER)
    errs = []
    for preset in ("iso400", "iso800", "iso1600", "iso3200"):
        noisy = cfa.add_noise(raw, *cfa.ISO_PRESETS[preset], seed=5)
        errs.append(float(((noisy - raw) ** 2).mean()))
    assert errs == sorted(errs)


def test_add_noise_keeps_events_zero():
    img = np.random.default_rng(3).random((1, 3, 16, 16))
    raw = cfa.mosaic(img, cfa.HYBRIDEVS)
    noisy = cfa.add_noise(raw, *cfa.ISO_PRESETS["iso3200"], seed=1,
                          pattern=cfa.HYBRIDEVS)
    grid = cfa.HYBRIDEVS.index_grid(16, 16)
    assert (noisy[0, 0][grid == cfa.EVENT] == 0.0).all()


def test_add_noise_rejects_out_of_range():
    with pytest.raises(ValueError):
        cfa.add_noise(np.full((1, 1, 4, 4), 1.5), 0.01, 0.01, seed=0)


def test_demosaic_constant_is_exact():
    for pattern in (cfa.BAYER, cfa.QUAD, cfa.NONA, cfa.HYBRIDEVS):
        img = np.full((1, 3, 12, 12), 0.25)
        rec = cfa.bilinear_demosaic(cfa.mosaic(img, pattern), pattern)
        assert metrics.psnr(rec, img) == metrics.PSNR_CAP, pattern.name


def test_demosaic_affine_ramp_interior_exact():
    # Bilinear interpolation reproduces affine signals exactly away from the
    # borders where the kernel sees truncated support.
    yy, xx = np.mgrid[0:16, 0:16] / 15.0
    plane = 0.2 + 0.3 * xx + 0.4 * yy
    img = np.stack([plane, plane, plane])[None]
    rec = cfa.bilinear_demosaic(cfa.mosaic(img, cfa.BAYER), cfa.BAYER)
    interior = (slice(None), slice(None), slice(2, -2), slice(2, -2))
    assert np.abs(rec[interior] - img[interior]).max() < 1e-12


def test_demosaic_exact_at_sampled_positions():
    rng = np.random.default_rng(4)
    img = rng.random((1, 3, 24, 24))
    for pattern in (cfa.BAYER, cfa.QUAD, cfa.NONA, cfa.HYBRIDEVS):
        raw = cfa.mosaic(img, pattern)
        rec = cfa.bilinear_demosaic(raw, pattern)
        grid = pattern.index_grid(24, 24)
        for ch in range(3):
            mask = grid == ch
            assert np.abs(rec[0, ch][mask] - img[0, ch][mask]).max() < 1e-12, (pattern.name, ch)


def test_demosaic_hybridevs_constant_ones():
    img = np.ones((1, 3, 16, 16))
    raw = cfa.mosaic(img, cfa.HYBRIDEVS)
    rec = cfa.bilinear_demosaic(raw, cfa.HYBRIDEVS)
    assert np.abs(rec - 1.0).max() < 1e-12


def test_demosaic_regression_card():
    # Frozen reconstruction quality on a fixed synthetic card; catches any
    # silent change to kernels, radii or event prefill.
    yy, xx = np.mgrid[0:64, 0:64] / 63.0
    img = np.stack([
        0.5 + 0.5 * np.sin(2 * np.pi * (3 * xx + 1 * yy)),
        np.clip(xx + 0.3 * np.tanh(8 * (yy - 0.5)), 0, 1),
        0.5 + 0.5 * np.cos(2 * np.pi * (1 * xx - 2 * yy)),
    ])[None]
    img = np.clip(img, 0.0, 1.0)
    rec = cfa.bilinear_demosaic(cfa.mosaic(img, cfa.BAYER), cfa.BAYER)
    assert metrics.psnr(rec, img) == pytest.approx(38.15904477218529, abs=1e-6)
    assert metrics.ssim(rec, img) == pytest.approx(0.9973001775658602, abs=1e-9)


def test_demosaic_respects_phase():
    rng = np.random.default_rng(8)
    img = rng.random((1, 3, 16, 16))
    phase = (1, 1)
    raw = cfa.mosaic(img, cfa.BAYER, phase)
    rec = cfa.bilinear_demosaic(raw, cfa.BAYER, phase)
    grid = cfa.BAYER.index_grid(16, 16, phase)
    for ch in range(3):
        mask = grid == ch
        assert np.abs(rec[0, ch][mask] - img[0, ch][mask]).max() < 1e-12


def test_pad_to_multiple_round_trip():
    rng = np.random.default_rng(9)
    for h, w, d in ((13, 17, 4), (12, 12, 3), (5, 9, 1), (16, 16, 16)):
        img = rng.random((1, 3, h, w))
        padded, pads = cfa.pad_to_multiple(img, d)
        assert padded.shape[2] % d == 0 and padded.shape[3] % d == 0
        assert padded.shape[2] - h < d and padded.shape[3] - w < d
        assert np.array_equal(cfa.crop_pad(padded, pads), img)
        assert np.array_equal(padded[:, :, :h, :w], img)


def test_pad_to_multiple_reflects():
    img = np.arange(8, dtype=np.float64).reshape(1, 1, 2, 4)
    padded, pads = cfa.pad_to_multiple(img, 3)
    # Width 4 -> 6 by reflecting the tail: [0 1 2 3] + [2 1]; height 2 -> 3
    # by mirroring the first row (reflection excludes the boundary row).
    assert padded.shape == (1, 1, 3, 6)
    assert np.array_equal(padded[0, 0, 0], [0, 1, 2, 3, 2, 1])
    assert np.array_equal(padded[0, 0, 2], padded[0, 0, 0])
    assert np.array_equal(cfa.crop_pad(padded, pads), img)
    with pytest.raises(ValueError):
        cfa.pad_to_multiple(np.zeros((1, 1, 1, 4)), 3)
