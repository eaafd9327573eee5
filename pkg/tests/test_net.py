"""Network assembly, forward/backward and checkpoint round trips."""

import json

import numpy as np
import pytest

from mosaicnet import archmodel as am
from mosaicnet import net as netmod
from mosaicnet import ops
from mosaicnet.archmodel import ArchConfig


def test_build_is_deterministic():
    cfg = ArchConfig(2, 8, 2, c_in=1)
    a = netmod.build(cfg, seed=7)
    b = netmod.build(cfg, seed=7)
    for (name_a, pa), (name_b, pb) in zip(netmod.named_parameters(a), netmod.named_parameters(b)):
        assert name_a == name_b
        assert np.array_equal(pa, pb), name_a
    c = netmod.build(cfg, seed=8)
    stem_a = dict(netmod.named_parameters(a))["stem.weight"]
    stem_c = dict(netmod.named_parameters(c))["stem.weight"]
    assert not np.array_equal(stem_a, stem_c)


def test_precision_controls_dtype():
    cfg = ArchConfig(2, 8, 1, c_in=1)
    assert dict(netmod.named_parameters(netmod.build(cfg, 0)))["stem.weight"].dtype == np.float32
    high = netmod.build(cfg, 0, precision="high")
    assert dict(netmod.named_parameters(high))["stem.weight"].dtype == np.float64
    out = netmod.forward(high, np.zeros((1, 1, 4, 4)))
    assert out.dtype == np.float64


def test_parameter_count_matches_analytic():
    for cfg, with_sca in ((ArchConfig(2, 8, 2, c_in=1), False),
                          (ArchConfig(3, 12, 1, c_in=4), True),
                          (ArchConfig(1, 4, 0, c_in=5), False)):
        network = netmod.build(cfg, seed=0, with_sca=with_sca)
        assert netmod.parameter_count(network) == am.params(cfg, with_sca=with_sca)


def test_fresh_network_is_stem_tail_shuffle():
    # Residual scales start at zero, so an untrained network must equal the
    # stem convolution followed by the tail convolution and the pixel
    # shuffle, with every block contributing exactly nothing.
    cfg = ArchConfig(2, 8, 3, c_in=1)
    network = netmod.build(cfg, seed=5)
    x = np.random.default_rng(0).standard_normal((2, 1, 8, 8)).astype(np.float32)
    got = netmod.forward(network, x)
    stem_out = ops.conv2d(x, network.stem.weight, network.stem.bias, network.stem.spec)
    tail_out = ops.conv2d(stem_out, network.tail.weight, network.tail.bias, network.tail.spec)
    want = ops.pixel_shuffle(tail_out, cfg.d)
    assert np.array_equal(got, want)


def test_forward_shapes_and_input_validation():
    cfg = ArchConfig(3, 8, 1, c_in=4)
    network = netmod.build(cfg, seed=0)
    out = netmod.forward(network, np.zeros((2, 4, 9, 12), np.float32))
    assert out.shape == (2, 3, 9, 12)
    with pytest.raises(ops.ShapeError):
        netmod.forward(network, np.zeros((1, 3, 9, 9), np.float32))
    with pytest.raises(ops.ShapeError):
        netmod.forward(network, np.zeros((1, 4, 10, 9), np.float32))


def make_trained_like_net(cfg, seed):
    """A build with residual scales knocked off zero so every branch is live."""
    network = netmod.build(cfg, seed=seed, precision="high")
    rng = np.random.default_rng(seed + 100)
    for name, p in netmod.named_parameters(network):
        if name.endswith("scale1") or name.endswith("scale2"):
            p[...] = rng.uniform(0.5, 1.5)
    return network


@pytest.mark.parametrize("with_sca", [False, True])
def test_backward_matches_finite_differences(with_sca):
    cfg = ArchConfig(2, 8, 2, c_in=1)
    network = netmod.build(cfg, seed=3, with_sca=with_sca, precision="high")
    rng = np.random.default_rng(1)
    for name, p in netmod.named_parameters(network):
        if name.endswith(("scale1", "scale2")):
            p[...] = rng.uniform(0.5, 1.5)
    x = rng.standard_normal((2, 1, 8, 8))
    ct = rng.standard_normal((2, 3, 8, 8))
    out, cache = netmod.forward_cached(network, x)
    grads, gx = netmod.backward(network, cache, ct)
    params = dict(netmod.named_parameters(network))
    assert set(grads) == set(params)
    probe = ["stem.weight", "block.0.conv1.weight", "block.0.dconv.weight",
             "block.1.norm1.gamma", "block.0.scale1", "block.1.scale2",
             "block.1.conv5.bias", "tail.weight", "tail.bias"]
    if with_sca:
        probe += ["block.0.sca.weight", "block.0.sca.bias"]
    for name in probe:
        p = params[name]
        def f(v, p=p):
            old = p.copy()
            p[...] = v
            val = float((netmod.forward(network, x) * ct).sum())
            p[...] = old
            return val
        err = ops.relative_error(np.asarray(grads[name]), ops.finite_difference_grad(f, p))
        assert err < 1e-6, name
    fx = ops.finite_difference_grad(lambda v: float((netmod.forward(network, v) * ct).sum()), x)
    assert ops.relative_error(gx, fx) < 1e-6


def test_gradients_match_shapes():
    cfg = ArchConfig(2, 8, 1, c_in=1)
    network = netmod.build(cfg, seed=0)
    x = np.zeros((1, 1, 4, 4), np.float32)
    out, cache = netmod.forward_cached(network, x)
    grads, gx = netmod.backward(network, cache, np.ones_like(out))
    for name, p in netmod.named_parameters(network):
        assert grads[name].shape == p.shape, name
    assert gx.shape == x.shape


def test_instrumented_counts_match_cost_model():
    for cfg in (ArchConfig(2, 16, 2, c_in=1), ArchConfig(1, 11, 1, c_in=5), ArchConfig(3, 12, 3)):
        network = netmod.build(cfg, seed=0)
        h = 48 if 48 % cfg.d == 0 else cfg.d * 16
        x = np.zeros((1, cfg.c_in, h, h), np.float32)
        with ops.count_ops() as counts:
            netmod.forward(network, x)
        rep = am.flops(cfg, h, h)
        assert counts.macs == rep.total_macs
        assert counts.elementwise == rep.elementwise_total


def test_checkpoint_round_trip(tmp_path):
    cfg = ArchConfig(2, 8, 2, c_in=4)
    network = make_trained_like_net(cfg, seed=9)
    path = tmp_path / "ckpt"
    netmod.save_checkpoint(network, path, step=123)
    loaded, manifest = netmod.load_checkpoint(path)
    assert manifest["step"] == 123
    assert loaded.config == cfg
    for (name_a, pa), (name_b, pb) in zip(netmod.named_parameters(network), netmod.named_parameters(loaded)):
        assert name_a == name_b
        assert pa.dtype == pb.dtype
        assert np.array_equal(pa, pb), name_a
    x = np.random.default_rng(0).standard_normal((1, 4, 8, 8))
    assert np.array_equal(netmod.forward(network, x), netmod.forward(loaded, x))


def test_checkpoint_manifest_lists_every_parameter(tmp_path):
    cfg = ArchConfig(2, 8, 1, c_in=1)
    network = netmod.build(cfg, seed=0, with_sca=True)
    netmod.save_checkpoint(network, tmp_path / "ckpt")
    manifest = json.loads((tmp_path / "ckpt" / "manifest.json").read_text())
    names = [name for name, _ in netmod.named_parameters(network)]
    assert manifest["parameters"] == names
    assert manifest["with_sca"] is True
    for name in names:
        assert (tmp_path / "ckpt" / f"{name}.tns").exists()


def test_load_checkpoint_rejects_missing_blob(tmp_path):
    cfg = ArchConfig(2, 8, 1, c_in=1)
    network = netmod.build(cfg, seed=0)
    netmod.save_checkpoint(network, tmp_path / "ckpt")
    (tmp_path / "ckpt" / "tail.bias.tns").unlink()
    with pytest.raises(FileNotFoundError):
        netmod.load_checkpoint(tmp_path / "ckpt")
