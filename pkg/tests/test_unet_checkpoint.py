import numpy as np
import pytest
from hypothesis import given, strategies as st

from fvkit.checkpoint import (MAGIC, checkpoint_bytes, load_checkpoint, parse_checkpoint,
                              save_checkpoint)
from fvkit.errors import CheckpointError, CorruptCheckpointError, ParameterError, ShapeError
from fvkit.gradcheck import grad_check, relative_error
from fvkit.losses import dice_bce_loss
from fvkit.tensor import Tensor
from fvkit.unet import UNetConfig, binarize, build, forward, parameter_shapes

from oracles import parameter_count


def test_channel_ladder_default():
    cfg = UNetConfig()
    assert [cfg.stage_channels(i) for i in range(cfg.depth)] == [64, 128, 256, 512]
    assert cfg.stage_channels(cfg.depth) == 1024
    shapes = dict(parameter_shapes(cfg))
    assert shapes["bottleneck.conv2.w"] == (1024, 1024, 3, 3)
    assert shapes["dec0.up.w"] == (128, 64, 2, 2)


@pytest.mark.parametrize("depth,base", [(1, 1), (2, 8), (3, 4), (4, 64)])
def test_parameter_count_matches_oracle(depth, base):
    total = sum(int(np.prod(s)) for _, s in parameter_shapes(UNetConfig(depth=depth, base_channels=base)))
    assert total == parameter_count(depth, base)


def test_depth1_base1_count():
    assert build(UNetConfig(depth=1, base_channels=1)).num_elements() == 150


def test_parameter_order_and_names():
    names = build(UNetConfig(depth=2, base_channels=2)).names()
    assert names[:6] == ["enc0.conv1.w", "enc0.conv1.b", "enc0.bn1.gamma", "enc0.bn1.beta",
                         "enc0.bn1.rmean", "enc0.bn1.rvar"]
    assert names.index("enc1.conv1.w") < names.index("bottleneck.conv1.w") \
        < names.index("dec1.up.w") < names.index("dec0.up.w") < names.index("out.w")
    assert names[-2:] == ["out.w", "out.b"]


def test_build_is_seeded():
    cfg = UNetConfig(depth=2, base_channels=4)
    assert build(cfg, 3).equals(build(cfg, 3))
    assert not build(cfg, 3).equals(build(cfg, 4))


def test_he_init_statistics():
    params = build(UNetConfig(depth=2, base_channels=32), 0)
    w = params["enc1.conv2.w"].data
    assert w.std() == pytest.approx(np.sqrt(2 / (64 * 9)), rel=0.05)
    assert not params["enc1.conv2.b"].data.any()
    assert np.all(params["enc1.bn1.gamma"].data == 1)


@pytest.mark.parametrize("depth,size", [(1, 16), (2, 16), (3, 24), (4, 32)])
def test_forward_shape_and_range(depth, size):
    params = build(UNetConfig(depth=depth, base_channels=2), 0)
    out = forward(params, Tensor(np.random.default_rng(0).random((2, 1, size, size))), "eval")
    assert out.shape == (2, 1, size, size)
    assert np.all((out.data > 0) & (out.data < 1))


def test_forward_zero_input_finite():
    params = build(UNetConfig(depth=2, base_channels=4), 0)
    out = forward(params, Tensor(np.zeros((1, 1, 16, 16))), "eval").data
    assert np.all(np.isfinite(out)) and np.all((out > 0) & (out < 1))


def test_forward_indivisible_size_names_requirement():
    params = build(UNetConfig(depth=3, base_channels=1), 0)
    with pytest.raises(ShapeError, match="divisible by 2\\*\\*depth = 8"):
        forward(params, Tensor(np.zeros((1, 1, 12, 16))))


def test_eval_forward_is_pure():
    params = build(UNetConfig(depth=2, base_channels=4), 0)
    x = Tensor(np.random.default_rng(1).random((1, 1, 16, 16)))
    before = {n: t.data.copy() for n, t in params.items()}
    a, b = forward(params, x, "eval").data, forward(params, x, "eval").data
    assert a.tobytes() == b.tobytes()
    assert all(np.array_equal(before[n], t.data) for n, t in params.items())


def test_dropout_seed_changes_train_output_only():
    params = build(UNetConfig(depth=2, base_channels=4, dropout_p=0.5), 0)
    x = Tensor(np.random.default_rng(1).random((2, 1, 16, 16)))
    a = forward(params.copy(), x, "train", seed=1).data
    b = forward(params.copy(), x, "train", seed=2).data
    c = forward(params.copy(), x, "train", seed=1).data
    assert not np.array_equal(a, b) and np.array_equal(a, c)


def test_end_to_end_float32_gradient():
    """Float32 network gradients against float64 central differences."""
    cfg = UNetConfig(depth=1, base_channels=2, dropout_p=0.0)
    params32 = build(cfg, 5)
    g = np.random.default_rng(5)
    x = g.random((2, 1, 16, 16))
    y = (g.random((2, 1, 16, 16)) < 0.3).astype(np.float64)
    forward_loss = dice_bce_loss(Tensor(y), forward(params32, Tensor(x), "train"))
    forward_loss.backward()
    params64 = params32.astype(np.float64)
    names = [n for n, _ in params64.trainable()]
    tensors = [params64[n] for n in names]
    rep = grad_check(lambda *_: dice_bce_loss(Tensor(y, dtype=np.float64),
                                             forward(params64, Tensor(x, dtype=np.float64), "train")),
                     tensors, h=1e-5, names=names)
    assert rep.passed(1e-3)
    worst = 0.0
    for n in names:
        analytic32 = params32[n].grad
        analytic64 = params64[n].grad
        worst = max(worst, float(relative_error(analytic32, analytic64, floor=1e-4).max()))
    assert worst < 1e-2


def test_binarize():
    np.testing.assert_array_equal(binarize(np.array([0.49, 0.5, 0.51])), [0, 1, 1])
    assert not binarize(np.zeros(4)).any()
    assert binarize(np.zeros(4), 0.0).all()
    with pytest.raises(ParameterError):
        binarize(np.zeros(2), 1.5)


# -- checkpoints ---------------------------------------------------------------------

def test_checkpoint_roundtrip(tmp_path):
    params = build(UNetConfig(depth=2, base_channels=3), 9)
    path = save_checkpoint(params, str(tmp_path / "m.fvk"), step=17, meta={"k": 1})
    loaded, header = load_checkpoint(path, with_header=True)
    assert loaded.equals(params) and header["step"] == 17 and header["meta"] == {"k": 1}
    x = Tensor(np.random.default_rng(0).random((1, 1, 8, 8)))
    assert forward(params, x).data.tobytes() == forward(loaded, x).data.tobytes()
    with open(path, "rb") as fh:
        assert fh.read(8) == MAGIC


@given(seed=st.integers(0, 1000), depth=st.integers(1, 2), base=st.integers(1, 3))
def test_checkpoint_bytes_lossless(seed, depth, base):
    params = build(UNetConfig(depth=depth, base_channels=base), seed)
    blob = checkpoint_bytes(params)
    assert checkpoint_bytes(parse_checkpoint(blob)[0]) == blob


def test_checkpoint_bad_magic():
    with pytest.raises(CheckpointError, match="magic"):
        parse_checkpoint(b"NOTACKPT" + b"\0" * 16)


def test_checkpoint_truncated():
    blob = checkpoint_bytes(build(UNetConfig(depth=1, base_channels=1)))
    with pytest.raises(CorruptCheckpointError):
        parse_checkpoint(blob[:-3])


def test_checkpoint_tampered_shape_names_parameter():
    blob = checkpoint_bytes(build(UNetConfig(depth=1, base_channels=1)))
    tampered = blob.replace(b'["enc0.conv1.b",[1]]', b'["enc0.conv1.b",[2]]')
    assert tampered != blob
    with pytest.raises(CorruptCheckpointError, match="enc0.conv1.b"):
        parse_checkpoint(tampered)
