"""U-Net with batch normalization and channel dropout.

The network is expressed functionally: :func:`build` returns a
:class:`ParameterSet` and :func:`forward` runs a batch through it. Each
encoder stage is (conv3x3 - BN - ReLU) twice followed by 2x2 max pooling;
the decoder upsamples with a stride-2 transposed convolution, concatenates
the matching encoder output after the upsampled features, and repeats the
double conv block. A 1x1 convolution and a sigmoid produce the probability
map.
"""

from collections import OrderedDict
from dataclasses import asdict, dataclass

import numpy as np

from . import functional as F
from .errors import ParameterError, ShapeError
from .tensor import Tensor

DROPOUT_SITES = ("deep-encoder-and-bottleneck", "all-blocks", "none")
_BUFFER_SUFFIXES = (".rmean", ".rvar")


@dataclass(frozen=True)
class UNetConfig:
    in_channels: int = 1
    out_channels: int = 1
    depth: int = 4
    base_channels: int = 64
    dropout_p: float = 0.5
    dropout_sites: str = "deep-encoder-and-bottleneck"
    bn_momentum: float = 0.1
    eps_bn: float = 1e-5

    def __post_init__(self):
        if self.depth < 1:
            raise ParameterError(f"depth must be >= 1, got {self.depth}")
        if self.base_channels < 1 or self.in_channels < 1 or self.out_channels < 1:
            raise ParameterError("channel counts must be >= 1")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ParameterError(f"dropout_p must be in [0, 1), got {self.dropout_p}")
        if self.dropout_sites not in DROPOUT_SITES:
            raise ParameterError(
                f"dropout_sites must be one of {DROPOUT_SITES}, got {self.dropout_sites!r}"
            )

    def stage_channels(self, i):
        """Channels of encoder/decoder stage ``i``; ``i == depth`` is the bottleneck."""
        return self.base_channels * 2 ** i

    def check_input_size(self, h, w):
        step = 2 ** self.depth
        if h % step or w % step:
            raise ShapeError(
                f"input {h}x{w} is not divisible by 2**depth = {step} (depth={self.depth})"
            )

    def to_dict(self):
        return asdict(self)


class ParameterSet:
    """Ordered, named collection of weights and batch-norm buffers.

    Iteration order: encoder stages shallow to deep, bottleneck, decoder
    stages deep to shallow, output head. ``*.rmean``/``*.rvar`` are running
    statistics; they are serialized with the weights but never trained.
    """

    def __init__(self, config, tensors):
        self.config = config
        self._tensors = OrderedDict(tensors)

    def __getitem__(self, name):
        return self._tensors[name]

    def __contains__(self, name):
        return name in self._tensors

    def __iter__(self):
        return iter(self._tensors)

    def __len__(self):
        return len(self._tensors)

    def names(self):
        return list(self._tensors)

    def items(self):
        return self._tensors.items()

    def trainable(self):
        return [(n, t) for n, t in self._tensors.items() if not n.endswith(_BUFFER_SUFFIXES)]

    def num_elements(self):
        return sum(t.data.size for t in self._tensors.values())

    def copy(self):
        tensors = OrderedDict()
        for name, t in self._tensors.items():
            tensors[name] = Tensor(t.data.copy(), requires_grad=t.requires_grad,
                                   dtype=t.data.dtype)
        return ParameterSet(self.config, tensors)

    def astype(self, dtype):
        out = self.copy()
        for t in out._tensors.values():
            t.data = t.data.astype(dtype)
        return out

    def bn_state(self, prefix):
        c = self.config
        return F.BatchNormState(
            gamma=self[prefix + ".gamma"],
            beta=self[prefix + ".beta"],
            running_mean=self[prefix + ".rmean"],
            running_var=self[prefix + ".rvar"],
            momentum=c.bn_momentum,
            eps_bn=c.eps_bn,
        )

    def equals(self, other):
        """Bitwise equality of names, shapes and data."""
        if self.names() != other.names():
            return False
        return all(
            a.data.dtype == b.data.dtype and a.shape == b.shape
            and a.data.tobytes() == b.data.tobytes()
            for a, b in zip(self._tensors.values(), other._tensors.values())
        )


def parameter_shapes(config):
    """Canonical (name, shape) list for a configuration."""
    shapes = []

    def double_conv(prefix, cin, cout):
        shapes.append((f"{prefix}.conv1.w", (cout, cin, 3, 3)))
        shapes.append((f"{prefix}.conv1.b", (cout,)))
        for field in ("gamma", "beta", "rmean", "rvar"):
            shapes.append((f"{prefix}.bn1.{field}", (cout,)))
        shapes.append((f"{prefix}.conv2.w", (cout, cout, 3, 3)))
        shapes.append((f"{prefix}.conv2.b", (cout,)))
        for field in ("gamma", "beta", "rmean", "rvar"):
            shapes.append((f"{prefix}.bn2.{field}", (cout,)))

    cin = config.in_channels
    for i in range(config.depth):
        cout = config.stage_channels(i)
        double_conv(f"enc{i}", cin, cout)
        cin = cout
    double_conv("bottleneck", cin, config.stage_channels(config.depth))
    for i in reversed(range(config.depth)):
        deeper = config.stage_channels(i + 1)
        cout = config.stage_channels(i)
        shapes.append((f"dec{i}.up.w", (deeper, cout, 2, 2)))
        shapes.append((f"dec{i}.up.b", (cout,)))
        double_conv(f"dec{i}", 2 * cout, cout)
    shapes.append(("out.w", (config.out_channels, config.base_channels, 1, 1)))
    shapes.append(("out.b", (config.out_channels,)))
    return shapes


def _fan_in(name, shape):
    if name.endswith("up.w"):
        return shape[0]
    return int(np.prod(shape[1:]))


def build(config, seed=0):
    """Fresh parameters: He-normal conv weights, zero biases, BN gamma=1/beta=0."""
    rng = np.random.default_rng(seed)
    tensors = OrderedDict()
    for name, shape in parameter_shapes(config):
        leaf = name.rsplit(".", 1)[1]
        if leaf == "w":
            std = np.sqrt(2.0 / _fan_in(name, shape))
            data = rng.standard_normal(shape) * std
        elif leaf in ("gamma", "rvar"):
            data = np.ones(shape)
        else:
            data = np.zeros(shape)
        trainable = not name.endswith(_BUFFER_SUFFIXES)
        tensors[name] = Tensor(data.astype(np.float32), requires_grad=trainable)
    return ParameterSet(config, tensors)


def _dropout_here(config, stage):
    """``stage`` indexes encoder blocks 0..depth-1 and the bottleneck at depth."""
    if config.dropout_sites == "none" or config.dropout_p == 0.0:
        return False
    if config.dropout_sites == "all-blocks":
        return True
    return stage >= config.depth - 2


def _double_conv(params, prefix, x, mode):
    for j in (1, 2):
        x = F.conv2d(x, params[f"{prefix}.conv{j}.w"], params[f"{prefix}.conv{j}.b"])
        x = F.batchnorm2d(x, params.bn_state(f"{prefix}.bn{j}"), mode)
        x = F.relu(x)
    return x


def forward(params, batch, mode="eval", seed=0):
    """Probability map (N, out_channels, H, W) for a (N, in_channels, H, W) batch."""
    config = params.config
    if not isinstance(batch, Tensor):
        batch = Tensor(batch)
    if batch.ndim != 4 or batch.shape[1] != config.in_channels:
        raise ShapeError(
            f"expected batch (N, {config.in_channels}, H, W), got {batch.shape}"
        )
    config.check_input_size(*batch.shape[2:])
    if mode not in ("train", "eval"):
        raise ParameterError(f"mode must be 'train' or 'eval', got {mode!r}")
    rng = np.random.default_rng(seed) if mode == "train" else None

    skips = []
    x = batch
    for i in range(config.depth):
        x = _double_conv(params, f"enc{i}", x, mode)
        if _dropout_here(config, i):
            x = F.dropout2d(x, config.dropout_p, mode, rng)
        skips.append(x)
        x = F.maxpool2x2(x)
    x = _double_conv(params, "bottleneck", x, mode)
    if _dropout_here(config, config.depth):
        x = F.dropout2d(x, config.dropout_p, mode, rng)
    for i in reversed(range(config.depth)):
        up = F.conv_transpose2d(x, params[f"dec{i}.up.w"], params[f"dec{i}.up.b"])
        x = F.concat_channels(up, skips[i])
        x = _double_conv(params, f"dec{i}", x, mode)
        if config.dropout_sites == "all-blocks" and config.dropout_p > 0:
            x = F.dropout2d(x, config.dropout_p, mode, rng)
    logits = F.conv1x1(x, params["out.w"], params["out.b"])
    return F.sigmoid(logits)


def binarize(prob, threshold=0.5):
    """1 where ``prob >= threshold``, else 0, as uint8."""
    if not 0.0 <= threshold <= 1.0:
        raise ParameterError(f"threshold must be in [0, 1], got {threshold}")
    data = prob.data if isinstance(prob, Tensor) else np.asarray(prob)
    return (data >= threshold).astype(np.uint8)
