"""Central-difference gradient checking.

The checked function is evaluated on float64 tensors; the analytic
gradients come from a single :meth:`Tensor.backward` sweep and every input
element is then perturbed by ``+-h`` to build the numerical reference.
"""

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor, make_result


@dataclass
class GradCheckReport:
    max_rel_error: float
    per_input: dict = field(default_factory=dict)
    evaluations: int = 0

    def passed(self, tol=1e-3):
        return self.max_rel_error < tol


def relative_error(analytic, numeric, floor=1e-6):
    a = np.asarray(analytic, dtype=np.float64)
    b = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return np.abs(a - b) / denom


def grad_check(fn, inputs, h=1e-3, floor=1e-6, names=None):
    """Compare backward gradients of ``fn(*inputs)`` against central differences.

    ``fn`` must return a scalar Tensor and may be called many times; it has to
    be a pure function of the input data (seed any randomness inside it).
    """
    for t in inputs:
        t.requires_grad = True
        t.grad = None
    out = fn(*inputs)
    out.backward()
    analytic = [np.zeros_like(t.data) if t.grad is None else np.array(t.grad) for t in inputs]

    names = names or [f"input{i}" for i in range(len(inputs))]
    per_input = {}
    worst = 0.0
    evals = 1
    for name, t, a in zip(names, inputs, analytic):
        flat = t.data.reshape(-1)
        numeric = np.empty(flat.size, dtype=np.float64)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            f_plus = fn(*inputs).item()
            flat[i] = orig - h
            f_minus = fn(*inputs).item()
            flat[i] = orig
            numeric[i] = (f_plus - f_minus) / (2 * h)
            evals += 2
        err = float(relative_error(a.reshape(-1), numeric, floor).max(initial=0.0))
        per_input[name] = err
        worst = max(worst, err)
    return GradCheckReport(max_rel_error=worst, per_input=per_input, evaluations=evals)


def as_probe(array, requires_grad=True):
    """Float64 tensor for the reference path."""
    return Tensor(np.asarray(array, dtype=np.float64), requires_grad=requires_grad,
                  dtype=np.float64)


def _weighted_sum(x, weights):
    """Scalar ``sum(x * weights)`` so vector-valued ops can be checked."""
    w = np.asarray(weights, dtype=x.data.dtype)
    return make_result(np.asarray((x.data * w).sum(), dtype=x.data.dtype), (x,),
                       "weighted_sum", lambda g: (g * w,))


def _away_from_zero(rng, shape, margin=0.1):
    v = rng.uniform(margin, 1.0, size=shape)
    return v * rng.choice((-1.0, 1.0), size=shape)


def _spaced(rng, shape, gap=0.01):
    """Distinct values at least ``gap`` apart, so no max-pool tie is within reach of h."""
    n = int(np.prod(shape))
    return (rng.permutation(n) * gap - n * gap / 2).reshape(shape)


def standard_suite(seed=0, h=1e-5):
    """Gradient checks for every differentiable op plus a depth-1 U-Net.

    Returns an ordered ``{name: GradCheckReport}``. Inputs are drawn away
    from the kinks of relu/max-pool and from the loss clamp so central
    differences stay on one smooth piece. The end-to-end network cannot be
    steered that way, hence the small default step: in float64 ``h=1e-5``
    keeps round-off near 1e-11 while making a kink crossing unlikely.
    """
    from . import functional as F
    from .losses import dice_bce_loss
    from .unet import UNetConfig, build, forward

    rng = np.random.default_rng(seed)
    out = {}

    def probe(shape, scale=1.0):
        return as_probe(rng.standard_normal(shape) * scale)

    x, w, b = probe((2, 2, 5, 4)), probe((3, 2, 3, 3)), probe((3,))
    r = rng.standard_normal((2, 3, 5, 4))
    out["conv2d"] = grad_check(lambda x, w, b: _weighted_sum(F.conv2d(x, w, b), r),
                               [x, w, b], h, names=["x", "w", "b"])

    x, w, b = probe((2, 3, 3, 3)), probe((2, 3, 1, 1)), probe((2,))
    r = rng.standard_normal((2, 2, 3, 3))
    out["conv1x1"] = grad_check(lambda x, w, b: _weighted_sum(F.conv1x1(x, w, b), r),
                                [x, w, b], h, names=["x", "w", "b"])

    x, w, b = probe((2, 3, 2, 3)), probe((3, 2, 2, 2)), probe((2,))
    r = rng.standard_normal((2, 2, 4, 6))
    out["conv_transpose2d"] = grad_check(
        lambda x, w, b: _weighted_sum(F.conv_transpose2d(x, w, b), r),
        [x, w, b], h, names=["x", "w", "b"])

    x = probe((3, 2, 3, 3))
    gamma = as_probe(rng.uniform(0.5, 1.5, 2))
    beta = probe((2,))
    r = rng.standard_normal((3, 2, 3, 3))

    def bn(x, gamma, beta):
        state = F.BatchNormState(gamma, beta, as_probe(np.zeros(2), False),
                                 as_probe(np.ones(2), False))
        return _weighted_sum(F.batchnorm2d(x, state, "train"), r)

    out["batchnorm2d"] = grad_check(bn, [x, gamma, beta], h, names=["x", "gamma", "beta"])

    x = as_probe(_away_from_zero(rng, (2, 3, 4)))
    r = rng.standard_normal((2, 3, 4))
    out["relu"] = grad_check(lambda x: _weighted_sum(F.relu(x), r), [x], h, names=["x"])

    x = probe((2, 3, 4), scale=3.0)
    out["sigmoid"] = grad_check(lambda x: _weighted_sum(F.sigmoid(x), r), [x], h, names=["x"])

    x = as_probe(_spaced(rng, (2, 2, 4, 4)))
    r = rng.standard_normal((2, 2, 2, 2))
    out["maxpool2x2"] = grad_check(lambda x: _weighted_sum(F.maxpool2x2(x), r), [x], h,
                                   names=["x"])

    target = as_probe((rng.random((2, 1, 4, 4)) < 0.4).astype(np.float64), False)
    yhat = as_probe(rng.uniform(0.05, 0.95, (2, 1, 4, 4)))
    out["dice_bce_loss"] = grad_check(lambda p: dice_bce_loss(target, p), [yhat], h,
                                      names=["yhat"])

    cfg = UNetConfig(depth=1, base_channels=1, dropout_p=0.0)
    params = build(cfg, seed).astype(np.float64)
    names = [n for n, _ in params.trainable()]
    tensors = [params[n] for n in names]
    image = as_probe(rng.random((2, 1, 4, 4)))
    mask = as_probe((rng.random((2, 1, 4, 4)) < 0.3).astype(np.float64), False)

    def unet_loss(image, *_):
        return dice_bce_loss(mask, forward(params, image, "train"))

    out["unet_depth1"] = grad_check(unet_loss, [image] + tensors, h, names=["image"] + names)
    return out
