"""Bias-corrected Adam."""

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def adam_step(params, grads, state, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
    """Apply one Adam update in place.

    ``params`` and ``grads`` map parameter names to arrays. Missing gradients
    are treated as zero. The step counter advances once per call.
    """
    for name, g in grads.items():
        if g is not None and not np.all(np.isfinite(g)):
            bad = int(np.size(g) - np.count_nonzero(np.isfinite(g)))
            raise NumericError(
                f"non-finite gradient for parameter {name!r} "
                f"({bad} of {np.size(g)} entries) at step {state.t + 1}"
            )
    state.t += 1
    bc1 = 1.0 - beta1 ** state.t
    bc2 = 1.0 - beta2 ** state.t
    for name, theta in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(theta)
        if name not in state.m:
            state.m[name] = np.zeros_like(theta)
            state.v[name] = np.zeros_like(theta)
        if state.m[name].shape != theta.shape:
            raise ValueError(f"moment buffer shape mismatch for {name!r}")
        m = state.m[name]
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2
        theta -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(theta.dtype)
    return params, state


class Adam:
    """Adam over the trainable tensors of a :class:`~fvkit.unet.ParameterSet`."""

    def __init__(self, params, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.state = AdamState()

    def step(self):
        arrays = {name: t.data for name, t in self.params.trainable()}
        grads = {name: t.grad for name, t in self.params.trainable()}
        adam_step(arrays, grads, self.state, self.lr, self.beta1, self.beta2, self.eps)

    def zero_grad(self):
        for _, t in self.params.trainable():
            t.grad = None
