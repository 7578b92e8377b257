"""Adam with bias correction.

State is keyed by parameter name so it serializes into checkpoints and
survives layer freezing: a frozen layer's parameters are simply not passed
to adam_step, leaving its moments and values untouched.
"""

import numpy as np

from .errors import UsageError


class AdamState:
    def __init__(self, params, lr=2e-4, beta1=0.5, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}


def adam_step(params, grads, state):
    """One Adam update over ``params`` (name -> Tensor) with ``grads``
    (name -> array). Returns (params, state); both are updated in place."""
    for name in params:
        if name not in grads or grads[name] is None:
            raise UsageError(f"missing gradient for trainable parameter {name!r}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.t
    bc2 = 1.0 - b2 ** state.t
    for name, p in params.items():
        g = grads[name]
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p.data -= (state.lr / bc1) * m / (np.sqrt(v / bc2) + state.eps)
    return params, state


def collect_grads(params):
    """Pull .grad off each tensor, raising if any trainable grad is absent."""
    grads = {}
    for name, p in params.items():
        if p.grad is None:
            raise UsageError(f"parameter {name!r} has no gradient; run backward first")
        grads[name] = p.grad
    return grads
