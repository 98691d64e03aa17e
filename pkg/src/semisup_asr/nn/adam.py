"""Adam optimizer and per-utterance gradient scaling / norm clipping."""

import numpy as np

from .params import ParamSet, ParamError


class NumericError(Exception):
    pass


class AdamState:
    def __init__(self, params, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = params.zeros_like()
        self.v = params.zeros_like()


def adam_step(params, grads, state, lr):
    """Standard bias-corrected Adam update; mutates params and state."""
    if lr <= 0:
        raise ParamError("lr must be positive")
    if not params.same_shapes(grads):
        raise ParamError("gradient names/shapes do not match parameters")
    for g in grads.entries.values():
        if not np.all(np.isfinite(g)):
            raise NumericError("non-finite gradient component; update aborted")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bias1 = 1.0 - b1 ** state.t
    bias2 = 1.0 - b2 ** state.t
    for name, g in grads.entries.items():
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        update = lr * (m / bias1) / (np.sqrt(v / bias2) + state.eps)
        params[name][...] -= update
    return params, state


def clip_gradients(grads, max_norm, num_utterances):
    """Scale grads by 1/num_utterances, then clip the global L2 norm."""
    if max_norm <= 0:
        raise ParamError("max_norm must be positive")
    if num_utterances < 1:
        raise ParamError("num_utterances must be >= 1")
    for g in grads.entries.values():
        g /= num_utterances
    norm = grads.global_norm()
    if not np.isfinite(norm):
        raise NumericError("non-finite gradient norm")
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads.entries.values():
            g *= scale
    return grads
