"""Functional Adam: state in, state out, no mutation.

Callers keep a dict of named parameter arrays and a matching AdamState;
one call to adam_step advances both. The update is order-independent
across names, so permuting the dict between calls cannot change results.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class AdamState:
    """Per-parameter first/second moment estimates plus the shared step count."""

    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0

    @classmethod
    def init(cls, params):
        m = {k: np.zeros_like(p) for k, p in params.items()}
        v = {k: np.zeros_like(p) for k, p in params.items()}
        return cls(m=m, v=v, t=0)


def adam_step(params, grads, state, lr=0.01, beta1=0.9, beta2=0.999, eps=1e-8):
    """One Adam update. Returns (new params, new state); inputs untouched.

    Bias correction uses the incremented step count, so the very first call
    already applies the standard 1/(1-beta^1) warmup scaling.
    """
    if set(grads) != set(params):
        missing = set(params) ^ set(grads)
        raise KeyError(f"adam_step: params/grads key mismatch: {sorted(missing)}")
    if set(state.m) != set(params):
        missing = set(params) ^ set(state.m)
        raise KeyError(f"adam_step: params/state key mismatch: {sorted(missing)}")

    t = state.t + 1
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    new_params, new_m, new_v = {}, {}, {}
    for k in params:
        p, gr = params[k], grads[k]
        if gr.shape != p.shape:
            raise ValueError(f"adam_step: grad shape {gr.shape} != param shape {p.shape} for '{k}'")
        m = beta1 * state.m[k] + (1.0 - beta1) * gr
        v = beta2 * state.v[k] + (1.0 - beta2) * (gr * gr)
        mhat = m / c1
        vhat = v / c2
        new_params[k] = p - lr * mhat / (np.sqrt(vhat) + eps)
        new_m[k] = m
        new_v[k] = v
    return new_params, AdamState(m=new_m, v=new_v, t=t)
