"""Adam with bias correction, applied block-wise to :class:`LstmParams`."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .model import BLOCKS, LstmParams


@dataclass
class AdamState:
    m: LstmParams
    v: LstmParams
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def fresh(cls, p: LstmParams, **hyper) -> "AdamState":
        return cls(p.zeros_like(), p.zeros_like(), **hyper)


def adam_step(p: LstmParams, g: LstmParams, s: AdamState) -> tuple[LstmParams, AdamState]:
    """One update; returns new parameters and state, leaving the inputs untouched."""
    t = s.t + 1
    b1, b2 = s.beta1, s.beta2
    bc1 = 1.0 - b1**t
    bc2 = 1.0 - b2**t
    new_p, new_m, new_v = {}, {}, {}
    for name in BLOCKS:
        grad = getattr(g, name)
        m = b1 * getattr(s.m, name) + (1.0 - b1) * grad
        v = b2 * getattr(s.v, name) + (1.0 - b2) * (grad * grad)
        new_m[name], new_v[name] = m, v
        new_p[name] = getattr(p, name) - s.lr * (m / bc1) / (np.sqrt(v / bc2) + s.eps)
    return replace(p, **new_p), replace(s, m=replace(s.m, **new_m), v=replace(s.v, **new_v), t=t)
