"""Adam optimizer with bias correction.

Defaults follow the training setup used throughout: lr 3e-4, betas
(0.9, 0.999), eps 1e-8.  State holds one first/second moment accumulator per
named parameter; updates are applied in place on the parameter tensors.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor

__all__ = ["AdamState", "adam_step"]


@dataclass
class AdamState:
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    _scratch: dict = field(default_factory=dict, repr=False)


def adam_step(params: dict[str, Tensor], grads: dict[str, np.ndarray], state: AdamState) -> AdamState:
    """One Adam update over all named parameters; mutates params and state.

    Parameters absent from ``grads`` are treated as zero-gradient (their
    moments still decay, so a parameter never touched stays put).  Gradient
    arrays are read-only here; updates run in place on reusable scratch
    buffers because this is the hottest non-BLAS loop in training.
    """
    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for name, p in params.items():
        g = grads.get(name)
        if g is not None:
            g = np.asarray(g, dtype=np.float64)
            if g.shape != p.data.shape:
                raise ValueError(
                    f"adam_step: gradient shape {g.shape} does not match "
                    f"parameter {name!r} shape {p.data.shape}"
                )
        elif name not in state.m:
            # never had a gradient: moments are zero, update is exactly zero
            continue
        m = state.m.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            state.m[name] = m
            state.v[name] = np.zeros_like(p.data)
            state._scratch[name] = np.empty_like(p.data)
        v = state.v[name]
        tmp = state._scratch[name]
        m *= state.beta1
        v *= state.beta2
        if g is not None:
            np.multiply(g, 1.0 - state.beta1, out=tmp)
            m += tmp
            np.multiply(g, g, out=tmp)
            tmp *= 1.0 - state.beta2
            v += tmp
        np.divide(v, bc2, out=tmp)
        np.sqrt(tmp, out=tmp)
        tmp += state.eps
        np.divide(m, tmp, out=tmp)
        tmp *= state.lr / bc1
        p.data -= tmp
    return state
