"""Diagonal Gaussian beliefs and the differentiable ops the losses use.

Every posterior and prior in the model family is a diagonal Gaussian held as
(mean, log_std) tensors of equal shape; batched beliefs stack along the
leading axis.  log_std is clamped to [-20, 5] before exponentiation as a
numerical guard (it does not bind in normal training).

All three operations are built from tape primitives, so their gradients are
exact compositions of the primitive adjoints.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .autodiff import (
    Tape,
    Tensor,
    add,
    clamp,
    constant,
    exp,
    mul,
    neg,
    scale,
    sub,
    sum_elems,
)

LOG_STD_MIN = -20.0
LOG_STD_MAX = 5.0
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)

__all__ = [
    "DiagGaussian",
    "LOG_STD_MIN",
    "LOG_STD_MAX",
    "gaussian_log_prob",
    "diag_gaussian_kl",
    "sample_reparameterized",
    "fixed_gaussian",
]


@dataclass
class DiagGaussian:
    """Diagonal Gaussian belief: mean and log-std tensors of equal shape."""

    mean: Tensor
    log_std: Tensor

    def __post_init__(self):
        if self.mean.data.shape != self.log_std.data.shape:
            raise ValueError(
                f"DiagGaussian: mean {self.mean.data.shape} and "
                f"log_std {self.log_std.data.shape} differ"
            )

    @property
    def dim(self) -> int:
        return self.mean.data.shape[-1]

    def std_values(self) -> np.ndarray:
        """Current std as plain numpy (clamped), for inspection."""
        return np.exp(np.clip(self.log_std.data, LOG_STD_MIN, LOG_STD_MAX))


def fixed_gaussian(mean, std) -> DiagGaussian:
    """Constant (non-trainable) diagonal Gaussian, e.g. N(0, sigma^2)."""
    mean = np.asarray(mean, dtype=np.float64)
    std = np.broadcast_to(np.asarray(std, dtype=np.float64), mean.shape)
    return DiagGaussian(constant(mean), constant(np.log(std)))


def _clamped_log_std(tape: Tape, dist: DiagGaussian) -> Tensor:
    return clamp(tape, dist.log_std, LOG_STD_MIN, LOG_STD_MAX)


def gaussian_log_prob(tape: Tape, x: Tensor, dist: DiagGaussian, axis=None) -> Tensor:
    """log N(x | mean, diag(std^2)) summed over ``axis`` (all dims if None).

    Per element: -1/2 log(2 pi) - log_std - (x - mean)^2 / (2 std^2).
    """
    if x.data.shape != dist.mean.data.shape:
        raise ValueError(
            f"gaussian_log_prob: x {x.data.shape} does not match mean {dist.mean.data.shape}"
        )
    ls = _clamped_log_std(tape, dist)
    z = mul(tape, sub(tape, x, dist.mean), exp(tape, neg(tape, ls)))
    quad = scale(tape, mul(tape, z, z), -0.5)
    per_elem = add(tape, sub(tape, quad, ls), constant(-_HALF_LOG_2PI))
    return sum_elems(tape, per_elem, axis=axis)


def diag_gaussian_kl(tape: Tape, q: DiagGaussian, p: DiagGaussian, axis=None) -> Tensor:
    """KL(q || p) for diagonal Gaussians, summed over ``axis``.

    Per element: log(sp/sq) + (sq^2 + (mq - mp)^2) / (2 sp^2) - 1/2; always >= 0.
    """
    if q.mean.data.shape != p.mean.data.shape:
        raise ValueError(
            f"diag_gaussian_kl: q {q.mean.data.shape} does not match p {p.mean.data.shape}"
        )
    lq = _clamped_log_std(tape, q)
    lp = _clamped_log_std(tape, p)
    inv_sp2 = exp(tape, scale(tape, lp, -2.0))
    sq2 = exp(tape, scale(tape, lq, 2.0))
    dmean = sub(tape, q.mean, p.mean)
    num = add(tape, sq2, mul(tape, dmean, dmean))
    per_elem = add(
        tape,
        sub(tape, lp, lq),
        add(tape, scale(tape, mul(tape, num, inv_sp2), 0.5), constant(-0.5)),
    )
    return sum_elems(tape, per_elem, axis=axis)


def sample_reparameterized(tape: Tape, dist: DiagGaussian, rng: np.random.Generator) -> Tensor:
    """mean + std * eps with eps ~ N(0, I); gradients flow to mean and log_std."""
    eps = rng.standard_normal(dist.mean.data.shape)
    std = exp(tape, _clamped_log_std(tape, dist))
    return add(tape, dist.mean, mul(tape, std, constant(eps)))
