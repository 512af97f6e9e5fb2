"""Independent reference implementations used to pin expected test values.

These deliberately avoid the package's own code paths: the Gaussian
references run in 50-digit decimal arithmetic, and the gradient reference is
a central finite difference on the loss callable.
"""

from decimal import Decimal, getcontext

import numpy as np

getcontext().prec = 50

# 2*pi to well over 50 digits
_TWO_PI = Decimal("6.283185307179586476925286766559005768394338798750211641949889")
_HALF_LOG_2PI = _TWO_PI.ln() / 2


def log_prob_reference(x: float, mu: float, sigma: float) -> float:
    """High-precision scalar Gaussian log density."""
    x, mu, sigma = Decimal(x), Decimal(mu), Decimal(sigma)
    z = (x - mu) / sigma
    return float(-_HALF_LOG_2PI - sigma.ln() - z * z / 2)


def kl_reference(mq: float, sq: float, mp: float, sp: float) -> float:
    """High-precision scalar Gaussian KL(q || p)."""
    mq, sq, mp, sp = Decimal(mq), Decimal(sq), Decimal(mp), Decimal(sp)
    d = mq - mp
    return float((sp / sq).ln() + (sq * sq + d * d) / (2 * sp * sp) - Decimal("0.5"))


def pearson(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    a = a - a.mean()
    b = b - b.mean()
    return float((a * b).sum() / np.sqrt((a * a).sum() * (b * b).sum()))


def finite_difference_grads(loss_fn, tensors, h=1e-5):
    """Central-difference gradient of ``loss_fn()`` w.r.t. each tensor's data.

    ``loss_fn`` must recompute the loss from the tensors' current data, so
    perturbing entries in place re-evaluates the whole graph.
    """
    out = []
    for t in tensors:
        flat = t.data.reshape(-1)
        g = np.empty_like(flat)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            fp = loss_fn()
            flat[i] = old - h
            fm = loss_fn()
            flat[i] = old
            g[i] = (fp - fm) / (2 * h)
        out.append(g.reshape(t.data.shape))
    return out


def max_rel_error(analytic, numeric, floor=1e-6):
    analytic = np.asarray(analytic).reshape(-1)
    numeric = np.asarray(numeric).reshape(-1)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom))


def spot_check_grads(loss_fn, named_tensors, rng, entries_per_tensor=4, h=1e-5, tol=1e-4):
    """Central-difference check on the dominant and random entries of each tensor.

    ``named_tensors`` maps names to tensors whose ``.grad`` is already
    populated; ``loss_fn`` re-evaluates the loss from current data.  Entries
    whose difference sits below the fd resolution floor (float64 roundoff of
    the loss over the 2h step) pass on the absolute criterion; everything
    else must agree to ``tol`` relative.
    """
    f0 = abs(loss_fn())
    atol = 50.0 * np.finfo(np.float64).eps * max(1.0, f0) / (2 * h)
    worst = ("", 0.0)
    for name, t in named_tensors.items():
        assert t.grad is not None, f"{name} has no gradient"
        flat = t.data.reshape(-1)
        gflat = np.asarray(t.grad).reshape(-1)
        order = np.argsort(-np.abs(gflat))
        top = order[: max(1, entries_per_tensor // 2)]
        extra = rng.choice(flat.size, size=min(entries_per_tensor, flat.size), replace=False)
        for i in dict.fromkeys([*top, *extra]):
            old = flat[i]
            flat[i] = old + h
            fp = loss_fn()
            flat[i] = old - h
            fm = loss_fn()
            flat[i] = old
            fd = (fp - fm) / (2 * h)
            diff = abs(fd - gflat[i])
            if diff <= atol:
                continue
            rel = diff / max(abs(fd), abs(gflat[i]))
            if rel > worst[1]:
                worst = (f"{name}[{i}]", rel)
            assert rel < tol, (
                f"{name}[{i}]: analytic {gflat[i]:.6g} vs fd {fd:.6g} "
                f"(rel {rel:.2e}, atol floor {atol:.2e})"
            )
    return worst
