from __future__ import annotations

from typing import Callable

import numpy as np

from .params import ParamStore
from .tensor import Tensor

# Denominator floor. Central differences on an O(1) loss carry roughly
# eps_machine * |loss| / h ~ 1e-10 of rounding noise at h = 1e-5, so gradients
# smaller than the floor are effectively compared on an absolute scale.
REL_FLOOR = 1e-5


class NonFiniteLoss(FloatingPointError):
    pass


def _eval(fn, params) -> float:
    out = fn(params)
    val = float(out.data if isinstance(out, Tensor) else out)
    if not np.isfinite(val):
        raise NonFiniteLoss(f"loss is not finite: {val}")
    return val


def grad_check(
    fn: Callable[[ParamStore], Tensor],
    params: ParamStore,
    h: float = 1e-5,
    names: list[str] | None = None,
    floor: float = REL_FLOOR,
) -> float:
    """Worst relative error between backprop and central differences.

    ``fn`` maps the store to a scalar ``Tensor`` and must be deterministic.
    Every entry of every parameter (or of ``names``) is perturbed by ``±h``.
    """
    if not 1e-6 <= h <= 1e-4:
        raise ValueError("h must lie in [1e-6, 1e-4]")
    params.zero_grad()
    out = fn(params)
    if not np.isfinite(out.data).all():
        raise NonFiniteLoss("loss is not finite")
    out.backward()
    worst = 0.0
    for name in names or list(params):
        p = params[name]
        analytic = params.grad(name).copy()
        flat = p.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = _eval(fn, params)
            flat[i] = orig - h
            fm = _eval(fn, params)
            flat[i] = orig
            numeric = (fp - fm) / (2 * h)
            a = analytic.reshape(-1)[i]
            err = abs(a - numeric) / max(abs(a), abs(numeric), floor)
            worst = max(worst, err)
    params.zero_grad()
    return worst
