"""Finite-difference verification of tape gradients."""

from __future__ import annotations

from typing import Callable

import numpy as np

from ..errors import ConfigError, ShapeError
from .params import ParamSet
from .tensor import Tensor, no_grad


def grad_check(
    f: Callable[[ParamSet], Tensor],
    params: ParamSet,
    h: float = 1e-5,
    mode: str = "element",
) -> float:
    """Compare tape gradients of a scalar function against central differences.

    ``mode="element"`` returns the worst per-element relative error,
    |ga - gn| / max(1e-8, |ga| + |gn|).  ``mode="norm"`` returns the
    error of the full gradient vector, ||ga - gn|| / (||ga|| + ||gn||),
    which is robust to elements whose true gradient sits below the
    finite-difference noise floor (about machine-eps * |f| / h).  The
    function must be a pure function of the parameter values.
    """
    if mode not in ("element", "norm"):
        raise ConfigError(f"unknown grad_check mode {mode!r}")
    params.zero_grads()
    out = f(params)
    if out.size != 1:
        raise ShapeError("grad_check requires a scalar-valued function")
    out.backward()

    worst = 0.0
    diff_sq = 0.0
    ga_sq = 0.0
    gn_sq = 0.0
    for _, t in params.tensors():
        ga = t.grad if t.grad is not None else np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        ga_flat = ga.reshape(-1)
        for i in range(flat.size):
            saved = flat[i]
            with no_grad():
                flat[i] = saved + h
                hi = float(f(params).data.reshape(()))
                flat[i] = saved - h
                lo = float(f(params).data.reshape(()))
            flat[i] = saved
            gn = (hi - lo) / (2.0 * h)
            diff_sq += (ga_flat[i] - gn) ** 2
            ga_sq += ga_flat[i] ** 2
            gn_sq += gn**2
            rel = abs(ga_flat[i] - gn) / max(1e-8, abs(ga_flat[i]) + abs(gn))
            if rel > worst:
                worst = rel
    if mode == "norm":
        denom = np.sqrt(ga_sq) + np.sqrt(gn_sq)
        return float(np.sqrt(diff_sq) / max(1e-12, denom))
    return worst
