"""Central finite-difference verification of tape gradients."""

from __future__ import annotations

import numpy as np

from .autodiff import GradTape


def analytic_grads(fn, params):
    for p in params:
        p.grad = None
    with GradTape() as tape:
        loss = fn()
    tape.backward(loss)
    return float(loss.data), [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]


def finite_diff_check(fn, params, eps=1e-5, max_entries=None, rng=None):
    """Max over parameter entries of |analytic - numeric| / max(1, |analytic|, |numeric|).

    ``fn`` takes no arguments and rebuilds the scalar loss from the current
    parameter values. ``max_entries`` subsamples entries per parameter.
    """
    f0, grads = analytic_grads(fn, params)
    if not np.isfinite(f0):
        raise FloatingPointError("function is not finite at the probe point")
    worst = 0.0
    for p, g in zip(params, grads):
        if not isinstance(p.data, np.ndarray):
            p.data = np.array(p.data)   # numpy scalars would make ``flat`` a detached copy
        flat = p.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            rng = rng or np.random.default_rng(0)
            idx = rng.choice(flat.size, size=max_entries, replace=False)
        gflat = g.reshape(-1)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + eps
            fp = float(fn().data)
            flat[i] = orig - eps
            fm = float(fn().data)
            flat[i] = orig
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise FloatingPointError("function is not finite near the probe point")
            num = (fp - fm) / (2.0 * eps)
            err = abs(gflat[i] - num) / max(1.0, abs(gflat[i]), abs(num))
            worst = max(worst, err)
    return worst
