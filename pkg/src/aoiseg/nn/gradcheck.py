"""Finite-difference verification of the analytic backward pass."""

from __future__ import annotations

import numpy as np

from .network import QNetwork


def grad_check(
    net: QNetwork,
    state: np.ndarray,
    action_index: int,
    h: float = 1e-5,
    samples_per_tensor: int = 25,
    seed: int = 0,
) -> float:
    """Max relative error between analytic and central-difference gradients
    of q[action_index], over a random sample of parameters per tensor.

    The step is relative (h * max(1, |theta|)), suited to double precision.
    """
    x = state[None]
    q, cache = net.forward_cached(x)
    dq = np.zeros_like(q)
    dq[0, action_index] = 1.0
    analytic = net.backward(cache, dq)

    rng = np.random.default_rng(seed)
    params = net.params
    worst = 0.0
    offset = 0
    for name, shp in net._specs:
        size = int(np.prod(shp))
        count = min(samples_per_tensor, size)
        positions = offset + rng.choice(size, size=count, replace=False)
        for pos in positions:
            pos = int(pos)
            theta = params[pos]
            step = h * max(1.0, abs(theta))
            params[pos] = theta + step
            up = net.forward(x)[0, action_index]
            params[pos] = theta - step
            down = net.forward(x)[0, action_index]
            params[pos] = theta
            fd = (up - down) / (2.0 * step)
            a = analytic[pos]
            err = abs(a - fd) / max(1.0, abs(a), abs(fd))
            worst = max(worst, err)
        offset += size
    return worst
