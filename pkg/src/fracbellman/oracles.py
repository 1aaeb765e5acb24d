"""Reference values computed independently of the quadrature rule."""
from __future__ import annotations

import math

import numpy as np

from .kernels import KernelSpec


def mu_closed_form(sigma: float, k: float = 1.0) -> float:
    """Fourier multiplier of the normalized operator on ``cos(k x)`` in 1D."""
    if k == 0:
        return 0.0
    return (2 - sigma) * math.pi * abs(k) ** sigma / (math.gamma(1 + sigma) * math.sin(math.pi * sigma / 2))


def mu_bruteforce(sigma: float, k: float = 1.0, nodes: int = 10_000_000,
                  delta: float = 1e-2, Y: float = 2000.0, chunk: int = 1_000_000) -> float:
    """``(2 - sigma) int_R (1 - cos(k y)) |y|^(-1-sigma) dy`` by brute force.

    Taylor series on ``(0, delta)``, a midpoint rule with ``nodes`` points on
    ``(delta, Y)`` and the leading terms of the oscillatory tail beyond ``Y``.
    """
    if k == 0:
        return 0.0
    k = abs(k)
    s = sigma
    head = 0.0
    for m in range(1, 6):
        head += (-1) ** (m + 1) * k ** (2 * m) * delta ** (2 * m - s) / (math.factorial(2 * m) * (2 * m - s))
    step = (Y - delta) / nodes
    body = 0.0
    for a in range(0, nodes, chunk):
        y = delta + step * (np.arange(a, min(a + chunk, nodes)) + 0.5)
        body += float(np.sum((1 - np.cos(k * y)) * y ** (-1 - s)))
    body *= step
    tail = Y ** -s / s + math.sin(k * Y) / (k * Y ** (1 + s))
    return 2 * (2 - s) * (head + body + tail)


def drift_integral_bruteforce(k: KernelSpec, r: float, nodes: int = 200_000) -> np.ndarray:
    """``b + (2 - sigma) int_{r < |y| < 1} y K(y) |y|^(-n-sigma) dy`` by midpoint sums.

    1D: uniform nodes in ``log |y|``.  2D: polar tensor grid.
    """
    s, n = k.sigma, k.n
    lo, hi = math.log(r), 0.0
    if n == 1:
        ds = (hi - lo) / nodes
        rad = np.exp(lo + ds * (np.arange(nodes) + 0.5))
        acc = 0.0
        for sign in (1.0, -1.0):
            y = sign * rad
            acc += float(np.sum(sign * rad * k(y[:, None]) * rad ** (-1 - s) * rad)) * ds
        return k.b + (2 - s) * np.array([acc])
    nr = int(math.sqrt(nodes))
    na = max(64, nr)
    ds = (hi - lo) / nr
    rad = np.exp(lo + ds * (np.arange(nr) + 0.5))
    th = 2 * math.pi * (np.arange(na) + 0.5) / na
    dirs = np.stack([np.cos(th), np.sin(th)], axis=1)
    acc = np.zeros(2)
    for r0 in rad:
        y = r0 * dirs
        # y K |y|^(-2-s) * (r dr dtheta), dr = r ds
        acc += (y * k(y)[:, None]).sum(axis=0) * r0 ** (-2 - s) * r0 * r0 * ds * (2 * math.pi / na)
    return k.b + (2 - s) * acc
