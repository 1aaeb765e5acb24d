"""Radial quintic cutoffs.

``smoothstep(s) = 6 s^5 - 15 s^4 + 10 s^3`` is monotone on ``[0, 1]`` with
vanishing first and second derivatives at both ends, so the cutoffs below
are C^2.
"""
from __future__ import annotations

import numpy as np

from ..errors import DomainError


def smoothstep(s) -> np.ndarray:
    s = np.clip(np.asarray(s, dtype=float), 0.0, 1.0)
    return s ** 3 * (10 - 15 * s + 6 * s ** 2)


def radial_cutoff(x, inner: float, outer: float) -> np.ndarray:
    """1 for ``|x| <= inner``, 0 for ``|x| >= outer``, quintic in between."""
    if not 0 <= inner < outer:
        raise DomainError("need 0 <= inner < outer")
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x.reshape(x.shape[0], -1), axis=1)
    return 1.0 - smoothstep((r - inner) / (outer - inner))


def phi(x) -> np.ndarray:
    """Bump with plateau ``B_{1/2}`` and support ``B_1``."""
    return radial_cutoff(x, 0.5, 1.0)


def psi(x, r1: float, r2: float) -> np.ndarray:
    """Bump equal to 1 on ``B_{r2}`` and vanishing outside ``B_{r1}`` (``r2 < r1``)."""
    return radial_cutoff(x, r2, r1)
