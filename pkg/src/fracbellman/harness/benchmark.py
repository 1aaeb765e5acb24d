"""The 1D benchmark problem used by the regularity checks.

Three linear operators (constant, smooth odd, doubled constant kernel, each
with its own drift) combined by a pointwise minimum; the exterior data

    g(x, t) = (1 + sin(2t)/2) exp(-x^2) + sin(x + t) / (4 (1 + x^2))

are written as three separable modes so the solver can precompute them.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ..field import Exterior, Grid, SpaceTimeField
from ..kernels import OperatorFamily, make_kernel
from ..solver import SchemeConfig, solve

LAM, LAMBDA, BETA = 1.0, 2.0, 1.0
T_START, T_END = -1.5, 0.0
STORE_DT = 1 / 64
MEMBERS = (("const", 1.0, 0.5), ("smooth-odd(0.3)", 1.5, -0.3), ("const", 2.0, 0.0))


def benchmark_family(sigma: float, n: int = 1) -> OperatorFamily:
    ks = []
    for preset, scale, drift in MEMBERS:
        ks.append(make_kernel(preset, n, sigma, drift=[drift] + [0.0] * (n - 1), lam=LAM,
                              Lam=LAMBDA, beta=BETA, scale=scale))
    return OperatorFamily.finite(ks)


def benchmark_exterior(shift: float = 0.0) -> Exterior:
    modes = [
        (lambda t: 1.0 + 0.5 * math.sin(2 * t), lambda x: np.exp(-x[:, 0] ** 2)),
        (lambda t: 0.25 * math.cos(t), lambda x: np.sin(x[:, 0]) / (1 + x[:, 0] ** 2)),
        (lambda t: 0.25 * math.sin(t), lambda x: np.cos(x[:, 0]) / (1 + x[:, 0] ** 2)),
    ]
    if shift:
        modes.append((lambda t: shift, lambda x: np.ones(x.shape[0])))
    return Exterior.separable(modes, M=1.75 + abs(shift), label=f"benchmark(shift={shift:g})")


@dataclass(frozen=True)
class BenchmarkProblem:
    sigma: float
    grid: Grid
    family: OperatorFamily
    exterior: Exterior
    t0: float = T_START
    t1: float = T_END
    cfg: SchemeConfig = SchemeConfig(store_dt=STORE_DT)

    def initial(self, pts: np.ndarray) -> np.ndarray:
        return self.exterior(pts, self.t0)


def benchmark_problem(sigma: float, h: float = 1 / 128, R: float = 2.0,
                      shift: float = 0.0) -> BenchmarkProblem:
    return BenchmarkProblem(sigma, Grid(1, R, h), benchmark_family(sigma), benchmark_exterior(shift))


@lru_cache(maxsize=16)
def solve_benchmark(sigma: float, h: float = 1 / 128, R: float = 2.0,
                    shift: float = 0.0) -> SpaceTimeField:
    """Solved benchmark on ``[t0, t1]`` (cached per parameter set)."""
    p = benchmark_problem(sigma, h, R, shift)
    return solve(p.grid, p.initial, p.exterior, p.family, p.cfg, p.t0, p.t1)
