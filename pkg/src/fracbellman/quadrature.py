"""Singular quadrature for ``(2 - sigma) int delta u(x; y) K(y) / |y|^(n + sigma) dy``.

The rule has three regions:

* the central lattice cell ``[-h/2, h/2]^n``, handled by second differences
  with a compensation coefficient;
* the lattice cells ``y = j h`` (``j != 0``, ``|y| <= R_mid``), each weighted
  by the exact kernel mass of its cell;
* geometric radial shells from ``R_mid`` to ``R_tail`` with angular nodes.

The compensation coefficient is chosen so that the rule is exact on
quadratics: the central cell's second moment plus the second-moment defect
of the lattice cells inside the unit ball.  All weights are nonnegative for
``sigma >= 1``, which makes every scheme assembled from the rule monotone.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .kernels import KernelSpec, surface_area

R_TAIL = 1e3
SHELL_RATIO = 1.15
OUTER_ANGLES = 64


def _cell_moments_2d(centers: np.ndarray, h: float, sigma: float):
    """(mass, second moment) of ``(2-sigma)|y|^(-2-sigma)`` over square cells."""
    W = np.empty(centers.shape[0])
    S = np.empty(centers.shape[0])
    near = np.max(np.abs(centers), axis=1) <= 3.5 * h
    for mask, order in ((near, 16), (~near, 4)):
        if not mask.any():
            continue
        xg, wg = np.polynomial.legendre.leggauss(order)
        off = 0.5 * h * xg
        c = centers[mask]
        px = c[:, 0, None, None] + off[None, :, None]
        py = c[:, 1, None, None] + off[None, None, :]
        r2 = px ** 2 + py ** 2
        ww = np.multiply.outer(wg, wg) * (0.5 * h) ** 2
        W[mask] = np.einsum("cij,ij->c", r2 ** (-(2 + sigma) / 2), ww)
        S[mask] = np.einsum("cij,ij->c", r2 ** (-sigma / 2), ww)
    return (2 - sigma) * W, (2 - sigma) * S


def _central_moment(n: int, h: float, sigma: float) -> float:
    """``(2-sigma) int_{[-h/2,h/2]^n} |y|^(2-n-sigma) dy``."""
    if n == 1:
        return 2 * (h / 2) ** (2 - sigma)
    xg, wg = np.polynomial.legendre.leggauss(32)
    th = (math.pi / 8) * (xg + 1)
    return float(8 * (math.pi / 8) * np.sum(wg * (h / (2 * np.cos(th))) ** (2 - sigma)))


def _lattice_offsets(n: int, J: int, h: float, R_mid: float) -> np.ndarray:
    """Nonzero offsets with ``|j h| <= R_mid``, positive half first, then negatives."""
    rng = np.arange(-J, J + 1)
    if n == 1:
        pos = np.arange(1, J + 1)[:, None]
    else:
        grid = np.array(np.meshgrid(rng, rng, indexing="ij")).reshape(2, -1).T
        keep = np.linalg.norm(grid * h, axis=1) <= R_mid * (1 + 1e-12)
        first = (grid[:, 0] > 0) | ((grid[:, 0] == 0) & (grid[:, 1] > 0))
        pos = grid[keep & first]
    return np.concatenate([pos, -pos]).astype(np.int64)


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    n: int
    sigma: float
    h: float
    R_mid: float
    R_tail: float = R_TAIL
    shell_ratio: float = SHELL_RATIO
    angles: int = OUTER_ANGLES

    def __post_init__(self):
        if self.n not in (1, 2):
            raise DomainError("n must be 1 or 2")
        if not 0 < self.sigma < 2:
            raise DomainError("sigma must lie in (0, 2)")
        if self.R_mid < self.h or self.R_tail <= self.R_mid:
            raise DomainError("need h <= R_mid < R_tail")
        if self.n == 2 and self.angles % 2:
            raise DomainError("angular node count must be even")
        n, h, s = self.n, self.h, self.sigma
        J = int(math.floor(self.R_mid / h + 1e-9))
        offsets = _lattice_offsets(n, J, h, self.R_mid)
        y = offsets * h
        if n == 1:
            a = (np.abs(offsets[:, 0]) - 0.5) * h
            b = a + h
            W = (2 - s) * (a ** -s - b ** -s) / s
            S = b ** (2 - s) - a ** (2 - s)
        else:
            W, S = _cell_moments_2d(y.astype(float), h, s)
        r = np.linalg.norm(y, axis=1)
        inside = r < 1.0
        central = _central_moment(n, h, s)
        c_eff = (central + np.sum((S - W * r ** 2)[inside])) / (2 * n)
        if c_eff < 0:
            warnings.warn(f"compensation coefficient {c_eff:.3g} < 0 at sigma={s}; "
                          "clipped to 0 (rule no longer exact on quadratics)", stacklevel=2)
            c_eff = 0.0
        # outer shells
        r0 = (J + 0.5) * h if n == 1 else self.R_mid
        nsh = max(1, int(math.ceil(math.log(self.R_tail / r0) / math.log(self.shell_ratio))))
        edges = np.geomspace(r0, self.R_tail, nsh + 1)
        rad = np.sqrt(edges[:-1] * edges[1:])
        mass = (2 - s) * (edges[:-1] ** -s - edges[1:] ** -s) / s
        if n == 1:
            dirs = np.array([[1.0], [-1.0]])
            dw = np.array([1.0, 1.0])
        else:
            half = self.angles // 2
            th = np.concatenate([np.arange(half), np.arange(half) + half]) * 2 * np.pi / self.angles
            dirs = np.stack([np.cos(th), np.sin(th)], axis=1)
            dirs[half:] = -dirs[:half]
            dw = np.full(self.angles, 2 * np.pi / self.angles)
        outer_y = (dirs[:, None, :] * rad[None, :, None]).reshape(-1, n)
        outer_w = (dw[:, None] * mass[None, :]).reshape(-1)
        for name, val in (("lattice_offsets", offsets), ("lattice_y", y.astype(float)),
                          ("lattice_w", W), ("lattice_S", S), ("lattice_inside", inside),
                          ("inner_coef", float(c_eff)), ("inner_coef_analytic", central / (2 * n)),
                          ("outer_y", outer_y), ("outer_w", outer_w), ("outer_start", float(r0))):
            if isinstance(val, np.ndarray):
                val.setflags(write=False)
            object.__setattr__(self, name, val)
        if np.any(W < 0) or np.any(outer_w < 0):
            raise DomainError("quadrature weights must be nonnegative")

    @classmethod
    def for_grid(cls, grid, sigma: float, **kw) -> "QuadratureRule":
        """Rule with ``R_mid`` equal to the grid half-width."""
        return cls(grid.n, sigma, grid.h, kw.pop("R_mid", grid.R), **kw)

    @property
    def n_lattice_pairs(self) -> int:
        return self.lattice_offsets.shape[0] // 2

    @property
    def n_outer_pairs(self) -> int:
        return self.outer_y.shape[0] // 2

    def total_mass(self) -> float:
        return float(self.lattice_w.sum() + self.outer_w.sum())

    def analytic_mass(self) -> float:
        """``(2-sigma) int |y|^(-n-sigma) dy`` outside the central cell, up to ``R_tail``.

        In 2D the central cell is the square of side ``h``; the part of it
        outside the disk of radius ``h/2`` is integrated in polar form.
        """
        s, rho = self.sigma, self.h / 2
        mass = surface_area(self.n) * (rho ** -s - self.R_tail ** -s) / s
        if self.n == 2:
            x, w = np.polynomial.legendre.leggauss(32)
            th = (x + 1) * math.pi / 8
            corner = 8 * (math.pi / 8) * np.sum(w * (rho ** -s - (rho / np.cos(th)) ** -s)) / s
            mass -= corner
        return (2 - s) * mass

    def kernel_weights(self, k: KernelSpec):
        """Lattice and shell weights times ``K``, and ``K`` averaged on the inner shell."""
        if k.n != self.n or abs(k.sigma - self.sigma) > 1e-14:
            raise DomainError("kernel and rule disagree on n or sigma")
        wl = self.lattice_w * k(self.lattice_y)
        wo = self.outer_w * k(self.outer_y)
        probes = np.concatenate([np.eye(self.n), -np.eye(self.n)]) * (self.h / 2)
        kin = float(np.mean(k(probes)))
        for arr in (wl, wo):
            if not np.all(np.isfinite(arr)) or np.any(arr < 0):
                from .errors import InvalidKernelError
                raise InvalidKernelError(f"kernel {k.name!r} gives negative or non-finite weights")
        return wl, wo, kin

    def first_moment(self, wl: np.ndarray) -> np.ndarray:
        """``sum_{|y_j| < 1} w_j y_j``: the gradient compensation of the lattice."""
        return (wl[self.lattice_inside, None] * self.lattice_y[self.lattice_inside]).sum(axis=0)

    def tail_bound(self, Kmax: float, M: float, gamma: float, x_norm: float, u_x: float) -> float:
        """Bound on the contribution of ``|y| > R_tail``."""
        s, Rt = self.sigma, self.R_tail
        if gamma >= s:
            return math.inf
        # |u(x+y)| <= M (1 + 2^gamma |y|^gamma) once |y| >= R_tail >= |x|
        c0 = M + abs(u_x)
        c1 = M * 2 ** gamma * max(1.0, x_norm / Rt) ** gamma
        return (2 - s) * Kmax * surface_area(self.n) * (c0 * Rt ** -s / s + c1 * Rt ** (gamma - s) / (s - gamma))
