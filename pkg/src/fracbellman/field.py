"""Space-time grid functions, exterior data, and the norms used by the estimates."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import DomainError, NumericError, UnsupportedExteriorError
from .kernels import surface_area

R_TAIL = 1e3
HOLDER_PAIR_CAP = 40_000
_SNAP = 1e-9


# ---------------------------------------------------------------- geometry

@dataclass(frozen=True)
class Grid:
    """Uniform grid on ``[-R, R]^n``.

    Periodic grids hold ``2R/h`` nodes per axis (the right end is identified
    with the left end); otherwise both ends are nodes.
    """

    n: int
    R: float
    h: float
    periodic: bool = False

    def __post_init__(self):
        if self.n not in (1, 2):
            raise DomainError("only n = 1 and n = 2 are supported")
        if self.h <= 0 or self.R <= 0:
            raise DomainError("need h > 0 and R > 0")
        cells = 2 * self.R / self.h
        if abs(cells - round(cells)) > 1e-8 * cells:
            raise DomainError(f"2R/h = {cells} is not an integer")

    @property
    def cells(self) -> int:
        return int(round(2 * self.R / self.h))

    @property
    def N(self) -> int:
        return self.cells if self.periodic else self.cells + 1

    @property
    def shape(self) -> tuple:
        return (self.N,) * self.n

    @property
    def size(self) -> int:
        return self.N ** self.n

    @property
    def axis(self) -> np.ndarray:
        return -self.R + self.h * np.arange(self.N)

    def points(self) -> np.ndarray:
        """All node coordinates, shape (size, n), C order."""
        ax = self.axis
        mesh = np.meshgrid(*([ax] * self.n), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def multi_index(self) -> np.ndarray:
        idx = np.indices(self.shape).reshape(self.n, -1).T
        return idx

    def ravel(self, multi: np.ndarray) -> np.ndarray:
        return np.ravel_multi_index(tuple(np.asarray(multi).T), self.shape)

    def interior_mask(self) -> np.ndarray:
        """Nodes where the equation is imposed (all nodes when periodic)."""
        if self.periodic:
            return np.ones(self.size, dtype=bool)
        mi = self.multi_index()
        return np.all((mi > 0) & (mi < self.N - 1), axis=1)

    def node_index(self, x, tol: float = 1e-7) -> int:
        """Flat index of the node at ``x``; raises if ``x`` is not a node."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if x.shape != (self.n,):
            raise DomainError(f"point must have {self.n} coordinates")
        s = (x + self.R) / self.h
        i = np.rint(s)
        if np.any(np.abs(s - i) > tol):
            raise DomainError(f"point {tuple(x)} is not a grid node (h={self.h})")
        i = i.astype(int)
        if self.periodic:
            i %= self.N
        elif np.any(i < 0) or np.any(i >= self.N):
            raise DomainError(f"point {tuple(x)} lies outside the grid")
        return int(np.ravel_multi_index(tuple(i), self.shape))

    def inside(self, pts: np.ndarray) -> np.ndarray:
        if self.periodic:
            return np.ones(pts.shape[0], dtype=bool)
        eps = _SNAP * self.h
        return np.all(np.abs(pts) <= self.R + eps, axis=1)

    def lattice_stencil(self, pts: np.ndarray):
        """Multilinear interpolation stencil on the unbounded lattice ``-R + h Z^n``.

        Returns ``(multi, weight, in_box)``: corner multi-indices of shape
        ``(m, 2**n, n)``, their weights, and whether each corner is a grid
        node.  Corners outside the box are virtual nodes carrying exterior
        data, so sampling commutes with lattice shifts everywhere.  Points
        within ``_SNAP`` cells of a node snap to it.
        """
        pts = np.asarray(pts, dtype=float).reshape(-1, self.n)
        s = (pts + self.R) / self.h
        i0 = np.floor(s)
        frac = s - i0
        up = frac > 1 - _SNAP
        i0 = np.where(up, i0 + 1, i0).astype(np.int64)
        frac = np.where(up | (frac < _SNAP), 0.0, frac)
        corners = np.array(np.meshgrid(*([[0, 1]] * self.n), indexing="ij")).reshape(self.n, -1).T
        multi = i0[:, None, :] + corners[None]
        w = np.prod(np.where(corners[None] == 1, frac[:, None, :], 1 - frac[:, None, :]), axis=2)
        if self.periodic:
            multi %= self.N
            in_box = np.ones(w.shape, dtype=bool)
        else:
            in_box = np.all((multi >= 0) & (multi < self.N), axis=2)
        return multi, w, in_box

    def lattice_points(self, multi: np.ndarray) -> np.ndarray:
        return -self.R + self.h * np.asarray(multi, dtype=float)

    def wrap(self, pts: np.ndarray) -> np.ndarray:
        if not self.periodic:
            return pts
        L = 2 * self.R
        return (pts + self.R) % L - self.R


@dataclass(frozen=True)
class Cylinder:
    """Parabolic cylinder ``B_r(x) x (t - tau, t]``."""

    center: tuple = (0.0,)
    t: float = 0.0
    r: float = 1.0
    tau: float = 1.0

    def __post_init__(self):
        if self.r <= 0 or self.tau <= 0:
            raise DomainError("cylinder needs r > 0 and tau > 0")
        object.__setattr__(self, "center", tuple(float(c) for c in np.atleast_1d(self.center)))


@dataclass(frozen=True)
class TailWeight:
    n: int
    sigma: float

    def __call__(self, y) -> np.ndarray:
        r = np.linalg.norm(np.asarray(y, dtype=float).reshape(-1, self.n), axis=1)
        with np.errstate(divide="ignore", over="ignore"):
            return np.minimum(1.0, r ** (-(self.n + self.sigma)))


# ---------------------------------------------------------------- exterior data

ExteriorFn = Callable[[np.ndarray, float], np.ndarray]


@dataclass(frozen=True, eq=False)
class Exterior:
    """Data prescribed outside the grid box.

    ``kind`` is one of ``zero``, ``constant``, ``bounded``, ``growth``,
    ``periodic`` or ``unknown``.  Growth data satisfy
    ``|g(x, t)| <= M (1 + |x|^gamma)``.
    """

    kind: str
    fn: ExteriorFn | None = None
    c: float = 0.0
    M: float = 0.0
    gamma: float = 0.0
    static: bool = False
    label: str = ""
    modes: tuple | None = None

    @classmethod
    def zero(cls):
        return cls("zero", static=True, label="Zero")

    @classmethod
    def constant(cls, c: float):
        return cls("constant", c=float(c), M=abs(float(c)), static=True, label=f"Constant({c!r})")

    @classmethod
    def bounded(cls, g: ExteriorFn, M: float, label: str = "BoundedFn", static: bool = False):
        return cls("bounded", fn=g, M=float(M), static=static, label=label)

    @classmethod
    def growth(cls, g: ExteriorFn, gamma: float, M: float, label: str = "GrowthFn",
               static: bool = False):
        if gamma < 0:
            raise DomainError("growth exponent must be >= 0")
        return cls("growth", fn=g, M=float(M), gamma=float(gamma), static=static, label=label)

    @classmethod
    def separable(cls, modes, M: float, gamma: float = 0.0, label: str = "Separable"):
        """Data of the form ``sum_m a_m(t) g_m(x)`` given as ``(a_m, g_m)`` pairs.

        Solvers precompute the spatial parts once and only re-evaluate the
        time coefficients at each step.
        """
        modes = tuple((a, g) for a, g in modes)
        kind = "growth" if gamma > 0 else "bounded"
        return cls(kind, M=float(M), gamma=float(gamma), label=label, modes=modes)

    @classmethod
    def periodic(cls):
        return cls("periodic", static=False, label="Periodic")

    def __call__(self, x: np.ndarray, t: float) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        m = x.shape[0]
        if self.kind == "zero":
            return np.zeros(m)
        if self.kind == "constant":
            return np.full(m, self.c)
        if self.modes is not None:
            out = np.zeros(m)
            for a, g in self.modes:
                out += a(t) * np.asarray(g(x), dtype=float).reshape(m)
            return out
        if self.kind in ("bounded", "growth"):
            return np.asarray(self.fn(x, t), dtype=float).reshape(m)
        raise UnsupportedExteriorError(f"exterior {self.label!r} cannot be sampled directly")

    def check_integrable(self, sigma: float):
        if self.kind == "unknown":
            raise UnsupportedExteriorError("exterior data unknown: no tail representation")
        if self.gamma >= sigma:
            raise UnsupportedExteriorError(
                f"growth exponent {self.gamma} >= sigma={sigma}: not integrable against omega_sigma")

    def combine(self, other: "Exterior", a: float = 1.0, b: float = 1.0) -> "Exterior":
        """Exterior of ``a*u + b*v``."""
        if self.kind == "periodic" or other.kind == "periodic":
            if self.kind != other.kind:
                raise DomainError("cannot combine periodic and non-periodic fields")
            return self
        if self.kind == "zero" and other.kind == "zero":
            return self
        if self.kind in ("zero", "constant") and other.kind in ("zero", "constant"):
            return Exterior.constant(a * self.c + b * other.c)
        gamma = max(self.gamma, other.gamma)
        M = abs(a) * self.M + abs(b) * other.M
        ma, mb = self.as_modes(), other.as_modes()
        if ma is not None and mb is not None:
            modes = tuple((lambda t, f=f, a=a: a * f(t), g) for f, g in ma) + \
                tuple((lambda t, f=f, b=b: b * f(t), g) for f, g in mb)
            return Exterior.separable(modes, M, gamma, label=f"({a:g}*{self.label}+{b:g}*{other.label})")
        fn = lambda x, t: a * self(x, t) + b * other(x, t)
        kind = "growth" if gamma > 0 else "bounded"
        return Exterior(kind, fn=fn, M=M, gamma=gamma, static=self.static and other.static,
                        label=f"({a:g}*{self.label}+{b:g}*{other.label})")

    def as_modes(self):
        """Mode list for zero/constant/separable data, else None."""
        if self.kind == "zero":
            return ()
        if self.kind == "constant":
            c = self.c
            return ((lambda t: c, lambda x: np.ones(x.shape[0])),)
        return self.modes

    def scaled(self, a: float) -> "Exterior":
        if self.kind in ("zero", "periodic"):
            return self
        if self.kind == "constant":
            return Exterior.constant(a * self.c)
        if self.modes is not None:
            modes = tuple((lambda t, f=f: a * f(t), g) for f, g in self.modes)
            return replace(self, modes=modes, M=abs(a) * self.M, label=f"{a:g}*{self.label}")
        fn = self.fn
        return replace(self, fn=lambda x, t: a * fn(x, t), M=abs(a) * self.M,
                       label=f"{a:g}*{self.label}")


# ---------------------------------------------------------------- fields

@dataclass(frozen=True, eq=False)
class SpaceTimeField:
    """Grid values at stored times plus exterior data.

    ``values`` has shape ``(len(times), *grid.shape)``.  Sampling between
    stored times interpolates linearly in time.
    """

    grid: Grid
    times: np.ndarray
    values: np.ndarray
    exterior: Exterior
    sigma: float

    def __post_init__(self):
        times = np.atleast_1d(np.asarray(self.times, dtype=float))
        values = np.asarray(self.values, dtype=float)
        if values.shape == self.grid.shape and times.size == 1:
            values = values[None]
        if values.shape != (times.size,) + self.grid.shape:
            raise DomainError(f"values shape {values.shape} does not match "
                              f"{(times.size,) + self.grid.shape}")
        if not np.all(np.isfinite(values)):
            raise NumericError("field values must be finite")
        if times.size > 1 and np.any(np.diff(times) <= 0):
            raise DomainError("times must be strictly increasing")
        if self.grid.periodic != (self.exterior.kind == "periodic"):
            raise DomainError("periodic grids go with Periodic exterior and vice versa")
        values.setflags(write=False)
        times.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    # -- basic access
    @property
    def n(self) -> int:
        return self.grid.n

    @property
    def t1(self) -> float:
        return float(self.times[0])

    @property
    def t2(self) -> float:
        return float(self.times[-1])

    @property
    def dt(self) -> float:
        return float(np.min(np.diff(self.times))) if self.times.size > 1 else 0.0

    def time_index(self, t: float, tol: float = 1e-9):
        """Index of a stored time equal to ``t``, or None."""
        i = int(np.argmin(np.abs(self.times - t)))
        return i if abs(self.times[i] - t) <= tol * max(1.0, abs(t)) else None

    def flat(self, t: float) -> np.ndarray:
        """Grid values at time ``t`` as a flat vector."""
        i = self.time_index(t)
        if i is not None:
            return self.values[i].reshape(-1)
        if not self.times[0] <= t <= self.times[-1]:
            raise DomainError(f"time {t} outside stored range [{self.t1}, {self.t2}]")
        j = int(np.searchsorted(self.times, t))
        ta, tb = self.times[j - 1], self.times[j]
        s = (t - ta) / (tb - ta)
        return ((1 - s) * self.values[j - 1] + s * self.values[j]).reshape(-1)

    def sample(self, x, t: float) -> np.ndarray:
        """Values at arbitrary points ``x`` of shape (m, n)."""
        x = np.asarray(x, dtype=float).reshape(-1, self.n)
        flat = self.flat(t)
        g = self.grid
        multi, w, in_box = g.lattice_stencil(x)
        vals = np.zeros(w.shape)
        vals[in_box] = flat[g.ravel(multi[in_box])]
        virtual = ~in_box & (w > 0)
        if np.any(virtual):
            vals[virtual] = self.exterior(g.lattice_points(multi[virtual]), t)
        return np.einsum("mc,mc->m", vals, w)

    # -- arithmetic
    def with_values(self, values, exterior: Exterior | None = None, times=None) -> "SpaceTimeField":
        return SpaceTimeField(self.grid, self.times if times is None else times, values,
                              self.exterior if exterior is None else exterior, self.sigma)

    def _check_compatible(self, other):
        if other.grid != self.grid or other.times.shape != self.times.shape or \
                not np.allclose(other.times, self.times):
            raise DomainError("fields live on different grids or time levels")

    def __add__(self, other):
        if isinstance(other, SpaceTimeField):
            self._check_compatible(other)
            return self.with_values(self.values + other.values, self.exterior.combine(other.exterior))
        return self.with_values(self.values + other,
                                self.exterior.combine(Exterior.constant(other))
                                if self.exterior.kind != "periodic" else None)

    def __sub__(self, other):
        if isinstance(other, SpaceTimeField):
            self._check_compatible(other)
            return self.with_values(self.values - other.values,
                                    self.exterior.combine(other.exterior, 1.0, -1.0))
        return self + (-other)

    def __mul__(self, a: float):
        return self.with_values(a * self.values, self.exterior.scaled(a))

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def at_times(self, indices) -> "SpaceTimeField":
        idx = np.atleast_1d(indices)
        return self.with_values(self.values[idx], times=self.times[idx])


def field_from_function(grid: Grid, times, fn, exterior: Exterior | None = None,
                        sigma: float = 1.5) -> SpaceTimeField:
    """Sample ``fn(points, t)`` on every stored time.

    When ``exterior`` is omitted the same function is used outside the box
    (as bounded data with ``M`` estimated from the box values).
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    pts = grid.points()
    vals = np.stack([np.asarray(fn(pts, t), dtype=float).reshape(grid.shape) for t in times])
    if exterior is None:
        exterior = Exterior.periodic() if grid.periodic else \
            Exterior.bounded(fn, float(np.abs(vals).max()), label="same-function")
    return SpaceTimeField(grid, times, vals, exterior, sigma)


# ---------------------------------------------------------------- norms

def _box_weights(grid: Grid) -> np.ndarray:
    """Trapezoid weights integrating over the box (one period if periodic)."""
    w1 = np.full(grid.N, grid.h)
    if not grid.periodic:
        w1[0] = w1[-1] = grid.h / 2
    w = w1
    for _ in range(grid.n - 1):
        w = np.multiply.outer(w, w1)
    return w.reshape(-1)


def _tail_nodes(grid: Grid, sigma: float, ratio: float = 1.1, gauss: int = 6,
                angles: int = 64, r_tail: float = R_TAIL):
    """Quadrature nodes for ``int_{box^c, |y| < r_tail} f(y) omega_sigma(y) dy``."""
    xg, wg = np.polynomial.legendre.leggauss(gauss)
    R = grid.R
    if grid.n == 1:
        dirs = np.array([[1.0], [-1.0]])
        dth = np.array([1.0, 1.0])
        rstart = np.array([R, R])
    else:
        th = 2 * np.pi * (np.arange(angles) + 0.5) / angles
        dirs = np.stack([np.cos(th), np.sin(th)], axis=1)
        dth = np.full(angles, 2 * np.pi / angles)
        rstart = R / np.max(np.abs(dirs), axis=1)
    pts, wts = [], []
    for d, a, r0 in zip(dirs, dth, rstart):
        npan = max(1, int(math.ceil(math.log(r_tail / r0) / math.log(ratio))))
        edges = np.geomspace(r0, r_tail, npan + 1)
        lo, hi = np.log(edges[:-1]), np.log(edges[1:])
        s = (0.5 * (hi - lo)[:, None] * xg[None] + 0.5 * (hi + lo)[:, None]).ravel()
        ws = (0.5 * (hi - lo)[:, None] * wg[None]).ravel()
        r = np.exp(s)
        omega = np.minimum(1.0, r ** (-(grid.n + sigma)))
        pts.append(r[:, None] * d[None])
        wts.append(ws * r ** grid.n * omega * a)
    return np.concatenate(pts), np.concatenate(wts)


def _tail_remainder(ext: Exterior, sigma: float, n: int, field_max: float, r_tail: float = R_TAIL):
    """(exact addend, error bar) for ``|y| > r_tail``."""
    surf = surface_area(n)
    if ext.kind == "zero":
        return 0.0, 0.0
    if ext.kind == "constant":
        return abs(ext.c) * surf * r_tail ** (-sigma) / sigma, 0.0
    if ext.kind == "periodic":
        return 0.0, field_max * surf * r_tail ** (-sigma) / sigma
    ext.check_integrable(sigma)
    bar = ext.M * surf * (r_tail ** (-sigma) / sigma + r_tail ** (ext.gamma - sigma) / (sigma - ext.gamma))
    return 0.0, bar


class _WeightedL1:
    """Precomputed interior and tail samples for repeated weighted-L1 norms."""

    def __init__(self, u: SpaceTimeField):
        self.u = u
        g = u.grid
        if u.exterior.kind != "periodic":
            u.exterior.check_integrable(u.sigma)
        self.w_box = _box_weights(g) * TailWeight(g.n, u.sigma)(g.points())
        self.tail_pts, self.w_tail = _tail_nodes(g, u.sigma)
        self._tail_cache = {}

    def interior(self, i: int) -> np.ndarray:
        return self.u.values[i].reshape(-1)

    def tail(self, i: int) -> np.ndarray:
        if i not in self._tail_cache:
            t = float(self.u.times[i])
            if self.u.exterior.kind == "periodic":
                vals = self.u.sample(self.tail_pts, t)
            elif self.u.exterior.static and self._tail_cache:
                vals = next(iter(self._tail_cache.values()))
            else:
                vals = self.u.exterior(self.tail_pts, t)
            self._tail_cache[i] = vals
        return self._tail_cache[i]

    def norm(self, i: int, other: int | None = None):
        a = self.interior(i)
        ta = self.tail(i)
        if other is not None:
            a = a - self.interior(other)
            ta = ta - self.tail(other)
        return float(np.abs(a) @ self.w_box + np.abs(ta) @ self.w_tail)


def weighted_l1(u: SpaceTimeField, t: float, with_error: bool = False):
    """``int |u(y, t)| omega_sigma(y) dy`` over all of R^n.

    Interior: trapezoid sum over the box.  Exterior: geometric shells out to
    ``|y| = 1e3``; beyond that the integral is added exactly for constant data
    and otherwise reported as an error bar (``with_error=True``).
    """
    if not (u.t1 - 1e-12 <= t <= u.t2 + 1e-12):
        raise DomainError(f"time {t} outside ({u.t1}, {u.t2}]")
    i = u.time_index(t)
    if i is None:
        single = u.with_values(u.flat(t).reshape(u.grid.shape)[None], times=[t])
        return weighted_l1(single, t, with_error)
    w = _WeightedL1(u)
    val = w.norm(i)
    add, bar = _tail_remainder(u.exterior, u.sigma, u.n, float(np.abs(u.values[i]).max()))
    val += add
    return (val, bar) if with_error else val


def time_lipschitz_seminorm(u: SpaceTimeField) -> float:
    """``sup ||u(t) - u(s)||_{L1(omega)} / (t - s)`` over all stored pairs."""
    nt = u.times.size
    if nt < 2:
        raise DomainError("need at least two time slices")
    w = _WeightedL1(u)
    I = np.stack([w.interior(i) for i in range(nt)])
    T = np.stack([w.tail(i) for i in range(nt)])
    best = 0.0
    for i in range(nt - 1):
        dI = np.abs(I[i + 1:] - I[i]) @ w.w_box
        dT = np.abs(T[i + 1:] - T[i]) @ w.w_tail
        q = (dI + dT) / (u.times[i + 1:] - u.times[i])
        best = max(best, float(q.max()))
    return best


# ---------------------------------------------------------------- region scans

def region_nodes(u: SpaceTimeField, region: Cylinder):
    """(spatial flat indices, time indices) of nodes in the closed ball x (t - tau, t]."""
    pts = u.grid.points()
    c = np.asarray(region.center, dtype=float)
    if c.size != u.n:
        raise DomainError("region center has wrong dimension")
    d = np.linalg.norm(pts - c, axis=1)
    sp = np.nonzero(d <= region.r * (1 + 1e-12) + 1e-12)[0]
    eps = 1e-9 * max(1.0, abs(region.t))
    tm = np.nonzero((u.times > region.t - region.tau + eps) & (u.times <= region.t + eps))[0]
    return sp, tm


def _region_values(u, region):
    sp, tm = region_nodes(u, region)
    if sp.size == 0 or tm.size == 0:
        raise DomainError("region contains no grid nodes")
    return u.values.reshape(u.times.size, -1)[np.ix_(tm, sp)]


def sup_norm(u: SpaceTimeField, region: Cylinder) -> float:
    """Maximum of the grid values in ``region``."""
    return float(_region_values(u, region).max())


def oscillation(u: SpaceTimeField, region: Cylinder) -> float:
    v = _region_values(u, region)
    return float(v.max() - v.min())


def _holder_all_pairs(X, T, V, alpha, sigma, chunk=2048):
    best = 0.0
    m = V.size
    for a in range(0, m, chunk):
        xa, ta, va = X[a:a + chunk], T[a:a + chunk], V[a:a + chunk]
        dx = np.linalg.norm(xa[:, None, :] - X[None, :, :], axis=2)
        dt = np.abs(ta[:, None] - T[None, :]) ** (1.0 / sigma)
        dist = dx + dt
        num = np.abs(va[:, None] - V[None, :])
        with np.errstate(divide="ignore", invalid="ignore"):
            q = np.where(dist > 0, num / dist ** alpha, 0.0)
        best = max(best, float(q.max()))
    return best


def _dyadic(L):
    return [0] + [s * 2 ** k for k in range(L) for s in (1, -1)]


def _holder_stratified(u, sp, tm, alpha):
    """Pairs at dyadic index offsets in every space-time direction."""
    g = u.grid
    mask = np.zeros((u.times.size, g.size), dtype=bool)
    mask[np.ix_(tm, sp)] = True
    mask = mask.reshape((u.times.size,) + g.shape)
    vals = u.values
    Ls = int(math.ceil(math.log2(g.N))) + 1
    Lt = int(math.ceil(math.log2(max(2, u.times.size)))) + 1
    best = 0.0
    tpos = [0] + [2 ** k for k in range(Lt)]
    offsets = [(dt,) + ds for dt in tpos for ds in
               np.array(np.meshgrid(*([_dyadic(Ls)] * g.n), indexing="ij")).reshape(g.n, -1).T.tolist()]
    axis_t = u.times
    for off in offsets:
        off = tuple(int(o) for o in off)
        if not any(off):
            continue
        if off[0] == 0 and next(o for o in off[1:] if o != 0) < 0:
            continue
        sl_a, sl_b = [], []
        ok = True
        for o, size in zip(off, mask.shape):
            if abs(o) >= size:
                ok = False
                break
            sl_a.append(slice(max(0, -o), size - max(0, o)))
            sl_b.append(slice(max(0, o), size - max(0, -o)))
        if not ok:
            continue
        sa, sb = tuple(sl_a), tuple(sl_b)
        both = mask[sa] & mask[sb]
        if not both.any():
            continue
        num = np.abs(vals[sa] - vals[sb])[both]
        tt = np.abs(axis_t[sb[0]] - axis_t[sa[0]])
        dtime = np.broadcast_to(tt.reshape((-1,) + (1,) * g.n), both.shape)[both]
        dx = g.h * math.sqrt(sum(o * o for o in off[1:]))
        dist = dx + dtime ** (1.0 / u.sigma)
        best = max(best, float((num / dist ** alpha).max()))
    return best


def parabolic_holder_seminorm(u: SpaceTimeField, alpha: float, region: Cylinder) -> float:
    """Largest ``|u(x,t) - u(y,s)| / (|x-y| + |t-s|^(1/sigma))^alpha`` in ``region``.

    Exact over all node pairs up to 4e4 nodes; above that, pairs at dyadic
    index offsets along every space-time direction.
    """
    if not 0 < alpha < 1:
        raise DomainError("alpha must lie in (0, 1)")
    sp, tm = region_nodes(u, region)
    if sp.size == 0 or tm.size == 0:
        raise DomainError("region contains no grid nodes")
    if sp.size * tm.size > HOLDER_PAIR_CAP:
        return _holder_stratified(u, sp, tm, alpha)
    pts = u.grid.points()[sp]
    X = np.tile(pts, (tm.size, 1))
    T = np.repeat(u.times[tm], sp.size)
    V = u.values.reshape(u.times.size, -1)[np.ix_(tm, sp)].ravel()
    return _holder_all_pairs(X, T, V, alpha, u.sigma)


# ---------------------------------------------------------------- serialization

def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def write_field_csv(path, u: SpaceTimeField):
    """Write ``x[,y],t,value`` rows plus a ``.meta`` sidecar of key=value lines."""
    path = Path(path)
    pts = u.grid.points()
    cols = ["x", "y"][: u.n]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols + ["t", "value"])
        for i, t in enumerate(u.times):
            vals = u.values[i].reshape(-1)
            for p, v in zip(pts, vals):
                w.writerow([_fmt(c) for c in p] + [_fmt(t), _fmt(v)])
    meta = {
        "n": u.n, "R": _fmt(u.grid.R), "h": _fmt(u.grid.h), "dt": _fmt(u.dt),
        "sigma": _fmt(u.sigma), "periodic": int(u.grid.periodic),
        "t1": _fmt(u.t1), "t2": _fmt(u.t2), "nt": u.times.size,
        "exterior_spec": u.exterior.label,
    }
    path.with_suffix(path.suffix + ".meta").write_text(
        "".join(f"{k}={v}\n" for k, v in meta.items()))


def read_field_csv(path) -> SpaceTimeField:
    """Inverse of :func:`write_field_csv`.

    Zero, Constant and Periodic exteriors are restored; any other exterior
    comes back as ``unknown`` and refuses exterior sampling.
    """
    path = Path(path)
    meta = dict(line.split("=", 1) for line in
                path.with_suffix(path.suffix + ".meta").read_text().splitlines() if line)
    n = int(meta["n"])
    grid = Grid(n, float(meta["R"]), float(meta["h"]), bool(int(meta["periodic"])))
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    times = np.unique(data[:, n])
    values = data[:, n + 1].reshape((times.size,) + grid.shape)
    label = meta["exterior_spec"]
    if label == "Zero":
        ext = Exterior.zero()
    elif label.startswith("Constant("):
        ext = Exterior.constant(float(label[len("Constant("):-1]))
    elif label == "Periodic":
        ext = Exterior.periodic()
    else:
        ext = Exterior("unknown", label=label)
    return SpaceTimeField(grid, times, values, ext, float(meta["sigma"]))
