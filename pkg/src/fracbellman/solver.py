"""Explicit monotone time stepping for ``u_t = inf_L L u + f(t)``."""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Callable

import numpy as np

from .errors import CFLViolation, DomainError, NumericError, PreconditionError
from .field import Exterior, Grid, SpaceTimeField
from .kernels import OperatorFamily
from .operators import AssembledOperator, build_stencil, pucci_values, rule_for
from .oracles import mu_bruteforce, mu_closed_form

DEFAULT_SLICES = 64


@dataclass(frozen=True)
class SchemeConfig:
    """Time-stepping options.

    ``source`` is ``f(t)`` (a callable or a constant).  ``store_dt`` sets the
    spacing of stored slices; the step is shrunk so that slices fall on steps.
    """

    cfl_fraction: float = 0.9
    source: Callable[[float], float] | float | None = None
    store_dt: float | None = None
    max_steps: int = 20_000_000

    def __post_init__(self):
        if not 0 < self.cfl_fraction <= 1:
            raise DomainError("cfl_fraction must lie in (0, 1]")

    def f(self, t: float) -> float:
        if self.source is None:
            return 0.0
        if callable(self.source):
            return float(self.source(t))
        return float(self.source)


class Scheme:
    """Assembled operators and exterior data for one family on one grid."""

    def __init__(self, family: OperatorFamily, grid: Grid, exterior: Exterior):
        if family.n != grid.n:
            raise DomainError("family and grid dimensions differ")
        if grid.periodic != (exterior.kind == "periodic"):
            raise DomainError("periodic grids go with Periodic exterior and vice versa")
        if exterior.kind != "periodic":
            exterior.check_integrable(family.sigma)
        self.family, self.grid, self.exterior = family, grid, exterior
        self.sigma = family.sigma
        self.rule = rule_for(grid, family.sigma)
        self.nodes = np.flatnonzero(grid.interior_mask())
        self.ring = np.flatnonzero(~grid.interior_mask())
        self.stencil = None if grid.periodic else build_stencil(grid, self.rule)
        if family.kind == "finite":
            self.ops = [AssembledOperator(k, grid, self.rule, self.stencil) for k in family.members]
            self.rate = max(float(op.rate.max()) for op in self.ops)
            self._stacked = np.concatenate([op.A for op in self.ops])
        else:
            self.ops = []
            r = self.rule
            self.rate = family.Lam * (r.lattice_w.sum() + r.outer_w.sum()
                                      + 2 * grid.n * r.inner_coef / grid.h ** 2) \
                + family.beta * grid.n / grid.h
        self._modes = exterior.as_modes() if exterior.kind != "periodic" else None
        self._prepare_exterior()

    # -- exterior bookkeeping
    def _prepare_exterior(self):
        self._memo = {}
        self._static = None
        self._mode_data = None
        if self.grid.periodic:
            return
        ring_pts = self.grid.points()[self.ring]
        st_pts = self.stencil.points
        if self._modes is not None and not (self.exterior.kind == "zero"):
            data = []
            for a, g in self._modes:
                gr = np.asarray(g(ring_pts), dtype=float).reshape(-1)
                gs = np.asarray(g(st_pts), dtype=float).reshape(-1)
                terms = [op.exterior_term(gs) for op in self.ops]
                data.append((a, gr, terms, float(max(np.abs(gr).max(initial=0), np.abs(gs).max(initial=0)))))
            self._mode_data = data
        elif self.exterior.static or self.exterior.kind == "zero":
            gr = self.exterior(ring_pts, 0.0)
            gs = self.exterior(st_pts, 0.0)
            self._static = (gr, [op.exterior_term(gs) for op in self.ops],
                            float(max(np.abs(gr).max(initial=0), np.abs(gs).max(initial=0))))

    def exterior_at(self, t: float):
        """``(ring values, per-member exterior terms, sup |g|)`` at time ``t``."""
        hit = self._memo.get(t)
        if hit is None:
            hit = self._exterior_at(t)
            if len(self._memo) > 4:
                self._memo.clear()
            self._memo[t] = hit
        return hit

    def _exterior_at(self, t: float):
        if self.grid.periodic:
            return None, [0.0] * len(self.ops), 0.0
        if self._mode_data is not None:
            gr = np.zeros(len(self.ring))
            terms = [np.zeros(len(self.nodes)) for _ in self.ops]
            bound = 0.0
            for a, g_ring, g_terms, gmax in self._mode_data:
                c = float(a(t))
                gr += c * g_ring
                for acc, e in zip(terms, g_terms):
                    acc += c * e
                bound += abs(c) * gmax
            return gr, terms, bound
        if self._static is not None:
            return self._static
        gr = self.exterior(self.grid.points()[self.ring], t)
        gs = self.exterior(self.stencil.points, t)
        return gr, [op.exterior_term(gs) for op in self.ops], \
            float(max(np.abs(gr).max(initial=0), np.abs(gs).max(initial=0)))

    def rhs(self, flat: np.ndarray, t: float, terms) -> np.ndarray:
        """``inf_L L u`` at interior nodes."""
        if self.family.kind == "pucci":
            u = SpaceTimeField(self.grid, [t], flat.reshape(self.grid.shape), self.exterior, self.sigma)
            fam = self.family
            return pucci_values("minus", fam.lam, fam.Lam, fam.beta, u, t, self.nodes, self.rule)["value"]
        vals = (self._stacked @ flat).reshape(len(self.ops), -1)
        if not self.grid.periodic:
            vals += np.stack(terms)
        return vals.min(axis=0)

    def dt_max(self, cfl_fraction: float = 1.0) -> float:
        return cfl_fraction / self.rate


def step(scheme: Scheme, flat: np.ndarray, t: float, dt: float, cfg: SchemeConfig) -> np.ndarray:
    """One explicit Euler step of the grid vector ``flat`` from ``t`` to ``t + dt``."""
    if dt * scheme.rate > 1 + 1e-12:
        raise CFLViolation(f"dt={dt:.3g} exceeds the monotone limit {1 / scheme.rate:.3g}")
    _, terms, _ = scheme.exterior_at(t)
    new = flat.copy()
    new[scheme.nodes] += dt * (scheme.rhs(flat, t, terms) + cfg.f(t))
    if not scheme.grid.periodic:
        gr, _, _ = scheme.exterior_at(t + dt)
        new[scheme.ring] = gr
    return new


@dataclass
class SolveInfo:
    dt: float
    steps: int
    rate: float
    stability_bound: float
    sup_solution: float
    tail_bound: float
    extras: dict = dc_field(default_factory=dict)


def solve(grid: Grid, u0, exterior: Exterior, family: OperatorFamily, cfg: SchemeConfig,
          t0: float, t1: float, scheme: Scheme | None = None, return_info: bool = False):
    """March from ``t0`` to ``t1`` and return the stored slices as a field.

    ``u0`` is a callable of the node coordinates or an array of grid values.
    Ring nodes of non-periodic grids take the exterior data at every step.
    """
    if not t1 > t0:
        raise DomainError("need t1 > t0")
    scheme = scheme or Scheme(family, grid, exterior)
    pts = grid.points()
    flat = np.asarray(u0(pts) if callable(u0) else u0, dtype=float).reshape(-1).copy()
    if flat.size != grid.size:
        raise DomainError("initial data has the wrong size")
    T = t1 - t0
    nstore = DEFAULT_SLICES if cfg.store_dt is None else max(1, int(math.ceil(T / cfg.store_dt - 1e-9)))
    dtm = scheme.dt_max(cfg.cfl_fraction)
    stride = max(1, int(math.ceil(T / nstore / dtm - 1e-12)))
    dt = T / (nstore * stride)
    if nstore * stride > cfg.max_steps:
        raise DomainError(f"{nstore * stride} steps exceed max_steps={cfg.max_steps}")
    gr, _, gmax = scheme.exterior_at(t0)
    if not grid.periodic:
        flat[scheme.ring] = gr
    if not np.all(np.isfinite(flat)):
        raise NumericError("initial data must be finite")
    data_sup = max(float(np.abs(flat).max()), gmax)
    f_sup = abs(cfg.f(t0))
    times = [t0]
    slices = [flat.copy()]
    t = t0
    for s in range(nstore):
        for _ in range(stride):
            flat = step(scheme, flat, t, dt, cfg)
            t = t0 + (len(times) - 1) * stride * dt + (_ + 1) * dt
            data_sup = max(data_sup, scheme.exterior_at(t)[2])
            f_sup = max(f_sup, abs(cfg.f(t)))
        t = t0 + (s + 1) * stride * dt
        times.append(t)
        slices.append(flat.copy())
    vals = np.stack(slices).reshape((len(times),) + grid.shape)
    tail = 0.0
    if not grid.periodic:
        kmax = max([family.Lam] + [float(k(scheme.rule.outer_y).max()) for k in family.members])
        tail = scheme.rule.tail_bound(kmax, exterior.M, exterior.gamma, grid.R * math.sqrt(grid.n), data_sup) \
            if exterior.kind not in ("zero",) else 0.0
    bound = data_sup + T * f_sup + T * tail
    sup = float(np.abs(vals).max())
    if sup > bound * (1 + 1e-9) + 1e-12:
        raise NumericError(f"stability bound violated: sup|u| = {sup:.6g} > {bound:.6g}")
    out = SpaceTimeField(grid, np.array(times), vals, exterior, family.sigma)
    if return_info:
        return out, SolveInfo(dt, nstore * stride, scheme.rate, bound, sup, tail)
    return out


@dataclass
class ComparisonReport:
    passed: bool
    max_violation: float
    times: int


def comparison_test(grid: Grid, u0, v0, ext_u: Exterior, ext_v: Exterior, family: OperatorFamily,
                    cfg: SchemeConfig, t0: float, t1: float, tol: float = 1e-10) -> ComparisonReport:
    """Run both problems and report ``max (u - v)`` over all stored slices."""
    pts = grid.points()
    a = np.asarray(u0(pts) if callable(u0) else u0, dtype=float).reshape(-1)
    b = np.asarray(v0(pts) if callable(v0) else v0, dtype=float).reshape(-1)
    if np.any(a > b + tol):
        raise PreconditionError("initial data are not ordered")
    su, sv = Scheme(family, grid, ext_u), Scheme(family, grid, ext_v)
    if not grid.periodic:
        for t in (t0, t1):
            gu = ext_u(su.stencil.points, t) if ext_u.kind != "zero" else 0.0
            gv = ext_v(sv.stencil.points, t) if ext_v.kind != "zero" else 0.0
            if np.any(np.asarray(gu) > np.asarray(gv) + tol):
                raise PreconditionError("exterior data are not ordered")
    u = solve(grid, a, ext_u, family, cfg, t0, t1, su)
    v = solve(grid, b, ext_v, family, cfg, t0, t1, sv)
    viol = float(np.max(u.values - v.values))
    return ComparisonReport(viol <= tol, viol, len(u.times))


@dataclass(frozen=True)
class SpectralOracle:
    """Exact solutions of the constant-kernel problem on the 1D torus."""

    sigma: float
    method: str = "bruteforce"

    def __post_init__(self):
        if self.method not in ("bruteforce", "closed"):
            raise DomainError("method must be 'bruteforce' or 'closed'")

    def mu(self, k: float) -> float:
        if k == 0:
            return 0.0
        if self.method == "closed":
            return mu_closed_form(self.sigma, k)
        return _mu_cached(self.sigma, float(abs(k)))

    def cosine(self, x, t: float, k: float = 1.0) -> np.ndarray:
        """Solution started from ``cos(k x)`` at time 0."""
        return math.exp(-self.mu(k) * t) * np.cos(k * np.asarray(x, dtype=float))


_MU_CACHE: dict = {}


def _mu_cached(sigma: float, k: float) -> float:
    key = (sigma, k)
    if key not in _MU_CACHE:
        _MU_CACHE[key] = mu_bruteforce(sigma, k)
    return _MU_CACHE[key]
