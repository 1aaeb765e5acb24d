"""Linear, extremal and Bellman operators on grid fields.

Two evaluation paths share one quadrature rule:

* increments (``_Increments``): ``u(x + y) - u(x)`` gathered per node, used for
  pointwise evaluation, the extremal operators and the harness;
* assembly (``AssembledOperator``): the same linear operator as a dense matrix
  plus a sparse map from exterior samples, used for time stepping.

Both apply the gradient part of the compensated increment through an upwind
difference driven by the effective drift ``b - sum_{|y|<1} w_j y_j``, so every
scheme they produce is monotone.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field as dc_field
from functools import lru_cache

import numpy as np

from .errors import DomainError, NumericError
from .field import Exterior, Grid, SpaceTimeField
from .kernels import KernelSpec, OperatorFamily, adjoint_pair
from .quadrature import QuadratureRule

CHUNK_ENTRIES = 2_000_000
# fine shells in 1D keep oscillating far fields accurate; 2D pays per angle
SHELL_RATIO_1D = 1.02


@lru_cache(maxsize=32)
def rule_for(grid: Grid, sigma: float) -> QuadratureRule:
    """Default rule for a grid: lattice up to the box half-width."""
    if grid.R < 1.0:
        raise DomainError("the box half-width must be at least 1")
    if grid.n == 1:
        return QuadratureRule.for_grid(grid, sigma, shell_ratio=SHELL_RATIO_1D)
    return QuadratureRule.for_grid(grid, sigma)


@dataclass
class OperatorEvaluation:
    value: float
    tail_error_bound: float
    breakdown: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise NumericError("operator value is not finite")
        if not self.tail_error_bound >= 0:
            raise NumericError("tail error bound must be nonnegative")


# ---------------------------------------------------------------- increments

def _axis_columns(rule: QuadratureRule):
    """Columns of the lattice holding ``+h e_i`` and ``-h e_i``."""
    off = rule.lattice_offsets
    plus, minus = [], []
    for i in range(rule.n):
        e = np.zeros(rule.n, dtype=np.int64)
        e[i] = 1
        plus.append(int(np.flatnonzero(np.all(off == e, axis=1))[0]))
        minus.append(int(np.flatnonzero(np.all(off == -e, axis=1))[0]))
    return np.array(plus), np.array(minus)


def lattice_increments(u: SpaceTimeField, t: float, nodes: np.ndarray, offsets: np.ndarray,
                       flat: np.ndarray | None = None) -> np.ndarray:
    """``u(x + j h) - u(x)`` for integer offsets ``j``; exterior data off the grid."""
    g = u.grid
    flat = u.flat(t) if flat is None else flat
    mi = g.multi_index()[nodes]
    tgt = mi[:, None, :] + offsets[None, :, :]
    if g.periodic:
        vals = flat[g.ravel((tgt % g.N).reshape(-1, g.n))].reshape(tgt.shape[:2])
    else:
        ok = np.all((tgt >= 0) & (tgt < g.N), axis=2)
        vals = np.empty(tgt.shape[:2])
        vals[ok] = flat[g.ravel(tgt[ok])]
        if not ok.all():
            coords = g.points()[nodes][:, None, :] + g.h * offsets[None, :, :]
            vals[~ok] = u.exterior(coords[~ok], t)
    return vals - flat[nodes][:, None]


class _Increments:
    """``u(x + y, t) - u(x, t)`` on lattice and shell nodes for a block of nodes."""

    def __init__(self, u: SpaceTimeField, t: float, nodes: np.ndarray, rule: QuadratureRule,
                 flat: np.ndarray | None = None):
        g = u.grid
        flat = u.flat(t) if flat is None else flat
        self.u0 = flat[nodes]
        pts = g.points()[nodes]
        self.lattice = lattice_increments(u, t, nodes, rule.lattice_offsets, flat)
        outer_pts = (pts[:, None, :] + rule.outer_y[None, :, :]).reshape(-1, g.n)
        self.outer = u.sample(outer_pts, t).reshape(len(nodes), -1) - self.u0[:, None]
        ip, im = _axis_columns(rule)
        h = g.h
        self.second = (self.lattice[:, ip] + self.lattice[:, im]) / h ** 2
        self.forward = self.lattice[:, ip] / h
        self.backward = -self.lattice[:, im] / h
        self.centered = 0.5 * (self.forward + self.backward)


def _node_blocks(nodes: np.ndarray, rule: QuadratureRule):
    per_node = rule.lattice_offsets.shape[0] + rule.outer_y.shape[0]
    size = max(1, CHUNK_ENTRIES // per_node)
    for s in range(0, len(nodes), size):
        yield nodes[s:s + size]


def _default_nodes(grid: Grid, nodes):
    if nodes is None:
        return np.flatnonzero(grid.interior_mask())
    nodes = np.atleast_1d(np.asarray(nodes, dtype=np.int64))
    if not grid.interior_mask()[nodes].all():
        raise DomainError("operators are evaluated at interior nodes only")
    return nodes


def _upwind(beff: np.ndarray, inc: _Increments) -> np.ndarray:
    return np.where(beff > 0, beff * inc.forward, beff * inc.backward).sum(axis=1)


@dataclass(frozen=True, eq=False)
class _LinearWeights:
    wl: np.ndarray
    wo: np.ndarray
    kin: float
    beff: np.ndarray


def _linear_weights(k: KernelSpec, rule: QuadratureRule) -> _LinearWeights:
    wl, wo, kin = rule.kernel_weights(k)
    return _LinearWeights(wl, wo, kin, k.b - rule.first_moment(wl))


def linear_values(k: KernelSpec, u: SpaceTimeField, t: float, nodes=None,
                  rule: QuadratureRule | None = None) -> dict:
    """Vectorized linear operator at interior nodes.

    Returns arrays ``value, inner, middle, outer, drift`` (one entry per node).
    ``drift`` holds ``b . Du`` together with the gradient compensation of the
    lattice inside the unit ball.
    """
    rule = rule or rule_for(u.grid, u.sigma)
    nodes = _default_nodes(u.grid, nodes)
    lw = _linear_weights(k, rule)
    parts = {key: [] for key in ("inner", "middle", "outer", "drift")}
    flat = u.flat(t)
    for blk in _node_blocks(nodes, rule):
        inc = _Increments(u, t, blk, rule, flat)
        parts["inner"].append(rule.inner_coef * lw.kin * inc.second.sum(axis=1))
        parts["middle"].append(inc.lattice @ lw.wl)
        parts["outer"].append(inc.outer @ lw.wo)
        parts["drift"].append(_upwind(lw.beff, inc))
    out = {key: np.concatenate(v) for key, v in parts.items()}
    out["value"] = out["inner"] + out["middle"] + out["outer"] + out["drift"]
    if not np.all(np.isfinite(out["value"])):
        raise NumericError("non-finite operator value")
    return out


def pucci_values(sign: str, lam: float, Lam: float, beta: float, u: SpaceTimeField, t: float,
                 nodes=None, rule: QuadratureRule | None = None) -> dict:
    """Extremal operators over even kernels in ``[lam, Lam]`` and drifts ``|b| <= beta``.

    Increments are summed in symmetric pairs, which removes the gradient, and
    the kernel value is chosen per pair (per axis for the second differences).
    """
    if sign not in ("plus", "minus"):
        raise DomainError("sign must be 'plus' or 'minus'")
    if not 0 < lam <= Lam or beta < 0:
        raise DomainError("need 0 < lam <= Lam and beta >= 0")
    rule = rule or rule_for(u.grid, u.sigma)
    nodes = _default_nodes(u.grid, nodes)
    hi, lo = (Lam, lam) if sign == "plus" else (lam, Lam)
    P, Qo = rule.n_lattice_pairs, rule.n_outer_pairs
    wl, wo = rule.lattice_w[:P], rule.outer_w[:Qo]

    def ext(s):
        return hi * np.maximum(s, 0) - lo * np.maximum(-s, 0)

    parts = {key: [] for key in ("inner", "middle", "outer", "drift")}
    flat = u.flat(t)
    for blk in _node_blocks(nodes, rule):
        inc = _Increments(u, t, blk, rule, flat)
        parts["inner"].append(rule.inner_coef * ext(inc.second).sum(axis=1))
        parts["middle"].append(ext(inc.lattice[:, :P] + inc.lattice[:, P:]) @ wl)
        parts["outer"].append(ext(inc.outer[:, :Qo] + inc.outer[:, Qo:]) @ wo)
        if sign == "plus":
            v = np.maximum(np.maximum(inc.forward, -inc.backward), 0)
            parts["drift"].append(beta * np.sqrt((v ** 2).sum(axis=1)))
        else:
            v = np.maximum(np.maximum(-inc.forward, inc.backward), 0)
            parts["drift"].append(-beta * np.sqrt((v ** 2).sum(axis=1)))
    out = {key: np.concatenate(v) for key, v in parts.items()}
    out["value"] = out["inner"] + out["middle"] + out["outer"] + out["drift"]
    if not np.all(np.isfinite(out["value"])):
        raise NumericError("non-finite operator value")
    return out


def bellman_values(family: OperatorFamily, u: SpaceTimeField, t: float, nodes=None,
                   rule: QuadratureRule | None = None):
    """``min`` over the family at interior nodes; returns ``(values, argmin)``.

    A Pucci family is handled by the lower extremal operator (argmin is -1).
    """
    if family.kind == "pucci":
        vals = pucci_values("minus", family.lam, family.Lam, family.beta, u, t, nodes, rule)["value"]
        return vals, np.full(vals.shape, -1)
    if not family.members:
        raise DomainError("empty family")
    stack = np.stack([linear_values(k, u, t, nodes, rule)["value"] for k in family.members])
    return stack.min(axis=0), stack.argmin(axis=0)


# ---------------------------------------------------------------- pointwise API

def _node_of(u: SpaceTimeField, x) -> int:
    idx = u.grid.node_index(x)
    if not u.grid.interior_mask()[idx]:
        raise DomainError(f"point {tuple(np.atleast_1d(x))} is on the boundary ring")
    return idx


def tail_error_bound(k_max: float, u: SpaceTimeField, x, t: float,
                     rule: QuadratureRule) -> float:
    """Bound on the neglected contribution from ``|y| > R_tail``."""
    ext = u.exterior
    ux = float(u.sample(np.atleast_1d(x), t)[0])
    xn = float(np.linalg.norm(np.atleast_1d(x)))
    if ext.kind == "periodic":
        return rule.tail_bound(k_max, float(np.abs(u.flat(t)).max()), 0.0, xn, ux)
    ext.check_integrable(u.sigma)
    M = max(ext.M, float(np.abs(u.flat(t)).max())) if ext.kind != "zero" else 0.0
    return rule.tail_bound(k_max, M, ext.gamma, xn, ux)


def _evaluation(parts: dict, bound: float, extra=None) -> OperatorEvaluation:
    br = {key: float(parts[key][0]) for key in ("inner", "middle", "outer", "drift")}
    if extra:
        br.update(extra)
    return OperatorEvaluation(float(parts["value"][0]), bound, br)


def delta_u(u: SpaceTimeField, x, t: float, y) -> float:
    """Compensated increment with the gradient from centered differences."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    h = u.grid.h
    pts = [x + y, x]
    for i in range(u.n):
        e = np.zeros(u.n)
        e[i] = h
        pts += [x + e, x - e]
    v = u.sample(np.array(pts), t)
    grad = (v[2::2] - v[3::2]) / (2 * h)
    cut = 1.0 if np.linalg.norm(y) < 1 else 0.0
    return float(v[0] - v[1] - cut * grad @ y)


def evaluate_linear(k: KernelSpec, u: SpaceTimeField, x, t: float,
                    rule: QuadratureRule | None = None) -> OperatorEvaluation:
    rule = rule or rule_for(u.grid, u.sigma)
    parts = linear_values(k, u, t, [_node_of(u, x)], rule)
    kmax = float(max(k(rule.outer_y).max(), k.Lam))
    return _evaluation(parts, tail_error_bound(kmax, u, x, t, rule))


def pucci_extremal(sign: str, lam: float, Lam: float, beta: float, u: SpaceTimeField, x,
                   t: float, rule: QuadratureRule | None = None) -> OperatorEvaluation:
    rule = rule or rule_for(u.grid, u.sigma)
    parts = pucci_values(sign, lam, Lam, beta, u, t, [_node_of(u, x)], rule)
    return _evaluation(parts, tail_error_bound(Lam, u, x, t, rule))


def bellman(family: OperatorFamily, u: SpaceTimeField, x, t: float,
            rule: QuadratureRule | None = None) -> OperatorEvaluation:
    if family.kind == "pucci":
        ev = pucci_extremal("minus", family.lam, family.Lam, family.beta, u, x, t, rule)
        ev.breakdown["argmin"] = -1
        return ev
    if not family.members:
        raise DomainError("empty family")
    evs = [evaluate_linear(k, u, x, t, rule) for k in family.members]
    j = int(np.argmin([e.value for e in evs]))
    evs[j].breakdown["argmin"] = j
    return evs[j]


# ---------------------------------------------------------------- assembly

@dataclass(frozen=True, eq=False)
class ExteriorStencil:
    """Virtual lattice nodes outside the box touched by the rule from interior nodes.

    Shared by every kernel on the same grid and rule; kernels only change the
    weights attached to each point.
    """

    points: np.ndarray          # (P, n)
    lat_rows: np.ndarray        # row (interior position) per lattice entry
    lat_cols: np.ndarray        # lattice offset index per entry
    lat_pts: np.ndarray         # index into ``points``
    out_rows: np.ndarray
    out_cols: np.ndarray        # shell node index per entry
    out_pts: np.ndarray
    out_w: np.ndarray           # interpolation weight per entry


class AssembledOperator:
    """One linear operator as ``A u + E g`` on the interior nodes.

    ``A`` is dense ``(interior, grid.size)``; ``E`` maps exterior samples to
    rows and is stored as coordinate triples.  Every off-diagonal entry is
    nonnegative and each row of ``[A E]`` sums to zero.
    """

    def __init__(self, k: KernelSpec, grid: Grid, rule: QuadratureRule | None = None,
                 stencil: ExteriorStencil | None = None):
        if k.n != grid.n:
            raise DomainError("kernel and grid dimensions differ")
        self.kernel = k
        self.grid = grid
        self.rule = rule or rule_for(grid, k.sigma)
        self.nodes = np.flatnonzero(grid.interior_mask())
        self.stencil = stencil if stencil is not None or grid.periodic else build_stencil(grid, self.rule)
        self._assemble()

    def _assemble(self):
        g, rule = self.grid, self.rule
        lw = _linear_weights(self.kernel, rule)
        m = len(self.nodes)
        ip, im = _axis_columns(rule)
        coef = lw.wl.copy()
        c = rule.inner_coef * lw.kin / g.h ** 2
        coef[ip] += c + np.maximum(lw.beff, 0) / g.h
        coef[im] += c + np.maximum(-lw.beff, 0) / g.h
        A = np.zeros((m, g.size))
        mi = g.multi_index()[self.nodes]
        pts = g.points()[self.nodes]
        rows_all = np.arange(m)
        block = max(1, CHUNK_ENTRIES // max(1, coef.size))
        for s in range(0, m, block):
            rows = rows_all[s:s + block]
            tgt = mi[rows, None, :] + rule.lattice_offsets[None]
            if g.periodic:
                ok = np.ones(tgt.shape[:2], dtype=bool)
                tgt = tgt % g.N
            else:
                ok = np.all((tgt >= 0) & (tgt < g.N), axis=2)
            rr = np.broadcast_to(rows[:, None], ok.shape)[ok]
            cc = g.ravel(tgt[ok])
            np.add.at(A, (rr, cc), np.broadcast_to(coef, ok.shape)[ok])
            # outer shells: multilinear interpolation, grid corners only
            P = (pts[rows, None, :] + rule.outer_y[None]).reshape(-1, g.n)
            multi, w, in_box = g.lattice_stencil(P)
            wo = np.broadcast_to(lw.wo, (len(rows), lw.wo.size)).reshape(-1)
            rr = np.broadcast_to(np.repeat(rows, lw.wo.size)[:, None], w.shape)
            sel = in_box & (w > 0)
            np.add.at(A, (rr[sel], g.ravel(multi[sel])), (w * wo[:, None])[sel])
        A[rows_all, self.nodes] -= coef.sum() + lw.wo.sum()
        self.A = A
        if self.stencil is not None:
            st = self.stencil
            self.ext_rows = np.concatenate([st.lat_rows, st.out_rows])
            self.ext_pts = np.concatenate([st.lat_pts, st.out_pts])
            self.ext_w = np.concatenate([coef[st.lat_cols], lw.wo[st.out_cols] * st.out_w])
        else:
            self.ext_rows = self.ext_pts = np.zeros(0, dtype=np.int64)
            self.ext_w = np.zeros(0)
        self.rate = -A[rows_all, self.nodes]

    def exterior_term(self, gvals: np.ndarray) -> np.ndarray:
        """``E g`` for exterior samples ``gvals`` at ``stencil.points``."""
        return np.bincount(self.ext_rows, self.ext_w * gvals[self.ext_pts], minlength=len(self.nodes))

    def apply(self, flat: np.ndarray, gvals: np.ndarray | None = None) -> np.ndarray:
        out = self.A @ flat
        if gvals is not None and self.ext_w.size:
            out += self.exterior_term(gvals)
        return out


def build_stencil(grid: Grid, rule: QuadratureRule) -> ExteriorStencil:
    """Exterior lattice nodes reached from interior nodes of a non-periodic grid."""
    nodes = np.flatnonzero(grid.interior_mask())
    mi = grid.multi_index()[nodes]
    pts = grid.points()[nodes]
    off = rule.lattice_offsets
    lat_r, lat_c, lat_key = [], [], []
    out_r, out_c, out_w, out_key = [], [], [], []
    block = max(1, CHUNK_ENTRIES // max(1, off.shape[0]))
    for s in range(0, len(nodes), block):
        rows = np.arange(s, min(s + block, len(nodes)))
        tgt = mi[rows, None, :] + off[None]
        bad = ~np.all((tgt >= 0) & (tgt < grid.N), axis=2)
        r, c = np.nonzero(bad)
        lat_r.append(rows[r])
        lat_c.append(c)
        lat_key.append(tgt[r, c])
        P = (pts[rows, None, :] + rule.outer_y[None]).reshape(-1, grid.n)
        multi, w, in_box = grid.lattice_stencil(P)
        e, corner = np.nonzero(~in_box & (w > 0))
        q = rule.outer_y.shape[0]
        out_r.append(rows[e // q])
        out_c.append(e % q)
        out_w.append(w[e, corner])
        out_key.append(multi[e, corner])
    keys = np.concatenate(lat_key + out_key)
    ukeys, inv = np.unique(keys, axis=0, return_inverse=True)
    inv = np.asarray(inv, dtype=np.int64).reshape(-1)
    n_lat = sum(len(k) for k in lat_key)
    return ExteriorStencil(
        points=grid.lattice_points(ukeys),
        lat_rows=np.concatenate(lat_r).astype(np.int64),
        lat_cols=np.concatenate(lat_c).astype(np.int64),
        lat_pts=inv[:n_lat],
        out_rows=np.concatenate(out_r).astype(np.int64),
        out_cols=np.concatenate(out_c).astype(np.int64),
        out_pts=inv[n_lat:],
        out_w=np.concatenate(out_w),
    )


# ---------------------------------------------------------------- identities

def check_integration_by_parts(k: KernelSpec, v: SpaceTimeField, w: SpaceTimeField,
                               t: float | None = None, rule: QuadratureRule | None = None,
                               tol: float = 1e-12) -> float:
    """``|sum v L w - sum w Lbar v| h^n`` with ``Lbar`` the reflected operator."""
    t = v.t2 if t is None else t
    g = v.grid
    for f in (v, w):
        if f.exterior.kind not in ("zero", "periodic"):
            raise DomainError("fields must vanish outside the grid")
        if not g.periodic:
            ring = ~g.interior_mask()
            if np.abs(f.flat(t)[ring]).max() > tol:
                raise DomainError("fields must vanish on the boundary ring")
    nodes = np.flatnonzero(g.interior_mask())
    Lw = linear_values(k, w, t, nodes, rule)["value"]
    Lv = linear_values(adjoint_pair(k), v, t, nodes, rule)["value"]
    vol = g.h ** g.n
    return float(abs(v.flat(t)[nodes] @ Lw - w.flat(t)[nodes] @ Lv) * vol)


def shift_combination(u: SpaceTimeField, coeffs: dict) -> SpaceTimeField:
    """``sum_k c_k u(. + k h)`` with integer offsets ``k``; exterior transformed alike."""
    g = u.grid
    pts = g.points()
    items = [(np.asarray(k, dtype=float).reshape(g.n), float(c)) for k, c in coeffs.items()]
    vals = []
    for t in u.times:
        acc = np.zeros(g.size)
        for k, c in items:
            acc += c * u.sample(pts + g.h * k, t)
        vals.append(acc.reshape(g.shape))
    ext = u.exterior
    if ext.kind == "periodic":
        new_ext = ext
    elif ext.kind in ("zero",):
        new_ext = ext
    elif ext.kind == "constant":
        new_ext = Exterior.constant(ext.c * sum(c for _, c in items))
    else:
        def fn(x, t, ext=ext):
            return sum(c * ext(x + g.h * k, t) for k, c in items)
        M = ext.M * sum(abs(c) for _, c in items)
        new_ext = Exterior.growth(fn, ext.gamma, M, label=f"shifted({ext.label})") \
            if ext.gamma > 0 else Exterior.bounded(fn, M, label=f"shifted({ext.label})")
    return u.with_values(np.stack(vals), new_ext)


def convolve_field(u: SpaceTimeField, eta: np.ndarray) -> SpaceTimeField:
    """Discrete convolution with a nonnegative normalized stencil of odd side length."""
    eta = np.asarray(eta, dtype=float)
    if eta.ndim != u.n or any(s % 2 == 0 for s in eta.shape):
        raise DomainError("stencil must have odd length along each axis")
    if np.any(eta < 0) or abs(eta.sum() - 1) > 1e-12:
        raise DomainError("stencil must be nonnegative with unit sum")
    centre = np.array(eta.shape) // 2
    coeffs = {tuple(int(i) for i in (np.array(idx) - centre)): float(eta[idx])
              for idx in np.ndindex(*eta.shape) if eta[idx] > 0}
    return shift_combination(u, coeffs)


@dataclass
class IdentityReport:
    homogeneity: float
    duality: float
    concavity: float
    translation: float
    scale: float
    passed: bool
    details: dict = dc_field(default_factory=dict)


def check_concavity_translation_homogeneity(lam: float, Lam: float, beta: float,
                                            u: SpaceTimeField, eta: np.ndarray, alpha: float,
                                            b, t: float | None = None, nodes=None,
                                            rule: QuadratureRule | None = None,
                                            slack: float = 1e-6) -> IdentityReport:
    """Homogeneity, duality, concavity sandwich and translation inequality.

    Each entry is the largest violation found (0 when the identity holds).
    The translation inequality is exact for drifts along a coordinate axis.
    """
    if alpha < 0:
        raise DomainError("homogeneity is checked for alpha >= 0")
    t = u.t2 if t is None else t
    g = u.grid
    rule = rule or rule_for(g, u.sigma)
    all_nodes = np.flatnonzero(g.interior_mask())
    if nodes is None:
        # keep two nodes from the ring so centered differences of M u are available
        mi = g.multi_index()
        deep = np.all((mi >= 2) & (mi <= g.N - 3), axis=1) if not g.periodic else np.ones(g.size, bool)
        nodes = np.flatnonzero(deep)
    nodes = np.asarray(nodes)
    P = lambda f, s, nd=nodes: pucci_values(s, lam, Lam, beta, f, t, nd, rule)["value"]
    Pp, Pm = P(u, "plus"), P(u, "minus")
    scale = max(1.0, float(np.abs(Pp).max()), float(np.abs(Pm).max()))
    au = u * alpha
    hom = max(float(np.abs(P(au, "plus") - alpha * Pp).max()),
              float(np.abs(P(au, "minus") - alpha * Pm).max()))
    dual = float(np.abs(P(-u, "plus") + Pm).max())
    # concavity: eta * M^- v <= M^+-(eta * v) <= eta * M^+ v
    conv = convolve_field(u, eta)
    full_p = np.zeros(g.size)
    full_m = np.zeros(g.size)
    full_p[all_nodes] = P(u, "plus", all_nodes)
    full_m[all_nodes] = P(u, "minus", all_nodes)
    centre = np.array(eta.shape) // 2
    mi_all = g.multi_index()
    eta_p = np.zeros(len(nodes))
    eta_m = np.zeros(len(nodes))
    usable = np.ones(len(nodes), dtype=bool)
    interior = g.interior_mask()
    for idx in np.ndindex(*eta.shape):
        if eta[idx] == 0:
            continue
        k = np.array(idx) - centre
        tgt = mi_all[nodes] + k
        if g.periodic:
            tgt %= g.N
        else:
            ok = np.all((tgt >= 0) & (tgt < g.N), axis=1)
            tgt = np.clip(tgt, 0, g.N - 1)
            usable &= ok
        flat_t = g.ravel(tgt)
        usable &= interior[flat_t]
        eta_p += eta[idx] * full_p[flat_t]
        eta_m += eta[idx] * full_m[flat_t]
    cp, cm = P(conv, "plus"), P(conv, "minus")
    viol = np.concatenate([(eta_m - cm)[usable], (cm - cp)[usable], (cp - eta_p)[usable]])
    conc = float(max(0.0, viol.max())) if viol.size else 0.0
    # translation: M^-(b.Dv) <= b.D(M^+- v) <= M^+(b.Dv), centered differences
    b = np.atleast_1d(np.asarray(b, dtype=float))
    coeffs = {}
    for i in range(g.n):
        e = [0] * g.n
        e[i] = 1
        coeffs[tuple(e)] = coeffs.get(tuple(e), 0.0) + b[i] / (2 * g.h)
        e[i] = -1
        coeffs[tuple(e)] = coeffs.get(tuple(e), 0.0) - b[i] / (2 * g.h)
    bdv = shift_combination(u, {k: c for k, c in coeffs.items() if c != 0}) if np.any(b) else u * 0.0
    tp, tm = P(bdv, "plus"), P(bdv, "minus")
    trans = 0.0
    for full in (full_p, full_m):
        d = np.zeros(len(nodes))
        ok = np.ones(len(nodes), dtype=bool)
        for kk, c in coeffs.items():
            tgt = mi_all[nodes] + np.array(kk)
            if g.periodic:
                tgt %= g.N
            else:
                ok &= np.all((tgt >= 0) & (tgt < g.N), axis=1)
                tgt = np.clip(tgt, 0, g.N - 1)
            ft = g.ravel(tgt)
            ok &= interior[ft]
            d += c * full[ft]
        v = np.concatenate([(tm - d)[ok], (d - tp)[ok]])
        if v.size:
            trans = max(trans, float(v.max()))
    tscale = max(scale, float(np.abs(tp).max()), float(np.abs(tm).max()))
    passed = (hom <= 1e-12 * max(1.0, alpha) * scale and dual == 0.0
              and conc <= slack * scale and trans <= slack * tscale)
    return IdentityReport(hom, dual, conc, trans, scale, passed,
                          {"nodes": int(len(nodes)), "translation_scale": tscale})


# ---------------------------------------------------------------- dump

def write_evaluation_csv(path, u: SpaceTimeField, t: float, parts: dict, nodes,
                         tail_bound: float = 0.0):
    """Debug dump ``x[,y],t,value,inner,middle,outer,drift,tail_bound``."""
    pts = u.grid.points()[np.asarray(nodes)]
    coords = ["x", "y"][:u.n]
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(coords + ["t", "value", "inner", "middle", "outer", "drift", "tail_bound"])
        for i, p in enumerate(pts):
            row = [*p, t] + [parts[key][i] for key in ("value", "inner", "middle", "outer", "drift")]
            wr.writerow([format(float(v), ".17g") for v in row] + [format(float(tail_bound), ".17g")])
