"""Localized second-order increments ``w_A``, and their positive/negative envelopes."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DomainError
from ..field import SpaceTimeField
from ..operators import lattice_increments, rule_for
from ..quadrature import QuadratureRule
from .cutoffs import phi

ROUNDOFF = 64 * np.finfo(float).eps


@dataclass(frozen=True, eq=False)
class PNField:
    """``P`` and ``N`` on grid nodes at stored times.

    Arrays have shape ``(len(times), grid.size)`` and vanish where the cutoff
    does.  ``base`` is the flat index of the base point.
    """

    grid: object
    times: np.ndarray
    P: np.ndarray
    N: np.ndarray
    sigma: float
    base: int

    def __post_init__(self):
        for a in (self.P, self.N):
            if a.shape != (len(self.times), self.grid.size):
                raise DomainError("P/N arrays have the wrong shape")
            a.setflags(write=False)

    @property
    def base_point(self) -> np.ndarray:
        return self.grid.points()[self.base]

    def radius(self) -> np.ndarray:
        return np.linalg.norm(self.grid.points() - self.base_point, axis=1)

    @classmethod
    def synthetic(cls, grid, times, sum_fn, sigma: float = 1.5, base=None):
        """Field with ``P = sum_fn(x, t)`` and ``N = 0``, for testing fits."""
        times = np.atleast_1d(np.asarray(times, dtype=float))
        b = grid.node_index(np.zeros(grid.n) if base is None else base)
        pts = grid.points()
        P = np.stack([np.asarray(sum_fn(pts, t), dtype=float).reshape(-1) for t in times])
        return cls(grid, times, P, np.zeros_like(P), sigma, b)


@dataclass(frozen=True, eq=False)
class _BallStencil:
    offsets: np.ndarray     # lattice offsets with |y| < 1
    y: np.ndarray
    w: np.ndarray           # (2 - sigma) cell masses
    axes: np.ndarray        # +e_1, -e_1, +e_2, -e_2, ...
    inner: float


def _ball_stencil(rule: QuadratureRule) -> _BallStencil:
    keep = rule.lattice_inside
    axes = []
    for i in range(rule.n):
        e = np.zeros(rule.n, dtype=np.int64)
        e[i] = 1
        axes += [e, -e]
    return _BallStencil(rule.lattice_offsets[keep], rule.lattice_y[keep], rule.lattice_w[keep],
                        np.array(axes), rule.inner_coef)


def _differences(u, t, nodes, st: _BallStencil, h: float, flat):
    """``delta u(x; y)`` on the ball stencil and pure second differences."""
    inc = lattice_increments(u, t, nodes, st.offsets, flat)
    ax = lattice_increments(u, t, nodes, st.axes, flat)
    grad = (ax[:, 0::2] - ax[:, 1::2]) / (2 * h)
    second = (ax[:, 0::2] + ax[:, 1::2]) / h ** 2
    return inc - grad @ st.y.T, second


def _pn_slice(u, t, nodes, base, st, cut, mask=None):
    g = u.grid
    flat = u.flat(t)
    dx, sx = _differences(u, t, nodes, st, g.h, flat)
    d0, s0 = _differences(u, t, np.array([base]), st, g.h, flat)
    d = dx - d0
    ds = sx - s0
    # differences below the rounding level of their terms are cancellations
    scale = ROUNDOFF * float(np.abs(flat).max())
    d = np.where(np.abs(d) <= scale * (1 + np.linalg.norm(st.y, axis=1) / g.h), 0.0, d)
    ds = np.where(np.abs(ds) <= scale / g.h ** 2, 0.0, ds)
    if mask is not None:
        d = d[:, mask]
        w = st.w[mask]
    else:
        w = st.w
    pos = np.maximum(d, 0) @ w + st.inner * np.maximum(ds, 0).sum(axis=1)
    neg = np.maximum(-d, 0) @ w + st.inner * np.maximum(-ds, 0).sum(axis=1)
    return cut * pos, cut * neg, cut * (d @ w + st.inner * ds.sum(axis=1))


def _cutoff_nodes(u: SpaceTimeField, base: int):
    g = u.grid
    pts = g.points()
    r = np.linalg.norm(pts - pts[base], axis=1)
    nodes = np.flatnonzero((r < 1.0) & g.interior_mask())
    return nodes, phi(pts[nodes] - pts[base])


def _base_index(u: SpaceTimeField, base) -> int:
    b = u.grid.node_index(np.zeros(u.n) if base is None else base)
    if not u.grid.interior_mask()[b]:
        raise DomainError("base point must be an interior node")
    return b


def compute_wA(u: SpaceTimeField, A, x, t: float, base=None,
               rule: QuadratureRule | None = None, centre: bool | None = None) -> float:
    """Cutoff times the integral of ``delta u(x; y) - delta u(base; y)`` over ``A``.

    ``A`` is a callable indicator of ``y`` (evaluated on the quadrature
    nodes) or a boolean mask over the lattice nodes inside the unit ball.
    The central cell belongs to ``A`` when the indicator holds at ``y = 0``
    (for masks, when ``centre`` is true).
    """
    rule = rule or rule_for(u.grid, u.sigma)
    st = _ball_stencil(rule)
    b = _base_index(u, base)
    if callable(A):
        full = np.asarray(A(rule.lattice_y), dtype=bool)
        if np.any(full & ~rule.lattice_inside):
            raise DomainError("the set A must lie inside the unit ball")
        mask = full[rule.lattice_inside]
        if centre is None:
            centre = bool(np.asarray(A(np.zeros((1, u.n))), dtype=bool).reshape(-1)[0])
    else:
        mask = np.asarray(A, dtype=bool)
        if mask.shape != (st.offsets.shape[0],):
            raise DomainError("mask must cover the lattice nodes inside the unit ball")
        centre = bool(centre)
    pts = u.grid.points()
    ix = u.grid.node_index(x)
    r = np.linalg.norm(pts[ix] - pts[b])
    if r >= 1.0 or (not mask.any() and not centre):
        return 0.0
    if not u.grid.interior_mask()[ix]:
        raise DomainError("x must be an interior node")
    cut = phi(pts[ix:ix + 1] - pts[b])
    st_used = st if centre else _BallStencil(st.offsets, st.y, st.w, st.axes, 0.0)
    _, _, w = _pn_slice(u, t, np.array([ix]), b, st_used, cut, mask)
    return float(w[0])


def compute_PN(u: SpaceTimeField, times=None, base=None,
               rule: QuadratureRule | None = None) -> PNField:
    """Positive and negative envelopes of ``w_A`` over ``A`` inside the unit ball."""
    rule = rule or rule_for(u.grid, u.sigma)
    st = _ball_stencil(rule)
    b = _base_index(u, base)
    times = u.times if times is None else np.atleast_1d(np.asarray(times, dtype=float))
    nodes, cut = _cutoff_nodes(u, b)
    P = np.zeros((len(times), u.grid.size))
    N = np.zeros_like(P)
    for i, t in enumerate(times):
        p, q, _ = _pn_slice(u, float(t), nodes, b, st, cut)
        P[i, nodes] = p
        N[i, nodes] = q
    return PNField(u.grid, np.asarray(times, dtype=float), P, N, u.sigma, b)
