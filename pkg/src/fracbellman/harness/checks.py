"""Empirical versions of the regularity estimates, run on solved fields."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field as dc_field

import numpy as np

from ..errors import DomainError, InsufficientResolution, PreconditionError
from ..field import (Cylinder, Exterior, SpaceTimeField, parabolic_holder_seminorm,
                     time_lipschitz_seminorm, weighted_l1)
from ..kernels import KernelSpec, make_kernel
from ..operators import _Increments, _default_nodes, linear_values, pucci_values, rule_for
from .cutoffs import psi
from .pn import PNField


# ---------------------------------------------------------------- helpers

def _times_in(u, t_lo: float, t_hi: float) -> np.ndarray:
    """Indices of stored times in ``(t_lo, t_hi]``."""
    eps = 1e-9 * max(1.0, abs(t_hi))
    return np.flatnonzero((u.times > t_lo + eps) & (u.times <= t_hi + eps))


def _ball_nodes(grid, r: float, centre=None, interior: bool = True) -> np.ndarray:
    pts = grid.points()
    c = np.zeros(grid.n) if centre is None else np.asarray(centre, dtype=float)
    keep = np.linalg.norm(pts - c, axis=1) <= r * (1 + 1e-12)
    if interior:
        keep &= grid.interior_mask()
    return np.flatnonzero(keep)


def _aux_exterior(grid):
    return Exterior.periodic() if grid.periodic else Exterior.zero()


def _loglog_fit(x: np.ndarray, y: np.ndarray):
    """Least-squares ``log y = a + s log x``; returns ``(s, exp(a), rms residual)``."""
    lx, ly = np.log(x), np.log(y)
    A = np.stack([np.ones_like(lx), lx], axis=1)
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    res = float(np.sqrt(np.mean((A @ coef - ly) ** 2)))
    return float(coef[1]), float(math.exp(coef[0])), res


# ---------------------------------------------------------------- fractional Laplacian

def frac_laplacian(u: SpaceTimeField, x, t: float, rule=None) -> float:
    """Constant-kernel operator with the sign flipped (positive at maxima)."""
    from ..operators import evaluate_linear
    k = make_kernel("const", u.n, u.sigma)
    return -evaluate_linear(k, u, x, t, rule).value


def frac_laplacian_values(u: SpaceTimeField, t: float, nodes=None, rule=None) -> np.ndarray:
    k = make_kernel("const", u.n, u.sigma)
    return -linear_values(k, u, t, nodes, rule)["value"]


@dataclass
class HolderFit:
    alpha: float
    constant: float
    residual: float
    radii: np.ndarray
    oscillations: np.ndarray


def frac_laplacian_holder(u: SpaceTimeField, r_max: float = 0.5, min_cells: int = 2,
                          t_end: float | None = None, rule=None) -> HolderFit:
    """Fit ``osc_{C_{r, r^sigma}} F ~ C r^alpha`` for ``F`` the fractional Laplacian.

    Cylinders are centred at the origin and end at ``t_end``; radii halve
    from ``r_max`` down to ``min_cells`` grid cells.
    """
    t_end = u.t2 if t_end is None else t_end
    g = u.grid
    radii = []
    r = r_max
    while r >= min_cells * g.h - 1e-12:
        radii.append(r)
        r /= 2
    if len(radii) < 2:
        raise InsufficientResolution("need at least two radii for a Holder fit")
    nodes = _ball_nodes(g, r_max)
    tidx = _times_in(u, t_end - r_max ** u.sigma, t_end)
    F = np.stack([frac_laplacian_values(u, float(u.times[i]), nodes, rule) for i in tidx])
    rad = np.linalg.norm(g.points()[nodes], axis=1)
    osc = []
    for r in radii:
        ti = u.times[tidx] > t_end - r ** u.sigma + 1e-9 * max(1.0, abs(t_end))
        sel = F[np.ix_(ti, rad <= r * (1 + 1e-12))]
        osc.append(float(sel.max() - sel.min()) if sel.size else 0.0)
    radii, osc = np.array(radii), np.array(osc)
    pos = osc > 0
    if pos.sum() < 2:
        return HolderFit(math.inf, 0.0, 0.0, radii, osc)
    a, c, res = _loglog_fit(radii[pos], osc[pos])
    return HolderFit(a, c, res, radii, osc)


# ---------------------------------------------------------------- boundedness of L

@dataclass
class BoundLReport:
    sup_L: float
    abs_integral: float
    normalization: float
    sup_L_raw: float
    abs_integral_raw: float
    argmax: tuple


def normalization_constant(u: SpaceTimeField) -> float:
    """``sup_t ||u(t)||_{L1(omega)} + [u]_{Lip(L1(omega))}`` over the stored times."""
    l1 = max(weighted_l1(u, float(t)) for t in u.times)
    lip = time_lipschitz_seminorm(u) if u.times.size > 1 else 0.0
    return l1 + lip


def check_bound_L(u: SpaceTimeField, Lam: float, beta: float, radius: float = 1.0,
                  duration: float = 1.0, t_end: float | None = None, rule=None,
                  normalize: bool = True) -> BoundLReport:
    """Largest ``|L u|`` over kernels in ``[0, Lam]`` and drifts in ``B_beta`` on ``C_{1,1}``.

    The extremal kernels are sign-adapted (``Lam`` where the increment has
    the favourable sign, 0 elsewhere).  Also reports the integral of
    ``|delta u|`` against the unit kernel.  When the normalization constant
    exceeds 1 both quantities are divided by it (with a warning).
    """
    g = u.grid
    rule = rule or rule_for(g, u.sigma)
    t_end = u.t2 if t_end is None else t_end
    nodes = _ball_nodes(g, radius)
    tidx = _times_in(u, t_end - duration, t_end)
    if tidx.size == 0:
        raise DomainError("no stored times in the cylinder")
    inside = rule.lattice_inside
    y_in = rule.lattice_y[inside]
    best, best_at, absint = 0.0, (), 0.0
    pts = g.points()
    for i in tidx:
        t = float(u.times[i])
        inc = _Increments(u, t, nodes, rule)
        grad = inc.centered
        d_lat = inc.lattice.copy()
        d_lat[:, inside] -= grad @ y_in.T
        pos = np.maximum(d_lat, 0) @ rule.lattice_w + np.maximum(inc.outer, 0) @ rule.outer_w \
            + rule.inner_coef * np.maximum(inc.second, 0).sum(axis=1)
        neg = np.maximum(-d_lat, 0) @ rule.lattice_w + np.maximum(-inc.outer, 0) @ rule.outer_w \
            + rule.inner_coef * np.maximum(-inc.second, 0).sum(axis=1)
        gnorm = np.linalg.norm(grad, axis=1)
        val = np.maximum(Lam * pos, Lam * neg) + beta * gnorm
        j = int(np.argmax(val))
        if val[j] > best:
            best, best_at = float(val[j]), (tuple(pts[nodes[j]]), t)
        absint = max(absint, float((pos + neg).max()))
    norm = normalization_constant(u) if normalize else 1.0
    scale = 1.0
    if norm > 1:
        warnings.warn(f"field norm {norm:.4g} > 1: values rescaled", stacklevel=2)
        scale = norm
    return BoundLReport(best / scale, absint / scale, norm, best, absint, best_at)


# ---------------------------------------------------------------- comparability

@dataclass
class ComparabilityReport:
    C: float
    argmax: tuple
    alpha: float


def check_comparability(pn: PNField, alpha: float, lam: float, Lam: float,
                        radius: float = 1 / 8) -> ComparabilityReport:
    """Smallest ``C`` with ``lam/Lam N - C|x|^a <= P <= Lam/lam N + C|x|^a`` on ``B_radius``."""
    if not 0 < lam <= Lam:
        raise DomainError("need 0 < lam <= Lam")
    r = pn.radius()
    sel = (r <= radius * (1 + 1e-12)) & (r > 0)
    if not sel.any():
        raise InsufficientResolution("no grid nodes in the comparability region")
    ra = r[sel] ** alpha
    P, N = pn.P[:, sel], pn.N[:, sel]
    lower = (lam / Lam * N - P) / ra
    upper = (P - Lam / lam * N) / ra
    worst = np.maximum(np.maximum(lower, upper), 0.0)
    ti, xi = np.unravel_index(int(np.argmax(worst)), worst.shape)
    C = float(worst[ti, xi])
    at = (tuple(pn.grid.points()[np.flatnonzero(sel)[xi]]), float(pn.times[ti])) if C > 0 else ()
    return ComparabilityReport(C, at, alpha)


# ---------------------------------------------------------------- oscillation decay

@dataclass(frozen=True)
class OscillationParams:
    kappa: float = 0.25
    theta: float = 0.05
    eps1: float = 0.1
    s: float = 2.0
    eta: float = 0.1
    eps: float = 1.0
    iterations: int = 8
    alpha: float | None = None

    def constraint_report(self, sigma: float) -> dict:
        k, th = self.kappa, self.theta
        out = {
            "margin_half": (1 - th) - math.sqrt(k) - th / 2,
            "margin_sigma": (1 - th) - k ** sigma,
        }
        if self.alpha is not None:
            out["margin_alpha"] = (1 - th) - k ** (sigma - self.alpha)
        return out

    def validate(self, sigma: float):
        if not 0 < self.kappa < 1 or not 0 <= self.theta < 1:
            raise DomainError("need kappa in (0, 1) and theta in [0, 1)")
        bad = {k: v for k, v in self.constraint_report(sigma).items() if v < 0}
        if bad:
            raise DomainError(f"oscillation parameters violate constraints: {bad}")


@dataclass
class DecayTrace:
    M: np.ndarray
    ratios: np.ndarray
    scales: np.ndarray
    alpha: float
    constant: float
    theta_star: float
    passed: bool
    finest_scale: int
    normalized: np.ndarray = dc_field(default_factory=lambda: np.zeros(0))


def oscillation_decay(pn: PNField, params: OscillationParams = OscillationParams(),
                      t_end: float | None = None, min_cells: float = 2.0,
                      check_params: bool = True) -> DecayTrace:
    """Sup of ``P + N`` over the cylinders ``C_{kappa^k, kappa^(sigma k)}``.

    Scale ``k`` is usable while ``kappa^k`` spans at least ``min_cells`` grid
    cells and the time window holds a stored slice.  ``theta_star`` is one
    minus the largest of the first three ratios.
    """
    if check_params:
        params.validate(pn.sigma)
    k_, s = params.kappa, pn.sigma
    t_end = float(pn.times[-1]) if t_end is None else t_end
    r = pn.radius()
    S = pn.P + pn.N
    Ms, ks = [], []
    eps = 1e-9 * max(1.0, abs(t_end))
    for k in range(params.iterations + 1):
        rad, dur = k_ ** k, k_ ** (s * k)
        if rad < min_cells * pn.grid.h - 1e-12:
            break
        ti = (pn.times > t_end - dur + eps) & (pn.times <= t_end + eps)
        if not ti.any():
            break
        Ms.append(float(S[np.ix_(ti, r <= rad * (1 + 1e-12))].max()))
        ks.append(k)
    if len(Ms) < 2:
        raise InsufficientResolution(
            f"only {len(Ms)} usable scale(s); finest usable k = {ks[-1] if ks else None}")
    M = np.array(Ms)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(M[:-1] > 0, M[1:] / M[:-1], 0.0)
    normalized = M * (1 - params.theta) ** (-np.array(ks, dtype=float))
    if np.all(M == 0):
        return DecayTrace(M, ratios, np.array(ks), math.inf, 0.0, 1.0, True, ks[-1], normalized)
    pos = M > 0
    if pos.sum() >= 2:
        slope, c, _ = _loglog_fit(k_ ** np.array(ks, dtype=float)[pos], M[pos])
    else:
        slope, c = math.inf, float(M[0])
    theta_star = 1.0 - float(ratios[:3].max())
    passed = bool(np.all(ratios <= 1 - params.theta + 1e-12))
    return DecayTrace(M, ratios, np.array(ks), slope, c, theta_star, passed, ks[-1], normalized)


# ---------------------------------------------------------------- point estimate

@dataclass
class PointEstimateReport:
    C: float
    eps: float
    fractions: np.ndarray
    levels: np.ndarray
    inf_later: float


def point_estimate_check(u: SpaceTimeField, r: float = 0.5, levels=None, f_norm: float = 0.0,
                         t_end: float | None = None, eps: float | None = None,
                         tol: float = 1e-12) -> PointEstimateReport:
    """Level-set fractions in ``C_{r, r^sigma}`` against the infimum on the later cylinder.

    The earlier cylinder is ``B_r x (t_c - r^sigma, t_c]`` and the later one
    ``B_r x (t_c, t_c + r^sigma]`` with ``t_c = t_end - r^sigma``.  ``eps`` is
    fitted from the decay of the fractions in ``s`` when not given (1 if
    fewer than two levels have positive fraction).
    """
    t_end = u.t2 if t_end is None else t_end
    tau = r ** u.sigma
    tc = t_end - tau
    nodes = _ball_nodes(u.grid, r, interior=False)
    early = _times_in(u, tc - tau, tc)
    late = _times_in(u, tc, t_end)
    if early.size == 0 or late.size == 0:
        raise InsufficientResolution("cylinders contain no stored slices")
    vals_e = u.values.reshape(len(u.times), -1)[np.ix_(early, nodes)]
    vals_l = u.values.reshape(len(u.times), -1)[np.ix_(late, nodes)]
    if vals_e.min() < -tol or vals_l.min() < -tol:
        raise PreconditionError("field is negative in the cylinders")
    Q = float(vals_l.min()) + f_norm
    if levels is None:
        top = float(vals_e.max())
        levels = top * np.array([0.2, 0.4, 0.6, 0.8, 0.95]) if top > 0 else np.array([1.0])
    levels = np.asarray(levels, dtype=float)
    frac = np.array([(vals_e > s).mean() for s in levels])
    if eps is None:
        ok = frac > 0
        eps = 1.0
        if ok.sum() >= 2 and np.ptp(levels[ok]) > 0:
            slope, _, _ = _loglog_fit(levels[ok], frac[ok])
            if slope < 0:
                eps = -slope
    if not np.any(frac > 0):
        return PointEstimateReport(0.0, eps, frac, levels, Q)
    if Q <= 0:
        return PointEstimateReport(math.inf, eps, frac, levels, Q)
    C = float(np.max(frac * (levels / Q) ** eps))
    return PointEstimateReport(C, eps, frac, levels, Q)


# ---------------------------------------------------------------- oscillation lemma

@dataclass
class OscillationLemmaReport:
    C: float
    sup_positive: float
    l1_positive: float
    skipped: bool = False
    note: str = ""


def _positive_part(u: SpaceTimeField) -> SpaceTimeField:
    ext = u.exterior
    if ext.kind in ("periodic", "zero"):
        new = ext
    elif ext.kind == "constant":
        new = Exterior.constant(max(ext.c, 0.0))
    else:
        fn = lambda x, t, e=ext: np.maximum(e(x, t), 0.0)
        new = Exterior.growth(fn, ext.gamma, ext.M) if ext.gamma > 0 else Exterior.bounded(fn, ext.M)
    return u.with_values(np.maximum(u.values, 0.0), new)


def oscillation_lemma_check(u: SpaceTimeField, inner_radius: float = 0.5, t1: float | None = None,
                            t2: float | None = None, inner_start: float | None = None,
                            f_pos_norm: float = 0.0) -> OscillationLemmaReport:
    """``sup u^+`` on the inner cylinder over the time integral of ``||u^+||_{L1(omega)}``.

    Defaults: outer window ``(t2 - 1, t2]``, inner ``B_{1/2} x (t2 - 1/2, t2]``.
    A field constant in space and time is skipped (it is not a strict
    subsolution configuration).
    """
    t2 = u.t2 if t2 is None else t2
    t1 = t2 - 1.0 if t1 is None else t1
    inner_start = t1 + 0.5 * (t2 - t1) if inner_start is None else inner_start
    if np.ptp(u.values) == 0 and u.exterior.kind in ("constant", "periodic", "zero"):
        return OscillationLemmaReport(math.nan, float(max(u.values.max(), 0)), math.nan, True,
                                      "constant field: configuration guard")
    nodes = _ball_nodes(u.grid, inner_radius, interior=False)
    ti = _times_in(u, inner_start, t2)
    sup = float(max(0.0, u.values.reshape(len(u.times), -1)[np.ix_(ti, nodes)].max()))
    if sup == 0:
        return OscillationLemmaReport(0.0, 0.0, 0.0)
    up = _positive_part(u)
    idx = np.flatnonzero((u.times >= t1 - 1e-12) & (u.times <= t2 + 1e-12))
    vals = np.array([weighted_l1(up, float(u.times[i])) for i in idx])
    ts = u.times[idx]
    integral = float(np.sum(0.5 * (vals[1:] + vals[:-1]) * np.diff(ts))) + f_pos_norm
    C = sup / integral if integral > 0 else math.inf
    return OscillationLemmaReport(C, sup, integral)


# ---------------------------------------------------------------- time regularity

@dataclass
class TimeRegularityReport:
    sup_ut: float
    holder_ut: float
    exterior_lip: float
    C: float
    grad_holder: float
    alpha: float


def time_regularity_check(u: SpaceTimeField, alpha: float = 0.5, radius: float = 0.5,
                          duration: float = 0.5, t_end: float | None = None) -> TimeRegularityReport:
    """Backward-difference ``u_t`` on ``C_{1/2,1/2}`` against the exterior's time modulus.

    The exterior modulus is the time-Lipschitz seminorm of ``u`` with its
    values inside ``B_1`` removed.  Also reports the Holder seminorm of the
    centered-difference gradient on the same cylinder.
    """
    if u.times.size < 2:
        raise DomainError("need at least two slices")
    g = u.grid
    t_end = u.t2 if t_end is None else t_end
    dt = np.diff(u.times)
    ut = np.diff(u.values, axis=0) / dt.reshape((-1,) + (1,) * g.n)
    aux = _aux_exterior(g)
    fut = SpaceTimeField(g, u.times[1:], ut, aux, u.sigma)
    cyl = Cylinder(tuple([0.0] * g.n), t_end, radius, duration)
    ti = _times_in(fut, t_end - duration, t_end)
    nodes = _ball_nodes(g, radius, interior=False)
    sup = float(np.abs(fut.values.reshape(len(fut.times), -1)[np.ix_(ti, nodes)]).max())
    hol = parabolic_holder_seminorm(fut, alpha, cyl)
    outside = np.linalg.norm(g.points(), axis=1) >= 1.0
    masked = u.with_values(u.values * outside.reshape(g.shape))
    lip = time_lipschitz_seminorm(masked)
    C = (sup + hol) / lip if lip > 0 else (0.0 if sup + hol == 0 else math.inf)
    # gradient modulus
    grads = []
    for a in range(g.n):
        d = (np.roll(u.values, -1, axis=a + 1) - np.roll(u.values, 1, axis=a + 1)) / (2 * g.h)
        grads.append(SpaceTimeField(g, u.times, d, aux, u.sigma))
    gh = max(parabolic_holder_seminorm(f, alpha, cyl) for f in grads)
    return TimeRegularityReport(sup, hol, lip, C, gh, alpha)


# ---------------------------------------------------------------- subsolution identity

@dataclass
class SubsolutionReport:
    margin: float
    argmax: tuple


def truncated_constant_kernel(n: int, sigma: float) -> KernelSpec:
    """``K = 1`` on the unit ball and 0 outside (a linear operator, not in the class)."""
    fn = lambda y: (np.linalg.norm(y, axis=1) < 1.0).astype(float)
    return KernelSpec(n=n, sigma=sigma, kernel_fn=fn, name="const-truncated", even=True)


def subsolution_identity_check(u: SpaceTimeField, k: KernelSpec, lam: float, Lam: float,
                               beta: float, r1: float = 0.75, r2: float = 0.5,
                               t_end: float | None = None, rule=None) -> SubsolutionReport:
    """``max (v_t - M^+ v)`` on ``C_{r2, r2^sigma}`` for ``v = psi_{r1,r2} L u``."""
    g = u.grid
    if not r2 < r1 < g.R - g.h:
        raise DomainError("need r2 < r1 inside the grid")
    t_end = u.t2 if t_end is None else t_end
    nodes = _default_nodes(g, None)
    cut = psi(g.points()[nodes], r1, r2)
    support = nodes[cut > 0]
    tidx = _times_in(u, t_end - r2 ** u.sigma, t_end)
    tidx = np.union1d(tidx, np.maximum(tidx - 1, 0))
    V = np.zeros((len(tidx),) + (g.size,))
    for a, i in enumerate(tidx):
        V[a, support] = cut[cut > 0] * linear_values(k, u, float(u.times[i]), support, rule)["value"]
    v = SpaceTimeField(g, u.times[tidx], V.reshape((len(tidx),) + g.shape), _aux_exterior(g), u.sigma)
    inner = _ball_nodes(g, r2)
    best, at = -math.inf, ()
    pts = g.points()
    for a in range(1, len(tidx)):
        t = float(v.times[a])
        if t <= t_end - r2 ** u.sigma + 1e-12:
            continue
        vt = (V[a, inner] - V[a - 1, inner]) / (v.times[a] - v.times[a - 1])
        mp = pucci_values("plus", lam, Lam, beta, v, t, inner, rule)["value"]
        d = vt - mp
        j = int(np.argmax(d))
        if d[j] > best:
            best, at = float(d[j]), (tuple(pts[inner[j]]), t)
    return SubsolutionReport(best, at)
