"""Kernels, drifts and the operator classes L0 ⊇ L1 ⊇ L2.

A kernel is a map ``K: R^n \\ {0} -> [0, inf)`` entering the operator through
``(2 - sigma) K(y) / |y|^(n + sigma)``.  Kernel callables receive offsets as an
array of shape ``(m, n)`` and return an array of shape ``(m,)``.
"""
from __future__ import annotations

import math
import re
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError, InvalidKernelError, NumericError

KernelFn = Callable[[np.ndarray], np.ndarray]

CLASS_TAGS = ("L0", "L1", "L2")

# validation shells
SHELL_RADII = 48
SHELL_ANGLES = 32
SHELL_RMIN, SHELL_RMAX = 1e-3, 1e3

# drift-compensation radial grid
DRIFT_RADII = 32
DRIFT_RMIN = 1e-3


def surface_area(n: int) -> float:
    """Measure of the unit sphere in R^n (counting measure for n=1)."""
    return 2.0 * math.pi ** (n / 2) / math.gamma(n / 2)


@dataclass(frozen=True, eq=False)
class KernelSpec:
    n: int
    sigma: float
    kernel_fn: KernelFn
    drift: tuple = None
    lam: float = 1.0
    Lam: float = 1.0
    beta: float = 0.0
    class_tag: str = "L0"
    name: str = "custom"
    even: bool = False

    def __post_init__(self):
        if self.n not in (1, 2):
            raise DomainError(f"dimension must be 1 or 2, got {self.n}")
        if not 0.0 < self.sigma < 2.0:
            raise DomainError(f"order sigma must lie in (0, 2), got {self.sigma}")
        if self.sigma < 1.0:
            warnings.warn(f"sigma={self.sigma} is outside the canonical range [1, 2)",
                          stacklevel=3)
        if not 0.0 < self.lam <= self.Lam:
            raise DomainError(f"need 0 < lambda <= Lambda, got {self.lam}, {self.Lam}")
        if self.beta < 0:
            raise DomainError("beta must be nonnegative")
        if self.class_tag not in CLASS_TAGS:
            raise DomainError(f"class_tag must be one of {CLASS_TAGS}")
        b = (0.0,) * self.n if self.drift is None else tuple(float(v) for v in np.ravel(self.drift))
        if len(b) != self.n:
            raise DomainError(f"drift has {len(b)} components, expected {self.n}")
        object.__setattr__(self, "drift", b)

    @property
    def b(self) -> np.ndarray:
        return np.asarray(self.drift, dtype=float)

    def __call__(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float).reshape(-1, self.n)
        return np.asarray(self.kernel_fn(y), dtype=float).reshape(-1)

    def with_params(self, **kw) -> "KernelSpec":
        return replace(self, **kw)


def _check_values(k: KernelSpec, y: np.ndarray, vals: np.ndarray):
    bad = ~np.isfinite(vals) | (vals < 0)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise InvalidKernelError(
            f"kernel {k.name!r} returned {vals[i]!r} at y={tuple(y[i])}")


def shell_samples(n: int, radii: int = SHELL_RADII, angles: int = SHELL_ANGLES,
                  rmin: float = SHELL_RMIN, rmax: float = SHELL_RMAX) -> np.ndarray:
    """Deterministic log-radial sample points, shape (radii * directions, n)."""
    r = np.geomspace(rmin, rmax, radii)
    if n == 1:
        dirs = np.array([[1.0], [-1.0]])
    else:
        th = 2 * np.pi * np.arange(angles) / angles
        dirs = np.stack([np.cos(th), np.sin(th)], axis=1)
    return (r[:, None, None] * dirs[None, :, :]).reshape(-1, n)


@dataclass
class ValidationReport:
    passed: bool
    margin: float
    worst_point: tuple | None = None
    details: dict = field(default_factory=dict)


def check_bounds(k: KernelSpec, sample_count: int = SHELL_RADII) -> ValidationReport:
    """Check ``lambda <= K <= Lambda`` on log-radial shells in [1e-3, 1e3].

    ``sample_count`` is the number of radii; the margin is
    ``min(K - lambda, Lambda - K)`` over all samples.
    """
    if sample_count < 1:
        raise DomainError("sample_count must be >= 1")
    y = shell_samples(k.n, radii=sample_count)
    K = k(y)
    _check_values(k, y, K)
    slack = np.minimum(K - k.lam, k.Lam - K)
    i = int(np.argmin(slack))
    margin = float(slack[i])
    return ValidationReport(margin >= -1e-12, margin, tuple(y[i]),
                            {"min": float(K.min()), "max": float(K.max())})


def default_r_grid() -> np.ndarray:
    return np.geomspace(DRIFT_RMIN, 1 - DRIFT_RMIN, DRIFT_RADII)


def _angular_nodes(n: int, count: int = 64):
    if n == 1:
        return np.array([[1.0], [-1.0]]), np.array([1.0, 1.0])
    th = 2 * np.pi * (np.arange(count) + 0.5) / count
    return np.stack([np.cos(th), np.sin(th)], axis=1), np.full(count, 2 * np.pi / count)


def drift_vector(k: KernelSpec, r_grid=None, gauss_nodes: int = 24) -> np.ndarray:
    """Values of ``b + (2-sigma) int_{B1 \\ B_r} y K / |y|^(n+sigma)`` per radius.

    Returns an array of shape ``(len(r_grid), n)`` ordered like ``r_grid``.
    Integration is Gauss-Legendre in ``log|y|`` between consecutive radii
    with symmetric angular nodes, so even kernels cancel to rounding.
    """
    r = default_r_grid() if r_grid is None else np.asarray(r_grid, dtype=float).ravel()
    if r.size == 0 or np.any(r <= 0) or np.any(r >= 1):
        raise DomainError("r_grid must be nonempty and inside (0, 1)")
    order = np.argsort(r)[::-1]
    rs = r[order]
    edges = np.concatenate([[1.0], rs])
    dirs, dw = _angular_nodes(k.n)
    xg, wg = np.polynomial.legendre.leggauss(gauss_nodes)
    pieces = np.zeros((rs.size, k.n))
    for i in range(rs.size):
        lo, hi = math.log(edges[i + 1]), math.log(edges[i])
        if hi <= lo:
            continue
        s = 0.5 * (hi - lo) * xg + 0.5 * (hi + lo)
        rho = np.exp(s)
        pts = (rho[:, None, None] * dirs[None]).reshape(-1, k.n)
        Kv = k(pts)
        _check_values(k, pts, Kv)
        Kv = Kv.reshape(rho.size, -1)
        # m(rho) = sum_theta theta K(rho theta) dtheta
        m = np.einsum("qa,a,ad->qd", Kv, dw, dirs)
        pieces[i] = 0.5 * (hi - lo) * np.einsum("q,q,qd->d", wg, rho ** (1 - k.sigma), m)
    integral = (2 - k.sigma) * np.cumsum(pieces, axis=0)
    vals = k.b[None, :] + integral
    if not np.all(np.isfinite(vals)):
        raise NumericError(f"non-finite drift integral for kernel {k.name!r}")
    out = np.empty_like(vals)
    out[order] = vals
    return out


def drift_compensation(k: KernelSpec, r_grid=None) -> float:
    """Grid maximum over ``r`` of the compensated drift magnitude."""
    return float(np.max(np.linalg.norm(drift_vector(k, r_grid), axis=1)))


def check_smoothness(k: KernelSpec, level: str = "L1", slack: float = 0.05) -> ValidationReport:
    """Finite-difference check of ``|DK| |y| <= Lambda`` (and ``|D^2K| |y|^2`` for L2)."""
    if level not in ("L1", "L2"):
        raise DomainError("level must be 'L1' or 'L2'")
    y = shell_samples(k.n)
    r = np.linalg.norm(y, axis=1)
    step = 1e-3 * r
    eye = np.eye(k.n)
    K0 = k(y)
    _check_values(k, y, K0)
    grad = np.zeros_like(y)
    hess = np.zeros((y.shape[0], k.n, k.n))
    for i in range(k.n):
        e = eye[i] * step[:, None]
        kp, km = k(y + e), k(y - e)
        grad[:, i] = (kp - km) / (2 * step)
        hess[:, i, i] = (kp - 2 * K0 + km) / step ** 2
        for j in range(i + 1, k.n):
            f = eye[j] * step[:, None]
            mixed = (k(y + e + f) - k(y + e - f) - k(y - e + f) + k(y - e - f)) / (4 * step ** 2)
            hess[:, i, j] = hess[:, j, i] = mixed
    d1 = np.linalg.norm(grad, axis=1) * r
    stats = {"max_grad_scaled": float(d1.max())}
    worst = d1
    if level == "L2":
        d2 = np.linalg.norm(hess, ord=2, axis=(1, 2)) * r ** 2
        stats["max_hess_scaled"] = float(d2.max())
        worst = np.maximum(d1, d2)
    if not np.all(np.isfinite(worst)):
        raise NumericError("non-finite finite-difference estimate")
    i = int(np.argmax(worst))
    margin = float(k.Lam * (1 + slack) - worst[i])
    return ValidationReport(margin >= 0, margin, tuple(y[i]), stats)


# ---------------------------------------------------------------- presets

def _unit_dir(y):
    r = np.linalg.norm(y, axis=1)
    return y[:, 0] / r, r


def _const(a):
    return lambda y: np.ones(y.shape[0])


def _odd_bump(a):
    return lambda y: 1.0 + a * np.sign(y[:, 0])


def _smooth_odd(a):
    def fn(y):
        c, r = _unit_dir(y)
        return 1.0 + a * c * r ** 2 / (1.0 + r ** 2)
    return fn


def _anisotropic(a):
    def fn(y):
        c, _ = _unit_dir(y)
        return 1.0 + a * c ** 2
    return fn


PRESETS = {
    "const": (_const, True),
    "odd-bump": (_odd_bump, False),
    "smooth-odd": (_smooth_odd, False),
    "anisotropic": (_anisotropic, True),
}

_PRESET_RE = re.compile(r"^\s*([a-z\-]+)\s*(?:\(\s*([-+0-9.eE]+)\s*\))?\s*$")


def parse_preset(spec: str):
    """Split ``"smooth-odd(0.3)"`` into ``("smooth-odd", 0.3)``."""
    m = _PRESET_RE.match(spec)
    if not m or m.group(1) not in PRESETS:
        raise DomainError(f"unknown kernel preset {spec!r}; known: {sorted(PRESETS)}")
    name = m.group(1)
    a = float(m.group(2)) if m.group(2) is not None else 0.0
    if name != "const" and m.group(2) is None:
        raise DomainError(f"preset {name!r} needs an amplitude, e.g. {name}(0.5)")
    return name, a


def make_kernel(preset: str, n: int, sigma: float, drift=None, lam: float = 1.0,
                Lam: float = 1.0, beta: float = 0.0, scale: float = 1.0,
                class_tag: str | None = None) -> KernelSpec:
    """Build a KernelSpec from a named preset, multiplied by ``scale``.

    ============== =========================================
    const          K = 1
    odd-bump(a)    K = 1 + a sign(y1)
    smooth-odd(a)  K = 1 + a (y1/|y|) |y|^2 / (1 + |y|^2)
    anisotropic(a) K = 1 + a (y1/|y|)^2
    ============== =========================================
    """
    name, a = parse_preset(preset)
    factory, even = PRESETS[name]
    base = factory(a)
    fn = base if scale == 1.0 else (lambda y, base=base: scale * base(y))
    if class_tag is None:
        class_tag = "L0" if (name == "odd-bump" and n == 2) else "L2"
    label = preset.strip() if scale == 1.0 else f"{scale:g}*{preset.strip()}"
    return KernelSpec(n=n, sigma=sigma, kernel_fn=fn, drift=drift, lam=lam, Lam=Lam,
                      beta=beta, class_tag=class_tag, name=label, even=even)


def adjoint_pair(k: KernelSpec) -> KernelSpec:
    """Reflected kernel ``K(-y)`` with negated drift."""
    fn = k.kernel_fn
    return replace(k, kernel_fn=lambda y: fn(-y), drift=tuple(-v for v in k.drift),
                   name=f"adjoint({k.name})")


# ---------------------------------------------------------------- families

@dataclass(frozen=True, eq=False)
class OperatorFamily:
    """Finite family of linear operators or a Pucci class descriptor."""

    members: tuple = ()
    kind: str = "finite"
    n: int | None = None
    sigma: float | None = None
    lam: float | None = None
    Lam: float | None = None
    beta: float | None = None

    def __post_init__(self):
        if self.kind not in ("finite", "pucci"):
            raise DomainError("kind must be 'finite' or 'pucci'")
        members = tuple(self.members)
        object.__setattr__(self, "members", members)
        if self.kind == "finite":
            if not members:
                raise DomainError("a finite family needs at least one member")
            first = members[0]
            for k in members[1:]:
                if (k.n, k.sigma) != (first.n, first.sigma):
                    raise DomainError("family members must share n and sigma")
                if (k.lam, k.Lam, k.beta) != (first.lam, first.Lam, first.beta):
                    raise DomainError("family members must share (lambda, Lambda, beta)")
            for attr in ("n", "sigma", "lam", "Lam", "beta"):
                if getattr(self, attr) is None:
                    object.__setattr__(self, attr, getattr(first, attr))
        else:
            if None in (self.n, self.sigma, self.lam, self.Lam, self.beta):
                raise DomainError("a Pucci class needs n, sigma, lam, Lam, beta")
            if not 0 < self.lam <= self.Lam:
                raise DomainError("need 0 < lambda <= Lambda")

    @classmethod
    def finite(cls, members: Sequence[KernelSpec]) -> "OperatorFamily":
        return cls(members=tuple(members), kind="finite")

    @classmethod
    def pucci(cls, n, sigma, lam, Lam, beta) -> "OperatorFamily":
        return cls(kind="pucci", n=n, sigma=sigma, lam=lam, Lam=Lam, beta=beta)

    def validate(self, r_grid=None) -> list[ValidationReport]:
        """Bounds, drift budget and smoothness report for every member."""
        out = []
        for k in self.members:
            rep = check_bounds(k)
            dc = drift_compensation(k, r_grid)
            rep.details["drift_compensation"] = dc
            rep.passed = rep.passed and dc <= k.beta + 1e-12
            if k.class_tag in ("L1", "L2"):
                sm = check_smoothness(k, k.class_tag)
                rep.details["smoothness_margin"] = sm.margin
                rep.passed = rep.passed and sm.passed
            out.append(rep)
        return out
