"""Solve-then-check pipeline behind the command line."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .errors import FracBellmanError, InsufficientResolution, PreconditionError
from .field import Exterior, SpaceTimeField, write_field_csv
from .harness import checks as hc
from .harness.pn import compute_PN
from .kernels import drift_compensation
from .operators import bellman_values, pucci_values
from .solver import SchemeConfig, Scheme, comparison_test, solve

REPORT_HEADER = ("check", "sigma", "quantity", "value", "tolerance", "pass")


def fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


@dataclass
class SigmaResult:
    sigma: float
    rows: list = dc_field(default_factory=list)
    manifest: dict = dc_field(default_factory=dict)
    decay: object = None

    def add(self, check, quantity, value, tolerance, passed):
        self.rows.append((check, self.sigma, quantity, value, tolerance, bool(passed)))

    @property
    def passed(self) -> bool:
        return all(r[5] for r in self.rows)


def _finite(v) -> bool:
    return v is not None and math.isfinite(v)


def scheme_config(cfg: ExperimentConfig) -> SchemeConfig:
    return SchemeConfig(cfl_fraction=cfg.cfl_fraction, source=cfg.source or None,
                        store_dt=cfg.store_dt)


def solve_config(cfg: ExperimentConfig, sigma: float):
    grid = cfg.grid()
    fam = cfg.family(sigma)
    ext = cfg.exterior()
    scheme = Scheme(fam, grid, ext)
    u, info = solve(grid, cfg.initial(), ext, fam, scheme_config(cfg), cfg.t0, cfg.t0 + cfg.T,
                    scheme, return_info=True)
    return u, info, fam


def run_sigma(cfg: ExperimentConfig, sigma: float, outdir: Path | None,
              write_field: bool = True) -> SigmaResult:
    """Solve at one order, run the enabled checks and write the field."""
    res = SigmaResult(float(sigma))
    u, info, fam = solve_config(cfg, sigma)
    res.manifest = {"sigma": sigma, "dt": info.dt, "steps": info.steps, "max_row_sum": info.rate,
                    "stability_bound": info.stability_bound, "sup_solution": info.sup_solution,
                    "tail_bound": info.tail_bound, "slices": len(u.times)}
    if outdir is not None and write_field:
        d = outdir / f"sigma_{sigma:g}"
        d.mkdir(parents=True, exist_ok=True)
        write_field_csv(d / "field.csv", u)
    p = cfg.params
    for name in cfg.checks:
        try:
            _CHECKS[name](cfg, u, fam, res, p)
        except (InsufficientResolution, PreconditionError) as e:
            res.add(name, "error", type(e).__name__, str(e).replace(",", ";"), False)
    return res


# ---------------------------------------------------------------- individual checks

def _drift(cfg, u, fam, res, p):
    if fam.kind == "pucci":
        res.add("drift", "compensation", 0.0, cfg.beta, True)
        return
    for i, k in enumerate(fam.members):
        dc = drift_compensation(k)
        res.add("drift", f"compensation[{i}:{k.name}]", dc, cfg.beta, dc <= cfg.beta + 1e-12)


def _comparison(cfg, u, fam, res, p):
    grid = cfg.grid()
    ext_u = cfg.exterior()
    u0 = cfg.initial()
    bump = lambda x: 0.25 + 0.5 * np.exp(-np.sum(x ** 2, axis=1))
    v0 = lambda x: u0(x) + bump(x)
    ext_v = ext_u if grid.periodic else ext_u.combine(Exterior.constant(0.25))
    rep = comparison_test(grid, u0, v0, ext_u, ext_v, fam, scheme_config(cfg),
                          cfg.t0, cfg.t0 + cfg.T)
    res.add("comparison", "max_violation", rep.max_violation, 1e-10, rep.passed)


def _bound_L(cfg, u, fam, res, p):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rep = hc.check_bound_L(u, cfg.Lam, cfg.beta)
    res.add("bound_L", "sup_L", rep.sup_L, "finite", _finite(rep.sup_L))
    res.add("bound_L", "abs_delta_integral", rep.abs_integral, "finite", _finite(rep.abs_integral))
    res.add("bound_L", "normalization", rep.normalization, "info", True)


def _pn(u, res):
    if getattr(res, "_pn", None) is None:
        res._pn = compute_PN(u)
    return res._pn


def _comparability(cfg, u, fam, res, p):
    rep = hc.check_comparability(_pn(u, res), p["alpha"], cfg.lam, cfg.Lam, p["comparability_radius"])
    res.add("comparability", f"C(alpha={p['alpha']:g})", rep.C, "finite", _finite(rep.C))


def _decay(cfg, u, fam, res, p):
    params = hc.OscillationParams(kappa=p["kappa"], theta=p["theta"])
    tr = hc.oscillation_decay(_pn(u, res), params, check_params=False)
    res.decay = tr
    for k, m in zip(tr.scales, tr.M):
        res.add("oscillation_decay", f"M[{k}]", m, "info", True)
    for k, r in enumerate(tr.ratios):
        res.add("oscillation_decay", f"ratio[{k}]", r, 1.0, r <= 1 + 1e-12)
    res.add("oscillation_decay", "theta_star", tr.theta_star, p["theta"], tr.theta_star >= p["theta"])
    res.add("oscillation_decay", "alpha_fit", tr.alpha, "info", True)


def _holder(cfg, u, fam, res, p):
    fit = hc.frac_laplacian_holder(u, r_max=p["holder_r_max"])
    res.add("holder", "alpha", fit.alpha, p["holder_min_alpha"], fit.alpha >= p["holder_min_alpha"])
    res.add("holder", "constant", fit.constant, "finite", _finite(fit.constant))
    res.add("holder", "residual", fit.residual, "info", True)


def _point_estimate(cfg, u, fam, res, p):
    rep = hc.point_estimate_check(u, r=p["point_estimate_r"], f_norm=abs(cfg.source))
    res.add("point_estimate", "C", rep.C, "finite", _finite(rep.C))
    res.add("point_estimate", "eps", rep.eps, "finite", _finite(rep.eps))


def _oscillation_lemma(cfg, u, fam, res, p):
    rep = hc.oscillation_lemma_check(u, f_pos_norm=max(cfg.source, 0.0) * 1.0)
    if rep.skipped:
        res.add("oscillation_lemma", "C", "skipped", rep.note, True)
    else:
        res.add("oscillation_lemma", "C", rep.C, "finite", _finite(rep.C))


def _time_regularity(cfg, u, fam, res, p):
    rep = hc.time_regularity_check(u)
    res.add("time_regularity", "sup_ut", rep.sup_ut, "finite", _finite(rep.sup_ut))
    res.add("time_regularity", "holder_ut", rep.holder_ut, "finite", _finite(rep.holder_ut))
    res.add("time_regularity", "C", rep.C, "finite", _finite(rep.C))
    res.add("time_regularity", "grad_holder", rep.grad_holder, "finite", _finite(rep.grad_holder))


def _subsolution(cfg, u, fam, res, p):
    k = hc.truncated_constant_kernel(u.n, u.sigma)
    rep = hc.subsolution_identity_check(u, k, cfg.lam, cfg.Lam, cfg.beta,
                                        p["subsolution_r1"], p["subsolution_r2"])
    res.add("subsolution", "margin", rep.margin, "finite", _finite(rep.margin))


def _identities(cfg, u, fam, res, p):
    rng = np.random.default_rng(cfg.seed)
    g = u.grid
    nodes = np.flatnonzero(g.interior_mask())
    nodes = np.sort(rng.choice(nodes, size=min(int(p["sample_points"]), nodes.size), replace=False))
    a = u.at_times([len(u.times) - 1])
    b = u.at_times([len(u.times) // 2]).with_values(u.values[len(u.times) // 2][None], times=a.times)
    t = float(a.times[0])
    lam, Lam, beta = cfg.lam, cfg.Lam, cfg.beta
    Pp = pucci_values("plus", lam, Lam, beta, a, t, nodes)["value"]
    Pm = pucci_values("minus", lam, Lam, beta, a, t, nodes)["value"]
    scale = max(1.0, float(np.abs(Pp).max()))
    dual = float(np.abs(pucci_values("plus", lam, Lam, beta, -a, t, nodes)["value"] + Pm).max())
    hom = float(np.abs(pucci_values("plus", lam, Lam, beta, a * 2.0, t, nodes)["value"] - 2 * Pp).max())
    res.add("identities", "duality", dual, 0.0, dual == 0.0)
    res.add("identities", "homogeneity", hom, 1e-12 * scale, hom <= 1e-12 * scale)
    if fam.kind == "finite":
        even = [k for k in fam.members if k.even]
        if even:
            from .kernels import OperatorFamily
            ef = OperatorFamily.finite(even)
            d = a - b
            diff = bellman_values(ef, a, t, nodes)[0] - bellman_values(ef, b, t, nodes)[0]
            lo = pucci_values("minus", lam, Lam, beta, d, t, nodes)["value"]
            hi = pucci_values("plus", lam, Lam, beta, d, t, nodes)["value"]
            sc = max(1.0, float(np.abs(hi).max()), float(np.abs(lo).max()))
            viol = float(max(0.0, (lo - diff).max(), (diff - hi).max()))
            res.add("identities", "ellipticity_sandwich", viol, 1e-8 * sc, viol <= 1e-8 * sc)


_CHECKS = {
    "drift": _drift, "comparison": _comparison, "bound_L": _bound_L,
    "comparability": _comparability, "oscillation_decay": _decay, "holder": _holder,
    "point_estimate": _point_estimate, "oscillation_lemma": _oscillation_lemma,
    "time_regularity": _time_regularity, "subsolution": _subsolution, "identities": _identities,
}


# ---------------------------------------------------------------- output

def write_report(path: Path, results):
    import csv
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(REPORT_HEADER)
        for r in results:
            for row in r.rows:
                wr.writerow([fmt(v) for v in row])


def write_manifest(path: Path, cfg: ExperimentConfig, results):
    lines = [f"name={cfg.name}", f"n={cfg.n}", f"R={fmt(cfg.R)}", f"h={fmt(cfg.h)}",
             f"t0={fmt(cfg.t0)}", f"T={fmt(cfg.T)}", f"periodic={fmt(cfg.periodic)}"]
    for r in results:
        for k, v in r.manifest.items():
            if k == "sigma":
                continue
            lines.append(f"sigma={fmt(r.sigma)} {k}={fmt(v)}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_summary(path: Path, results):
    out = []
    for r in results:
        failed = [f"{row[0]}:{row[2]}" for row in r.rows if not row[5]]
        status = "PASS" if not failed else "FAIL " + " ".join(failed)
        out.append(f"sigma={r.sigma:g} checks={len(r.rows)} {status}")
    Path(path).write_text("\n".join(out) + "\n")


def write_decay_svg(path: Path, results, width: int = 480, height: int = 320):
    """Line plot of log10 M_k against k for each order."""
    traces = [(r.sigma, r.decay) for r in results if r.decay is not None and np.any(r.decay.M > 0)]
    pad = 40
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
             f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>']
    if traces:
        ys = np.concatenate([np.log10(t.M[t.M > 0]) for _, t in traces])
        ks = np.concatenate([t.scales for _, t in traces])
        y0, y1 = float(ys.min()), float(ys.max()) if ys.max() > ys.min() else float(ys.min()) + 1
        k1 = max(1, int(ks.max()))
        colours = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"]
        for i, (s, t) in enumerate(traces):
            pts = []
            for k, m in zip(t.scales, t.M):
                if m <= 0:
                    continue
                x = pad + (width - 2 * pad) * k / k1
                y = height - pad - (height - 2 * pad) * (math.log10(m) - y0) / (y1 - y0)
                pts.append(f"{x:.2f},{y:.2f}")
            c = colours[i % len(colours)]
            parts.append(f'<polyline fill="none" stroke="{c}" points="{" ".join(pts)}"/>')
            parts.append(f'<text x="{width - pad}" y="{pad + 14 * i}" fill="{c}" '
                         f'font-size="11" text-anchor="end">sigma={s:g}</text>')
        parts.append(f'<text x="{width / 2}" y="{height - 8}" font-size="11" '
                     f'text-anchor="middle">scale index k</text>')
        parts.append(f'<text x="12" y="{height / 2}" font-size="11" '
                     f'transform="rotate(-90 12 {height / 2})" text-anchor="middle">log10 M_k</text>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n")
