"""Command line interface.

Exit codes: 0 success, 1 some check failed, 2 bad config, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import os
import sys
import traceback
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path


from . import pipeline
from .config import load_config, shipped_configs
from .errors import ConfigError, FracBellmanError
from .oracles import mu_closed_form

EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


def _resolve_config(arg: str):
    p = Path(arg)
    if not p.exists():
        shipped = shipped_configs()
        if arg in shipped:
            p = shipped[arg]
    return load_config(p)


def _out_root(args) -> Path:
    return Path(args.out or os.environ.get("FRACBELLMAN_OUT") or "out")


def _run_one(payload):
    cfg, sigma, outdir, write_field = payload
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return pipeline.run_sigma(cfg, sigma, outdir, write_field)


def _run(cfg, sigmas, args, checks_only: bool | None = None) -> int:
    if checks_only is not None and not checks_only:
        cfg = dataclasses.replace(cfg, checks=[])
    outdir = _out_root(args) / cfg.name
    outdir.mkdir(parents=True, exist_ok=True)
    jobs = [(cfg, float(s), outdir, True) for s in sigmas]
    if args.threads and args.threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.threads) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]
    pipeline.write_report(outdir / "report.csv", results)
    pipeline.write_manifest(outdir / "manifest.txt", cfg, results)
    pipeline.write_summary(outdir / "summary.txt", results)
    if args.plots:
        pipeline.write_decay_svg(outdir / "decay.svg", results)
    for r in results:
        fails = [row for row in r.rows if not row[5]]
        print(f"sigma={r.sigma:g}: {len(r.rows) - len(fails)}/{len(r.rows)} checks passed"
              f", {r.manifest['steps']} steps")
        for row in fails:
            print(f"  FAIL {row[0]} {row[2]} = {pipeline.fmt(row[3])} (tolerance {row[4]})")
    print(f"wrote {outdir}")
    return EXIT_OK if all(r.passed for r in results) else EXIT_CHECK_FAILED


def cmd_solve(args) -> int:
    cfg = _resolve_config(args.config)
    s = args.sigma if args.sigma is not None else cfg.sigma
    return _run(cfg, [s], args, checks_only=False)


def cmd_check(args) -> int:
    cfg = _resolve_config(args.config)
    s = args.sigma if args.sigma is not None else cfg.sigma
    return _run(cfg, [s], args)


def cmd_sweep(args) -> int:
    cfg = _resolve_config(args.config)
    return _run(cfg, cfg.sweep, args)


def cmd_validate(args) -> int:
    cfg = _resolve_config(args.config)
    print(f"ok: {cfg.name} (n={cfg.n}, orders={', '.join(f'{s:g}' for s in cfg.sweep)})")
    return EXIT_OK


def cmd_oracle(args) -> int:
    if args.kind == "spectral":
        from .solver import SpectralOracle
        orc = SpectralOracle(args.sigma, method="closed" if args.closed else "bruteforce")
        print("k,mu,mu_closed_form")
        for k in args.k:
            closed = 0.0 if k == 0 else mu_closed_form(args.sigma, k)
            print(f"{k:g},{orc.mu(k):.8g},{closed:.8g}")
        return EXIT_OK
    from .field import Grid
    from .operators import rule_for
    grid = Grid(args.n, args.R, args.h)
    rule = rule_for(grid, args.sigma)
    print("quantity,value")
    print(f"lattice_pairs,{rule.n_lattice_pairs}")
    print(f"outer_pairs,{rule.n_outer_pairs}")
    print(f"mass_unit_kernel,{rule.total_mass():.8g}")
    print(f"mass_analytic,{rule.analytic_mass():.8g}")
    print(f"inner_coefficient,{rule.inner_coef:.8g}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fracbellman",
                                description="Nonlocal Bellman solver and regularity checks.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True,
                        help="config path or name of a bundled config")
    common.add_argument("--out", default=None, help="output root (default $FRACBELLMAN_OUT or ./out)")
    common.add_argument("--plots", action="store_true", help="write decay.svg")
    common.add_argument("--threads", type=int, default=0, help="worker processes over orders")
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("solve", parents=[common], help="solve and write the field")
    s.add_argument("--sigma", type=float, default=None)
    s.set_defaults(fn=cmd_solve)
    s = sub.add_parser("check", parents=[common], help="solve and run the configured checks")
    s.add_argument("--sigma", type=float, default=None)
    s.set_defaults(fn=cmd_check)
    s = sub.add_parser("sweep", parents=[common], help="check every order in 'sweep'")
    s.set_defaults(fn=cmd_sweep)
    s = sub.add_parser("validate-config", help="parse a config and report errors")
    s.add_argument("--config", required=True)
    s.set_defaults(fn=cmd_validate)
    s = sub.add_parser("oracle", help="print reference quantities")
    s.add_argument("kind", choices=("spectral", "quadrature"))
    s.add_argument("--sigma", type=float, default=1.5)
    s.add_argument("--k", type=float, nargs="+", default=[0.0, 1.0, 2.0, 3.0])
    s.add_argument("--closed", action="store_true", help="use the closed form for mu")
    s.add_argument("--n", type=int, default=1)
    s.add_argument("--R", type=float, default=2.0)
    s.add_argument("--h", type=float, default=1 / 64)
    s.set_defaults(fn=cmd_oracle)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except FracBellmanError as e:
        frame = traceback.extract_tb(e.__traceback__)[-1]
        where = f"{Path(frame.filename).stem}.{frame.name}"
        print(f"error in {where}: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except FloatingPointError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
