"""Experiment configuration: JSON parsing, validation and object construction.

A config is a JSON object.  Keys (defaults in brackets):

``name``            run name ["run"]
``n``               dimension, 1 or 2 [1]
``R``, ``h``        box half-width and grid step
``periodic``        periodic grid [false]
``t0``, ``T``       start time and horizon
``sigma``           order used by ``solve``/``check``
``sweep``           list of orders used by ``sweep`` [[sigma]]
``lambda``, ``Lambda``, ``beta``   ellipticity and drift bounds
``family``          list of ``{"kernel", "scale", "drift"}`` or ``"pucci"``
``exterior``        data spec (see ``DATA_TYPES``); ignored on periodic grids
``initial``         data spec or ``"exterior"`` ["exterior"]
``cfl_fraction``    [0.9]
``source``          constant ``f`` [0]
``store_dt``        spacing of stored slices [T/64]
``checks``          list of check names [[]]
``params``          check parameters (see ``DEFAULT_PARAMS``)
``seed``            seed for randomized spot checks [0]
"""
from __future__ import annotations

import json
import math
import re
import warnings
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .field import Exterior, Grid
from .harness.benchmark import benchmark_exterior
from .kernels import OperatorFamily, PRESETS, make_kernel, parse_preset

CHECKS = ("drift", "comparison", "bound_L", "comparability", "oscillation_decay", "holder",
          "point_estimate", "oscillation_lemma", "time_regularity", "subsolution", "identities")
DATA_TYPES = ("zero", "constant", "benchmark", "gaussian", "cosine", "linear")
DEFAULT_PARAMS = {
    "kappa": 0.25, "theta": 0.05, "alpha": 0.5, "comparability_radius": 0.125,
    "holder_r_max": 0.5, "holder_min_alpha": 0.05, "point_estimate_r": 0.5,
    "subsolution_r1": 0.75, "subsolution_r2": 0.5, "sample_points": 1000,
}
REQUIRED = ("R", "h", "T", "sigma", "lambda", "Lambda", "beta", "family")
KNOWN = set(REQUIRED) | {"name", "n", "periodic", "t0", "sweep", "exterior", "initial",
                         "cfl_fraction", "source", "store_dt", "checks", "params", "seed", "output"}


@dataclass
class ExperimentConfig:
    name: str
    n: int
    R: float
    h: float
    periodic: bool
    t0: float
    T: float
    sigma: float
    sweep: list
    lam: float
    Lam: float
    beta: float
    family_spec: object
    exterior_spec: dict
    initial_spec: object
    cfl_fraction: float
    source: float
    store_dt: float | None
    checks: list
    params: dict
    seed: int
    output: str | None = None
    raw: dict = dc_field(default_factory=dict)

    # -- builders
    def grid(self) -> Grid:
        return Grid(self.n, self.R, self.h, self.periodic)

    def family(self, sigma: float) -> OperatorFamily:
        if self.family_spec == "pucci":
            return OperatorFamily.pucci(self.n, sigma, self.lam, self.Lam, self.beta)
        ks = []
        for m in self.family_spec:
            drift = m.get("drift", [0.0] * self.n)
            ks.append(make_kernel(m["kernel"], self.n, sigma, drift=drift, lam=self.lam,
                                  Lam=self.Lam, beta=self.beta, scale=float(m.get("scale", 1.0))))
        return OperatorFamily.finite(ks)

    def exterior(self) -> Exterior:
        if self.periodic:
            return Exterior.periodic()
        return make_exterior(self.exterior_spec, self.n, self.t0, self.T)

    def initial(self):
        """Callable of node coordinates giving the data at ``t0``."""
        if self.initial_spec == "exterior":
            if self.periodic:
                raise ConfigError("periodic runs need an explicit 'initial' spec")
            ext = self.exterior()
            return lambda p: ext(p, self.t0)
        fn = data_function(self.initial_spec, self.n, self.t0)
        return lambda p: fn(p, self.t0)

    def with_sigma(self, sigma: float) -> "ExperimentConfig":
        from dataclasses import replace
        return replace(self, sigma=float(sigma))


def _line_of(text: str, key: str) -> int | None:
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def data_function(spec: dict, n: int, t0: float):
    """``f(x, t)`` for a data spec."""
    kind = spec.get("type")
    if kind == "zero":
        return lambda x, t: np.zeros(x.shape[0])
    if kind == "constant":
        c = float(spec["value"])
        return lambda x, t: np.full(x.shape[0], c)
    if kind == "benchmark":
        ext = benchmark_exterior(float(spec.get("shift", 0.0)))
        return lambda x, t: ext(x, t)
    if kind == "gaussian":
        a, w = float(spec.get("amplitude", 1.0)), float(spec.get("width", 1.0))
        return lambda x, t: a * np.exp(-np.sum(x ** 2, axis=1) / w ** 2)
    if kind == "cosine":
        a, k = float(spec.get("amplitude", 1.0)), float(spec.get("k", 1.0))
        return lambda x, t: a * np.cos(k * x[:, 0])
    if kind == "linear":
        slope = np.asarray(spec.get("slope", [1.0] * n), dtype=float)
        rate = float(spec.get("rate", 0.0))
        return lambda x, t: x @ slope + rate * (t - t0)
    raise ConfigError(f"unknown data type {kind!r}")


def make_exterior(spec: dict, n: int, t0: float, T: float = 1.0) -> Exterior:
    kind = spec.get("type")
    if kind == "zero":
        return Exterior.zero()
    if kind == "constant":
        return Exterior.constant(float(spec["value"]))
    if kind == "benchmark":
        return benchmark_exterior(float(spec.get("shift", 0.0)))
    if kind == "linear":
        slope = np.asarray(spec.get("slope", [1.0] * n), dtype=float)
        rate = float(spec.get("rate", 0.0))
        modes = [(lambda t: 1.0, lambda x: x @ slope)]
        if rate:
            modes.append((lambda t: rate * (t - t0), lambda x: np.ones(x.shape[0])))
        M = float(np.linalg.norm(slope)) + abs(rate) * T
        return Exterior.separable(modes, M=M, gamma=1.0, label="linear")
    fn = data_function(spec, n, t0)
    amp = abs(float(spec.get("amplitude", 1.0)))
    return Exterior.bounded(fn, amp, label=kind, static=True)


def _check_data(spec, key, text, allow_exterior=False):
    if allow_exterior and spec == "exterior":
        return
    if not isinstance(spec, dict) or spec.get("type") not in DATA_TYPES:
        raise ConfigError(f"'{key}' must be an object with type in {DATA_TYPES}", _line_of(text, key))
    if spec["type"] == "constant" and "value" not in spec:
        raise ConfigError(f"'{key}' of type constant needs 'value'", _line_of(text, key))


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a config; errors carry the offending line."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON: {e.msg}", e.lineno) from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object", 1)
    for key in raw:
        if key not in KNOWN:
            raise ConfigError(f"unknown key {key!r}", _line_of(text, key))
    for key in REQUIRED:
        if key not in raw:
            raise ConfigError(f"missing required key {key!r}", 1)

    def num(key, default=None, positive=False):
        v = raw.get(key, default)
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise ConfigError(f"{key!r} must be a finite number", _line_of(text, key))
        if positive and v <= 0:
            raise ConfigError(f"{key!r} must be positive", _line_of(text, key))
        return float(v)

    n = raw.get("n", 1)
    if n not in (1, 2):
        raise ConfigError("'n' must be 1 or 2", _line_of(text, "n"))
    R, h, T = num("R", positive=True), num("h", positive=True), num("T", positive=True)
    cells = 2 * R / h
    if abs(cells - round(cells)) > 1e-8 * cells:
        raise ConfigError("2R/h must be an integer", _line_of(text, "h"))
    sigma = num("sigma")
    sweep = raw.get("sweep", [sigma])
    if not isinstance(sweep, list) or not sweep:
        raise ConfigError("'sweep' must be a nonempty list", _line_of(text, "sweep"))
    for s in [sigma] + sweep:
        if isinstance(s, bool) or not isinstance(s, (int, float)) or not 0 < s < 2:
            raise ConfigError(f"order {s!r} outside (0, 2)", _line_of(text, "sweep" if s in sweep else "sigma"))
        if s < 1:
            warnings.warn(f"order {s} is outside the canonical range [1, 2)")
    lam, Lam, beta = num("lambda", positive=True), num("Lambda", positive=True), num("beta")
    if lam > Lam:
        raise ConfigError("need lambda <= Lambda", _line_of(text, "lambda"))
    if beta < 0:
        raise ConfigError("'beta' must be nonnegative", _line_of(text, "beta"))
    fam = raw["family"]
    if fam != "pucci":
        if not isinstance(fam, list) or not fam:
            raise ConfigError("'family' must be a nonempty list or \"pucci\"", _line_of(text, "family"))
        for m in fam:
            if not isinstance(m, dict) or "kernel" not in m:
                raise ConfigError("family members need a 'kernel'", _line_of(text, "family"))
            try:
                name, _ = parse_preset(m["kernel"])
            except Exception as e:
                raise ConfigError(str(e), _line_of(text, "kernel")) from None
            if name not in PRESETS:
                raise ConfigError(f"unknown kernel preset {name!r}", _line_of(text, "kernel"))
            d = m.get("drift", [0.0] * n)
            if not isinstance(d, list) or len(d) != n:
                raise ConfigError(f"drift must be a list of {n} numbers", _line_of(text, "drift"))
    periodic = bool(raw.get("periodic", False))
    ext = raw.get("exterior", {"type": "zero"})
    if not periodic:
        _check_data(ext, "exterior", text)
    init = raw.get("initial", "exterior")
    _check_data(init, "initial", text, allow_exterior=True)
    cfl = num("cfl_fraction", 0.9)
    if not 0 < cfl <= 1:
        raise ConfigError("'cfl_fraction' must lie in (0, 1]", _line_of(text, "cfl_fraction"))
    store_dt = raw.get("store_dt")
    if store_dt is not None:
        store_dt = num("store_dt", positive=True)
    checks = raw.get("checks", [])
    if not isinstance(checks, list) or any(c not in CHECKS for c in checks):
        raise ConfigError(f"'checks' entries must be among {CHECKS}", _line_of(text, "checks"))
    params = dict(DEFAULT_PARAMS)
    user = raw.get("params", {})
    if not isinstance(user, dict):
        raise ConfigError("'params' must be an object", _line_of(text, "params"))
    for k, v in user.items():
        if k not in DEFAULT_PARAMS:
            raise ConfigError(f"unknown parameter {k!r}", _line_of(text, k))
        params[k] = v
    seed = raw.get("seed", 0)
    if not isinstance(seed, int):
        raise ConfigError("'seed' must be an integer", _line_of(text, "seed"))
    return ExperimentConfig(
        name=str(raw.get("name", "run")), n=n, R=R, h=h, periodic=periodic,
        t0=num("t0", 0.0), T=T, sigma=sigma, sweep=[float(s) for s in sweep], lam=lam, Lam=Lam,
        beta=beta, family_spec=fam, exterior_spec=ext, initial_spec=init, cfl_fraction=cfl,
        source=num("source", 0.0), store_dt=store_dt, checks=list(checks), params=params,
        seed=seed, output=raw.get("output"), raw=raw)


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config: {e}", None) from None
    return parse_config(text)


def shipped_configs() -> dict:
    """Name to path of the configs bundled with the package."""
    root = Path(__file__).parent / "configs"
    return {p.stem: p for p in sorted(root.glob("*.json"))}
