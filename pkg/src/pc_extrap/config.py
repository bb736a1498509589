"""JSON experiment configuration.

Complex arrays are written either as plain real arrays or as
``{"re": [...], "im": [...]}``; a complex scalar may also be ``[re, im]``.

Example::

    {
      "params":  {"d": 1, "T": 1.0, "tau": 1, "K": 1, "J": 32},
      "a":       {"kind": "blocks", "values": [[1.0], [0.5]]},
      "density": {"kind": "scenario", "name": "ma1-0.5"},
      "mc":      {"n_paths": 10000, "seed": 7, "window": 400}
    }
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from .errors import ConfigError, PCExtrapError
from .extrapolate import ExtrapolationProblem
from .increments import CoefficientFunction, IncrementParams
from .minimax import FAMILIES, DensityClassSpec
from .simulate import SCENARIOS, scenario_density
from .spectral import IncrementKernel, QuadratureGrid, SpectralDensityModel

COMMANDS = ("estimate", "estimate-finite", "saddle", "minimax", "validate")


def _get(d: dict, key: str, where: str, default=..., kind=None):
    if not isinstance(d, dict):
        raise ConfigError("expected an object", where)
    if key not in d:
        if default is ...:
            raise ConfigError("missing required field", f"{where}.{key}")
        return default
    v = d[key]
    if kind is not None and v is not None:
        try:
            if kind is int:
                if isinstance(v, bool) or (isinstance(v, float) and not v.is_integer()):
                    raise ValueError
                v = int(v)
            elif kind is float:
                if isinstance(v, bool):
                    raise ValueError
                v = float(v)
                if not math.isfinite(v):
                    raise ValueError
        except (TypeError, ValueError):
            raise ConfigError(f"expected {kind.__name__}, got {d[key]!r}", f"{where}.{key}") from None
    return v


def complex_array(x, where: str) -> np.ndarray:
    try:
        if isinstance(x, dict):
            re = np.asarray(x.get("re", 0.0), dtype=float)
            im = np.asarray(x.get("im", np.zeros_like(re)), dtype=float)
            return re + 1j * im
        return np.asarray(x, dtype=complex)
    except (TypeError, ValueError):
        raise ConfigError("not a numeric array", where) from None


def complex_scalar(x, where: str) -> complex:
    if isinstance(x, (list, tuple)) and len(x) == 2:
        return complex(float(x[0]), float(x[1]))
    if isinstance(x, dict):
        return complex(float(x.get("re", 0.0)), float(x.get("im", 0.0)))
    try:
        return complex(x)
    except (TypeError, ValueError):
        raise ConfigError("not a number", where) from None


@dataclass
class ExperimentConfig:
    command: str
    params: IncrementParams
    N: Optional[int]
    a: Optional[CoefficientFunction]
    a_blocks: Optional[np.ndarray]
    density: SpectralDensityModel
    grid: QuadratureGrid
    class_spec: Optional[DensityClassSpec] = None
    mc: dict = field(default_factory=dict)
    saddle: dict = field(default_factory=dict)
    output: Optional[str] = None
    raw: dict = field(default_factory=dict)

    def problem(self) -> ExtrapolationProblem:
        return ExtrapolationProblem(self.params, self.density, self.a, self.a_blocks, self.N, self.grid)


def parse_params(d: dict):
    where = "params"
    try:
        params = IncrementParams(
            d=_get(d, "d", where, kind=int),
            T=_get(d, "T", where, 1.0, kind=float),
            tau=_get(d, "tau", where, 1, kind=int),
            K=_get(d, "K", where, 1, kind=int),
            J=_get(d, "J", where, 32, kind=int),
        )
    except PCExtrapError as e:
        if isinstance(e, ConfigError):
            raise
        msg = str(e)
        name = msg.split(" ")[0] if msg.split(" ")[0] in ("d", "tau", "K", "J", "T") else None
        raise ConfigError(msg, f"{where}.{name}" if name else where) from None
    N = _get(d, "N", where, None, kind=int)
    if N is not None and N < 0:
        raise ConfigError("must be >= 0", f"{where}.N")
    return params, N


def parse_a(d: dict, params: IncrementParams, N: Optional[int]):
    where = "a"
    kind = _get(d, "kind", where)
    if kind == "blocks":
        vals = complex_array(_get(d, "values", where), f"{where}.values")
        if vals.ndim == 1:
            vals = vals.reshape(-1, params.K)
        if vals.ndim != 2 or vals.shape[1] != params.K:
            raise ConfigError(f"expected shape (n, K={params.K})", f"{where}.values")
        return None, vals
    dt = _get(d, "delta_t", where, params.T / 64, kind=float)
    default_end = (N + 1) * params.T if N is not None else None
    if kind == "tabulated":
        vals = complex_array(_get(d, "values", where), f"{where}.values")
        if np.all(vals.imag == 0):
            vals = vals.real
        try:
            return CoefficientFunction(0.0, dt, vals), None
        except PCExtrapError as e:
            raise ConfigError(str(e), where) from None
    t_max = _get(d, "t_max", where, default_end, kind=float)
    if t_max is None:
        raise ConfigError("missing required field for the infinite horizon", f"{where}.t_max")
    if kind == "exponential":
        rate = _get(d, "rate", where, kind=float)
        amp = complex_scalar(_get(d, "amplitude", where, 1.0), f"{where}.amplitude")
        if not rate > 0:
            raise ConfigError("must be positive", f"{where}.rate")
        fn = lambda t: amp * np.exp(-rate * t)  # noqa: E731
    elif kind == "constant":
        c = complex_scalar(_get(d, "value", where, 1.0), f"{where}.value")
        fn = lambda t: c + 0 * t  # noqa: E731
    elif kind == "polynomial":
        coefs = complex_array(_get(d, "coefficients", where), f"{where}.coefficients")
        fn = lambda t: np.polyval(coefs[::-1], t)  # noqa: E731
    else:
        raise ConfigError(f"unknown kind {kind!r}", f"{where}.kind")
    try:
        a = CoefficientFunction.from_callable(fn, t_max, dt)
    except PCExtrapError as e:
        raise ConfigError(str(e), where) from None
    if np.all(np.imag(a.values) == 0):
        a = CoefficientFunction(0.0, dt, np.real(a.values))
    return a, None


def parse_density(d: dict, params: IncrementParams, where: str = "density") -> SpectralDensityModel:
    kind = _get(d, "kind", where)
    kernel = IncrementKernel.of(params)
    matched = bool(_get(d, "increment_matched", where, True))
    km = kernel if matched else None
    K = params.K
    try:
        if kind == "scenario":
            name = _get(d, "name", where)
            if name not in SCENARIOS:
                raise ConfigError(f"unknown scenario {name!r}; expected one of {SCENARIOS}", f"{where}.name")
            f = scenario_density(name, params)
        elif kind == "white-increment-matched":
            f = SpectralDensityModel.white_increment_matched(K, kernel)
        elif kind == "constant":
            f = SpectralDensityModel.constant(complex_array(_get(d, "matrix", where), f"{where}.matrix"))
        elif kind == "scalar-rational":
            f = SpectralDensityModel.scalar_rational(
                complex_array(_get(d, "ma", where, [1.0]), f"{where}.ma"),
                complex_array(_get(d, "ar", where, [1.0]), f"{where}.ar"),
                _get(d, "scale", where, 1.0, kind=float), km)
        elif kind == "diagonal-rational":
            comps = _get(d, "components", where)
            if not isinstance(comps, list):
                raise ConfigError("expected a list", f"{where}.components")
            parsed = [{"ma": complex_array(c.get("ma", [1.0]), f"{where}.components[{i}].ma"),
                       "ar": complex_array(c.get("ar", [1.0]), f"{where}.components[{i}].ar"),
                       "scale": float(c.get("scale", 1.0))} for i, c in enumerate(comps)]
            f = SpectralDensityModel.diagonal_rational(parsed, km)
        elif kind == "vector-rational":
            ar = d.get("ar")
            inn = d.get("innovation")
            f = SpectralDensityModel.vector_rational(
                complex_array(_get(d, "ma", where), f"{where}.ma"),
                None if ar is None else complex_array(ar, f"{where}.ar"),
                None if inn is None else complex_array(inn, f"{where}.innovation"), km)
        elif kind == "tabulated":
            f = SpectralDensityModel.tabulated(
                np.asarray(_get(d, "lambdas", where), dtype=float),
                complex_array(_get(d, "values", where), f"{where}.values"))
        else:
            raise ConfigError(f"unknown kind {kind!r}", f"{where}.kind")
    except ConfigError:
        raise
    except (PCExtrapError, TypeError, ValueError) as e:
        raise ConfigError(str(e), where) from None
    if f.K != K:
        raise ConfigError(f"density is {f.K}x{f.K} but params.K={K}", where)
    return f


def parse_class(d: dict, params: IncrementParams) -> DensityClassSpec:
    where = "class"
    fam = _get(d, "family", where)
    if fam not in FAMILIES:
        raise ConfigError(f"unknown family {fam!r}; expected one of {FAMILIES}", f"{where}.family")
    kw: dict[str, Any] = {}
    for name in ("p", "delta"):
        if name in d:
            kw[name] = _get(d, name, where, kind=float)
    for name in ("p_k", "delta_k"):
        if name in d:
            kw[name] = np.asarray(d[name], dtype=float)
    for name in ("P", "B"):
        if name in d:
            kw[name] = complex_array(d[name], f"{where}.{name}")
    if "f1" in d:
        kw["f1"] = parse_density(d["f1"], params, f"{where}.f1")
    try:
        return DensityClassSpec(fam, **kw)
    except PCExtrapError as e:
        raise ConfigError(str(e), where) from None


def parse_config(raw: dict, command: Optional[str] = None) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("top level must be an object")
    cmd = command or raw.get("command")
    if cmd not in COMMANDS:
        raise ConfigError(f"unknown command {cmd!r}; expected one of {COMMANDS}", "command")
    if command and raw.get("command") not in (None, command):
        raise ConfigError(f"config is for {raw['command']!r}, invoked as {command!r}", "command")
    params, N = parse_params(_get(raw, "params", "config"))
    if cmd == "estimate-finite" and N is None:
        raise ConfigError("required for estimate-finite", "params.N")
    if cmd == "estimate" and N is not None:
        raise ConfigError("estimate is the infinite-horizon pipeline; use estimate-finite", "params.N")
    a, a_blocks = parse_a(_get(raw, "a", "config"), params, N)
    density = parse_density(_get(raw, "density", "config"), params)
    gd = raw.get("grid", {})
    M = _get(gd, "M", "grid", 4096, kind=int)
    if M < 2 or M % 2:
        raise ConfigError("must be an even integer >= 2", "grid.M")
    class_spec = None
    if cmd == "minimax":
        class_spec = parse_class(_get(raw, "class", "config"), params)
    mc = dict(raw.get("mc", {}))
    for key, default in (("n_paths", 10000), ("seed", 0), ("window", 400), ("M_s", 4096),
                          ("n_probes", 100), ("n_starts", 1)):
        mc[key] = _get(mc, key, "mc", default, kind=int)
        if mc[key] < 0 or (key != "seed" and mc[key] < 1 and key != "n_probes"):
            raise ConfigError("out of range", f"mc.{key}")
    saddle = dict(raw.get("saddle", {}))
    saddle["P"] = _get(saddle, "P", "saddle", 1.0, kind=float)
    if saddle["P"] < 0:
        raise ConfigError("must be nonnegative", "saddle.P")
    saddle["n_paths"] = _get(saddle, "n_paths", "saddle", 10000, kind=int)
    cfg = ExperimentConfig(cmd, params, N, a, a_blocks, density, QuadratureGrid(M), class_spec,
                           mc, saddle, raw.get("output"), raw)
    try:
        cfg.problem()
    except PCExtrapError as e:
        raise ConfigError(str(e), "a") from None
    return cfg


def load_config(path: str, command: Optional[str] = None) -> ExperimentConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as e:
        raise ConfigError(f"cannot read config: {e.strerror}", "config") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON at line {e.lineno}, column {e.colno}: {e.msg}", "config") from None
    return parse_config(raw, command)
