"""Experiment configuration: TOML files with a [model] table mirroring
ModelSpec and one table of parameters per experiment family."""

import copy
import hashlib
import json
import math
import sys
from dataclasses import dataclass

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .spectral import ModelSpec, basis

DEFAULTS = {
    "model": {
        "kind": "KS",
        "nu": 1.0,
        "a": 2.0,
        "gamma": 0.0,
        "theta": 0.7,
        "alpha": 1.0,
        "d": 1,
        "length": 2 * math.pi,
        "cutoff": 32,
        "p": 2,
        "nonlinear": True,
        "noise": True,
    },
    # simulate-*, girsanov-*: horizon, step, ensemble size, truncation level
    # ("pilot" = 99th percentile of Q_T over 1000 pilot paths) and initial state
    "run": {
        "T": 0.25,
        "dt": 1 / 512,
        "M": 10000,
        "N": "pilot",
        "x": "zero",
        "paths": 1,
        "observables": ["mode_sq:1"],
        "chunk": 1000,
    },
    # twin paths start from invariant draws with variance multiplied by beta,
    # large enough for the nonlinearity to compete with dissipation; the audit
    # uses safety * (C fitted on the calibration trials)
    "twin": {
        "T": 0.5,
        "dt": 1 / 2048,
        "beta": 3e5,
        "deltas": [1e-3, 1e-4, 1e-5],
        "calibration": 10,
        "trials": 20,
        "safety": 2.0,
        "index": 0,
    },
    # stationary statistics from the exact sampler; mixing from x after
    # t_factor relaxation times of the slowest mode
    "ergodics": {
        "samples": 10000,
        "mixing_M": 10000,
        "t_factor": 10.0,
        "x": "stationary:10",
    },
    "growth": {
        "samples": 1000,
        "beta": 1.0,
    },
}

PRESETS = {
    "ks-desk": {},
    "ns-desk": {
        "model": {"kind": "FracNS", "nu": 1.0, "a": 0.0, "gamma": -0.5, "theta": 1.0, "alpha": 3.0,
                  "d": 2, "cutoff": 8},
        "run": {"T": 0.25, "dt": 1 / 512, "observables": ["mode_sq:0"]},
    },
    "ns3-desk": {
        "model": {"kind": "FracNS", "nu": 1.0, "a": 0.0, "gamma": -0.5, "theta": 1.0, "alpha": 3.0,
                  "d": 3, "cutoff": 4},
        "run": {"T": 0.25, "dt": 1 / 512, "M": 2000, "observables": ["mode_sq:0"]},
    },
    # nu = 2 damps every KS mode, so the nonlinear chain mixes at desk scale
    "ks-mixing": {
        "model": {"nu": 2.0, "cutoff": 16},
        "run": {"T": 10.0, "dt": 1 / 64, "M": 2000},
    },
}

_TYPES = {
    "model": {"kind": str, "nu": float, "a": float, "gamma": float, "theta": float, "alpha": float,
              "d": int, "length": float, "cutoff": int, "p": int, "nonlinear": bool, "noise": bool},
    "run": {"T": float, "dt": float, "M": int, "N": (float, str), "x": (str, list), "paths": int,
            "observables": list, "chunk": int},
    "twin": {"T": float, "dt": float, "beta": float, "deltas": list, "calibration": int, "trials": int,
             "safety": float, "index": int},
    "ergodics": {"samples": int, "mixing_M": int, "t_factor": float, "x": (str, list)},
    "growth": {"samples": int, "beta": float},
}

_POSITIVE = {"run.T", "run.dt", "run.M", "run.paths", "run.chunk", "twin.T", "twin.dt", "twin.calibration",
             "twin.trials", "twin.beta", "twin.safety", "ergodics.samples", "ergodics.mixing_M", "ergodics.t_factor",
             "growth.samples", "growth.beta"}


class ConfigError(ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n" + "\n".join(f"  {e}" for e in self.errors))


def _merge(base, over):
    out = copy.deepcopy(base)
    for sec, vals in over.items():
        if isinstance(vals, dict) and isinstance(out.get(sec), dict):
            out[sec].update(copy.deepcopy(vals))
        else:
            out[sec] = copy.deepcopy(vals)
    return out


def _coerce(key, value, typ, errors):
    types = typ if isinstance(typ, tuple) else (typ,)
    if float in types and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if bool in types and not isinstance(value, bool):
        errors.append(f"{key}: expected a boolean, got {value!r}")
        return value
    if int in types and (isinstance(value, bool) or not isinstance(value, int)):
        errors.append(f"{key}: expected an integer, got {value!r}")
        return value
    if not isinstance(value, types):
        names = " or ".join(t.__name__ for t in types)
        errors.append(f"{key}: expected {names}, got {value!r}")
    return value


@dataclass(frozen=True)
class Config:
    data: dict

    @property
    def spec(self):
        return ModelSpec(**self.data["model"])

    def __getitem__(self, section):
        return self.data[section]

    def to_toml(self):
        lines = []
        for sec, vals in self.data.items():
            lines.append(f"[{sec}]")
            for k, v in vals.items():
                lines.append(f"{k} = {_toml_value(v)}")
            lines.append("")
        return "\n".join(lines)

    def to_json(self):
        return json.dumps(self.data, sort_keys=True)

    def config_hash(self):
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:12]

    def with_overrides(self, assignments):
        """Apply ``section.key=value`` strings, values parsed as TOML."""
        over = {}
        for item in assignments:
            path, eq, raw = item.partition("=")
            sec, dot, key = path.strip().partition(".")
            if not eq or not dot:
                raise ConfigError([f"{item!r}: expected section.key=value"])
            try:
                val = tomllib.loads(f"v = {raw.strip()}")["v"]
            except tomllib.TOMLDecodeError:
                val = raw.strip()
            over.setdefault(sec, {})[key] = val
        return validate(_merge(self.data, over))


def _toml_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else ("inf" if v > 0 else "-inf")
    if isinstance(v, list):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    return str(v)


def validate(data):
    errors = []
    out = {}
    for sec, vals in data.items():
        if sec not in _TYPES:
            errors.append(f"{sec}: unknown section (expected one of {', '.join(_TYPES)})")
            continue
        if not isinstance(vals, dict):
            errors.append(f"{sec}: expected a table")
            continue
        out[sec] = {}
        for k, v in vals.items():
            key = f"{sec}.{k}"
            if k not in _TYPES[sec]:
                errors.append(f"{key}: unknown key")
                continue
            v = _coerce(key, v, _TYPES[sec][k], errors)
            if key in _POSITIVE and isinstance(v, (int, float)) and not v > 0:
                errors.append(f"{key}: must be > 0, got {v!r}")
            out[sec][k] = v
    n = out.get("run", {}).get("N")
    if isinstance(n, str) and n != "pilot":
        errors.append(f"run.N: expected a number or \"pilot\", got {n!r}")
    if isinstance(n, float) and not n >= 0:
        errors.append(f"run.N: must be >= 0, got {n!r}")
    if not any(e.startswith("model") for e in errors) and "model" in out:
        try:
            ModelSpec(**out["model"])
        except (TypeError, ValueError) as exc:
            errors.append(f"model: {exc}")
    if errors:
        raise ConfigError(errors)
    return Config(out)


def load_config(path=None, preset=None):
    data = DEFAULTS
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError([f"preset: unknown preset {preset!r} (known: {', '.join(PRESETS)})"])
        data = _merge(data, PRESETS[preset])
    if path is not None:
        with open(path, "rb") as fh:
            try:
                user = tomllib.load(fh)
            except tomllib.TOMLDecodeError as exc:
                raise ConfigError([f"{path}: {exc}"]) from None
        data = _merge(data, user)
    return validate(data)


def initial_state(spec, x, seed=0):
    """Resolve an initial-condition descriptor to dofs (or ``"invariant"``).

    ``"zero"``; ``"invariant"`` (per-path invariant draws); ``"sample"`` (one
    invariant draw); ``"stationary:c"`` (c stationary standard deviations in
    every dof); ``"mode:i:amp"``; or an explicit list of dofs.
    """
    ndof = basis(spec).ndof
    if isinstance(x, list):
        arr = np.asarray(x, dtype=float)
        if arr.shape != (ndof,):
            raise ConfigError([f"x: expected {ndof} dofs, got {arr.size}"])
        return arr
    kind, _, arg = x.partition(":")
    if kind == "zero":
        return np.zeros(ndof)
    if kind == "invariant":
        return "invariant"
    if kind == "sample":
        from .spectral import sample_gaussian_field

        return sample_gaussian_field(spec, seed=seed).dofs
    if kind == "stationary":
        from .spectral import build_spectrum

        return float(arg or 1.0) * np.sqrt(build_spectrum(spec).stationary_variance)
    if kind == "mode":
        i, _, amp = arg.partition(":")
        out = np.zeros(ndof)
        try:
            out[int(i)] = float(amp or 1.0)
        except (ValueError, IndexError):
            raise ConfigError([f"x: bad mode descriptor {x!r}"]) from None
        return out
    raise ConfigError([f"x: unknown initial condition {x!r}"])

