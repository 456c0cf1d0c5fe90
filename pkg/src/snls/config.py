"""Strict experiment configuration: JSON in, fully resolved config out.

Every field missing from the document is filled from ``DEFAULTS`` (or from a
preset-specific rule) and the filled value is written back into the resolved
dictionary, so the run manifest never relies on a silent default.
"""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from typing import Any

import numpy as np

from .dynamics import EquationParams, NoiseSpec
from .integrator import SCHEMES
from .lyapunov import LyapunovSpec
from .spectral import Grid, SpectralField

PRESETS = ("no-blowup", "blowup-baseline", "decay", "stationary", "conservation",
           "hypothesis-check")

# hypothesis a preset must certify before any path is simulated
REQUIRED_HYPOTHESIS = {"no-blowup": "H5", "decay": "H5''", "stationary": "H5'"}
DETERMINISTIC_PRESETS = ("blowup-baseline", "conservation")

DEFAULTS: dict[str, dict[str, Any]] = {
    "grid": {"d": 1, "n": 64, "N": None},
    "params": {"sigma": 1, "alpha": 1.0, "s": 2.0},
    "noise": {"a": None, "b": None, "c": 0.0, "d_exp": None},
    "lyapunov": {"variant": None, "R": 1.0, "p": 0.5, "a_floor": None},
    "initial": {"amplitude": 0.8, "modulation": 0.5, "phase": 0.0},
    "scheme": {"name": None, "dt": "auto", "dt_factor": 1.0, "dt_max": 1e-3, "T": 5.0,
               "M": None, "record_stride": "auto", "record_every": 0.01},
    "ensemble": {"N_paths": None, "master_seed": 0, "workers": 1},
    "moser": {"budget": 2000, "seed": 0},
    "analysis": {"hypothesis": None, "lambda": None, "window": None},
    "output": {"dir": None, "per_path": "auto"},
}
TOP_LEVEL = ("preset",) + tuple(DEFAULTS)


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the offending field path."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


def _number(value, path, *, integer=False, positive=False, allow_none=False):
    if value is None and allow_none:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {value!r}")
    if integer and int(value) != value:
        raise ConfigError(path, f"expected an integer, got {value!r}")
    if positive and not value > 0:
        raise ConfigError(path, f"must be positive, got {value!r}")
    return int(value) if integer else float(value)


def _complex(value, path) -> complex:
    if isinstance(value, list) and len(value) == 2:
        return complex(_number(value[0], path + "[0]"), _number(value[1], path + "[1]"))
    if isinstance(value, dict) and set(value) <= {"re", "im"}:
        return complex(_number(value.get("re", 0.0), path + ".re"),
                       _number(value.get("im", 0.0), path + ".im"))
    return complex(_number(value, path))


def _merge_section(name: str, given) -> dict:
    base = copy.deepcopy(DEFAULTS[name])
    if given is None:
        return base
    if not isinstance(given, dict):
        raise ConfigError(name, f"expected an object, got {type(given).__name__}")
    for key, value in given.items():
        if key not in base:
            raise ConfigError(f"{name}.{key}", "unknown key")
        base[key] = value
    return base


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated configuration; ``resolved`` is the complete JSON-ready form."""

    resolved: dict

    @property
    def preset(self) -> str:
        return self.resolved["preset"]

    @property
    def grid(self) -> Grid:
        g = self.resolved["grid"]
        return Grid(g["d"], g["n"], g["N"])

    @property
    def params(self) -> EquationParams:
        p = self.resolved["params"]
        return EquationParams(p["sigma"], _complex(p["alpha"], "params.alpha"), p["s"])

    @property
    def noise(self) -> NoiseSpec | None:
        n = self.resolved["noise"]
        if n == "none":
            return None
        return NoiseSpec(n["a"], n["b"], n["c"], n["d_exp"])

    @property
    def lyapunov(self) -> LyapunovSpec:
        ly = self.resolved["lyapunov"]
        return LyapunovSpec(ly["variant"], ly["R"], ly["a_floor"],
                            ly["p"] if ly["variant"] == "power" else None)

    @property
    def p(self) -> float:
        return self.resolved["lyapunov"]["p"]

    @property
    def hypothesis(self) -> str | None:
        return self.resolved["analysis"]["hypothesis"]

    def initial_state(self) -> SpectralField:
        """u0(x) = A (1 + beta cos x_1) exp(i theta)."""
        ini = self.resolved["initial"]
        amp, beta = ini["amplitude"], ini["modulation"]
        rot = np.exp(1j * ini["phase"])
        return SpectralField.from_function(
            self.grid, lambda *x: amp * rot * (1 + beta * np.cos(x[0])) + 0 * sum(x))

    def with_overrides(self, seed=None, paths=None, out=None, workers=None,
                       moser_seed=None) -> "ExperimentConfig":
        doc = copy.deepcopy(self.resolved)
        if moser_seed is not None:
            doc["moser"]["seed"] = moser_seed
        if seed is not None:
            doc["ensemble"]["master_seed"] = seed
        if paths is not None:
            doc["ensemble"]["N_paths"] = paths
        if out is not None:
            doc["output"]["dir"] = str(out)
        if workers is not None:
            doc["ensemble"]["workers"] = workers
        return parse_config(doc)

    def to_json(self) -> str:
        return json.dumps(self.resolved, indent=2)


def parse_config(text) -> ExperimentConfig:
    """Validate a JSON document (string or already-decoded dict).

    A run manifest is accepted as well; its ``config`` block is used.
    """
    if isinstance(text, (str, bytes)):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError("<document>", f"malformed JSON ({exc})") from None
    else:
        doc = copy.deepcopy(text)
    if not isinstance(doc, dict):
        raise ConfigError("<document>", "top level must be an object")
    if "manifest_version" in doc:
        doc = copy.deepcopy(doc["config"])

    for key in doc:
        if key not in TOP_LEVEL:
            raise ConfigError(key, "unknown key")
    preset = doc.get("preset")
    if preset not in PRESETS:
        raise ConfigError("preset", f"must be one of {', '.join(PRESETS)}; got {preset!r}")

    out: dict[str, Any] = {"preset": preset}
    for name in DEFAULTS:
        if name == "noise" and doc.get("noise") == "none":
            out["noise"] = "none"
            continue
        out[name] = _merge_section(name, doc.get(name))
    if preset in DETERMINISTIC_PRESETS:
        if "noise" in doc and doc["noise"] != "none":
            raise ConfigError("noise", f"preset {preset} runs the deterministic equation; "
                              "use \"none\"")
        out["noise"] = "none"

    _resolve_grid_and_params(out)
    _resolve_noise(out)
    _resolve_lyapunov(out)
    _resolve_initial(out)
    _resolve_scheme(out)
    _resolve_rest(out)
    return ExperimentConfig(out)


def _resolve_grid_and_params(out):
    g, p = out["grid"], out["params"]
    g["d"] = _number(g["d"], "grid.d", integer=True, positive=True)
    if g["d"] not in (1, 2, 3):
        raise ConfigError("grid.d", "dimension must be 1, 2 or 3")
    g["n"] = _number(g["n"], "grid.n", integer=True, positive=True)
    if g["N"] is None:
        g["N"] = 2 * g["n"] + 2
    g["N"] = _number(g["N"], "grid.N", integer=True, positive=True)
    if g["N"] % 2:
        raise ConfigError("grid.N", f"must be even, got {g['N']}")
    if g["N"] < 2 * g["n"] + 2:
        raise ConfigError("grid.N", f"must be at least 2n+2 = {2 * g['n'] + 2}, got {g['N']}")

    sigma = p["sigma"]
    if isinstance(sigma, bool) or not isinstance(sigma, (int, float)) \
            or int(sigma) != sigma or sigma < 1:
        raise ConfigError("params.sigma", "sigma must be a positive integer")
    p["sigma"] = int(sigma)
    alpha = _complex(p["alpha"], "params.alpha")
    p["alpha"] = alpha.real if alpha.imag == 0 else [alpha.real, alpha.imag]
    p["s"] = _number(p["s"], "params.s")
    if not p["s"] > g["d"] / 2:
        raise ConfigError("params.s", f"s must exceed d/2 (s={p['s']}, d={g['d']})")


def _resolve_noise(out):
    n = out["noise"]
    if n == "none":
        return
    if n["a"] is None:
        raise ConfigError("noise.a", f"required for preset {out['preset']}")
    n["a"] = _number(n["a"], "noise.a")
    if n["a"] == 0:
        raise ConfigError("noise.a", "a must be nonzero")
    sigma = out["params"]["sigma"]
    for key in ("b", "d_exp"):
        n[key] = float(sigma) if n[key] is None else _number(n[key], f"noise.{key}")
        if not n[key] >= 1:
            raise ConfigError(f"noise.{key}", "exponent must be at least 1")
    n["c"] = _number(n["c"], "noise.c")


def _resolve_lyapunov(out):
    ly = out["lyapunov"]
    if ly["variant"] is None:
        ly["variant"] = "log" if out["preset"] in ("no-blowup", "blowup-baseline") else "power"
    if ly["variant"] not in ("log", "power"):
        raise ConfigError("lyapunov.variant", "must be 'log' or 'power'")
    ly["R"] = _number(ly["R"], "lyapunov.R", positive=True)
    ly["p"] = _number(ly["p"], "lyapunov.p")
    if not 0 < ly["p"] < 1:
        raise ConfigError("lyapunov.p", f"p must lie in (0, 1), got {ly['p']}")
    if ly["a_floor"] is None:
        top = np.log(2 * ly["R"]) if ly["variant"] == "log" else (2 * ly["R"]) ** ly["p"]
        ly["a_floor"] = float(0.5 * top) if ly["variant"] == "power" else float(0.25 * top)
    ly["a_floor"] = _number(ly["a_floor"], "lyapunov.a_floor", positive=True)
    try:
        LyapunovSpec(ly["variant"], ly["R"], ly["a_floor"],
                     ly["p"] if ly["variant"] == "power" else None)
    except ValueError as exc:
        raise ConfigError("lyapunov", str(exc)) from None


def _resolve_initial(out):
    ini = out["initial"]
    for key in ini:
        ini[key] = _number(ini[key], f"initial.{key}")


def _resolve_scheme(out):
    sc, preset = out["scheme"], out["preset"]
    if sc["name"] is None:
        if preset in DETERMINISTIC_PRESETS:
            sc["name"] = "strang-split-deterministic"
        elif isinstance(out["params"]["alpha"], list):
            sc["name"] = "exponential-euler-maruyama"
        else:
            sc["name"] = "stochastic-split"
    if sc["name"] not in SCHEMES:
        raise ConfigError("scheme.name", f"unknown scheme {sc['name']!r}")
    if sc["name"] == "strang-split-deterministic" and out["noise"] != "none":
        raise ConfigError("scheme.name", "the deterministic scheme cannot carry a noise block")
    if sc["dt"] != "auto":
        sc["dt"] = _number(sc["dt"], "scheme.dt", positive=True)
    sc["dt_factor"] = _number(sc["dt_factor"], "scheme.dt_factor", positive=True)
    sc["dt_max"] = _number(sc["dt_max"], "scheme.dt_max", positive=True)
    sc["T"] = _number(sc["T"], "scheme.T", positive=True)
    if sc["M"] is None:
        sc["M"] = {"blowup-baseline": "10x", "decay": "1e8x",
                   "stationary": "1e8x"}.get(preset, "1000x")
    if isinstance(sc["M"], str):
        if not sc["M"].endswith("x"):
            raise ConfigError("scheme.M", "use a number or a multiple of ||u0||_s such as '1000x'")
        try:
            float(sc["M"][:-1])
        except ValueError:
            raise ConfigError("scheme.M", f"bad multiple {sc['M']!r}") from None
    else:
        sc["M"] = _number(sc["M"], "scheme.M", positive=True)
    if sc["record_stride"] != "auto":
        sc["record_stride"] = _number(sc["record_stride"], "scheme.record_stride",
                                      integer=True, positive=True)
    sc["record_every"] = _number(sc["record_every"], "scheme.record_every", positive=True)


def _resolve_rest(out):
    preset, ens = out["preset"], out["ensemble"]
    if ens["N_paths"] is None:
        ens["N_paths"] = 1 if preset in DETERMINISTIC_PRESETS else 256
    ens["N_paths"] = _number(ens["N_paths"], "ensemble.N_paths", integer=True)
    if ens["N_paths"] < 1:
        raise ConfigError("ensemble.N_paths", "N_paths must be at least 1")
    ens["master_seed"] = _number(ens["master_seed"], "ensemble.master_seed", integer=True)
    if ens["master_seed"] < 0:
        raise ConfigError("ensemble.master_seed", "seed must be non-negative")
    ens["workers"] = _number(ens["workers"], "ensemble.workers", integer=True, positive=True)

    mo = out["moser"]
    mo["budget"] = _number(mo["budget"], "moser.budget", integer=True, positive=True)
    mo["seed"] = _number(mo["seed"], "moser.seed", integer=True)

    an = out["analysis"]
    if an["hypothesis"] is None:
        an["hypothesis"] = REQUIRED_HYPOTHESIS.get(preset, "H5''" if preset == "hypothesis-check"
                                                   else None)
    if an["hypothesis"] not in (None, "H5", "H5'", "H5''"):
        raise ConfigError("analysis.hypothesis", f"unknown hypothesis {an['hypothesis']!r}")
    if preset in REQUIRED_HYPOTHESIS and an["hypothesis"] != REQUIRED_HYPOTHESIS[preset]:
        raise ConfigError("analysis.hypothesis",
                          f"preset {preset} requires {REQUIRED_HYPOTHESIS[preset]}")
    if preset in REQUIRED_HYPOTHESIS or preset == "hypothesis-check":
        if out["noise"] == "none":
            raise ConfigError("noise", f"preset {preset} needs a noise block")
    if an["lambda"] is not None:
        an["lambda"] = _number(an["lambda"], "analysis.lambda")
    T = out["scheme"]["T"]
    if an["window"] is None and preset == "decay":
        an["window"] = [min(1.0, T / 5), T]
    if an["window"] is not None:
        w = an["window"]
        if not (isinstance(w, list) and len(w) == 2):
            raise ConfigError("analysis.window", "expected [t_lo, t_hi]")
        an["window"] = [_number(w[0], "analysis.window[0]"), _number(w[1], "analysis.window[1]")]
        if not 0 <= an["window"][0] < an["window"][1] <= T:
            raise ConfigError("analysis.window", f"need 0 <= t_lo < t_hi <= T = {T}")

    o = out["output"]
    if o["dir"] is None:
        o["dir"] = f"runs/{preset}"
    o["dir"] = str(o["dir"])
    if o["per_path"] not in ("auto", True, False):
        raise ConfigError("output.per_path", "must be 'auto', true or false")
