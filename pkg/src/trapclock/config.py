"""Experiment configuration: a YAML file with model, scale, dynamics, limits,
seeds, output and check blocks. All cross-field constraints are validated up
front, with messages naming the offending field."""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass
from pathlib import Path

import yaml

from .randscape import TailSpec

DEFAULTS = {
    "name": "experiment",
    "model": {"alpha": 0.5, "a": 0.0, "tail": {"kind": "pareto", "x_min": 1.0}, "n": [10000]},
    "scale": {"class": "intermediate", "b_n": "sqrt", "r": 1.0},
    "dynamics": {"initial": "pi", "t": [1.0], "rho": [0.5, 1.0, 3.0], "s": [], "replicas": 10000,
                 "landscapes": 1},
    "limits": {"kind": None, "eps": None, "prm_tol": 1e-6, "replicas": 0},
    "seeds": {"master": 1},
    "output": {"directory": "out", "formats": ["csv", "json"]},
    "check": {"kind": "none", "tol": None, "systematic": 0.02},
}

CHECK_KINDS = ("none", "arcsine", "stranded", "stationary")
INITIAL_PRESETS = ("pi", "pi_n", "gibbs", "uniform", "deepest")


class ConfigError(ValueError):
    """Raised with a field path when a configuration is invalid."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in (over or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _as_list(x):
    if x is None:
        return []
    return list(x) if isinstance(x, (list, tuple)) else [x]


def resolve_bn(rule, n: int) -> int | float:
    """b_n from a rule: 'sqrt' (ceil n^(1/2)), 'n', 'power:p' (ceil n^p) or a number."""
    if isinstance(rule, (int, float)) and not isinstance(rule, bool):
        return rule
    if rule == "sqrt":
        return math.ceil(math.sqrt(n))
    if rule == "n":
        return n
    if isinstance(rule, str) and rule.startswith("power:"):
        return math.ceil(n ** float(rule.split(":", 1)[1]))
    raise ConfigError("scale.b_n", f"unknown rule {rule!r}")


@dataclass
class ExperimentConfig:
    data: dict

    # convenient views
    @property
    def name(self) -> str:
        return self.data["name"]

    @property
    def model(self) -> dict:
        return self.data["model"]

    @property
    def scale(self) -> dict:
        return self.data["scale"]

    @property
    def dynamics(self) -> dict:
        return self.data["dynamics"]

    @property
    def limits(self) -> dict:
        return self.data["limits"]

    @property
    def check(self) -> dict:
        return self.data["check"]

    @property
    def master_seed(self) -> int:
        return int(self.data["seeds"]["master"])

    def tail(self) -> TailSpec:
        t = self.model["tail"]
        if t["kind"] == "degenerate":
            return TailSpec.degenerate(t["value"])
        return TailSpec.pareto(self.model["alpha"], t.get("x_min", 1.0), t.get("log_power", 0.0))

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.data, sort_keys=True, default_flow_style=None)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        unknown = set(d) - set(DEFAULTS)
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown block")
        for block, val in d.items():
            if isinstance(DEFAULTS[block], dict):
                if not isinstance(val, dict):
                    raise ConfigError(block, "must be a mapping")
                extra = set(val) - set(DEFAULTS[block])
                if extra:
                    raise ConfigError(f"{block}.{sorted(extra)[0]}", "unknown field")
        cfg = cls(_merge(DEFAULTS, d))
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            d = yaml.safe_load(Path(path).read_text())
        except yaml.YAMLError as exc:
            raise ConfigError("<file>", f"YAML parse error: {exc}") from exc
        if not isinstance(d, dict):
            raise ConfigError("<file>", "top level must be a mapping")
        return cls.from_dict(d)

    def validate(self) -> None:
        m, sc, dy, ck = self.model, self.scale, self.dynamics, self.check
        alpha, a = m["alpha"], m["a"]
        if not isinstance(alpha, (int, float)) or not 0 < alpha < 1:
            raise ConfigError("model.alpha", "must lie in (0, 1)")
        if not isinstance(a, (int, float)) or not 0 <= a < 1:
            raise ConfigError("model.a", "must lie in [0, 1)")
        if m["tail"].get("kind") not in ("pareto", "degenerate"):
            raise ConfigError("model.tail.kind", "must be pareto or degenerate")
        if m["tail"]["kind"] == "degenerate" and not m["tail"].get("value", 0) > 0:
            raise ConfigError("model.tail.value", "degenerate tail needs a positive value")
        m["n"] = _as_list(m["n"])
        if not m["n"] or any(not isinstance(n, int) or n < 1 for n in m["n"]):
            raise ConfigError("model.n", "must be a list of positive integers")
        if sc["class"] not in ("constant", "intermediate", "extreme"):
            raise ConfigError("scale.class", "must be constant, intermediate or extreme")
        for n in m["n"]:
            if sc["class"] == "intermediate":
                bn = resolve_bn(sc["b_n"], n)
                if not 1 <= bn < n:
                    raise ConfigError("scale.b_n", f"intermediate class needs 1 <= b_n < n (n={n}, b_n={bn})")
            elif sc["class"] == "extreme":
                if resolve_bn(sc["b_n"], n) != n:
                    raise ConfigError("scale.b_n", "extreme class needs b_n = n")
        if sc["class"] == "constant" and not (isinstance(sc["r"], (int, float)) and sc["r"] > 0):
            raise ConfigError("scale.r", "constant class needs a positive r")
        if dy["initial"] not in INITIAL_PRESETS and not isinstance(dy["initial"], int):
            raise ConfigError("dynamics.initial", f"must be one of {INITIAL_PRESETS} or a vertex index")
        for key in ("t", "rho", "s"):
            dy[key] = _as_list(dy[key])
            if any(not isinstance(x, (int, float)) or x < 0 for x in dy[key]):
                raise ConfigError(f"dynamics.{key}", "must be nonnegative numbers")
        if not dy["t"]:
            raise ConfigError("dynamics.t", "at least one t is required")
        if not dy["rho"] and not dy["s"]:
            raise ConfigError("dynamics.rho", "give rho or s values")
        for key in ("replicas", "landscapes"):
            if not isinstance(dy[key], int) or dy[key] < 1:
                raise ConfigError(f"dynamics.{key}", "must be a positive integer")
        if not isinstance(self.data["seeds"].get("master"), int):
            raise ConfigError("seeds.master", "must be an integer")
        fmts = _as_list(self.data["output"]["formats"])
        if not fmts or any(f not in ("csv", "json") for f in fmts):
            raise ConfigError("output.formats", "must be a subset of [csv, json]")
        self.data["output"]["formats"] = fmts
        if ck["kind"] not in CHECK_KINDS:
            raise ConfigError("check.kind", f"must be one of {CHECK_KINDS}")
        if ck["kind"] == "arcsine":
            if a >= alpha:
                raise ConfigError("check.kind", "arcsine aging needs a < alpha")
            if sc["class"] != "intermediate":
                raise ConfigError("check.kind", "arcsine aging is checked on the intermediate scale")
        if ck["kind"] == "stranded" and a <= alpha:
            raise ConfigError("check.kind", "the stranded regime needs a > alpha")
        if ck["kind"] == "stationary":
            if sc["class"] != "extreme":
                raise ConfigError("check.kind", "the stationary check needs the extreme scale")
            if dy["initial"] != "gibbs":
                raise ConfigError("dynamics.initial", "the stationary check needs the gibbs start")
            if not dy["s"]:
                raise ConfigError("dynamics.s", "the stationary check uses fixed s values")
            if m["tail"]["kind"] != "pareto":
                raise ConfigError("model.tail.kind", "the stationary check needs a heavy tail")
        if ck["kind"] != "none" and not isinstance(ck["tol"], (int, float)):
            raise ConfigError("check.tol", "a numeric tolerance is required")
