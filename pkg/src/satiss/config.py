"""Experiment configuration: YAML loading, defaults and validation.

Every validation error carries the line of the offending key so that the
command-line front end can print a line-anchored diagnostic.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import yaml

from .feedback import KINDS as SIGMA_KINDS
from .feedback import FeedbackMap
from .grid import cell_shift
from .systems import GENERATOR_KINDS, GeneratorSpec, SystemSpec

EXPERIMENTS = (
    "simulate",
    "counterexample",
    "transport-equality",
    "lyapunov-check",
    "iss-check",
    "gronwall-check",
    "ugas-falsify",
    "semiglobal-fit",
    "property-suite",
)

SYSTEM_DEFAULTS = {
    "generator": "zero",
    "alpha": 0.0,
    "matrix": None,
    "B": 1.0,
    "sigma": "sat",
    "delta": 1.0,
    "table": None,
    "omega": 1.0,
    "M": 1.0,
}

NUMERIC_DEFAULTS = {
    "N": 400,
    "dt": 0.01,
    "T_end": 1.0,
    "seed": 0,
    "tol": 1e-9,
    "samples": 20,
    "threshold": 0.5,
    "ladder_max_power": 20,
    "t_grid": [0.5, 1.0, 5.0, 10.0],
    "r_list": [0.5, 1.0, 2.0],
    "amplitudes": [0.0, 0.1, 0.5, 1.0],
    "eps": None,
    "k_r": 1.0,
    "x0": {"kind": "constant", "value": 2.0},
    "disturbance": 0.0,
    "max_dim": 8,
}

POSITIVE = ("N", "dt", "samples", "ladder_max_power", "max_dim")
NONNEGATIVE = ("T_end", "tol", "k_r", "seed")


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(message)

    def __str__(self) -> str:
        msg = super().__str__()
        return f"line {self.line}: {msg}" if self.line is not None else msg


@dataclass
class ExperimentConfig:
    experiment: str
    system: dict
    numerics: dict
    raw: dict = field(repr=False, default_factory=dict)

    def build_system(self) -> SystemSpec:
        s = self.system
        kind = s["generator"]
        if kind == "matrix":
            A = GeneratorSpec.from_matrix(s["matrix"])
        elif kind == "scalar_diagonal":
            A = GeneratorSpec.scalar_diagonal(s["alpha"])
        else:
            A = GeneratorSpec(kind)
        if s["sigma"] == "tabulated":
            sigma = FeedbackMap.tabulated(s["table"]["xs"], s["table"]["ys"])
        elif s["sigma"] == "deadzone_linear":
            sigma = FeedbackMap.deadzone_linear(s["delta"])
        else:
            sigma = FeedbackMap(s["sigma"])
        B = s["B"]
        return SystemSpec(A, np.asarray(B, dtype=float) if isinstance(B, list) else float(B), sigma)


def _line_index(text: str) -> dict:
    """Map key paths like ``("numerics", "dt")`` to 1-based line numbers."""
    lines: dict = {}
    try:
        root = yaml.compose(text)
    except yaml.YAMLError:
        return lines

    def walk(node, path):
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                p = path + (k.value,)
                lines[p] = k.start_mark.line + 1
                walk(v, p)

    if root is not None:
        walk(root, ())
    return lines


def parse_config(text: str) -> ExperimentConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"YAML syntax error: {getattr(exc, 'problem', exc)}", mark.line + 1 if mark else None)
    lines = _line_index(text)

    def err(msg, *path):
        line = None
        while path and line is None:
            line = lines.get(tuple(path))
            path = path[:-1]
        raise ConfigError(msg, line if line is not None else 1)

    if not isinstance(data, dict) or not data:
        raise ConfigError("config is empty or not a mapping", 1)
    unknown = set(data) - {"experiment", "system", "numerics"}
    if unknown:
        err(f"unknown top-level keys: {sorted(unknown)}", sorted(unknown)[0])
    exp = data.get("experiment")
    if exp not in EXPERIMENTS:
        err(f"experiment must be one of {list(EXPERIMENTS)}, got {exp!r}", "experiment")

    system = copy.deepcopy(SYSTEM_DEFAULTS)
    given_sys = data.get("system") or {}
    if not isinstance(given_sys, dict):
        err("system must be a mapping", "system")
    for k in given_sys:
        if k not in SYSTEM_DEFAULTS:
            err(f"unknown system key {k!r}", "system", k)
    system.update(given_sys)
    if system["generator"] not in GENERATOR_KINDS:
        err(f"generator must be one of {list(GENERATOR_KINDS)}", "system", "generator")
    if system["sigma"] not in SIGMA_KINDS:
        err(f"sigma must be one of {list(SIGMA_KINDS)}", "system", "sigma")
    if system["generator"] == "matrix":
        try:
            M = np.asarray(system["matrix"], dtype=float)
            if M.ndim != 2 or M.shape[0] != M.shape[1]:
                raise ValueError
        except (TypeError, ValueError):
            err("matrix generator needs 'matrix' as a square list of lists", "system", "matrix")
    if system["sigma"] == "tabulated":
        tab = system["table"]
        if not isinstance(tab, dict) or "xs" not in tab or "ys" not in tab:
            err("tabulated sigma needs table: {xs: [...], ys: [...]}", "system", "table")
    for key in ("delta", "omega", "M"):
        if not isinstance(system[key], (int, float)) or system[key] <= 0:
            err(f"system.{key} must be a positive number", "system", key)
    try:
        ExperimentConfig(exp, system, {}).build_system()
    except (TypeError, ValueError) as exc:
        err(f"invalid system: {exc}", "system")

    numerics = copy.deepcopy(NUMERIC_DEFAULTS)
    given_num = data.get("numerics") or {}
    if not isinstance(given_num, dict):
        err("numerics must be a mapping", "numerics")
    for k in given_num:
        if k not in NUMERIC_DEFAULTS:
            err(f"unknown numerics key {k!r}", "numerics", k)
    numerics.update(given_num)
    for k in POSITIVE:
        v = numerics[k]
        if not isinstance(v, (int, float)) or isinstance(v, bool) or v <= 0:
            err(f"numerics.{k} must be positive", "numerics", k)
    for k in NONNEGATIVE:
        v = numerics[k]
        if not isinstance(v, (int, float)) or isinstance(v, bool) or v < 0:
            err(f"numerics.{k} must be nonnegative", "numerics", k)
    for k in ("t_grid", "r_list", "amplitudes"):
        v = numerics[k]
        if not isinstance(v, list) or not v or not all(isinstance(a, (int, float)) and a >= 0 for a in v):
            err(f"numerics.{k} must be a nonempty list of nonnegative numbers", "numerics", k)
    if not 0 < numerics["threshold"] < 1:
        err("numerics.threshold must lie in (0, 1)", "numerics", "threshold")
    if exp == "ugas-falsify" and any(t <= 0 for t in numerics["t_grid"]):
        err("ugas-falsify needs positive times in t_grid", "numerics", "t_grid")
    if exp == "iss-check" and system["generator"] not in ("scalar_diagonal", "matrix"):
        err("iss-check needs a dissipative generator (scalar_diagonal or matrix)", "system", "generator")
    if exp == "iss-check" and system["generator"] == "scalar_diagonal" and system["alpha"] <= 0:
        err("iss-check needs alpha > 0", "system", "alpha")
    if numerics["eps"] is not None and (not isinstance(numerics["eps"], (int, float)) or numerics["eps"] <= 0):
        err("numerics.eps must be positive", "numerics", "eps")
    x0 = numerics["x0"]
    if not isinstance(x0, dict) or x0.get("kind") not in ("constant", "counterexample", "sine", "random", "linear"):
        err("numerics.x0 needs kind in {constant, counterexample, sine, random, linear}", "numerics", "x0")
    if exp == "transport-equality":
        N = numerics["N"]
        for t in numerics["t_grid"]:
            if cell_shift(t, N) is None:
                err(f"t={t} is not a multiple of 1/N = 1/{N}", "numerics", "t_grid")
    return ExperimentConfig(exp, system, numerics, data)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}")
    return parse_config(text)


def canonical(data: Any) -> Any:
    """JSON-ready copy with deterministic key order."""
    if isinstance(data, dict):
        return {str(k): canonical(data[k]) for k in sorted(data, key=str)}
    if isinstance(data, (list, tuple)):
        return [canonical(v) for v in data]
    if isinstance(data, np.generic):
        return data.item()
    if isinstance(data, np.ndarray):
        return canonical(data.tolist())
    return data
