"""Experiment configuration files (JSON) with defaults and strict key checking."""

from __future__ import annotations

import copy
import hashlib
import json
import math
import re
from dataclasses import dataclass, field

from .errors import ConfigParseError

__all__ = ["ExperimentConfig", "SCHEMAS", "parse_config", "load_config", "experiment_ids"]

_BOX2 = [[-1.0, 1.0], [-1.0, 1.0]]
_BALL = {"type": "ball", "center": [0.0, 0.0], "radius": 0.5}
_ALPHA_LADDER = [0.05, 0.025, 0.0125, 0.00625, 0.003125]

# experiment id -> (description, geometry defaults, parameter defaults)
SCHEMAS: dict[str, tuple[str, dict, dict]] = {
    "perimeter": (
        "local / nonlocal split of P_s for one set",
        {"box": _BOX2, "cells": 64, "shape": _BALL, "domain": None, "tail": {"type": "empty"}},
        {"s": [0.5], "precision": "standard"},
    ),
    "asymptotics-s1": (
        "(1 - s) P_s extrapolated to s = 1",
        {"box": _BOX2, "cells": 128, "shape": _BALL, "domain": None, "tail": None},
        {"s": [0.9, 0.95, 0.975], "method": "auto", "compare_grid": False, "precision": "standard"},
    ),
    "asymptotics-s0": (
        "s P_s extrapolated to s = 0",
        {"box": _BOX2, "cells": 128, "shape": _BALL, "domain": None, "tail": {"type": "empty"}},
        {"s": [0.1, 0.05, 0.025], "precision": "standard"},
    ),
    "alpha": (
        "contribution from infinity of a tail model",
        {"tail": {"type": "cone", "vertex": [0.0, 0.0], "direction": [0.0, 1.0], "opening": 1.0}},
        {"R": [2.0, 4.0], "q": [[0.0, 0.0], [0.5, 0.5]], "s": _ALPHA_LADDER, "precision": "high"},
    ),
    "curvature": (
        "fractional mean curvature at an interface point",
        {"box": _BOX2, "cells": 128, "shape": _BALL, "tail": {"type": "empty"}},
        {"s": [0.1, 0.05, 0.025], "q": None, "near": [1.0, 0.0], "pv_radius": None,
         "diagnostic": None, "limit": True, "precision": "high"},
    ),
    "graph": (
        "nonlocal minimal graph in one dimension",
        {"omega": [[-1.0, 1.0]], "h": 0.015625, "pad": 3.0,
         "data": {"type": "bumps", "height": 4.0, "intervals": [[-3.0, -2.0], [2.0, 3.0]], "base": 0.0},
         "tail": {"type": "supgraph_bounded", "level": 0.0}},
        {"s": [0.1], "tol": 1e-8, "method": "newton"},
    ),
    "annulus": (
        "classical annulus minimal graph and its threshold",
        {},
        {"rho": 1.0, "R": 2.0, "M_over_M0": [0.5, 1.0, 2.0], "M": None, "mesh": 512},
    ),
    "set": (
        "fractional perimeter minimizer with fixed exterior data",
        {"box": [[-1.8, 1.8], [-1.8, 1.8]], "cells": 96, "domain": {"type": "ball", "center": [0.0, 0.0], "radius": 1.0},
         "exterior": {"type": "half_ring", "delta": 0.2}, "tail": {"type": "empty"}},
        {"s": [0.3], "solver": "mincut", "relaxed_tol": 1e-10},
    ),
    "sweep": (
        "stickiness sweep (half-ring, cone, cone-complement or bump)",
        {"box": None, "cells": None, "h": 0.0078125, "pad": 3.0},
        {"family": "half-ring", "parameter": "delta", "values": [0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.8],
         "s": 0.3, "delta": 0.2, "theta": math.pi / 8, "cone_h": 1.0, "tol": 1e-8},
    ),
    "cylinder-demo": (
        "cross-section of the annular cylinder as s decreases",
        {},
        {"rho": 1.0, "R": 2.0, "M": 1.0, "s": [0.5, 0.3, 0.2, 0.1, 0.05], "h": 0.03125,
         "collar": 2.0, "tail": "v", "tail_slope": 1.0, "tol": 1e-8},
    ),
}

_TOP = ("experiment", "geometry", "parameters", "output", "seed")
_OUTPUT_DEFAULTS = {"csv": None, "summary": None, "profiles": False}


def experiment_ids() -> list[str]:
    return list(SCHEMAS)


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    geometry: dict = field(default_factory=dict)
    parameters: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    seed: int = 0

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "geometry": copy.deepcopy(self.geometry),
            "parameters": copy.deepcopy(self.parameters),
            "output": copy.deepcopy(self.output),
            "seed": self.seed,
        }

    def serialize(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def hash(self) -> str:
        return hashlib.sha256(self.serialize().encode()).hexdigest()

    @property
    def csv_name(self) -> str:
        return self.output.get("csv") or f"{self.experiment}.csv"

    @property
    def summary_name(self) -> str:
        return self.output.get("summary") or f"{self.experiment}.json"


def _position(text: str, key: str, after: int = 0) -> tuple[int | None, int | None, int]:
    m = re.compile(r'"' + re.escape(key) + r'"\s*:').search(text, after)
    if m is None:
        return None, None, after
    line = text.count("\n", 0, m.start()) + 1
    col = m.start() - (text.rfind("\n", 0, m.start()) + 1) + 1
    return line, col, m.start()


def _check_keys(text: str, section: dict, allowed, where: str, after: int = 0):
    for key in section:
        if key not in allowed:
            line, col, _ = _position(text, key, after)
            raise ConfigParseError(f"unknown key {key!r} in {where}", line, col)


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a JSON configuration; fills in defaults."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigParseError(f"invalid JSON: {exc.msg}", exc.lineno, exc.colno) from None
    if not isinstance(raw, dict):
        raise ConfigParseError("the configuration must be a JSON object", 1, 1)
    _check_keys(text, raw, _TOP, "the top level")
    if "experiment" not in raw:
        raise ConfigParseError("missing key 'experiment'", 1, 1)
    exp = raw["experiment"]
    if exp not in SCHEMAS:
        line, col, _ = _position(text, "experiment")
        raise ConfigParseError(f"unknown experiment id {exp!r}; known: {', '.join(SCHEMAS)}", line, col)
    _, geo_defaults, par_defaults = SCHEMAS[exp]
    sections = {}
    for name, defaults in (("geometry", geo_defaults), ("parameters", par_defaults), ("output", _OUTPUT_DEFAULTS)):
        given = raw.get(name, {})
        if given is None:
            given = {}
        if not isinstance(given, dict):
            line, col, _ = _position(text, name)
            raise ConfigParseError(f"section {name!r} must be an object", line, col)
        _, _, start = _position(text, name)
        _check_keys(text, given, defaults, f"section {name!r}", start)
        merged = copy.deepcopy(defaults)
        merged.update(copy.deepcopy(given))
        sections[name] = merged
    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        line, col, _ = _position(text, "seed")
        raise ConfigParseError("seed must be an integer", line, col)
    return ExperimentConfig(exp, sections["geometry"], sections["parameters"], sections["output"], seed)


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
