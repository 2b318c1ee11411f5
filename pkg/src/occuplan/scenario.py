"""Scenario files: versioned JSON schema, validation and hybrid system construction.

A scenario either gives an LTLf ``spec`` over labeled ``regions`` of a single
system template, or an explicit graph of ``modes`` and ``transitions``.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .gmp import Boundary, HybridSystem
from .liouville import Mode
from .moments import SemialgebraicSet
from .polyalg import Polynomial

SCHEMA_VERSION = 1

DEFAULT_OPTIONS = {
    "degree": 2,
    "T_max": 50.0,
    "N": 20,
    "ball_radius": 10.0,
    "solver": "clarabel",
    "adjacency": "closure",
    "self_loops": True,
    "flow_cap": True,
    "pair_bounds": True,
    "rollout": False,
    "dt": 0.01,
    "goal_radius": 0.1,
}

_TERMS = {
    "type": "array",
    "items": {
        "type": "object",
        "additionalProperties": False,
        "required": ["exps", "coef"],
        "properties": {
            "exps": {"type": "array", "items": {"type": "integer", "minimum": 0}},
            "coef": {"type": "number"},
        },
    },
}
_BOUND_LIST = {"type": "array", "items": {"anyOf": [{"type": "number"}, {"type": "null"}]}}
_SET = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "inequalities": {"type": "array", "items": {"$ref": "#/$defs/terms"}},
        "box": {
            "type": "object",
            "additionalProperties": False,
            "required": ["lower", "upper"],
            "properties": {"lower": _BOUND_LIST, "upper": _BOUND_LIST},
        },
        "ball_radius": {"type": "number", "exclusiveMinimum": 0},
    },
}
_DYNAMICS = {"type": "array", "items": {"$ref": "#/$defs/terms"}, "minItems": 1}
_VECTOR = {"type": "array", "items": {"type": "number"}, "minItems": 1}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "$defs": {"terms": _TERMS, "set": _SET, "dynamics": _DYNAMICS},
    "type": "object",
    "additionalProperties": False,
    "required": ["schema", "name", "variables", "cost", "input_set", "terminal"],
    "properties": {
        "schema": {"const": SCHEMA_VERSION},
        "name": {"type": "string", "minLength": 1},
        "description": {"type": "string"},
        "variables": {
            "type": "object",
            "additionalProperties": False,
            "required": ["state", "input"],
            "properties": {"state": {"type": "integer", "minimum": 1}, "input": {"type": "integer", "minimum": 0}},
        },
        "dynamics": {"$ref": "#/$defs/dynamics"},
        "cost": {"$ref": "#/$defs/terms"},
        "input_set": {"$ref": "#/$defs/set"},
        "state_bounds": {"$ref": "#/$defs/set"},
        "regions": {"type": "object", "additionalProperties": {"$ref": "#/$defs/set"}},
        "overrides": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["region", "dynamics"],
                "properties": {"region": {"type": "string"}, "dynamics": {"$ref": "#/$defs/dynamics"}},
            },
        },
        "spec": {"type": "string", "minLength": 1},
        "modes": {
            "type": "object",
            "minProperties": 1,
            "additionalProperties": {
                "type": "object",
                "additionalProperties": False,
                "required": ["set"],
                "properties": {
                    "set": {"$ref": "#/$defs/set"},
                    "dynamics": {"$ref": "#/$defs/dynamics"},
                    "cost": {"$ref": "#/$defs/terms"},
                    "input_set": {"$ref": "#/$defs/set"},
                    "dwell": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
                },
            },
        },
        "transitions": {
            "type": "array",
            "items": {"type": "array", "items": {"type": "string"}, "minItems": 2, "maxItems": 2},
        },
        "source": {"type": "string"},
        "target": {"type": "string"},
        "x0": _VECTOR,
        "initial_set": {"$ref": "#/$defs/set"},
        "terminal": {
            "type": "object",
            "additionalProperties": False,
            "minProperties": 1,
            "maxProperties": 1,
            "properties": {"point": _VECTOR, "set": {"$ref": "#/$defs/set"}},
        },
        "options": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "degree": {"type": "integer", "minimum": 0},
                "T_max": {"type": "number", "exclusiveMinimum": 0},
                "N": {"type": "integer", "minimum": 1},
                "ball_radius": {"type": "number", "exclusiveMinimum": 0},
                "solver": {"enum": ["clarabel", "scs", "cvxopt"]},
                "adjacency": {"enum": ["closure", "facet"]},
                "self_loops": {"type": "boolean"},
                "flow_cap": {"type": "boolean"},
                "pair_bounds": {"type": "boolean"},
                "rollout": {"type": "boolean"},
                "dt": {"type": "number", "exclusiveMinimum": 0},
                "goal_radius": {"type": "number", "exclusiveMinimum": 0},
            },
        },
    },
    "oneOf": [
        {"required": ["spec", "dynamics", "state_bounds", "regions", "x0"], "not": {"anyOf": [{"required": ["modes"]}, {"required": ["transitions"]}]}},
        {"required": ["modes", "transitions", "source", "target"], "not": {"anyOf": [{"required": ["spec"]}, {"required": ["regions"]}, {"required": ["overrides"]}]}},
    ],
}


class ScenarioError(ValueError):
    """Invalid scenario input; ``path`` locates the offending field."""

    def __init__(self, path: str, msg: str):
        super().__init__(f"{path}: {msg}")
        self.path = path


def _path(parts) -> str:
    out = "$"
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else f".{p}"
    return out


@dataclass
class Scenario:
    name: str
    data: dict
    options: dict
    source_path: Path | None = None
    description: str = ""
    _hybrid: HybridSystem | None = field(default=None, repr=False)
    automaton: object = field(default=None, repr=False)

    @property
    def state_dim(self) -> int:
        return self.data["variables"]["state"]

    @property
    def input_dim(self) -> int:
        return self.data["variables"]["input"]

    @property
    def uses_spec(self) -> bool:
        return "spec" in self.data

    @property
    def x0(self) -> np.ndarray | None:
        return None if "x0" not in self.data else np.asarray(self.data["x0"], float)

    @property
    def terminal_point(self) -> np.ndarray | None:
        t = self.data["terminal"]
        return np.asarray(t["point"], float) if "point" in t else None

    def hybrid(self, seed: int = 0) -> HybridSystem:
        if self._hybrid is None:
            self._hybrid = build_hybrid(self, seed)
        return self._hybrid

    def regions(self) -> dict:
        """Named state sets for plotting: labeled regions or mode sets."""
        n = self.state_dim
        if self.uses_spec:
            return {k: _set(v, n, None, f"$.regions.{k}") for k, v in self.data["regions"].items()}
        return {k: _set(v["set"], n, None, f"$.modes.{k}.set") for k, v in self.data["modes"].items()}

    def bounds(self) -> SemialgebraicSet | None:
        if "state_bounds" in self.data:
            return _set(self.data["state_bounds"], self.state_dim, None, "$.state_bounds")
        return None


def validate(data) -> None:
    """Schema check plus dimension consistency; raises :class:`ScenarioError`."""
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: (len(e.absolute_path), list(map(str, e.absolute_path))))
    if errors:
        err = jsonschema.exceptions.best_match(errors)
        raise ScenarioError(_path(err.absolute_path), err.message)
    n, m = data["variables"]["state"], data["variables"]["input"]
    _check_terms(data["cost"], n + m, "$.cost")
    _check_set(data["input_set"], m, "$.input_set")
    if "dynamics" in data:
        _check_dynamics(data["dynamics"], n, m, "$.dynamics")
    if "state_bounds" in data:
        _check_set(data["state_bounds"], n, "$.state_bounds")
    for k, s in data.get("regions", {}).items():
        _check_set(s, n, f"$.regions.{k}")
    for i, o in enumerate(data.get("overrides", [])):
        if o["region"] not in data.get("regions", {}):
            raise ScenarioError(f"$.overrides[{i}].region", f"unknown region {o['region']!r}")
        _check_dynamics(o["dynamics"], n, m, f"$.overrides[{i}].dynamics")
    for k, md in data.get("modes", {}).items():
        base = f"$.modes.{k}"
        _check_set(md["set"], n, base + ".set")
        if "dynamics" in md:
            _check_dynamics(md["dynamics"], n, m, base + ".dynamics")
        elif "dynamics" not in data:
            raise ScenarioError(base, "mode has no dynamics and there is no global template")
        if "cost" in md:
            _check_terms(md["cost"], n + m, base + ".cost")
        if "input_set" in md:
            _check_set(md["input_set"], m, base + ".input_set")
    if "modes" in data:
        nodes = set(data["modes"]) | {data["target"]}
        for i, (a, b) in enumerate(data["transitions"]):
            if a not in data["modes"]:
                raise ScenarioError(f"$.transitions[{i}][0]", f"unknown mode {a!r}")
            if b not in nodes:
                raise ScenarioError(f"$.transitions[{i}][1]", f"unknown node {b!r}")
        if data["source"] not in data["modes"]:
            raise ScenarioError("$.source", f"unknown mode {data['source']!r}")
    if ("x0" in data) == ("initial_set" in data):
        raise ScenarioError("$", "give exactly one of x0 and initial_set")
    if "x0" in data and len(data["x0"]) != n:
        raise ScenarioError("$.x0", f"expected {n} entries, got {len(data['x0'])}")
    if "initial_set" in data:
        _check_set(data["initial_set"], n, "$.initial_set")
    term = data["terminal"]
    if "point" in term and len(term["point"]) != n:
        raise ScenarioError("$.terminal.point", f"expected {n} entries, got {len(term['point'])}")
    if "set" in term:
        _check_set(term["set"], n, "$.terminal.set")


def _check_terms(terms, nv, path):
    for i, t in enumerate(terms):
        if len(t["exps"]) != nv:
            raise ScenarioError(f"{path}[{i}].exps", f"expected {nv} exponents, got {len(t['exps'])}")


def _check_dynamics(dyn, n, m, path):
    if len(dyn) != n:
        raise ScenarioError(path, f"expected {n} components, got {len(dyn)}")
    for i, comp in enumerate(dyn):
        _check_terms(comp, n + m, f"{path}[{i}]")


def _check_set(s, nv, path):
    for i, g in enumerate(s.get("inequalities", [])):
        _check_terms(g, nv, f"{path}.inequalities[{i}]")
    if "box" in s:
        for side in ("lower", "upper"):
            if len(s["box"][side]) != nv:
                raise ScenarioError(f"{path}.box.{side}", f"expected {nv} entries, got {len(s['box'][side])}")


def _set(data, nv, ball, path) -> SemialgebraicSet:
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        s = SemialgebraicSet.from_json(data, nv, ball)
    for w in caught:
        warnings.warn(f"{path}: {w.message}", stacklevel=3)
    return s


def _poly(terms, nv) -> Polynomial:
    return Polynomial.from_json(terms, nv)


def _dyn(dyn, nv) -> tuple:
    return tuple(_poly(c, nv) for c in dyn)


def loads(text: str, source_path: Path | None = None) -> Scenario:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError("$", f"invalid JSON: {exc.msg} (line {exc.lineno}, column {exc.colno})") from None
    return from_dict(data, source_path)


def load(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError("$", f"cannot read {path}: {exc.strerror}") from None
    return loads(text, path)


def from_dict(data, source_path: Path | None = None) -> Scenario:
    validate(data)
    opts = dict(DEFAULT_OPTIONS)
    opts.update(data.get("options", {}))
    return Scenario(data["name"], data, opts, source_path, data.get("description", ""))


def build_hybrid(scn: Scenario, seed: int = 0) -> HybridSystem:
    from .ltl.automaton import to_automaton
    from .ltl.product import LabeledRegionSystem, ProductError, product

    d, o = scn.data, scn.options
    n, m = scn.state_dim, scn.input_dim
    nv = n + m
    ball = float(o["ball_radius"])
    rad_u = ball
    U = _set(d["input_set"], m, rad_u, "$.input_set") if m else SemialgebraicSet(0)
    cost = _poly(d["cost"], nv)
    if "x0" in d:
        initial = Boundary.at(d["x0"])
    else:
        initial = Boundary.on(_set(d["initial_set"], n, ball, "$.initial_set"))
    t = d["terminal"]
    terminal = Boundary.at(t["point"]) if "point" in t else Boundary.on(_set(t["set"], n, ball, "$.terminal.set"))
    T_max = float(o["T_max"])
    if scn.uses_spec:
        regions = {k: _set(v, n, None, f"$.regions.{k}") for k, v in d["regions"].items()}
        sys = LabeledRegionSystem(
            n, m, _dyn(d["dynamics"], nv), cost, U,
            _set(d["state_bounds"], n, ball, "$.state_bounds"), regions,
            [(ov["region"], _dyn(ov["dynamics"], nv)) for ov in d.get("overrides", [])],
        )
        try:
            aut = to_automaton(d["spec"])
        except ValueError as exc:
            raise ScenarioError("$.spec", str(exc)) from None
        scn.automaton = aut
        missing = set(aut.atoms) - set(regions)
        if missing:
            raise ScenarioError("$.spec", f"atoms without regions: {sorted(missing)}")
        try:
            hs = product(sys, aut, d["x0"], terminal, T_max, o["self_loops"], o["adjacency"], seed=seed)
        except ProductError as exc:
            raise ScenarioError("$", f"product construction failed: {exc}") from None
        hs.flow_cap = o["flow_cap"]
        return hs
    modes = {}
    for k, md in d["modes"].items():
        base = f"$.modes.{k}"
        f = _dyn(md.get("dynamics", d.get("dynamics")), nv)
        c = _poly(md["cost"], nv) if "cost" in md else cost
        Ui = _set(md["input_set"], m, rad_u, base + ".input_set") if "input_set" in md else U
        modes[k] = Mode(n, m, _set(md["set"], n, ball, base + ".set"), Ui, f, c, tuple(md["dwell"]) if "dwell" in md else None)
    try:
        return HybridSystem(
            modes, [tuple(e) for e in d["transitions"]], d["source"], d["target"], initial, terminal, T_max, o["flow_cap"]
        )
    except ValueError as exc:
        raise ScenarioError("$.transitions", str(exc)) from None


def bundled_dir() -> Path:
    return Path(str(resources.files("occuplan") / "scenarios"))


def bundled() -> list[Path]:
    return sorted(bundled_dir().glob("*.json"))
