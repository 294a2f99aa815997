"""JSON scenario files: schema, parsing into model objects, hashing.

Impedances are written as ``{"re": .., "im": .., "unit": "pu" | "ohm"}``;
ohm values are converted with the network base U_N^2 / S_N.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

import jsonschema

from .cct import FaultScenario
from .dynamics import EventSchedule, IntegratorConfig, SettleCriteria
from .models import DroopParams, GlobalConstants, SgParams, SystemKind, TwoSourceSystem
from .multimachine import GridCase, SourceSpec, build_multimachine, load_case, wscc9_case
from .network import ZERO, ComplexImpedance, ThreeBusNetwork


class ConfigError(ValueError):
    """Schema or consistency violation in a scenario file."""


_IMPEDANCE = {
    "type": "object",
    "required": ["re", "im"],
    "properties": {
        "re": {"type": "number"},
        "im": {"type": "number"},
        "unit": {"enum": ["pu", "ohm"]},
    },
    "additionalProperties": False,
}

_SG = {
    "type": "object",
    "required": ["type", "tj", "d", "p_star", "e"],
    "properties": {
        "type": {"const": "sg"},
        "tj": {"type": "number", "exclusiveMinimum": 0},
        "d": {"type": "number", "minimum": 0},
        "p_star": {"type": "number"},
        "e": {"type": "number", "exclusiveMinimum": 0},
    },
    "additionalProperties": False,
}

_DROOP = {
    "type": "object",
    "required": ["type", "k", "p_star", "e"],
    "properties": {
        "type": {"const": "droop"},
        "k": {"type": "number", "minimum": 0},
        "p_star": {"type": "number"},
        "e": {"type": "number", "exclusiveMinimum": 0},
    },
    "additionalProperties": False,
}

_THREE_BUS = {
    "type": "object",
    "required": ["z1", "z2", "z_load", "z_fault"],
    "properties": {
        "base": {
            "type": "object",
            "properties": {
                "voltage_kv": {"type": "number", "exclusiveMinimum": 0},
                "power_mva": {"type": "number", "exclusiveMinimum": 0},
            },
            "additionalProperties": False,
        },
        "z1": _IMPEDANCE,
        "z2": _IMPEDANCE,
        "z_load": _IMPEDANCE,
        "z_fault": _IMPEDANCE,
        "z_v": _IMPEDANCE,
        "z_v1": _IMPEDANCE,
    },
    "additionalProperties": False,
}

_MM_SOURCE = {
    "type": "object",
    "required": ["bus", "type", "x_coupling"],
    "properties": {
        "bus": {"type": "integer"},
        "type": {"enum": ["generator", "inverter"]},
        "name": {"type": "string"},
        "x_coupling": {"type": "number", "exclusiveMinimum": 0},
        "tj": {"type": "number", "exclusiveMinimum": 0},
        "h": {"type": "number", "exclusiveMinimum": 0},
        "d": {"type": "number", "minimum": 0},
        "k": {"type": "number", "exclusiveMinimum": 0},
        "z_v": _IMPEDANCE,
    },
    "additionalProperties": False,
}

_MM_NETWORK = {
    "type": "object",
    "properties": {
        "dataset": {"enum": ["wscc9"]},
        "base_kv": {"type": "number", "exclusiveMinimum": 0},
        "base_mva": {"type": "number", "exclusiveMinimum": 0},
        "buses": {"type": "array"},
        "branches": {"type": "array"},
        "loads": {"type": "array"},
    },
    "additionalProperties": False,
    "oneOf": [{"required": ["dataset"]}, {"required": ["buses", "branches"]}],
}

SCHEMA: dict = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["kind", "sources", "network", "fault"],
    "properties": {
        "description": {"type": "string"},
        "kind": {"enum": ["hybrid", "smib", "two_generator", "two_inverter", "multimachine"]},
        "constants": {
            "type": "object",
            "properties": {
                "omega_n": {"type": "number", "exclusiveMinimum": 0},
                "omega_0": {"type": "number", "exclusiveMinimum": 0},
            },
            "additionalProperties": False,
        },
        "sources": {},
        "network": {"type": "object"},
        "fault": {
            "type": "object",
            "required": ["apply"],
            "properties": {
                "apply": {"type": "number", "minimum": 0},
                "clear": {"type": ["number", "null"]},
                "bus": {"type": "integer"},
                "z": _IMPEDANCE,
            },
            "additionalProperties": False,
        },
        "frequency_jump": {"type": "boolean"},
        "include_gen_damping": {"type": "boolean"},
        "solver": {
            "type": "object",
            "properties": {
                "dt": {"type": "number", "exclusiveMinimum": 0},
                "t_end": {"type": "number", "minimum": 0},
                "settle": {
                    "type": "object",
                    "properties": {
                        "tol_delta": {"type": "number", "exclusiveMinimum": 0},
                        "tol_omega": {"type": "number", "exclusiveMinimum": 0},
                        "hold": {"type": "number", "exclusiveMinimum": 0},
                        "max_periods": {"type": "integer", "minimum": 1},
                    },
                    "additionalProperties": False,
                },
            },
            "additionalProperties": False,
        },
        "cct": {
            "type": "object",
            "properties": {
                "t_min": {"type": "number", "minimum": 0},
                "t_max": {"type": "number", "exclusiveMinimum": 0},
                "coarse": {"type": "number", "exclusiveMinimum": 0},
                "refine_tol": {"type": "number", "exclusiveMinimum": 0},
                "horizon": {"type": "number", "exclusiveMinimum": 0},
                "extended_horizon": {"type": "number", "exclusiveMinimum": 0},
                "mathematical": {"type": "boolean"},
            },
            "additionalProperties": False,
        },
        "boundary": {
            "type": "object",
            "properties": {
                "mode": {"enum": ["pre_fault", "post_fault", "fault"]},
                "omega_span": {"type": "number", "exclusiveMinimum": 0},
                "eps": {"type": "number", "exclusiveMinimum": 0},
                "energy_level": {"type": "boolean"},
                "membership_samples": {"type": "integer", "minimum": 0},
                "seed": {"type": "integer"},
            },
            "additionalProperties": False,
        },
        "sweep": {
            "type": "object",
            "required": ["parameter", "metrics"],
            "properties": {
                "parameter": {"type": "string"},
                "values": {"type": "array", "items": {"type": "number"}, "minItems": 1},
                "start": {"type": "number"},
                "stop": {"type": "number"},
                "num": {"type": "integer", "minimum": 1},
                "metrics": {
                    "type": "array",
                    "items": {"enum": ["sep", "uep", "p_m", "d_delta", "d_eq", "existence_margin", "cct", "stable_fraction"]},
                    "minItems": 1,
                },
            },
            "additionalProperties": False,
        },
        "validate": {
            "type": "object",
            "properties": {
                "samples": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer"},
                "t_end": {"type": "number", "exclusiveMinimum": 0},
            },
            "additionalProperties": False,
        },
        "output": {
            "type": "object",
            "properties": {"stride": {"type": "integer", "minimum": 1}},
            "additionalProperties": False,
        },
    },
    "additionalProperties": False,
    "allOf": [
        {
            "if": {"properties": {"kind": {"const": "multimachine"}}},
            "then": {
                "properties": {
                    "sources": {"type": "array", "items": _MM_SOURCE, "minItems": 1},
                    "network": _MM_NETWORK,
                    "fault": {"required": ["apply", "bus"]},
                }
            },
            "else": {
                "properties": {
                    "sources": {
                        "type": "object",
                        "required": ["1", "2"],
                        "properties": {"1": {"oneOf": [_SG, _DROOP]}, "2": {"oneOf": [_SG, _DROOP]}},
                        "additionalProperties": False,
                    },
                    "network": _THREE_BUS,
                }
            },
        }
    ],
}


def _path(err: jsonschema.ValidationError) -> str:
    return ".".join(str(p) for p in err.absolute_path) or "<root>"


def validate(cfg: Mapping) -> None:
    """Raise :class:`ConfigError` naming the offending field."""
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(cfg), key=lambda e: (len(list(e.absolute_path)), e.message))
    if errors:
        err = errors[0]
        if err.validator == "required":
            raise ConfigError(f"{_path(err)}: missing required field: {err.message}")
        raise ConfigError(f"{_path(err)}: {err.message}")


def canonical(cfg: Mapping) -> str:
    return json.dumps(cfg, sort_keys=True, separators=(",", ":"))


def config_hash(cfg: Mapping) -> str:
    return hashlib.sha256(canonical(cfg).encode()).hexdigest()[:16]


def load(path: str | Path) -> dict:
    try:
        cfg = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    validate(cfg)
    return cfg


def shipped(name: str) -> dict:
    """One of the example configurations distributed with the package."""
    ref = resources.files("gfm_stab").joinpath(f"data/{name}.json")
    if not ref.is_file():
        raise ConfigError(f"no shipped config named {name!r}")
    cfg = json.loads(ref.read_text())
    validate(cfg)
    return cfg


SHIPPED = ("prototype-hybrid", "prototype-smib", "prototype-two-gen", "prototype-two-inv", "wscc9-original", "wscc9-hybrid")


# --- building objects ---------------------------------------------------------


def impedance(spec: Mapping, z_base: float) -> ComplexImpedance:
    unit = spec.get("unit", "pu")
    if unit == "ohm":
        return ComplexImpedance.from_ohm(float(spec["re"]), float(spec["im"]), z_base)
    return ComplexImpedance(float(spec["re"]), float(spec["im"]))


def constants(cfg: Mapping) -> GlobalConstants:
    c = cfg.get("constants", {})
    return GlobalConstants(float(c.get("omega_n", 100 * math.pi)), float(c.get("omega_0", 1.0)))


def _source(spec: Mapping):
    if spec["type"] == "sg":
        return SgParams(float(spec["tj"]), float(spec["d"]), float(spec["p_star"]), float(spec["e"]))
    return DroopParams(float(spec["k"]), float(spec["p_star"]), float(spec["e"]))


def three_bus_network(cfg: Mapping) -> ThreeBusNetwork:
    n = cfg["network"]
    base = n.get("base", {})
    kv, mva = float(base.get("voltage_kv", 110.0)), float(base.get("power_mva", 100.0))
    zb = kv * kv / mva
    return ThreeBusNetwork(
        z1=impedance(n["z1"], zb),
        z2_base=impedance(n["z2"], zb),
        z_load=impedance(n["z_load"], zb),
        z_fault=impedance(n["z_fault"], zb),
        z_v=impedance(n["z_v"], zb) if "z_v" in n else ZERO,
        z_v1=impedance(n["z_v1"], zb) if "z_v1" in n else ZERO,
        voltage_kv=kv,
        power_mva=mva,
    )


def grid_case(cfg: Mapping) -> GridCase:
    n = cfg["network"]
    if "dataset" in n:
        return wscc9_case()
    return load_case(n)


def build_system(cfg: Mapping):
    """TwoSourceSystem or MultiMachineSystem described by ``cfg``."""
    kind = cfg["kind"]
    g = constants(cfg)
    try:
        if kind == "multimachine":
            case = grid_case(cfg)
            zb = float(cfg["network"].get("base_kv", 230.0)) ** 2 / case.base_mva
            specs = []
            for s in cfg["sources"]:
                tj = float(s["tj"]) if "tj" in s else 2.0 * float(s.get("h", 0.0))
                if s["type"] == "generator" and not tj > 0:
                    raise ConfigError(f"sources: generator at bus {s['bus']} needs tj or h")
                if s["type"] == "inverter" and "k" not in s:
                    raise ConfigError(f"sources: inverter at bus {s['bus']} needs k")
                specs.append(
                    SourceSpec(
                        int(s["bus"]), s["type"], ComplexImpedance(0.0, float(s["x_coupling"])),
                        tj=tj, d=float(s.get("d", 0.0)), k=float(s.get("k", 0.0)),
                        z_v=impedance(s["z_v"], zb) if "z_v" in s else ZERO, name=s.get("name", ""),
                    )
                )
            f = cfg["fault"]
            z_fault = impedance(f.get("z", {"re": 1e-6, "im": 0.0}), zb)
            return build_multimachine(case, specs, int(f["bus"]), z_fault, g, cfg.get("include_gen_damping", True))
        src = cfg["sources"]
        return TwoSourceSystem(
            SystemKind(kind), three_bus_network(cfg), _source(src["1"]), _source(src["2"]), g,
            frequency_jump=cfg.get("frequency_jump", True),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"inconsistent scenario: {exc}") from None


def settle_criteria(cfg: Mapping) -> SettleCriteria:
    s = cfg.get("solver", {}).get("settle", {})
    return SettleCriteria(**{k: s[k] for k in ("tol_delta", "tol_omega", "hold", "max_periods") if k in s})


def events(cfg: Mapping) -> EventSchedule | None:
    f = cfg["fault"]
    try:
        return EventSchedule(float(f["apply"]), None if f.get("clear") is None else float(f["clear"]))
    except ValueError as exc:
        raise ConfigError(f"fault: {exc}") from None


def integrator(cfg: Mapping) -> IntegratorConfig:
    s = cfg.get("solver", {})
    dt = float(s.get("dt", 1e-4))
    f = cfg["fault"]
    default_end = (f["clear"] if f.get("clear") is not None else f["apply"]) + 20.0
    t_end = float(s.get("t_end", default_end))
    stride = int(cfg.get("output", {}).get("stride", 1))
    try:
        return IntegratorConfig(dt=dt, t_end=round(t_end / dt) * dt, record_stride=stride)
    except ValueError as exc:
        raise ConfigError(f"solver: {exc}") from None


def fault_scenario(cfg: Mapping, system=None) -> FaultScenario:
    c = cfg.get("cct", {})
    s = cfg.get("solver", {})
    return FaultScenario(
        system if system is not None else build_system(cfg),
        fault_apply=float(cfg["fault"]["apply"]),
        t_min=float(c.get("t_min", 0.0)),
        t_max=float(c.get("t_max", 1.5)),
        dt=float(s.get("dt", 1e-4)),
        horizon=float(c.get("horizon", 20.0)),
        extended_horizon=float(c.get("extended_horizon", 60.0)),
        settle=settle_criteria(cfg),
    )


def set_parameter(cfg: Mapping, path: str, value: float) -> dict:
    """Copy of ``cfg`` with a dotted ``path`` set to ``value``.

    Two virtual leaves address an impedance in polar form:
    ``<impedance>.angle_deg`` and ``<impedance>.magnitude`` (the other polar
    component is kept).
    """
    out = copy.deepcopy(dict(cfg))
    keys = path.split(".")
    node: Any = out
    for k in keys[:-1]:
        if isinstance(node, list):
            node = node[int(k)]
        elif k in node:
            node = node[k]
        else:
            raise ConfigError(f"sweep parameter {path!r}: no field {k!r}")
    leaf = keys[-1]
    if leaf in ("angle_deg", "magnitude"):
        z = complex(node["re"], node["im"])
        mag, ang = abs(z), math.atan2(z.imag, z.real)
        if leaf == "angle_deg":
            ang = math.radians(value)
        else:
            mag = value
        node["re"], node["im"] = mag * math.cos(ang), mag * math.sin(ang)
    elif isinstance(node, list):
        node[int(leaf)] = value
    elif leaf in node:
        node[leaf] = value
    else:
        raise ConfigError(f"sweep parameter {path!r}: no field {leaf!r}")
    return out


def sweep_values(spec: Mapping) -> list[float]:
    if "values" in spec:
        return [float(v) for v in spec["values"]]
    if not all(k in spec for k in ("start", "stop", "num")):
        raise ConfigError("sweep: give 'values' or all of 'start', 'stop', 'num'")
    n = int(spec["num"])
    if n == 1:
        return [float(spec["start"])]
    step = (spec["stop"] - spec["start"]) / (n - 1)
    return [float(spec["start"] + i * step) for i in range(n)]


@dataclass(frozen=True)
class Echo:
    """A validated config and its hash, as printed in output headers."""

    cfg: dict

    @property
    def hash(self) -> str:
        return config_hash(self.cfg)

    def text(self) -> str:
        return json.dumps(self.cfg, sort_keys=True, indent=2)
