"""Run configuration: schema validation and resolution into model objects."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any, Optional

import jsonschema

from .rates import (
    DERIVED_RATE_KEYS,
    V_SCALING,
    AtomEnsembleParams,
    InvalidGeometryError,
    ModelRates,
    NetworkGeometry,
    apply_v_scaling,
    derive_rates,
    preset,
    preset_geometry,
)


class ConfigError(ValueError):
    pass


_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_unit = {"type": "number", "minimum": 0, "exclusiveMaximum": 1}
_pair = {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 2, "maxItems": 2}


def _obj(props: dict, required=()) -> dict:
    return {"type": "object", "additionalProperties": False, "properties": props, "required": list(required)}


_RATE_KEYS = [f.name for f in fields(ModelRates)]

SCHEMA = _obj({
    "preset": {"enum": ["fig2", "fig3"]},
    "geometry": _obj({
        "L1": _pos, "L2": _pos, "Lf": _pos,
        "R1": _unit, "R2": _unit, "R3": _unit, "R4": _unit,
        "alpha1": _unit, "alpha2": _unit, "alphaf": _unit, "bs_tap": _unit,
        "n_fiber": {"type": "number", "minimum": 1}, "wavelength": _pos,
    }),
    "rates_override": _obj({k: {"type": "number", "minimum": 0}
                            for k in _RATE_KEYS + list(DERIVED_RATE_KEYS)}),
    "atoms": _obj({"g_eff": _pair, "g0": _pair, "n_eff": _pair, "n_sat": _pair,
                   "empty": {"type": "boolean"}}),
    "v_scaling": {"oneOf": [_pos, {"const": "preset"}]},
    "sweep": _obj({"delta_min": _num, "delta_max": _num,
                   "n_points": {"type": "integer", "minimum": 2}}),
    "drive": _obj({"port": {"enum": ["A", "C"]}, "amplitude": _pos}),
    "output": _obj({
        "csv": {"type": "string"},
        "normalize": {"enum": ["none", "empty_peak"]},
        "plot_script": {"type": "string"},
        "figure": {"type": "string"},
        "plot_scale": _pos,
        "c_detection": {"enum": ["tap", "reflection"]},
    }),
    "saturation": _obj({
        "A_geom": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "powers_w": {"type": "array", "items": _pos, "minItems": 1},
        "power_range": _obj({"min": _pos, "max": _pos, "n": {"type": "integer", "minimum": 1}},
                            required=("min", "max", "n")),
        "delta_span": _pos,
        "n_points": {"type": "integer", "minimum": 3},
        "wavelength": _pos,
    }),
    "solver": _obj({"tol": _pos, "max_iter": {"type": "integer", "minimum": 1}}),
    "seed": {"type": "integer"},
})


def _path(error: jsonschema.ValidationError) -> str:
    return ".".join(str(p) for p in error.absolute_path) or "<root>"


def validate(document: dict) -> None:
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(document), key=lambda e: list(e.absolute_path))
    if errors:
        raise ConfigError("; ".join(f"{_path(e)}: {e.message}" for e in errors))


def load(path) -> dict:
    try:
        document = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    validate(document)
    return document


@dataclass(frozen=True)
class ResolvedModel:
    geometry: Optional[NetworkGeometry]
    rates: ModelRates
    atoms: AtomEnsembleParams
    preset: Optional[str]
    v_scaling: float


def _override_rates(rates: ModelRates, override: dict) -> ModelRates:
    base = {k: v for k, v in override.items() if k in _RATE_KEYS}
    out = replace(rates, **base)
    for key in DERIVED_RATE_KEYS:
        if key in override and not math.isclose(override[key], getattr(out, key), rel_tol=1e-12, abs_tol=1e-15):
            raise ConfigError(f"rates_override.{key}: {override[key]} inconsistent with its components "
                              f"({getattr(out, key)})")
    return out


def resolve(document: dict) -> ResolvedModel:
    """Turn a validated document into geometry, rates and ensemble parameters.

    Order of precedence: preset tables, then geometry-derived rates (if a
    geometry section is present), then ``rates_override``, then ``v_scaling``.
    """
    validate(document)
    name = document.get("preset")
    geometry = None
    if name is not None:
        geometry, rates, atoms = preset(name)
    else:
        rates, atoms = None, AtomEnsembleParams()

    try:
        if "geometry" in document:
            base = preset_geometry(name).__dict__ if name else {}
            merged = {**base, **document["geometry"]}
            missing = [k for k in ("L1", "L2", "Lf", "R1", "R2", "R3", "R4") if k not in merged]
            if missing:
                raise ConfigError(f"geometry: missing {', '.join(missing)} (no preset to inherit from)")
            geometry = NetworkGeometry(**merged)
            override = document.get("rates_override", {})
            gpar = override.get("gamma_par", rates.gamma_par if rates else 5.2)
            glas = override.get("gamma_las", rates.gamma_las if rates else 0.36)
            rates = derive_rates(geometry, gpar, glas)

        override = document.get("rates_override", {})
        if rates is None:
            missing = [k for k in _RATE_KEYS if k not in override]
            if missing:
                raise ConfigError(f"rates_override: missing {', '.join(missing)} (no preset or geometry)")
            rates = ModelRates(**{k: override[k] for k in _RATE_KEYS})
        rates = _override_rates(rates, override)

        if "atoms" in document:
            atoms = _resolve_atoms(document["atoms"], atoms)

        scale = document.get("v_scaling", 1.0)
        if scale == "preset":
            if name is None:
                raise ConfigError("v_scaling: 'preset' needs a preset name")
            scale = V_SCALING[name]
        rates = apply_v_scaling(rates, scale)
    except InvalidGeometryError as exc:
        raise ConfigError(str(exc)) from exc
    return ResolvedModel(geometry, rates, atoms, name, scale)


def _resolve_atoms(section: dict, atoms: AtomEnsembleParams) -> AtomEnsembleParams:
    if section.get("empty"):
        return AtomEnsembleParams(n_eff_1=atoms.n_eff_1, n_eff_2=atoms.n_eff_2,
                                  n_sat_1=atoms.n_sat_1, n_sat_2=atoms.n_sat_2)
    kw: dict[str, Any] = {}
    for key, attr in (("n_eff", "n_eff"), ("n_sat", "n_sat"), ("g0", "g0")):
        if key in section:
            kw[f"{attr}_1"], kw[f"{attr}_2"] = section[key]
    if "g_eff" in section:
        kw["g_eff_1"], kw["g_eff_2"] = section["g_eff"]
        if "g0" not in section:
            kw.update(g0_1=None, g0_2=None)
    elif "g0" in section:
        n1 = kw.get("n_eff_1", atoms.n_eff_1)
        n2 = kw.get("n_eff_2", atoms.n_eff_2)
        if n1 is None or n2 is None:
            raise ConfigError("atoms: g0 without g_eff needs n_eff")
        kw["g_eff_1"] = kw["g0_1"] * math.sqrt(n1)
        kw["g_eff_2"] = kw["g0_2"] * math.sqrt(n2)
    return replace(atoms, **kw)
