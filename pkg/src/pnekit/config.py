"""Run configurations: JSON loading, schema validation and defaults."""

import json
from copy import deepcopy
from importlib import resources

import jsonschema

from .errors import ConfigError

__all__ = ["SCHEMA_VERSION", "load_schema", "validate_config", "load_config", "validate_surface_json"]

SCHEMA_VERSION = 1

DEFAULTS = {
    "seed": 0,
    "dec": {"tolerance": 0.0},
    "find_pne": {
        "method": "graph",
        "orientation": 1,
        "initial_radius": 1.0,
        "initial_height": 0.0,
        "center": [0.0, 0.0, 0.0],
        "surface_counts": [64, 128],
        "refine": True,
        "graph": {},
        "jang": {},
    },
    "stability": {"max_iter": 400},
    "topology": {"factor": 10.0, "floor": 1e-10},
}


def load_schema(name="run_config"):
    text = resources.files("pnekit").joinpath(f"schemas/{name}.schema.json").read_text()
    return json.loads(text)


def _validate(obj, schema):
    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(obj), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {where}: {e.message}")


def _merge(base, over):
    out = deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = deepcopy(v)
    return out


def validate_config(cfg, trace_convention=None, mu_convention=None):
    """Validate a config dict and fill in defaults.

    Command-line convention flags override the config keys, which in turn
    override the data description.  The returned dict is a fresh copy.
    """
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    _validate(cfg, load_schema())
    out = _merge(DEFAULTS, cfg)
    out["schema_version"] = SCHEMA_VERSION
    data = out["data"]
    for key, flag in (("trace_convention", trace_convention), ("mu_convention", mu_convention)):
        value = flag or out.get(key) or data.get(key)
        if value is not None:
            out[key] = value
    # seed a perturbation preset from the run seed unless it carries its own
    if data["preset"] == "polynomial-perturbation":
        data.setdefault("seed", out["seed"])
    return out


def load_config(path, trace_convention=None, mu_convention=None):
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return validate_config(cfg, trace_convention, mu_convention)


def validate_surface_json(obj):
    _validate(obj, load_schema("surface"))
    return obj
