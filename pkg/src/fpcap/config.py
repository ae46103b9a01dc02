"""Run configuration: JSON schema validation and model construction."""
from __future__ import annotations

import copy
import hashlib
import json
from importlib import resources

import jsonschema

from . import model as M

DEFAULTS = {
    "grid": {"h_factor": 8, "scheme": "hybrid"},
    "approx": {},
    "mc": {"n_paths": 2000, "seed": 0},
    "probes": {"lo": -2.0, "hi": 2.0, "n": 21, "tol": 1e-6},
    "outputs": "out",
    "formats": ["json", "csv"],
}


class ConfigError(ValueError):
    """Schema violation; ``pointer`` is the JSON pointer of the offending key."""

    def __init__(self, message: str, pointer: str = ""):
        super().__init__(f"{pointer or '/'}: {message}")
        self.pointer = pointer


def schema() -> dict:
    return json.loads(resources.files("fpcap").joinpath("schemas/config.json").read_text())


def validate(cfg: dict) -> dict:
    """Validate against the schema and fill defaults (returns a new dict)."""
    validator = jsonschema.Draft202012Validator(schema())
    err = jsonschema.exceptions.best_match(validator.iter_errors(cfg))
    if err is not None:
        pointer = "/" + "/".join(str(p) for p in err.absolute_path)
        raise ConfigError(err.message, pointer)
    out = copy.deepcopy(cfg)
    for key, val in DEFAULTS.items():
        if isinstance(val, dict):
            merged = dict(val)
            merged.update(out.get(key, {}))
            out[key] = merged
        else:
            out.setdefault(key, copy.deepcopy(val))
    return out


def load(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        try:
            cfg = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON ({exc})") from exc
    return validate(cfg)


def config_hash(cfg: dict) -> str:
    """SHA-256 of the canonical JSON encoding."""
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def build_model(block: dict) -> M.DiffusionModel:
    """Construct a builtin model from its config block."""
    kind = block["builtin"]
    a = block.get("A")
    gamma = float(block.get("gamma", 0.0))
    pert = block.get("perturbation", "rot")
    if kind == "double_well_1d":
        return M.double_well_1d(A=a)
    if kind == "double_well_2d_rot":
        return M.double_well_2d(gamma, ky=float(block.get("ky", 1.0)), perturbation=pert, A=a)
    if kind == "quadratic":
        return M.quadratic(int(block.get("dim", 1)), A=a)
    if kind == "underdamped":
        u = block.get("U_terms")
        return M.underdamped([tuple(t) for t in u] if u else None, A=a)
    if "terms" not in block or "dim" not in block:
        raise ConfigError("custom_polynomial needs 'terms' and 'dim'", "/model")
    return M.custom_polynomial(block["terms"], int(block["dim"]), gamma, pert, A=a)
