"""Run configuration: TOML files checked against a shipped JSON schema.

Every default is written back into the parsed configuration, so the run
manifest records the complete set of knobs that produced a result.
"""
from __future__ import annotations

import copy
import json
import sys
from dataclasses import dataclass
from importlib import resources
from typing import Any

import jsonschema

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

__all__ = ["ConfigError", "RunConfig", "load_schema", "parse_config", "load_config"]


class ConfigError(ValueError):
    """Invalid configuration; ``path`` is the dotted location of the problem."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path or '<root>'}: {message}")
        self.path = path
        self.message = message


def load_schema(name: str) -> dict:
    text = resources.files("slowfast").joinpath("data", name).read_text()
    return json.loads(text)


def _fill_defaults(schema: dict, inst: Any) -> Any:
    if not isinstance(inst, dict) or schema.get("type") != "object":
        return inst
    for key, sub in schema.get("properties", {}).items():
        if key not in inst and "default" in sub:
            inst[key] = copy.deepcopy(sub["default"])
        if key in inst:
            inst[key] = _fill_defaults(sub, inst[key])
    return inst


def _dotted(err: jsonschema.ValidationError) -> str:
    parts = [str(p) for p in err.absolute_path]
    if err.validator == "required":
        missing = err.message.split("'")[1] if "'" in err.message else ""
        parts.append(missing)
    if err.validator == "additionalProperties" and "'" in err.message:
        parts.append(err.message.split("'")[1])
    return ".".join(p for p in parts if p)


@dataclass(frozen=True)
class RunConfig:
    """Validated configuration with all defaults filled in."""

    data: dict

    @property
    def kind(self) -> str:
        return self.data["model"]["kind"]

    @property
    def params(self) -> dict:
        return self.data["model"][self.kind]

    @property
    def window(self) -> tuple[float, float]:
        lo, hi = self.data["scan"]["window"]
        return float(lo), float(hi)

    @property
    def n_grid(self) -> int:
        return int(self.data["scan"]["n_grid"])

    @property
    def lambda_form(self) -> str:
        return self.data["scan"]["lambda_form"]

    @property
    def tolerances(self) -> dict:
        return self.data["tolerances"]

    @property
    def eps(self) -> tuple[float, ...]:
        return tuple(float(e) for e in self.data["verify"]["eps"])

    @property
    def table(self) -> dict:
        return self.data["table"]

    @property
    def workers(self) -> int | None:
        return self.data["run"]["workers"]

    def to_dict(self) -> dict:
        return copy.deepcopy(self.data)


def parse_config(raw: dict) -> RunConfig:
    schema = load_schema("config.schema.json")
    data = copy.deepcopy(raw)
    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(data), key=lambda e: (list(e.absolute_path), e.message))
    if errors:
        err = jsonschema.exceptions.best_match(errors)
        raise ConfigError(_dotted(err), err.message)
    kind = data["model"]["kind"]
    data["model"].setdefault(kind, {})
    _fill_defaults(schema, data)
    lo, hi = data["scan"]["window"]
    if not lo < hi:
        raise ConfigError("scan.window", f"window must satisfy lo < hi, got {[lo, hi]!r}")
    eps = data["verify"]["eps"]
    if any(e2 >= e1 for e1, e2 in zip(eps, eps[1:])):
        raise ConfigError("verify.eps", "epsilon values must be strictly decreasing")
    return RunConfig(data)


def load_config(path: str) -> RunConfig:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError("", f"config file {path!r} not found") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("", f"TOML parse error: {exc}") from None
    return parse_config(raw)
