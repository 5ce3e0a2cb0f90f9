"""Experiment configuration: JSON schema (version 1), dotted-path overrides,
and validation that names the offending field.

A config document has exactly one experiment block:

    {
      "schema_version": 1,
      "model":      {"type": "decoupled", "h": [...], "sigma": [...],
                     "rho": [...], "eta": 0.1}
                 or {"type": "full", "H": [[...]], "sigma_g": [[...]],
                     "sigma_h": [[...]], "w_star": [...], "eta": 0.1},
      "simulation": {"step": ..., "horizon": ..., "n_paths": ...,
                     "base_seed": ..., "x0": [...], "record_stride": 1},
      "experiment": {"name": "simulate" | "stationary" | "exit" | "couple" |
                     "sandwich" | "sweep" | "sgdlab", ...options},
      "output":     {"directory": "out", "formats": ["csv", "json"]}
    }

All numeric fields are validated against the owning module's type invariants
before any computation starts; invariant violations raise ConfigError with a
dotted field path (e.g. "model.eta must be > 0").
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from typing import Any

import numpy as np

from .errors import ParameterError
from .params import DecoupledParams, FullParams, Params
from .simulate import SimConfig

SCHEMA_VERSION = 1
EXPERIMENTS = ("simulate", "stationary", "exit", "couple", "sandwich", "sweep", "sgdlab")


class ConfigError(ParameterError):
    """Config failed schema or invariant validation."""


def load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as e:
        # e already carries line/column
        raise ConfigError(f"config is not valid JSON: {e}")


def apply_overrides(doc: dict, overrides: list[str]) -> dict:
    """Apply KEY=VALUE overrides with dotted-path keys; values parse as JSON
    with plain-string fallback."""
    doc = copy.deepcopy(doc)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not KEY=VALUE")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = doc
        parts = key.split(".")
        for p in parts[:-1]:
            if not isinstance(node, dict):
                raise ConfigError(f"override path {key!r} does not address an object")
            node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override path {key!r} does not address an object")
        node[parts[-1]] = value
    return doc


def _require(doc: dict, key: str, path: str) -> Any:
    if key not in doc:
        raise ConfigError(f"{path}{key} is required")
    return doc[key]


def build_model(doc: dict) -> Params:
    block = _require(doc, "model", "")
    if not isinstance(block, dict):
        raise ConfigError("model must be an object")
    kind = _require(block, "type", "model.")
    try:
        if kind == "decoupled":
            return DecoupledParams(
                h=_require(block, "h", "model."),
                sigma=_require(block, "sigma", "model."),
                rho=_require(block, "rho", "model."),
                eta=_require(block, "eta", "model."),
            )
        if kind == "full":
            return FullParams(
                H=_require(block, "H", "model."),
                sigma_g=_require(block, "sigma_g", "model."),
                sigma_h=_require(block, "sigma_h", "model."),
                w_star=_require(block, "w_star", "model."),
                eta=_require(block, "eta", "model."),
            )
    except ConfigError:
        raise
    except (ParameterError, TypeError, ValueError) as e:
        raise ConfigError(f"model.{e}")
    raise ConfigError(f"model.type must be 'decoupled' or 'full', got {kind!r}")


def build_sim_config(doc: dict, dim: int) -> SimConfig:
    block = _require(doc, "simulation", "")
    if not isinstance(block, dict):
        raise ConfigError("simulation must be an object")
    try:
        return SimConfig(
            step=_require(block, "step", "simulation."),
            horizon=_require(block, "horizon", "simulation."),
            n_paths=_require(block, "n_paths", "simulation."),
            base_seed=int(block.get("base_seed", 0)),
            x0=np.asarray(block.get("x0", np.zeros(dim)), dtype=float),
            record_stride=int(block.get("record_stride", 1)),
        )
    except ConfigError:
        raise
    except (ParameterError, TypeError, ValueError) as e:
        raise ConfigError(f"simulation.{e}")


@dataclass(frozen=True)
class ResolvedConfig:
    doc: dict
    params: Params
    sim: SimConfig
    experiment: dict
    out_dir: str
    formats: tuple

    def echo_dict(self) -> dict:
        """Fully resolved document (defaults and seeds included) for the
        reproducibility echo written next to every run's artifacts."""
        model = self.doc["model"]
        return {
            "schema_version": SCHEMA_VERSION,
            "model": model,
            "simulation": self.sim.to_dict(),
            "experiment": self.experiment,
            "output": {"directory": self.out_dir, "formats": list(self.formats)},
        }


def resolve(doc: dict, out_override: str | None = None) -> ResolvedConfig:
    version = doc.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"schema_version must be {SCHEMA_VERSION}, got {version!r}")
    params = build_model(doc)
    sim = build_sim_config(doc, params.dim)
    exp = _require(doc, "experiment", "")
    if not isinstance(exp, dict):
        raise ConfigError("experiment must be an object")
    name = _require(exp, "name", "experiment.")
    if name not in EXPERIMENTS:
        raise ConfigError(
            f"experiment.name must be one of {', '.join(EXPERIMENTS)}; got {name!r}"
        )
    output = doc.get("output", {})
    if not isinstance(output, dict):
        raise ConfigError("output must be an object")
    out_dir = out_override or output.get("directory", "out")
    formats = tuple(output.get("formats", ["csv", "json"]))
    exp = dict(exp)
    return ResolvedConfig(doc=doc, params=params, sim=sim, experiment=exp,
                          out_dir=str(out_dir), formats=formats)
