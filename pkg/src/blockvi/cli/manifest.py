"""Experiment manifests: JSON schema, loading, and per-kind defaults.

A manifest plus its seed fully determines one run: data generation, problem
assembly, solver configuration, activation schedule, and output locations.
Relative output directories resolve against the BLOCKVI_OUTPUT_ROOT
environment variable when set, else against the manifest's own directory.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import jsonschema

from ..errors import ManifestError
from .experiments import EXPERIMENT_KINDS

__all__ = ["ExperimentManifest", "MANIFEST_SCHEMA", "load_manifest",
           "default_manifest", "resolve_output_dir", "OUTPUT_ROOT_ENV"]

OUTPUT_ROOT_ENV = "BLOCKVI_OUTPUT_ROOT"

MANIFEST_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["kind", "seed", "solver", "schedule", "output_dir"],
    "additionalProperties": False,
    "properties": {
        "kind": {"enum": list(EXPERIMENT_KINDS)},
        "seed": {"type": "integer", "minimum": 0},
        "dimensions": {"type": "object",
                       "additionalProperties": {"type": "integer", "minimum": 1}},
        "noise": {"type": "object", "additionalProperties": {"type": "number"}},
        "operators": {"type": "object"},
        "solver": {
            "type": "object",
            "required": ["gamma", "max_iters", "tol"],
            "additionalProperties": False,
            "properties": {
                "gamma": {"type": "number"},
                "max_iters": {"type": "integer", "minimum": 1},
                "tol": {"type": "number", "minimum": 0},
                "trace_every": {"type": "integer", "minimum": 1},
                "t_init_policy": {"enum": ["copy_x0", "one_step"]},
                "snapshots": {"type": "boolean"},
                "x0": {"enum": ["zeros"]},
            },
        },
        "schedule": {
            "type": "object",
            "required": ["kind"],
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["full", "cyclic_partition", "mod_skip",
                                  "explicit"]},
                "blocks": {"type": "integer", "minimum": 1},
                "always_active": {"type": "array",
                                  "items": {"type": "integer", "minimum": 0}},
                "expensive": {"type": "array",
                              "items": {"type": "integer", "minimum": 0}},
                "period": {"type": "integer", "minimum": 1},
                "sets": {"type": "array",
                         "items": {"type": "array",
                                   "items": {"type": "integer", "minimum": 0}}},
            },
        },
        "output_dir": {"type": "string", "minLength": 1},
    },
}


@dataclass
class ExperimentManifest:
    kind: str
    seed: int
    solver: dict
    schedule: dict
    output_dir: str
    dimensions: dict = field(default_factory=dict)
    noise: dict = field(default_factory=dict)
    operators: dict = field(default_factory=dict)
    source_path: Optional[Path] = None

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "seed": self.seed, "solver": self.solver,
               "schedule": self.schedule, "output_dir": self.output_dir}
        if self.dimensions:
            out["dimensions"] = self.dimensions
        if self.noise:
            out["noise"] = self.noise
        if self.operators:
            out["operators"] = self.operators
        return out


def _validate(payload: dict, origin: str) -> None:
    try:
        jsonschema.validate(payload, MANIFEST_SCHEMA)
    except jsonschema.ValidationError as exc:
        path = "$" + "".join(f"[{p!r}]" for p in exc.absolute_path)
        raise ManifestError(f"{origin}: {path}: {exc.message}") from exc
    for name, value in (payload.get("noise") or {}).items():
        if not math.isfinite(value):
            raise ManifestError(f"{origin}: $['noise'][{name!r}]: must be finite")


def load_manifest(path) -> ExperimentManifest:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ManifestError(f"{path}: {exc}") from exc
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ManifestError(
            f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(payload, dict):
        raise ManifestError(f"{path}: manifest must be a JSON object")
    _validate(payload, str(path))
    return ExperimentManifest(
        kind=payload["kind"],
        seed=payload["seed"],
        solver=dict(payload["solver"]),
        schedule=dict(payload["schedule"]),
        output_dir=payload["output_dir"],
        dimensions=dict(payload.get("dimensions", {})),
        noise=dict(payload.get("noise", {})),
        operators=dict(payload.get("operators", {})),
        source_path=path,
    )


def resolve_output_dir(manifest: ExperimentManifest) -> Path:
    out = Path(manifest.output_dir)
    if out.is_absolute():
        return out
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root:
        return Path(root) / out
    base = manifest.source_path.parent if manifest.source_path else Path.cwd()
    return base / out


_DEFAULTS = {
    "image_recovery": {
        "dimensions": {"rows": 32, "cols": 32},
        "noise": {"blur_snr_db": 24.0, "phase_snr_db": 49.0},
        "operators": {"kernel_size": 15, "kernel_sigma": 3.5, "clip_max": 60.0},
        "solver": {"gamma": 1.9, "max_iters": 80000, "tol": 1e-6,
                   "trace_every": 100, "snapshots": False},
        "schedule": {"kind": "full"},
    },
    "signal_recovery": {
        "dimensions": {"n": 128, "dictionary_rows": 150},
        "noise": {"observation_snr_db": -2.3, "dictionary_snr_db": 17.8},
        "operators": {"block_count": 16, "fd_bound": 0.025,
                      "root_threshold": 0.05},
        "solver": {"gamma": 1.9, "max_iters": 90000, "tol": 1e-6,
                   "trace_every": 100, "snapshots": True},
        "schedule": {"kind": "cyclic_partition", "blocks": 4,
                     "always_active": [0, 1]},
    },
    "sparse_image": {
        "dimensions": {"rows": 32, "cols": 32},
        "noise": {"blur_snr_db": 17.6},
        "operators": {"kernel_size": 7, "svd_threshold_rel": 0.05,
                      "sparsity_radius": 1.5, "log_penalty": False},
        "solver": {"gamma": 1.0, "max_iters": 400000, "tol": 1e-6,
                   "trace_every": 200, "snapshots": False},
        "schedule": {"kind": "mod_skip", "expensive": [0], "period": 5},
    },
    "source_separation": {
        "dimensions": {"rows": 48, "cols": 48},
        "noise": {},
        "operators": {"svd_threshold_rel": 0.08,
                      "sparsity_radius_direct": 10.0,
                      "sparsity_radius_transform": 45.0},
        "solver": {"gamma": 1.0, "max_iters": 40000, "tol": 1e-6,
                   "trace_every": 100, "snapshots": False},
        "schedule": {"kind": "mod_skip", "expensive": [0], "period": 5},
    },
    "custom": {
        "dimensions": {},
        "noise": {},
        "operators": {},
        "solver": {"gamma": 1.9, "max_iters": 20000, "tol": 1e-8,
                   "trace_every": 25, "snapshots": False},
        "schedule": {"kind": "full"},
    },
}


def default_manifest(kind: str, seed: int, output_dir: str = "results") -> dict:
    if kind not in _DEFAULTS:
        raise ManifestError(f"no defaults for experiment kind {kind!r}")
    spec = _DEFAULTS[kind]
    payload = {
        "kind": kind,
        "seed": int(seed),
        "dimensions": dict(spec["dimensions"]),
        "noise": dict(spec["noise"]),
        "operators": dict(spec["operators"]),
        "solver": dict(spec["solver"]),
        "schedule": dict(spec["schedule"]),
        "output_dir": output_dir,
    }
    _validate(payload, f"<defaults:{kind}>")
    return payload
