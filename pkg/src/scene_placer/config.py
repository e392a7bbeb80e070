"""Pipeline configuration: one JSON file, schema-validated, flag-overridable."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import jsonschema

from scene_placer.generators.losses import LossWeights
from scene_placer.optimizer import EnergyWeights
from scene_placer.placement import FeasibilityConfig

SEED_ENV_VAR = "SCENE_PLACER_SEED"

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "seed": {"type": "integer"},
        "output_dir": {"type": "string"},
        "assets_dir": {"type": "string"},
        "scene_mesh": {"type": "string"},
        "scene_labels": {"type": "string"},
        "feasibility": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "grid_spacing": {"type": "number", "exclusiveMinimum": 0},
                "contact_prob_threshold": {"type": "number",
                                           "minimum": 0, "maximum": 1},
                "contact_dist_threshold": {"type": "number",
                                           "exclusiveMinimum": 0},
                "min_contact_count": {"type": "integer", "minimum": 0},
                "clearance": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "energy": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "lambda_wc": {"type": "number", "minimum": 0},
                "lambda_vp": {"type": "number", "minimum": 0},
                "lambda_r": {"type": "number", "minimum": 0},
                "gm_sigma": {"type": "number", "exclusiveMinimum": 0},
                "learning_rate": {"type": "number", "exclusiveMinimum": 0},
                "max_iters": {"type": "integer", "minimum": 0},
            },
        },
        "loss": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "lambda_m": {"type": "number", "minimum": 0},
                "lambda_v": {"type": "number", "minimum": 0},
                "lambda_j": {"type": "number", "minimum": 0},
                "lambda_kl_pose": {"type": "number", "minimum": 0},
                "lambda_rec": {"type": "number", "minimum": 0},
                "lambda_kl_contact": {"type": "number", "minimum": 0},
            },
        },
        "training": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "pose_steps": {"type": "integer", "minimum": 1},
                "contact_steps": {"type": "integer", "minimum": 1},
                "batch_size": {"type": "integer", "minimum": 1},
                "learning_rate": {"type": "number", "exclusiveMinimum": 0},
                "kl_warmup_steps": {"type": "integer", "minimum": 0},
                "pose_corpus_per_action": {"type": "integer", "minimum": 1},
                "contact_corpus_per_combo": {"type": "integer", "minimum": 1},
            },
        },
        "pipeline": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "enable_pft": {"type": "boolean"},
                "enable_opt": {"type": "boolean"},
                "optimize_root": {"type": "boolean"},
                "object_point_count": {"type": "integer", "minimum": 1},
                "jobs": {"type": "integer", "minimum": 1},
            },
        },
        "sdf": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "voxel_size": {"type": "number", "exclusiveMinimum": 0},
                "padding": {"type": "number", "minimum": 0},
                "sign_mode": {"enum": ["winding", "pseudonormal"]},
            },
        },
    },
}


@dataclass
class TrainingSettings:
    pose_steps: int = 1200
    contact_steps: int = 700
    batch_size: int = 32
    learning_rate: float = 1e-3
    kl_warmup_steps: int = 500
    pose_corpus_per_action: int = 60
    contact_corpus_per_combo: int = 50


@dataclass
class PipelineSettings:
    enable_pft: bool = True
    enable_opt: bool = True
    optimize_root: bool = True
    object_point_count: int = 2048
    jobs: int = 0  # 0 = available cores


@dataclass
class SdfSettings:
    voxel_size: float = 0.05
    padding: float = 0.2
    sign_mode: str = "winding"


@dataclass
class PipelineConfig:
    """Everything the command-line surface needs, reproducibly."""

    seed: int = 0
    output_dir: str = "out"
    assets_dir: str = "assets"
    scene_mesh: str | None = None
    scene_labels: str | None = None
    feasibility: FeasibilityConfig = field(default_factory=FeasibilityConfig)
    energy: EnergyWeights = field(default_factory=EnergyWeights)
    loss: LossWeights = field(default_factory=LossWeights)
    training: TrainingSettings = field(default_factory=TrainingSettings)
    pipeline: PipelineSettings = field(default_factory=PipelineSettings)
    sdf: SdfSettings = field(default_factory=SdfSettings)

    def to_dict(self) -> dict:
        out = {
            "seed": self.seed,
            "output_dir": self.output_dir,
            "assets_dir": self.assets_dir,
            "feasibility": asdict(self.feasibility),
            "energy": asdict(self.energy),
            "loss": asdict(self.loss),
            "training": asdict(self.training),
            "pipeline": asdict(self.pipeline),
            "sdf": asdict(self.sdf),
        }
        if self.scene_mesh:
            out["scene_mesh"] = self.scene_mesh
        if self.scene_labels:
            out["scene_labels"] = self.scene_labels
        return out

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def load_config(path: str | Path | None = None,
                overrides: dict | None = None) -> PipelineConfig:
    """Build a config from defaults, an optional file, and CLI overrides.

    The file is validated against the schema; unknown keys are rejected so
    typos fail loudly. ``SCENE_PLACER_SEED`` supplies the seed when neither
    the file nor the overrides do.
    """
    payload: dict = {}
    if path is not None:
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
        try:
            jsonschema.validate(payload, CONFIG_SCHEMA)
        except jsonschema.ValidationError as exc:
            raise ValueError(
                f"{path}: invalid config at "
                f"{'/'.join(str(p) for p in exc.absolute_path) or '<root>'}: "
                f"{exc.message}"
            ) from exc
    if overrides:
        for key, value in overrides.items():
            if value is None:
                continue
            if "." in key:
                section, name = key.split(".", 1)
                payload.setdefault(section, {})[name] = value
            else:
                payload[key] = value

    if "seed" not in payload and SEED_ENV_VAR in os.environ:
        payload["seed"] = int(os.environ[SEED_ENV_VAR])

    config = PipelineConfig()
    for key in ("seed", "output_dir", "assets_dir", "scene_mesh", "scene_labels"):
        if key in payload:
            setattr(config, key, payload[key])
    sections = {
        "feasibility": FeasibilityConfig,
        "energy": EnergyWeights,
        "loss": LossWeights,
        "training": TrainingSettings,
        "pipeline": PipelineSettings,
        "sdf": SdfSettings,
    }
    for name, cls in sections.items():
        if name in payload:
            base = asdict(getattr(config, name))
            base.update(payload[name])
            setattr(config, name, cls(**base))
    return config
