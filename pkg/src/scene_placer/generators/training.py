"""Adaptive-moment training loops for the generators, plus checkpoints."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from scene_placer.blobfile import read_blob, write_blob
from scene_placer.body.model import ArticulatedBody, pose_vertices_batch
from scene_placer.generators.losses import LossWeights, contact_loss, pose_loss
from scene_placer.generators.nets import (
    ACTION_DIM,
    CONTACT_LATENT_DIM,
    OBJECT_DIM,
    POSE_LATENT_DIM,
    ContactCvae,
    PoseCvae,
)

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "SPNET1"


class Adam:
    """Adaptive-moment descent over a model's parameter triples.

    ``clip_norm`` rescales the concatenated gradient when its global norm
    exceeds the bound, which keeps the squashed contact head out of the
    saturation regime.
    """

    def __init__(self, parameters, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8,
                 clip_norm: float | None = 1.0):
        self.parameters = parameters
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.clip_norm = clip_norm
        self.t = 0
        self.m = {name: np.zeros_like(layer.params[key])
                  for name, layer, key in parameters}
        self.v = {name: np.zeros_like(layer.params[key])
                  for name, layer, key in parameters}

    def step(self):
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        scale = 1.0
        if self.clip_norm is not None:
            total = 0.0
            for _, layer, key in self.parameters:
                total += float((layer.grads[key].astype(np.float64) ** 2).sum())
            norm = np.sqrt(total)
            if norm > self.clip_norm:
                scale = self.clip_norm / norm
        for name, layer, key in self.parameters:
            g = layer.grads[key] * scale
            self.m[name] = self.beta1 * self.m[name] + (1 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1 - self.beta2) * g * g
            update = (self.m[name] / b1c) / (np.sqrt(self.v[name] / b2c) + self.eps)
            layer.params[key] -= (self.lr * update).astype(layer.params[key].dtype)


@dataclass
class TrainConfig:
    """Loop settings. ``kl_warmup_steps`` > 0 anneals the KL weight from
    ``kl_start`` down to the configured final weight: holding the posterior
    near the prior early forces the decoder onto the conditioning path
    before the latent becomes informative (small discrete-family corpora
    otherwise ignore the condition)."""

    learning_rate: float = 1e-3
    steps: int = 500
    batch_size: int = 32
    seed: int = 0
    weights: LossWeights = field(default_factory=LossWeights)
    kl_warmup_steps: int = 0
    kl_start: float = 0.5

    def kl_weight(self, step: int, final: float) -> float:
        if self.kl_warmup_steps <= 0 or step >= self.kl_warmup_steps:
            return final
        frac = step / self.kl_warmup_steps
        return self.kl_start + (final - self.kl_start) * frac


def _one_hot(ids: np.ndarray, dim: int) -> np.ndarray:
    out = np.zeros((len(ids), dim))
    out[np.arange(len(ids)), ids] = 1.0
    return out


def _check_finite(value: float, step: int):
    if not np.isfinite(value):
        raise RuntimeError(f"non-finite training loss at step {step}")


def train_pose(
    model: PoseCvae,
    body: ArticulatedBody,
    corpus: dict[str, np.ndarray],
    config: TrainConfig,
) -> list[dict]:
    """Train the pose generator; returns the per-step loss curve."""
    if len(corpus["theta"]) == 0:
        raise ValueError("empty pose corpus")
    rng = np.random.default_rng(config.seed)
    theta_all = corpus["theta"]
    action_all = _one_hot(corpus["action"], ACTION_DIM)
    cached = pose_vertices_batch(body, theta_all)
    v_all, j_all = cached.vertices, cached.joints

    optimizer = Adam(model.parameters(), lr=config.learning_rate)
    history = []
    base_weights = config.weights
    for step in range(config.steps):
        idx = rng.choice(len(theta_all), size=min(config.batch_size,
                                                  len(theta_all)), replace=False)
        theta = theta_all[idx]
        action = action_all[idx]
        noise = rng.standard_normal((len(idx), POSE_LATENT_DIM))

        weights = base_weights
        if config.kl_warmup_steps > 0:
            weights = LossWeights(
                lambda_m=base_weights.lambda_m,
                lambda_v=base_weights.lambda_v,
                lambda_j=base_weights.lambda_j,
                lambda_kl_pose=config.kl_weight(step, base_weights.lambda_kl_pose),
                lambda_rec=base_weights.lambda_rec,
                lambda_kl_contact=base_weights.lambda_kl_contact,
            )
        dist, recon = model.forward(theta, action, noise)
        total, breakdown, (d_theta, d_mu, d_lv) = pose_loss(
            body, theta, recon, dist, weights,
            hat_cache=(v_all[idx], j_all[idx]),
        )
        _check_finite(total, step)
        model.zero_grad()
        model.backward(d_theta, d_mu, d_lv)
        optimizer.step()
        history.append({"step": step, "total": total, **breakdown})
        if step % 100 == 0:
            logger.debug("pose step %d loss %.5f", step, total)
    return history


def train_contact(
    model: ContactCvae,
    corpus: dict[str, np.ndarray],
    config: TrainConfig,
) -> list[dict]:
    """Train the contact generator; returns the per-step loss curve."""
    if len(corpus["f"]) == 0:
        raise ValueError("empty contact corpus")
    rng = np.random.default_rng(config.seed)
    dtype = model.dtype
    f_all = corpus["f"].astype(dtype)
    vs_all = corpus["vs"].astype(dtype)
    obj_all = _one_hot(corpus["object"], OBJECT_DIM).astype(dtype)

    optimizer = Adam(model.parameters(), lr=config.learning_rate)
    history = []
    for step in range(config.steps):
        idx = rng.choice(len(f_all), size=min(config.batch_size, len(f_all)),
                         replace=False)
        noise = rng.standard_normal((len(idx), CONTACT_LATENT_DIM)).astype(dtype)
        dist, recon = model.forward(f_all[idx], vs_all[idx], obj_all[idx], noise)
        total, breakdown, (d_rec, d_mu, d_lv) = contact_loss(
            f_all[idx], recon, dist, config.weights
        )
        _check_finite(total, step)
        model.zero_grad()
        model.backward(d_rec.astype(dtype), d_mu.astype(dtype), d_lv.astype(dtype))
        optimizer.step()
        history.append({"step": step, "total": total, **breakdown})
        if step % 100 == 0:
            logger.debug("contact step %d loss %.5f", step, total)
    return history


def save_checkpoint(path, model, extra_meta: dict | None = None) -> None:
    """Write model parameters and rebuild info as an .spnet file."""
    arrays = {}
    for name, layer, key in model.parameters():
        arrays[name] = layer.params[key]
    if isinstance(model, PoseCvae):
        meta = {"kind": "pose", "hidden": model.hidden}
    elif isinstance(model, ContactCvae):
        meta = {"kind": "contact", "width": model.width}
        arrays["spiral_indices"] = model.enc_sc[0].spiral
    else:
        raise TypeError(f"unknown model type {type(model).__name__}")
    if extra_meta:
        meta.update(extra_meta)
    write_blob(path, CHECKPOINT_FORMAT, meta, arrays)


def load_checkpoint(path, dtype=np.float64):
    """Rebuild a generator from an .spnet checkpoint."""
    meta, arrays = read_blob(path, CHECKPOINT_FORMAT)
    if meta["kind"] == "pose":
        model = PoseCvae(hidden=meta["hidden"], dtype=dtype)
    elif meta["kind"] == "contact":
        model = ContactCvae(
            arrays["spiral_indices"].astype(np.int64),
            width=meta["width"], dtype=dtype,
        )
    else:
        raise ValueError(f"{path}: unknown checkpoint kind '{meta['kind']}'")
    for name, layer, key in model.parameters():
        if name not in arrays:
            raise ValueError(f"{path}: checkpoint missing parameter '{name}'")
        layer.params[key] = arrays[name].astype(dtype)
    return model
