"""Conditional VAEs for pose and contact generation, trained with
hand-written reverse-mode gradients."""

from scene_placer.generators.layers import Affine, LeakyRelu, Sigmoid, SpiralConv
from scene_placer.generators.nets import (
    ContactCvae,
    LatentDistribution,
    PoseCvae,
    reparameterize,
)
from scene_placer.generators.losses import (
    LossWeights,
    contact_labels,
    contact_loss,
    kl_divergence,
    pose_loss,
)
from scene_placer.generators.corpus import (
    load_contact_corpus,
    load_pose_corpus,
    make_contact_corpus,
    make_pose_corpus,
    save_contact_corpus,
    save_pose_corpus,
)
from scene_placer.generators.training import (
    Adam,
    TrainConfig,
    load_checkpoint,
    save_checkpoint,
    train_contact,
    train_pose,
)

ACTIONS = ("stand", "sit", "lie")

__all__ = [
    "ACTIONS",
    "Adam",
    "Affine",
    "ContactCvae",
    "LatentDistribution",
    "LeakyRelu",
    "LossWeights",
    "PoseCvae",
    "Sigmoid",
    "SpiralConv",
    "TrainConfig",
    "contact_labels",
    "contact_loss",
    "kl_divergence",
    "load_checkpoint",
    "load_contact_corpus",
    "load_pose_corpus",
    "make_contact_corpus",
    "make_pose_corpus",
    "pose_loss",
    "reparameterize",
    "save_checkpoint",
    "save_contact_corpus",
    "save_pose_corpus",
    "train_contact",
    "train_pose",
]
