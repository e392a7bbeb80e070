"""Shared fixtures: the synthetic body asset, SDF-backed demo scenes, and
toy-trained generator checkpoints are expensive enough to build once per
session."""

import numpy as np
import pytest

from scene_placer.body import build_capsule_body
from scene_placer.fixtures import fixture_room, thin_wall_scene
from scene_placer.generators import (
    ContactCvae,
    PoseCvae,
    TrainConfig,
    make_contact_corpus,
    make_pose_corpus,
    train_contact,
    train_pose,
)


@pytest.fixture(scope="session")
def capsule_body():
    return build_capsule_body()


@pytest.fixture(scope="session")
def pose_corpus():
    return make_pose_corpus(per_action=60, seed=101)


@pytest.fixture(scope="session")
def contact_corpus(capsule_body, room_scene):
    return make_contact_corpus(capsule_body, room_scene, per_combo=50, seed=103)


@pytest.fixture(scope="session")
def trained_pose(capsule_body, pose_corpus):
    model = PoseCvae(seed=11)
    train_pose(
        model, capsule_body, pose_corpus,
        TrainConfig(steps=1200, seed=11, kl_warmup_steps=500, batch_size=48),
    )
    return model


@pytest.fixture(scope="session")
def trained_contact(capsule_body, contact_corpus):
    model = ContactCvae(capsule_body.spiral_indices, seed=13, dtype=np.float32)
    train_contact(
        model, contact_corpus,
        TrainConfig(steps=700, batch_size=16, seed=13),
    )
    return model


@pytest.fixture(scope="session")
def room_scene():
    scene = fixture_room()
    scene.build_sdf()
    return scene


@pytest.fixture(scope="session")
def wall_scene():
    scene = thin_wall_scene()
    scene.build_sdf()
    return scene


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)
