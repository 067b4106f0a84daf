"""Shared fixtures: small datasets rendered once per session."""

import numpy as np
import pytest
import torch

from strf.datagen import Mover, RectPlane, SceneSpec, SineTexture, Sphere, default_scene, generate_dataset

torch.set_num_threads(2)


def tiny_scene(width=32, height=24, frames=3) -> SceneSpec:
    """A miniature scene whose mover fits tiny frusta (for fast train tests)."""
    statics = [
        RectPlane(1, -0.45, (-1.25, 1.25), (-2.45, -0.9), np.array([0.62, 0.58, 0.52]),
                  texture=SineTexture()),
        RectPlane(2, -2.45, (-1.25, 1.25), (-0.5, 0.85), np.array([0.45, 0.52, 0.62]),
                  texture=SineTexture(6.0, 8.0, 0.9, 2.1, 17.0, 21.0)),
    ]
    mover = Mover(0.07, np.array([0.85, 0.10, 0.08]),
                  np.array([-0.15, -0.04, -1.55]), np.array([0.15, -0.04, -1.55]))
    return SceneSpec(statics=statics, mover=mover, width=width, height=height,
                     focal=0.9375 * width, frames=frames)


@pytest.fixture(scope="session")
def desk_dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("data") / "desk"
    generate_dataset(default_scene("desk"), str(out), threads=2)
    return str(out)


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("data") / "tiny"
    generate_dataset(tiny_scene(), str(out), threads=2)
    return str(out)
