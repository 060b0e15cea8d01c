"""Shared fixtures: small rendered scenes, cached per session because ray
casting is the slow part of the suite."""

from __future__ import annotations

import numpy as np
import pytest

from volstream.presets import (default_scene, moving_box_scene, static_scene,
                               two_camera_rig_scene)
from volstream.synthetic import render_sequence


@pytest.fixture(scope="session")
def moving_box_seq():
    spec = moving_box_scene(frames=10)
    frames, gt = render_sequence(spec)
    return spec, frames, gt


@pytest.fixture(scope="session")
def static_seq():
    spec = static_scene(frames=5)
    frames, gt = render_sequence(spec)
    return spec, frames, gt


@pytest.fixture(scope="session")
def rig_seq():
    spec = two_camera_rig_scene(frames=2)
    frames, gt = render_sequence(spec)
    return spec, frames, gt


@pytest.fixture(scope="session")
def default_seq_short():
    spec = default_scene(frames=12, record_flow=False)
    frames, gt = render_sequence(spec)
    return spec, frames, gt


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
