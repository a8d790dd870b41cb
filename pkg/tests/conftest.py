import numpy as np
import pytest

from viscosim.gnn import TrainedSimulator, build_model
from viscosim.graph import Normalization
from viscosim.mesh import StateField, build_beam_mesh
from viscosim.rendermath import Camera, PhongMaterial
from viscosim.session import Body, Scene
from viscosim.rendermath import ModelPose


def small_simulator(hidden=8, k_steps=2, seed=0, rate_scale=1e-3):
    """Seeded random model with gentle denormalization: usable as a stand-in
    checkpoint whose rollouts stay bounded."""
    model = build_model(hidden=hidden, k_steps=k_steps, seed=seed)
    stats = Normalization.identity()
    stats.target_std = np.full(12, rate_scale)
    return TrainedSimulator(model=model, stats=stats, seed=seed, config_hash="fixture")


def beam_body(name="beam", divisions=(1, 1, 4), pose=None, sim=None):
    mesh = build_beam_mesh(10, 10, 40, *divisions)
    return Body(name=name, mesh=mesh, sim=sim or small_simulator(),
                pose=pose or ModelPose(), state=StateField.rest(mesh))


def front_camera(distance=70.0):
    return Camera(fov=np.pi / 3, z_near=1.0, z_far=500.0,
                  rotation=np.array([[1.0, 0, 0], [0, 0, -1.0], [0, 1.0, 0]]),
                  translation=np.array([5.0, -distance, 20.0]))


@pytest.fixture
def single_beam_scene():
    return Scene(bodies=[beam_body()], camera=front_camera(), tick_dt=5e-2,
                 contact_eps=2.5, contact_k=100.0, colormap_lo=-1.0, colormap_hi=1.0,
                 poke_magnitude=50.0, poke_duration=5, pick_eps=8.0,
                 light_direction=np.array([0.0, -1.0, 0.0]), light=PhongMaterial())


@pytest.fixture
def two_beam_scene_touching():
    """Beams closer than the contact threshold so contact is active at rest."""
    sim = small_simulator()
    a = beam_body("a", sim=sim)
    rot = np.array([[1.0, 0, 0], [0, 0, 1.0], [0, -1.0, 0]])
    b = beam_body("b", pose=ModelPose(rotation=rot, translation=np.array([0.0, 0.0, 51.0])),
                  sim=sim)
    return Scene(bodies=[a, b], camera=front_camera(110.0), tick_dt=5e-2,
                 contact_eps=2.0, contact_k=10.0, colormap_lo=-1.0, colormap_hi=1.0,
                 poke_magnitude=50.0, poke_duration=5, pick_eps=8.0)
