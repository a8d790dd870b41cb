"""Shipped experiment presets.

``beam-desk`` is the small cantilever every test and benchmark leans on;
``beam-paper`` is the full-size 756-node variant (long-running to train);
``bunny-desk`` stands in for tetrahedral assets with a tet box; the
``two-beam-scene`` assembles two beams at 90 degrees with a gap of 10 for
contact sessions.

Densities are chosen per preset so the snapshot step of 5e-2 s sits safely
below the explicit oracle's stability bound for that mesh and stiffness.
"""
from __future__ import annotations

import numpy as np

from .materials import MaterialParams, PronyTerm
from .mesh import SolidMesh, build_beam_mesh
from .fem import make_tet_box_mesh

PRONY_TWO_TERM = (PronyTerm(0.3, 0.2), PronyTerm(0.49, 0.5))

DATA_PRESETS: dict[str, dict] = {
    # 81-node cantilever; softened volumetric response and my own force level
    # keep dt=5e-2 stable and deflections visible at this coarse resolution
    "beam-desk": {
        "kind": "beam",
        "dims": (10.0, 10.0, 40.0),
        "divisions": (2, 2, 8),
        "material": dict(c10=1.5e5, c01=5e3, d1=2e-6, density=1e3,
                         prony=[{"g": 0.3, "tau": 0.2}, {"g": 0.49, "tau": 0.5}]),
        "load_positions": 30,
        "force": 1.5e5,
        "nt": 20,
        "dt": 5e-2,
        "split": 0.8,
    },
    # full-size beam; the density makes the published step size stable
    "beam-paper": {
        "kind": "beam",
        "dims": (10.0, 10.0, 40.0),
        "divisions": (5, 5, 20),
        "material": dict(c10=1.5e5, c01=5e3, d1=1e-7, density=6e4,
                         prony=[{"g": 0.3, "tau": 0.2}, {"g": 0.49, "tau": 0.5}]),
        "load_positions": 52,
        "force": 1e5,
        "nt": 20,
        "dt": 5e-2,
        "split": 0.8,
    },
    # small tetrahedral block clamped at the ground plane
    "bunny-desk": {
        "kind": "tet-box",
        "dims": (1.0, 1.0, 3.0),
        "divisions": (3, 3, 5),
        "material": dict(c10=26.0, c01=0.0, d1=4.9e-4, density=1e3, prony=[]),
        "load_positions": 30,
        "force": 1.0,
        "nt": 20,
        "dt": 5e-2,
        "split": 0.8,
    },
}


def build_preset_mesh(preset: dict) -> SolidMesh:
    mat = MaterialParams.from_dict(preset["material"])
    h, w, l = preset["dims"]
    nx, ny, nz = preset["divisions"]
    if preset["kind"] == "beam":
        return build_beam_mesh(h, w, l, nx, ny, nz, mat)
    if preset["kind"] == "tet-box":
        return make_tet_box_mesh(h, w, l, nx, ny, nz, mat)
    raise ValueError(f"unknown preset kind {preset['kind']!r}")


def single_beam_scene(mesh_path: str, checkpoint_path: str, sigma_lo: float,
                      sigma_hi: float, tick_dt: float, poke_magnitude: float) -> dict:
    return {
        "schema": "scene/1",
        "tick_dt": tick_dt,
        "camera": {
            "fov": float(np.pi / 3), "z_near": 1.0, "z_far": 500.0,
            "rotation": [[1, 0, 0], [0, 0, -1], [0, 1, 0]],
            "translation": [5.0, -70.0, 20.0],
        },
        "contact": {"eps": 2.5, "k": 4e3},
        "colormap": {"lo": sigma_lo, "hi": sigma_hi},
        "scalar_field": "sigma_xx",
        "poke": {"magnitude": poke_magnitude, "duration": 10, "pick_eps": 3.0},
        "light": {"direction": [0.3, -1.0, 0.45]},
        "bodies": [
            {"name": "beam", "mesh": mesh_path, "checkpoint": checkpoint_path,
             "pose": {"translation": [0, 0, 0]}},
        ],
    }


def two_beam_scene(mesh_path: str, checkpoint_path: str, sigma_lo: float,
                   sigma_hi: float, tick_dt: float, poke_magnitude: float) -> dict:
    """Two identical beams at 90 degrees: body B lies across the tip of body A
    with a 10-unit gap (A spans z in [0,40]; B spans z in [50,60])."""
    scene = single_beam_scene(mesh_path, checkpoint_path, sigma_lo, sigma_hi,
                              tick_dt, poke_magnitude)
    scene["camera"]["translation"] = [5.0, -110.0, 40.0]
    scene["bodies"] = [
        {"name": "beam_a", "mesh": mesh_path, "checkpoint": checkpoint_path,
         "pose": {"translation": [0, 0, 0]}},
        {"name": "beam_b", "mesh": mesh_path, "checkpoint": checkpoint_path,
         "pose": {"rotation": [[1, 0, 0], [0, 0, 1], [0, -1, 0]],
                  "translation": [0, 0, 60.0]}},
    ]
    return scene
