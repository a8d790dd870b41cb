"""Pointer-driven pokes and body-body contact, both feeding external forces.

A pointer click arrives as normalized device coordinates; inverting the
model-view-projection transform recovers a model-space ray, a ray/triangle
walk over the surface finds the touched point, and nearby nodes receive a
prescribed force for a fixed number of ticks.  Contact between bodies is a
penalty spring on close node pairs.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import SolidMesh, StateField


@dataclass
class Poke:
    """A transient prescribed force split across the picked nodes."""

    model_point: np.ndarray
    node_ids: tuple[int, ...]
    force: np.ndarray            # total force (3,), model space
    remaining_steps: int

    def per_node_force(self) -> np.ndarray:
        return self.force / len(self.node_ids)

    @property
    def active(self) -> bool:
        return self.remaining_steps > 0 and len(self.node_ids) > 0


def unproject(ndc_xy: np.ndarray, depth_ndc: float, mvp: np.ndarray) -> np.ndarray:
    """Model-space point of an NDC coordinate via the homogeneous inverse."""
    try:
        inv = np.linalg.inv(mvp)
    except np.linalg.LinAlgError as exc:
        raise ValueError("projection matrix is singular") from exc
    h = inv @ np.array([ndc_xy[0], ndc_xy[1], depth_ndc, 1.0])
    if abs(h[3]) < 1e-12:
        raise ValueError("unprojected point is degenerate (w ~ 0)")
    return h[:3] / h[3]


def pick_ray(ndc_xy, mvp: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Model-space ray through an NDC pixel: (origin at near plane, unit dir)."""
    near = unproject(ndc_xy, -1.0, mvp)
    far = unproject(ndc_xy, 1.0, mvp)
    d = far - near
    return near, d / np.linalg.norm(d)


def ray_hit_surface(origin: np.ndarray, direction: np.ndarray,
                    positions: np.ndarray, triangles: np.ndarray) -> float | None:
    """Smallest positive ray parameter hitting any triangle, or None.

    Moeller-Trumbore over all surface triangles at the current (deformed)
    vertex positions.
    """
    v0 = positions[triangles[:, 0]]
    e1 = positions[triangles[:, 1]] - v0
    e2 = positions[triangles[:, 2]] - v0
    p = np.cross(direction, e2)
    det = np.einsum("ij,ij->i", e1, p)
    ok = np.abs(det) > 1e-12
    t_best = None
    if not np.any(ok):
        return None
    inv_det = np.zeros_like(det)
    inv_det[ok] = 1.0 / det[ok]
    s = origin - v0
    u = np.einsum("ij,ij->i", s, p) * inv_det
    q = np.cross(s, e1)
    v = np.einsum("ij,j->i", q, direction) * inv_det
    t = np.einsum("ij,ij->i", e2, q) * inv_det
    hit = ok & (u >= 0.0) & (v >= 0.0) & (u + v <= 1.0) & (t > 1e-9)
    if np.any(hit):
        t_best = float(np.min(t[hit]))
    return t_best


def pick_nodes(point: np.ndarray, state: StateField, eps: float) -> list[int]:
    """All nodes strictly closer than eps, nearest first (ties: lower id)."""
    if eps <= 0.0:
        raise ValueError("pick threshold must be positive")
    d = np.linalg.norm(state.q - np.asarray(point, dtype=np.float64), axis=1)
    ids = np.nonzero(d < eps)[0]
    order = np.lexsort((ids, d[ids]))
    return [int(i) for i in ids[order]]


def poke_force(picked, direction: np.ndarray, magnitude: float,
               duration: int, model_point=None) -> Poke | None:
    """Build a Poke splitting magnitude*direction equally over the picked
    nodes; returns None for an empty pick (no collision, not an error)."""
    picked = tuple(int(i) for i in picked)
    if not picked:
        return None
    direction = np.asarray(direction, dtype=np.float64)
    direction = direction / np.linalg.norm(direction)
    point = np.zeros(3) if model_point is None else np.asarray(model_point, dtype=np.float64)
    return Poke(model_point=point, node_ids=picked,
                force=magnitude * direction, remaining_steps=int(duration))


def contact_forces(state_a: StateField, state_b: StateField, eps: float, k: float,
                   rest_a: np.ndarray | None = None,
                   rest_b: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Penalty-spring forces between two node clouds.

    Every pair (i in A, j in B) closer than eps gets equal and opposite
    forces of magnitude k*(eps - d) along the separation direction; pairs
    accumulate additively.  Coincident pairs (d < 1e-9) fall back to the
    rest-configuration separation direction when available.
    """
    if eps <= 0.0 or k <= 0.0:
        raise ValueError("contact needs positive eps and stiffness")
    qa, qb = state_a.q, state_b.q
    fa = np.zeros_like(qa)
    fb = np.zeros_like(qb)
    diff = qa[:, None, :] - qb[None, :, :]          # (Na, Nb, 3)
    dist = np.linalg.norm(diff, axis=2)
    ii, jj = np.nonzero(dist < eps)
    for i, j in zip(ii, jj):
        d = dist[i, j]
        if d < 1e-9:
            if rest_a is not None and rest_b is not None:
                sep = rest_a[i] - rest_b[j]
                nsep = np.linalg.norm(sep)
                direction = sep / nsep if nsep > 1e-12 else np.array([1.0, 0.0, 0.0])
            else:
                direction = np.array([1.0, 0.0, 0.0])
        else:
            direction = diff[i, j] / d
        f = k * (eps - d) * direction
        fa[i] += f
        fb[j] -= f
    return fa, fb


def default_contact_eps(mesh: SolidMesh) -> float:
    """Half the mean rest edge length."""
    return 0.5 * mesh.mean_edge_length
