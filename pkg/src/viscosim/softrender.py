"""Offline point/wire rasterizer producing PPM frames.

Vertices are projected through the full model-view-projection chain, lit at
the vertex (colormap color modulated by ambient+diffuse, white specular),
and drawn as dots plus Bresenham wireframe edges against a z-buffer.  The
browser viewer reimplements this algorithm step for step, so golden images
rendered here double as cross-implementation fixtures.
"""
from __future__ import annotations

import numpy as np

from .rendermath import Camera, PhongMaterial, mvp_matrix, project
from .session import Scene, scalar_field
from .rendermath import colormap


def vertex_colors(scene: Scene, body) -> np.ndarray:
    """Lit per-vertex RGB in [0,1]: colormap base * (ka + kd max(l.n,0)) plus
    white specular; interior vertices (no surface normal) get ambient only."""
    base = colormap(scalar_field(body, scene.scalar), scene.colormap_lo, scene.colormap_hi)
    tri = body.mesh.surface_triangles
    q = body.state.q
    n = np.zeros_like(q)
    fn = np.cross(q[tri[:, 1]] - q[tri[:, 0]], q[tri[:, 2]] - q[tri[:, 0]])
    for k in range(3):
        np.add.at(n, tri[:, k], fn)
    lens = np.linalg.norm(n, axis=1)
    has_normal = lens > 1e-12
    n[has_normal] /= lens[has_normal, None]

    n_world = n @ body.pose.rotation.T
    x_world = body.pose.apply(q)
    light = scene.light_direction
    view = scene.camera.translation - x_world
    vlen = np.linalg.norm(view, axis=1, keepdims=True)
    view = view / np.maximum(vlen, 1e-12)

    mat = scene.light
    ln = n_world @ light
    diffuse = np.where(has_normal, np.maximum(ln, 0.0), 0.0)
    r = 2.0 * ln[:, None] * n_world - light
    rv = np.maximum(np.einsum("ij,ij->i", r, view), 0.0)
    spec = np.where(has_normal, rv ** mat.shininess, 0.0)
    rgb = base * (mat.k_ambient + mat.k_diffuse * diffuse)[:, None] \
        + mat.k_specular * spec[:, None] * np.ones(3)
    return np.clip(rgb, 0.0, 1.0)


def render_scene(scene: Scene, width: int = 320, height: int = 320) -> np.ndarray:
    """Rasterize the current scene state to an (H, W, 3) uint8 image."""
    img = np.zeros((height, width, 3), dtype=np.uint8)
    zbuf = np.full((height, width), np.inf)
    for body in scene.bodies:
        mvp = mvp_matrix(body.pose, scene.camera)
        _, ndc = project(mvp, body.state.q)
        colors = vertex_colors(scene, body)
        px = np.rint((ndc[:, 0] + 1.0) * 0.5 * (width - 1)).astype(np.int64)
        py = np.rint((1.0 - ndc[:, 1]) * 0.5 * (height - 1)).astype(np.int64)
        depth = ndc[:, 2]
        visible = (np.abs(ndc) <= 1.0).all(axis=1)
        for a, b in body.mesh.undirected_edges:
            if visible[a] and visible[b]:
                _draw_line(img, zbuf, px[a], py[a], depth[a], colors[a],
                           px[b], py[b], depth[b], colors[b])
        for i in np.nonzero(visible)[0]:
            _draw_dot(img, zbuf, px[i], py[i], depth[i], colors[i])
    return img


def _put(img, zbuf, x, y, z, rgb):
    if 0 <= x < img.shape[1] and 0 <= y < img.shape[0] and z < zbuf[y, x]:
        zbuf[y, x] = z
        img[y, x] = np.rint(rgb * 255.0).astype(np.uint8)


def _draw_dot(img, zbuf, x, y, z, rgb):
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            _put(img, zbuf, x + dx, y + dy, z - 1e-6, rgb)


def _draw_line(img, zbuf, x0, y0, z0, c0, x1, y1, z1, c1):
    """Integer Bresenham with linear depth/color interpolation."""
    steps = int(max(abs(int(x1) - int(x0)), abs(int(y1) - int(y0))))
    if steps == 0:
        _put(img, zbuf, x0, y0, min(z0, z1), c0)
        return
    for i in range(steps + 1):
        t = i / steps
        x = int(round(x0 + (x1 - x0) * t))
        y = int(round(y0 + (y1 - y0) * t))
        z = z0 + (z1 - z0) * t
        rgb = c0 + (c1 - c0) * t
        _put(img, zbuf, x, y, z, rgb)


def write_ppm(path, img: np.ndarray) -> None:
    h, w, _ = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode())
        fh.write(img.tobytes())


def read_ppm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(b"P6"):
        raise ValueError("not a binary PPM file")
    parts = data.split(b"\n", 3)
    w, h = (int(v) for v in parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w, 3).copy()
