"""Model/view/projection matrices, Phong shading, colormap, depth test.

Pure functions on homogeneous coordinates.  The projection maps the view
frustum onto normalized device coordinates with depth -1 at the near plane
and +1 at the far plane; a square frustum is assumed (the viewer letterboxes
for other aspect ratios).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class ModelPose:
    """Rigid placement plus per-axis scale of a body in world space."""

    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    scale: np.ndarray = field(default_factory=lambda: np.ones(3))

    def __post_init__(self):
        self.translation = np.asarray(self.translation, dtype=np.float64).reshape(3)
        self.rotation = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        self.scale = np.asarray(self.scale, dtype=np.float64).reshape(3)
        if np.max(np.abs(self.rotation.T @ self.rotation - np.eye(3))) > 1e-9:
            raise ValueError("rotation must be orthonormal")
        if np.any(self.scale <= 0.0):
            raise ValueError("scale factors must be positive")

    def apply(self, points: np.ndarray) -> np.ndarray:
        """World positions of model-space points (scale, rotate, translate)."""
        return (points * self.scale) @ self.rotation.T + self.translation

    def rotate_into_model(self, vectors: np.ndarray) -> np.ndarray:
        """World-space direction vectors expressed in the model frame."""
        return vectors @ self.rotation

    def to_dict(self) -> dict:
        return {"translation": self.translation.tolist(),
                "rotation": self.rotation.tolist(), "scale": self.scale.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelPose":
        return cls(np.asarray(d.get("translation", [0, 0, 0])),
                   np.asarray(d.get("rotation", np.eye(3).tolist())),
                   np.asarray(d.get("scale", [1, 1, 1])))


@dataclass
class Camera:
    """Perspective camera: field of view, clip distances, extrinsic pose."""

    fov: float = np.pi / 2
    z_near: float = 1.0
    z_far: float = 100.0
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        self.translation = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not 0.0 < self.fov < np.pi:
            raise ValueError("field of view must be in (0, pi)")
        if not 0.0 < self.z_near < self.z_far:
            raise ValueError("need 0 < z_near < z_far")
        if np.max(np.abs(self.rotation.T @ self.rotation - np.eye(3))) > 1e-9:
            raise ValueError("camera rotation must be orthonormal")

    def to_dict(self) -> dict:
        return {"fov": self.fov, "z_near": self.z_near, "z_far": self.z_far,
                "rotation": self.rotation.tolist(), "translation": self.translation.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Camera":
        return cls(float(d.get("fov", np.pi / 2)), float(d.get("z_near", 1.0)),
                   float(d.get("z_far", 100.0)),
                   np.asarray(d.get("rotation", np.eye(3).tolist())),
                   np.asarray(d.get("translation", [0, 0, 0])))


@dataclass
class PhongMaterial:
    k_ambient: float = 0.2
    k_diffuse: float = 0.7
    k_specular: float = 0.3
    shininess: float = 16.0
    i_ambient: np.ndarray = field(default_factory=lambda: np.ones(3))
    i_diffuse: np.ndarray = field(default_factory=lambda: np.ones(3))
    i_specular: np.ndarray = field(default_factory=lambda: np.ones(3))

    def __post_init__(self):
        for name in ("i_ambient", "i_diffuse", "i_specular"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64).reshape(3))
        if self.shininess < 1.0:
            raise ValueError("shininess must be >= 1")


def _homogeneous(r: np.ndarray, t: np.ndarray) -> np.ndarray:
    m = np.eye(4)
    m[:3, :3] = r
    m[:3, 3] = t
    return m


def model_matrix(pose: ModelPose) -> np.ndarray:
    """Translate * rotate * scale (scale applied to the point first)."""
    s = np.eye(4)
    s[0, 0], s[1, 1], s[2, 2] = pose.scale
    return _homogeneous(pose.rotation, pose.translation) @ s


def view_matrix(cam: Camera) -> np.ndarray:
    """Closed-form inverse of the camera pose (T R)^-1 = [R^T | -R^T t]."""
    rt = cam.rotation.T
    return _homogeneous(rt, -rt @ cam.translation)


def projection_matrix(cam: Camera) -> np.ndarray:
    """Square-aspect perspective frustum.

    cot(fov/2) on both image axes; depth row maps z = -z_near to NDC -1 and
    z = -z_far to +1 after the w-divide.
    """
    cot = 1.0 / np.tan(cam.fov / 2.0)
    zn, zf = cam.z_near, cam.z_far
    m = np.zeros((4, 4))
    m[0, 0] = cot
    m[1, 1] = cot
    m[2, 2] = -(zf + zn) / (zf - zn)
    m[2, 3] = -2.0 * zf * zn / (zf - zn)
    m[3, 2] = -1.0
    return m


def mvp_matrix(pose: ModelPose, cam: Camera) -> np.ndarray:
    return projection_matrix(cam) @ view_matrix(cam) @ model_matrix(pose)


def project(mvp: np.ndarray, x_model: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(clip, ndc) of one model-space point (or an (N, 3) batch)."""
    x = np.asarray(x_model, dtype=np.float64)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    hom = np.concatenate([pts, np.ones((pts.shape[0], 1))], axis=1)
    clip = hom @ mvp.T
    w = clip[:, 3]
    if np.any(np.abs(w) < 1e-12):
        raise ValueError("point projects onto the camera plane (w ~ 0)")
    ndc = clip[:, :3] / w[:, None]
    if single:
        return clip[0], ndc[0]
    return clip, ndc


def phong(mat: PhongMaterial, normal: np.ndarray, light: np.ndarray,
          view: np.ndarray) -> np.ndarray:
    """RGB intensity k_a i_a + k_d max(l.n, 0) i_d + k_s max(r.v, 0)^beta i_s.

    Directions are unit vectors pointing away from the surface (light and
    view both surface-to-source); the reflection is r = 2 (l.n) n - l.
    Output is clamped to [0, 1].
    """
    n = np.asarray(normal, dtype=np.float64)
    l = np.asarray(light, dtype=np.float64)
    v = np.asarray(view, dtype=np.float64)
    for name, vec in (("normal", n), ("light", l), ("view", v)):
        if abs(np.linalg.norm(vec) - 1.0) > 1e-6:
            raise ValueError(f"{name} direction must be unit length")
    ln = float(n @ l)
    r = 2.0 * ln * n - l
    diffuse = max(ln, 0.0)
    specular = max(float(r @ v), 0.0) ** mat.shininess
    rgb = mat.k_ambient * mat.i_ambient \
        + mat.k_diffuse * diffuse * mat.i_diffuse \
        + mat.k_specular * specular * mat.i_specular
    return np.clip(rgb, 0.0, 1.0)


# fixed five-stop colormap (dark violet -> blue -> teal -> green -> yellow);
# the exact stops are part of the wire/golden-file contract
COLORMAP_STOPS = np.array([
    (0.267, 0.005, 0.329),
    (0.229, 0.322, 0.546),
    (0.128, 0.567, 0.551),
    (0.369, 0.789, 0.383),
    (0.993, 0.906, 0.144),
])


def colormap(value, lo: float, hi: float) -> np.ndarray:
    """Piecewise-linear map of a scalar (or array) onto the fixed stops."""
    if not lo < hi:
        raise ValueError("need lo < hi")
    u = (np.clip(np.asarray(value, dtype=np.float64), lo, hi) - lo) / (hi - lo)
    pos = u * (len(COLORMAP_STOPS) - 1)
    idx = np.minimum(pos.astype(np.int64), len(COLORMAP_STOPS) - 2)
    frac = pos - idx
    out = (1.0 - frac)[..., None] * COLORMAP_STOPS[idx] + frac[..., None] * COLORMAP_STOPS[idx + 1]
    return out


def depth_mask(virtual_depth: np.ndarray, real_depth: np.ndarray) -> np.ndarray:
    """Pixels where the virtual surface is strictly closer than the real one
    (ties keep the real scene, avoiding z-fighting on coincident surfaces)."""
    a = np.asarray(virtual_depth, dtype=np.float64)
    b = np.asarray(real_depth, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"depth grid shapes differ: {a.shape} vs {b.shape}")
    return a < b
