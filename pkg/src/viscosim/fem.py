"""Explicit-dynamics finite element oracle for viscoelastic solids.

Generates ground-truth trajectories for training: compressible Mooney-Rivlin
hyperelasticity with a Prony-series relaxation on the deviatoric stress,
integrated with the explicit central-difference scheme on a lumped mass
matrix.  One integration point per element (centroid); hourglass control is
deliberately omitted, which is adequate for the coarse meshes and smooth
loads used here.

Stress bookkeeping: the second Piola-Kirchhoff stress S is evaluated in
closed form from the strain energy, the Prony history is subtracted from its
deviator (instantaneous-modulus convention), and nodal output stress is the
volume-weighted element average of the push-forward sigma = J^-1 F S F^T.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateElementError, InvertedElementError, SchemaError
from .materials import MaterialParams, PronyTerm
from .mesh import (HEX8_EDGES, TET4_EDGES, LoadCase, SolidMesh, StateField,
                   extract_surface, load_mesh, save_mesh)

TRAJ_SCHEMA = "traj/1"

# hex8 local corner signs; trilinear shape gradient at the centroid is signs/8
_HEX8_SIGNS = np.array([
    (-1, -1, -1), (1, -1, -1), (1, 1, -1), (-1, 1, -1),
    (-1, -1, 1), (1, -1, 1), (1, 1, 1), (-1, 1, 1),
], dtype=np.float64)


@dataclass
class Trajectory:
    """One load case plus its NT+1 snapshots at a fixed step size."""

    load: LoadCase
    dt: float
    snapshots: list[StateField]

    @property
    def nt(self) -> int:
        return len(self.snapshots) - 1


@dataclass
class InternalVars:
    """Per-element viscoelastic state: one deviatoric history tensor per
    Prony term plus the previous instantaneous deviator."""

    h: list[np.ndarray]            # each (M, 6)
    s_dev_prev: np.ndarray         # (M, 6)

    @classmethod
    def zero(cls, n_elements: int, n_terms: int) -> "InternalVars":
        return cls([np.zeros((n_elements, 6)) for _ in range(n_terms)],
                   np.zeros((n_elements, 6)))


@dataclass
class Dataset:
    mesh: SolidMesh
    material: MaterialParams
    dt: float
    trajectories: list[Trajectory] = field(default_factory=list)


def _shape_gradients(mesh: SolidMesh) -> tuple[np.ndarray, np.ndarray]:
    """Rest-configuration shape gradients and volumes, one point per element.

    Returns (grad, vol): grad is (M, nen, 3) with dN_i/dX, vol is (M,).
    Raises DegenerateElementError on a non-positive rest Jacobian.
    """
    x = mesh.rest_positions[mesh.elements]  # (M, nen, 3)
    if mesh.element_kind == "hex8":
        dndxi = _HEX8_SIGNS / 8.0                            # (8, 3)
        j0 = np.einsum("mia,ib->mab", x, dndxi)              # (M, 3, 3)
        detj = np.linalg.det(j0)
        if np.any(detj <= 0.0):
            eid = int(np.argmax(detj <= 0.0))
            raise DegenerateElementError(eid, f"rest Jacobian determinant {detj[eid]:g}")
        grad = np.einsum("ib,mbc->mic", dndxi, np.linalg.inv(j0))
        vol = 8.0 * detj
    else:
        dm = x[:, 1:4] - x[:, 0:1]                           # rows: edge vectors
        detd = np.linalg.det(dm)
        if np.any(detd <= 0.0):
            eid = int(np.argmax(detd <= 0.0))
            raise DegenerateElementError(eid, f"rest volume determinant {detd[eid]:g}")
        inv = np.linalg.inv(dm)                              # (M, 3, 3)
        grad = np.empty((x.shape[0], 4, 3))
        grad[:, 1:4] = np.swapaxes(inv, 1, 2)
        grad[:, 0] = -grad[:, 1:4].sum(axis=1)
        vol = detd / 6.0
    return grad, vol


def deformation_gradient(element, rest: np.ndarray, current: np.ndarray) -> np.ndarray:
    """F at the element centroid for one hex8 or tet4 element.

    ``element`` is a connectivity tuple of 8 or 4 node indices into the
    ``rest`` / ``current`` position arrays.
    """
    element = np.asarray(element, dtype=np.int64)
    xr = np.asarray(rest, dtype=np.float64)[element]
    xc = np.asarray(current, dtype=np.float64)[element]
    if element.shape[0] == 8:
        dndxi = _HEX8_SIGNS / 8.0
        j0 = xr.T @ dndxi
        det = np.linalg.det(j0)
        if det <= 0.0:
            raise DegenerateElementError(0, f"rest Jacobian determinant {det:g}")
        grad = dndxi @ np.linalg.inv(j0)
    elif element.shape[0] == 4:
        dm = xr[1:] - xr[0]
        det = np.linalg.det(dm)
        if det <= 0.0:
            raise DegenerateElementError(0, f"rest volume determinant {det:g}")
        grad = np.empty((4, 3))
        grad[1:] = np.linalg.inv(dm).T
        grad[0] = -grad[1:].sum(axis=0)
    else:
        raise ValueError(f"element must have 4 or 8 nodes, got {element.shape[0]}")
    return xc.T @ grad


def _pk2_batch(f: np.ndarray, mat: MaterialParams) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized S = 2 dpsi/dC for (M, 3, 3) deformation gradients.

    Returns (S, detF).  Inverted elements are the caller's problem; detF is
    returned so it can attach element ids.
    """
    c = np.einsum("mia,mib->mab", f, f)
    detf = np.linalg.det(f)
    eye = np.eye(3)
    invc = np.linalg.inv(c)
    i1 = np.trace(c, axis1=1, axis2=2)
    trc2 = np.einsum("mab,mba->m", c, c)
    i2 = 0.5 * (i1 * i1 - trc2)
    jm23 = detf ** (-2.0 / 3.0)
    jm43 = detf ** (-4.0 / 3.0)
    s = 2.0 * mat.c10 * jm23[:, None, None] * (eye - (i1 / 3.0)[:, None, None] * invc)
    if mat.c01 != 0.0:
        s = s + 2.0 * mat.c01 * jm43[:, None, None] * (
            i1[:, None, None] * eye - c - (2.0 * i2 / 3.0)[:, None, None] * invc)
    s = s + (2.0 / mat.d1) * ((detf - 1.0) * detf)[:, None, None] * invc
    return s, detf


def pk2_stress(f: np.ndarray, mat: MaterialParams, element_id: int = 0) -> np.ndarray:
    """Second Piola-Kirchhoff stress of the Mooney-Rivlin energy, closed form."""
    f = np.asarray(f, dtype=np.float64).reshape(1, 3, 3)
    det = np.linalg.det(f[0])
    if det <= 0.0:
        raise InvertedElementError(element_id)
    s, _ = _pk2_batch(f, mat)
    return s[0]


# Voigt packing for symmetric tensors: (xx, yy, zz, xy, yz, xz)
_VGT_I = np.array([0, 1, 2, 0, 1, 0])
_VGT_J = np.array([0, 1, 2, 1, 2, 2])


def sym_to_voigt(t: np.ndarray) -> np.ndarray:
    return t[..., _VGT_I, _VGT_J]


def voigt_to_sym(v: np.ndarray) -> np.ndarray:
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., _VGT_I, _VGT_J] = v
    out[..., _VGT_J, _VGT_I] = v
    return out


def _deviator_voigt(v: np.ndarray) -> np.ndarray:
    out = v.copy()
    tr3 = (v[..., 0] + v[..., 1] + v[..., 2]) / 3.0
    out[..., 0] -= tr3
    out[..., 1] -= tr3
    out[..., 2] -= tr3
    return out


def prony_update(s_dev_new: np.ndarray, s_dev_old: np.ndarray, h_old,
                 dt: float, prony) -> tuple[np.ndarray, list[np.ndarray]]:
    """Advance the Prony history one step and return the relaxed deviator.

    Uses the classical recurrence, exact for a deviator that varies linearly
    over the step:

        h_i' = e^(-dt/tau_i) h_i
             + g_i (1 - e^(-dt/tau_i)) s_old
             + g_i (1 - e^(-dt/tau_i)) / (dt/tau_i) * (s_new - s_old)

    so a deviator held constant drives h_i -> g_i * s (long-term modulus
    1 - sum g_i).  The relaxed deviator is s_new - sum_i h_i' (instantaneous
    modulus convention).  Works on single Voigt vectors or (M, 6) batches.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    s_dev_new = np.asarray(s_dev_new, dtype=np.float64)
    s_dev_old = np.asarray(s_dev_old, dtype=np.float64)
    h_new: list[np.ndarray] = []
    total = s_dev_new.copy()
    for term, h in zip(prony, h_old):
        x = dt / term.tau
        decay = np.exp(-x)
        creep = -np.expm1(-x)        # 1 - e^-x, accurate for small x
        h_next = decay * np.asarray(h) + term.g * creep * s_dev_old \
            + term.g * (creep / x) * (s_dev_new - s_dev_old)
        h_new.append(h_next)
        total = total - h_next
    return total, h_new


def lumped_masses(mesh: SolidMesh, mat: MaterialParams) -> np.ndarray:
    """Diagonal (row-sum) nodal masses: each element spreads rho*V equally."""
    _, vol = _shape_gradients(mesh)
    nen = mesh.elements.shape[1]
    m = np.zeros(mesh.n_nodes)
    np.add.at(m, mesh.elements.ravel(), np.repeat(mat.density * vol / nen, nen))
    return m


def stability_dt(mesh: SolidMesh, mat: MaterialParams) -> float:
    """Conservative explicit step bound: 0.5 * min element edge / dilatational
    wave speed sqrt((kappa + 4 mu / 3) / rho)."""
    wave = np.sqrt((mat.bulk_modulus + 4.0 * mat.shear_modulus / 3.0) / mat.density)
    local = HEX8_EDGES if mesh.element_kind == "hex8" else TET4_EDGES
    pairs = mesh.elements[:, np.asarray(local)]
    d = mesh.rest_positions[pairs[..., 0]] - mesh.rest_positions[pairs[..., 1]]
    lmin = float(np.min(np.linalg.norm(d, axis=-1)))
    return 0.5 * lmin / wave


def strain_energy(mesh: SolidMesh, q: np.ndarray, mat: MaterialParams) -> float:
    """Total hyperelastic strain energy at configuration q (no Prony)."""
    grad, vol = _shape_gradients(mesh)
    x = q[mesh.elements]
    f = np.einsum("mia,mib->mab", x, grad)
    detf = np.linalg.det(f)
    c = np.einsum("mia,mib->mab", f, f)
    i1 = np.trace(c, axis1=1, axis2=2)
    trc2 = np.einsum("mab,mba->m", c, c)
    i2 = 0.5 * (i1 * i1 - trc2)
    i1b = detf ** (-2.0 / 3.0) * i1
    i2b = detf ** (-4.0 / 3.0) * i2
    psi = mat.c10 * (i1b - 3.0) + mat.c01 * (i2b - 3.0) + (1.0 / mat.d1) * (detf - 1.0) ** 2
    return float(np.sum(vol * psi))


def kinetic_energy(mesh: SolidMesh, v: np.ndarray, mat: MaterialParams) -> float:
    m = lumped_masses(mesh, mat)
    return float(0.5 * np.sum(m * np.sum(v * v, axis=1)))


def simulate(mesh: SolidMesh, load: LoadCase, nt: int, dt: float,
             material: MaterialParams | None = None) -> Trajectory:
    """Explicit rollout of nt steps; snapshot every step (nt+1 states).

    Scheme per step: nodal accelerations from the lumped-mass balance of
    external and internal forces, then v += dt*a, q += dt*v (the velocity
    form of central differences).  Dirichlet nodes stay pinned with zero
    velocity.  Prony history advances once per step.
    """
    mat = material or mesh.material
    if mat is None:
        raise ValueError("no material: set mesh.material or pass one explicitly")
    if nt < 1:
        raise ValueError("nt must be at least 1")
    if mesh.fixed_nodes.size == 0:
        raise ValueError("mesh needs a non-empty Dirichlet set for dynamics")
    bound = stability_dt(mesh, mat)
    if dt > bound:
        raise ValueError(f"dt={dt:g} exceeds the stability estimate {bound:g}")
    load.check_against(mesh)

    grad, vol = _shape_gradients(mesh)
    masses = lumped_masses(mesh, mat)
    elements = mesh.elements
    nen = elements.shape[1]
    fixed = mesh.fixed_nodes
    rest_fixed = mesh.rest_positions[fixed]

    q = mesh.rest_positions.copy()
    v = np.zeros_like(q)
    hist = InternalVars.zero(mesh.n_elements, len(mat.prony))

    # per-node volume weights for stress averaging
    wsum = np.zeros(mesh.n_nodes)
    np.add.at(wsum, elements.ravel(), np.repeat(vol / nen, nen))

    snapshots: list[StateField] = []
    flat = elements.ravel()
    for step in range(nt + 1):
        x = q[elements]
        f_def = np.einsum("mia,mib->mab", x, grad)
        s_inst, detf = _pk2_batch(f_def, mat)
        if np.any(detf <= 0.0) or not np.all(np.isfinite(detf)):
            bad = ~(np.isfinite(detf) & (detf > 0.0))
            raise InvertedElementError(int(np.argmax(bad)), step=step)
        s_dev = sym_to_voigt(s_inst)
        s_dev = _deviator_voigt(s_dev)
        if step > 0 and mat.prony:
            _, hist.h = prony_update(s_dev, hist.s_dev_prev, hist.h, dt, mat.prony)
        s_total = s_inst - voigt_to_sym(sum(hist.h)) if mat.prony else s_inst
        hist.s_dev_prev = s_dev

        # nodal Cauchy stress: rest-volume-weighted element average
        cauchy = np.einsum("mab,mcb->mac", np.einsum("mab,mbc->mac", f_def, s_total), f_def)
        cauchy /= detf[:, None, None]
        sig_v = sym_to_voigt(cauchy)
        sig_nodes = np.zeros((mesh.n_nodes, 6))
        np.add.at(sig_nodes, flat, np.repeat(sig_v, nen, axis=0) * np.repeat(vol / nen, nen)[:, None])
        sig_nodes /= wsum[:, None]

        snapshots.append(StateField(q.copy(), v.copy(), sig_nodes, time=step * dt))
        if step == nt:
            break

        p = np.einsum("mab,mbc->mac", f_def, s_total)
        f_el = np.einsum("mab,mib->mia", p, grad) * vol[:, None, None]
        f_int = np.zeros_like(q)
        np.add.at(f_int, flat, f_el.reshape(-1, 3))

        f_ext = load.nodal_forces(mesh.n_nodes, step)
        a = (f_ext - f_int) / masses[:, None]
        v = v + dt * a
        v[fixed] = 0.0
        q = q + dt * v
        q[fixed] = rest_fixed

    return Trajectory(load=load, dt=dt, snapshots=snapshots)


def generate_dataset(mesh: SolidMesh, mat: MaterialParams, load_positions: int,
                     force_magnitude: float, nt: int, dt: float, split: float,
                     seed: int = 0) -> tuple[list[Trajectory], list[Trajectory]]:
    """Run the oracle for seeded surface load positions and split the cases.

    Load nodes are drawn (without replacement) from surface nodes outside the
    Dirichlet set; the force points along the inward surface normal at the
    node.  Returns (train, test) lists, disjoint and complete.
    """
    if not 0.0 < split < 1.0:
        raise ValueError("split fraction must be in (0, 1)")
    eligible = np.setdiff1d(mesh.surface_nodes(), mesh.fixed_nodes)
    if eligible.size < load_positions:
        raise ValueError(f"only {eligible.size} eligible surface nodes for "
                         f"{load_positions} load positions")
    rng = np.random.default_rng(seed)
    chosen = rng.choice(eligible, size=load_positions, replace=False)
    normals = mesh.vertex_normals()

    cases: list[Trajectory] = []
    for node in chosen:
        node = int(node)
        force = -force_magnitude * normals[node]
        load = LoadCase((node,), force, active_steps=(0, nt))
        cases.append(simulate(mesh, load, nt, dt, material=mat))

    n_train = int(round(split * len(cases)))
    order = rng.permutation(len(cases))
    train = [cases[i] for i in order[:n_train]]
    test = [cases[i] for i in order[n_train:]]
    return train, test


# ---------------------------------------------------------------------------
# traj/1 dataset files


def save_dataset(ds: Dataset, path: str, test: list[Trajectory] | None = None,
                 mesh_ref: str | None = None) -> None:
    """Write a traj/1 file; the mesh goes to a sibling mesh/1 file.

    Field order is fixed so identical inputs produce identical bytes.  When
    ``test`` is given, its cases are appended after the training cases and a
    split index records the boundary.
    """
    if mesh_ref is None:
        base = os.path.basename(path)
        stem = base[:-5] if base.endswith(".json") else base
        mesh_ref = stem + ".mesh.json"
    save_mesh(ds.mesh, os.path.join(os.path.dirname(path) or ".", mesh_ref))

    all_cases = list(ds.trajectories) + list(test or [])
    doc = {
        "schema": TRAJ_SCHEMA,
        "mesh_ref": mesh_ref,
        "dt": ds.dt,
        "material": ds.material.to_dict(),
        "n_train": len(ds.trajectories),
        "cases": [
            {
                "loaded_nodes": list(tr.load.loaded_nodes),
                "force": tr.load.force_per_node.tolist(),
                "active_steps": list(tr.load.active_steps),
                "snapshots": [
                    {"t": s.time, "q": s.q.tolist(), "v": s.v.tolist(), "sigma": s.sigma.tolist()}
                    for s in tr.snapshots
                ],
            }
            for tr in all_cases
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def load_dataset(path: str) -> tuple[Dataset, list[Trajectory]]:
    """Read a traj/1 file; returns (train dataset, test trajectories)."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"dataset file is not valid JSON: {exc}", location=path) from exc
    if doc.get("schema") != TRAJ_SCHEMA:
        raise SchemaError(f"expected schema {TRAJ_SCHEMA!r}, got {doc.get('schema')!r}", location=path)
    material = MaterialParams.from_dict(doc["material"])
    mesh = load_mesh(os.path.join(os.path.dirname(path) or ".", doc["mesh_ref"]), material)
    dt = float(doc["dt"])
    cases: list[Trajectory] = []
    for case in doc["cases"]:
        load = LoadCase(tuple(case["loaded_nodes"]), np.asarray(case["force"]),
                        tuple(case["active_steps"]))
        snaps = [StateField(np.asarray(s["q"]), np.asarray(s["v"]), np.asarray(s["sigma"]),
                            time=float(s["t"])) for s in case["snapshots"]]
        cases.append(Trajectory(load, dt, snaps))
    n_train = int(doc.get("n_train", len(cases)))
    ds = Dataset(mesh=mesh, material=material, dt=dt, trajectories=cases[:n_train])
    return ds, cases[n_train:]


def make_tet_box_mesh(h: float, w: float, l: float, nx: int, ny: int, nz: int,
                      material: MaterialParams | None = None) -> SolidMesh:
    """Tetrahedral box: the structured grid with each cell cut into six tets.

    Stand-in geometry for tetrahedral assets; the z=0 face is clamped.
    """
    from .mesh import build_beam_mesh  # reuse the grid/node layout
    hexmesh = build_beam_mesh(h, w, l, nx, ny, nz)
    # six-tet subdivision of the brick, all sharing the 0-6 diagonal
    cuts = ((0, 1, 2, 6), (0, 2, 3, 6), (0, 3, 7, 6),
            (0, 7, 4, 6), (0, 4, 5, 6), (0, 5, 1, 6))
    tets = []
    for el in hexmesh.elements:
        for cut in cuts:
            tet = [int(el[i]) for i in cut]
            d = hexmesh.rest_positions[tet[1:]] - hexmesh.rest_positions[tet[0]]
            if np.linalg.det(d) < 0:
                tet[1], tet[2] = tet[2], tet[1]
            tets.append(tet)
    tets = np.asarray(tets, dtype=np.int64)
    surface = extract_surface(tets, "tet4")
    return SolidMesh(hexmesh.rest_positions, tets, "tet4", surface,
                     hexmesh.fixed_nodes, material)
