"""Solid meshes, per-node state, and load cases.

A :class:`SolidMesh` holds the rest geometry of one deformable body:
hexahedral (``hex8``) or tetrahedral (``tet4``) connectivity, an outward
oriented surface triangulation, and the Dirichlet node set that pins the
body in space.  Instances are treated as immutable after construction and
may be shared freely across threads.

Stress components use Voigt order (xx, yy, zz, xy, yz, xz) everywhere.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import SchemaError
from .materials import MaterialParams

MESH_SCHEMA = "mesh/1"

VOIGT_ORDER = ("xx", "yy", "zz", "xy", "yz", "xz")

# Local node numbering: hex8 corners at (0/1, 0/1, 0/1) of the unit brick,
# counter-clockwise bottom face 0-1-2-3 then the top face 4-5-6-7 above it.
HEX8_EDGES = (
    (0, 1), (1, 2), (2, 3), (3, 0),
    (4, 5), (5, 6), (6, 7), (7, 4),
    (0, 4), (1, 5), (2, 6), (3, 7),
)
HEX8_FACES = (
    (0, 3, 2, 1), (4, 5, 6, 7),
    (0, 1, 5, 4), (1, 2, 6, 5),
    (2, 3, 7, 6), (3, 0, 4, 7),
)
TET4_EDGES = ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))
TET4_FACES = ((0, 2, 1), (0, 1, 3), (1, 2, 3), (0, 3, 2))

_NODES_PER_ELEMENT = {"hex8": 8, "tet4": 4}


@dataclass(eq=False)
class SolidMesh:
    """Rest geometry plus boundary information for one body (identity
    semantics: instances are cache keys for derived graph structure)."""

    rest_positions: np.ndarray      # (N, 3) float64
    elements: np.ndarray            # (M, 8) or (M, 4) int
    element_kind: str               # "hex8" | "tet4"
    surface_triangles: np.ndarray   # (T, 3) int, outward orientation
    fixed_nodes: np.ndarray         # sorted int array (Dirichlet set)
    material: MaterialParams | None = None

    def __post_init__(self):
        self.rest_positions = np.asarray(self.rest_positions, dtype=np.float64)
        self.elements = np.asarray(self.elements, dtype=np.int64)
        self.surface_triangles = np.asarray(self.surface_triangles, dtype=np.int64).reshape(-1, 3)
        self.fixed_nodes = np.unique(np.asarray(self.fixed_nodes, dtype=np.int64))
        if self.element_kind not in _NODES_PER_ELEMENT:
            raise SchemaError(f"unknown element kind {self.element_kind!r}")
        want = _NODES_PER_ELEMENT[self.element_kind]
        if self.elements.ndim != 2 or self.elements.shape[1] != want:
            raise SchemaError(
                f"{self.element_kind} elements need {want} nodes, got shape {self.elements.shape}"
            )
        n = self.n_nodes
        for name, arr in (("element", self.elements), ("surface triangle", self.surface_triangles)):
            if arr.size and (arr.min() < 0 or arr.max() >= n):
                bad = int(np.argwhere((arr < 0) | (arr >= n))[0][0])
                raise SchemaError(f"{name} {bad} references a node outside [0, {n})", location=f"{name} {bad}")
        if self.fixed_nodes.size and (self.fixed_nodes.min() < 0 or self.fixed_nodes.max() >= n):
            raise SchemaError("fixed node index out of range")

    @property
    def n_nodes(self) -> int:
        return self.rest_positions.shape[0]

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    @cached_property
    def free_mask(self) -> np.ndarray:
        mask = np.ones(self.n_nodes, dtype=bool)
        mask[self.fixed_nodes] = False
        return mask

    @cached_property
    def undirected_edges(self) -> np.ndarray:
        """Unique node pairs (a < b) sharing an element edge, lexsorted."""
        local = HEX8_EDGES if self.element_kind == "hex8" else TET4_EDGES
        pairs = self.elements[:, np.asarray(local)]        # (M, n_edges, 2)
        pairs = pairs.reshape(-1, 2)
        pairs = np.sort(pairs, axis=1)
        return np.unique(pairs, axis=0)

    @cached_property
    def directed_edges(self) -> tuple[np.ndarray, np.ndarray]:
        """(src, dst) arrays with both directions, sorted by (dst, src).

        The fixed ordering is what makes message aggregation downstream
        deterministic.
        """
        und = self.undirected_edges
        src = np.concatenate([und[:, 0], und[:, 1]])
        dst = np.concatenate([und[:, 1], und[:, 0]])
        order = np.lexsort((src, dst))
        return src[order].copy(), dst[order].copy()

    @cached_property
    def mean_edge_length(self) -> float:
        und = self.undirected_edges
        d = self.rest_positions[und[:, 0]] - self.rest_positions[und[:, 1]]
        return float(np.mean(np.linalg.norm(d, axis=1)))

    def surface_nodes(self) -> np.ndarray:
        return np.unique(self.surface_triangles)

    def vertex_normals(self) -> np.ndarray:
        """Area-weighted outward normals at surface nodes, zero elsewhere."""
        tri = self.surface_triangles
        p = self.rest_positions
        n = np.cross(p[tri[:, 1]] - p[tri[:, 0]], p[tri[:, 2]] - p[tri[:, 0]])
        out = np.zeros_like(p)
        for k in range(3):
            np.add.at(out, tri[:, k], n)
        lens = np.linalg.norm(out, axis=1)
        nz = lens > 0
        out[nz] /= lens[nz, None]
        return out


@dataclass
class NodeState:
    """State of one node: position q, velocity v, Cauchy stress in Voigt order."""

    q: np.ndarray       # (3,)
    v: np.ndarray       # (3,)
    sigma: np.ndarray   # (6,) Voigt (xx, yy, zz, xy, yz, xz)

    @property
    def z(self) -> np.ndarray:
        """Flat 12-vector (q, v, sigma)."""
        return np.concatenate([self.q, self.v, self.sigma])


STATE_WIDTH = 12  # q(3) + v(3) + sigma(6)


@dataclass
class StateField:
    """Per-node state arrays for a whole mesh at one instant."""

    q: np.ndarray       # (N, 3)
    v: np.ndarray       # (N, 3)
    sigma: np.ndarray   # (N, 6)
    time: float = 0.0

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=np.float64)
        self.v = np.asarray(self.v, dtype=np.float64)
        self.sigma = np.asarray(self.sigma, dtype=np.float64)
        n = self.q.shape[0]
        if self.v.shape != (n, 3) or self.sigma.shape != (n, 6):
            raise ValueError("q, v, sigma must agree on node count")

    @classmethod
    def rest(cls, mesh: SolidMesh) -> "StateField":
        n = mesh.n_nodes
        return cls(mesh.rest_positions.copy(), np.zeros((n, 3)), np.zeros((n, 6)), time=0.0)

    @property
    def n_nodes(self) -> int:
        return self.q.shape[0]

    def node(self, i: int) -> NodeState:
        return NodeState(self.q[i].copy(), self.v[i].copy(), self.sigma[i].copy())

    def as_matrix(self) -> np.ndarray:
        """(N, 12) stacked (q, v, sigma)."""
        return np.concatenate([self.q, self.v, self.sigma], axis=1)

    def copy(self) -> "StateField":
        return StateField(self.q.copy(), self.v.copy(), self.sigma.copy(), self.time)


@dataclass(frozen=True)
class LoadCase:
    """Constant nodal forces on a set of nodes over a step window.

    ``active_steps`` is a half-open step range [start, stop): the force acts
    while advancing from step t to t+1 for start <= t < stop.
    """

    loaded_nodes: tuple[int, ...]
    force_per_node: np.ndarray            # (3,)
    active_steps: tuple[int, int] = (0, 1 << 30)

    def __post_init__(self):
        object.__setattr__(self, "loaded_nodes", tuple(sorted(int(i) for i in self.loaded_nodes)))
        f = np.asarray(self.force_per_node, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(f)):
            raise ValueError("load force must be finite")
        object.__setattr__(self, "force_per_node", f)

    def active_at(self, step: int) -> bool:
        return self.active_steps[0] <= step < self.active_steps[1]

    def nodal_forces(self, n_nodes: int, step: int = 0) -> np.ndarray:
        out = np.zeros((n_nodes, 3))
        if self.loaded_nodes and self.active_at(step):
            out[list(self.loaded_nodes)] = self.force_per_node
        return out

    def check_against(self, mesh: SolidMesh):
        fixed = set(int(i) for i in mesh.fixed_nodes)
        overlap = fixed.intersection(self.loaded_nodes)
        if overlap:
            raise ValueError(f"loaded nodes overlap Dirichlet set: {sorted(overlap)}")
        if self.loaded_nodes and max(self.loaded_nodes) >= mesh.n_nodes:
            raise ValueError("loaded node index out of range")


def build_beam_mesh(h: float, w: float, l: float, nx: int, ny: int, nz: int,
                    material: MaterialParams | None = None) -> SolidMesh:
    """Structured hex cantilever beam on [0,h] x [0,w] x [0,l].

    Produces (nx+1)(ny+1)(nz+1) nodes and nx*ny*nz brick elements with the
    z=0 end face clamped.
    """
    if h <= 0 or w <= 0 or l <= 0:
        raise ValueError("beam dimensions must be positive")
    if nx < 1 or ny < 1 or nz < 1:
        raise ValueError("subdivision counts must be at least 1")

    xs = np.linspace(0.0, h, nx + 1)
    ys = np.linspace(0.0, w, ny + 1)
    zs = np.linspace(0.0, l, nz + 1)

    def node_id(ix, iy, iz):
        return (ix * (ny + 1) + iy) * (nz + 1) + iz

    nodes = np.zeros(((nx + 1) * (ny + 1) * (nz + 1), 3))
    for ix in range(nx + 1):
        for iy in range(ny + 1):
            for iz in range(nz + 1):
                nodes[node_id(ix, iy, iz)] = (xs[ix], ys[iy], zs[iz])

    elements = []
    for ix in range(nx):
        for iy in range(ny):
            for iz in range(nz):
                n0 = node_id(ix, iy, iz)
                n1 = node_id(ix + 1, iy, iz)
                n2 = node_id(ix + 1, iy + 1, iz)
                n3 = node_id(ix, iy + 1, iz)
                elements.append([n0, n1, n2, n3,
                                 node_id(ix, iy, iz + 1), node_id(ix + 1, iy, iz + 1),
                                 node_id(ix + 1, iy + 1, iz + 1), node_id(ix, iy + 1, iz + 1)])
    elements = np.asarray(elements, dtype=np.int64)

    fixed = [node_id(ix, iy, 0) for ix in range(nx + 1) for iy in range(ny + 1)]
    surface = extract_surface(elements, "hex8")
    return SolidMesh(nodes, elements, "hex8", surface, np.asarray(fixed), material)


def extract_surface(elements: np.ndarray, element_kind: str) -> np.ndarray:
    """Outward-oriented boundary triangles (faces used by exactly one element)."""
    faces = HEX8_FACES if element_kind == "hex8" else TET4_FACES
    seen: dict[tuple, tuple] = {}
    count: dict[tuple, int] = {}
    for el in np.asarray(elements, dtype=np.int64):
        for face in faces:
            f = tuple(int(el[i]) for i in face)
            key = tuple(sorted(f))
            count[key] = count.get(key, 0) + 1
            seen[key] = f
    tris = []
    for key, f in seen.items():
        if count[key] != 1:
            continue
        if len(f) == 4:
            tris.append((f[0], f[1], f[2]))
            tris.append((f[0], f[2], f[3]))
        else:
            tris.append(f)
    tris.sort()
    return np.asarray(tris, dtype=np.int64).reshape(-1, 3)


def save_mesh(mesh: SolidMesh, path) -> None:
    doc = {
        "schema": MESH_SCHEMA,
        "element_kind": mesh.element_kind,
        "nodes": mesh.rest_positions.tolist(),
        "elements": mesh.elements.tolist(),
        "fixed": mesh.fixed_nodes.tolist(),
        "surface": mesh.surface_triangles.tolist(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def load_mesh(path, material: MaterialParams | None = None) -> SolidMesh:
    """Read and validate a mesh/1 JSON file.

    Surface triangles are recomputed from the volume connectivity when the
    file omits them.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"mesh file is not valid JSON: {exc}", location=str(path)) from exc

    if not isinstance(doc, dict) or doc.get("schema") != MESH_SCHEMA:
        raise SchemaError(f"expected schema {MESH_SCHEMA!r}, got {doc.get('schema')!r}", location=str(path))
    kind = doc.get("element_kind")
    if kind not in _NODES_PER_ELEMENT:
        raise SchemaError(f"element_kind must be one of {sorted(_NODES_PER_ELEMENT)}, got {kind!r}",
                          location=str(path))
    try:
        nodes = np.asarray(doc["nodes"], dtype=np.float64)
        elements = np.asarray(doc["elements"], dtype=np.int64)
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"malformed nodes/elements arrays: {exc}", location=str(path)) from exc
    if nodes.ndim != 2 or nodes.shape[1] != 3:
        raise SchemaError(f"nodes must be a list of 3-vectors, got shape {nodes.shape}", location=str(path))
    want = _NODES_PER_ELEMENT[kind]
    if elements.ndim != 2 or elements.shape[1] != want:
        raise SchemaError(
            f"{kind} elements must have {want} indices each (mixed element kinds are not supported)",
            location=str(path))
    n = nodes.shape[0]
    bad = np.argwhere((elements < 0) | (elements >= n))
    if bad.size:
        eid = int(bad[0][0])
        raise SchemaError(f"element {eid} references node {int(elements[tuple(bad[0])])} outside [0, {n})",
                          location=f"element {eid}")
    fixed = np.asarray(doc.get("fixed", []), dtype=np.int64)
    if "surface" in doc and doc["surface"]:
        surface = np.asarray(doc["surface"], dtype=np.int64)
    else:
        surface = extract_surface(elements, kind)
    return SolidMesh(nodes, elements, kind, surface, fixed, material)
