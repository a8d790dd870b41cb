"""Conversion of (mesh, state, loads) into the graph consumed by the network.

Node features (width 15): velocity (3), Cauchy stress Voigt (6), node-kind
one-hot free/fixed/loaded (3), external force (3).  Edge features (width 4):
relative position q_src - q_dst of the current configuration plus its norm.
Positions enter only through edge features, which makes every downstream
prediction exactly translation invariant.
"""
from __future__ import annotations

import weakref
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .mesh import STATE_WIDTH, LoadCase, SolidMesh, StateField

NODE_FEATURE_WIDTH = 15
EDGE_FEATURE_WIDTH = 4

# feature column spans
VEL = slice(0, 3)
SIG = slice(3, 9)
KIND = slice(9, 12)
FORCE = slice(12, 15)

KIND_FREE, KIND_FIXED, KIND_LOADED = 0, 1, 2


@dataclass
class GraphIndex:
    """Precomputed gather/scatter plans for one edge layout."""

    n: int
    src: np.ndarray
    dst: np.ndarray
    by_dst: ad.SegmentPlan   # message aggregation / dst-gather backward
    by_src: ad.SegmentPlan   # src-gather backward

    @classmethod
    def build(cls, n: int, src: np.ndarray, dst: np.ndarray) -> "GraphIndex":
        src = np.asarray(src, dtype=np.int64)
        dst = np.asarray(dst, dtype=np.int64)
        return cls(n, src, dst, ad.SegmentPlan(dst, n), ad.SegmentPlan(src, n))


@dataclass
class SimGraph:
    """Directed graph over mesh nodes; edges sorted by (dst, src)."""

    n_vertices: int
    node_features: np.ndarray   # (N, 15)
    src: np.ndarray             # (E,)
    dst: np.ndarray             # (E,) non-decreasing
    edge_features: np.ndarray   # (E, 4)
    index: GraphIndex | None = None   # cached plans (topology-dependent only)

    @property
    def n_edges(self) -> int:
        return self.src.shape[0]

    @property
    def directed_edges(self) -> np.ndarray:
        return np.stack([self.src, self.dst], axis=1)

    def in_starts(self) -> np.ndarray:
        """Segment starts of incoming edges per vertex (dst is sorted)."""
        return np.searchsorted(self.dst, np.arange(self.n_vertices))

    def get_index(self) -> GraphIndex:
        if self.index is None:
            self.index = GraphIndex.build(self.n_vertices, self.src, self.dst)
        return self.index


_mesh_index_cache: "weakref.WeakKeyDictionary[SolidMesh, GraphIndex]" = \
    weakref.WeakKeyDictionary()


@dataclass
class Normalization:
    """Frozen z-score statistics for node features, edge features and
    time-derivative targets.  Channels with zero spread get std 1 so the
    transform stays invertible."""

    node_mean: np.ndarray    # (15,)
    node_std: np.ndarray     # (15,)
    edge_mean: np.ndarray    # (4,)
    edge_std: np.ndarray     # (4,)
    target_mean: np.ndarray  # (12,)
    target_std: np.ndarray   # (12,)

    @classmethod
    def identity(cls) -> "Normalization":
        return cls(
            np.zeros(NODE_FEATURE_WIDTH), np.ones(NODE_FEATURE_WIDTH),
            np.zeros(EDGE_FEATURE_WIDTH), np.ones(EDGE_FEATURE_WIDTH),
            np.zeros(STATE_WIDTH), np.ones(STATE_WIDTH),
        )

    def normalize_nodes(self, x: np.ndarray) -> np.ndarray:
        return (x - self.node_mean) / self.node_std

    def denormalize_nodes(self, x: np.ndarray) -> np.ndarray:
        return x * self.node_std + self.node_mean

    def normalize_edges(self, x: np.ndarray) -> np.ndarray:
        return (x - self.edge_mean) / self.edge_std

    def normalize_target(self, x: np.ndarray) -> np.ndarray:
        return (x - self.target_mean) / self.target_std

    def denormalize_target(self, x: np.ndarray) -> np.ndarray:
        return x * self.target_std + self.target_mean

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in
                ("node_mean", "node_std", "edge_mean", "edge_std", "target_mean", "target_std")}

    @classmethod
    def from_dict(cls, d: dict) -> "Normalization":
        return cls(**{k: np.asarray(d[k], dtype=np.float64) for k in
                      ("node_mean", "node_std", "edge_mean", "edge_std", "target_mean", "target_std")})


def raw_node_features(mesh: SolidMesh, state: StateField, forces: np.ndarray) -> np.ndarray:
    """Unnormalized (N, 15) feature block.

    A node is flagged "loaded" while it carries a nonzero external force;
    Dirichlet membership wins over loading.
    """
    n = mesh.n_nodes
    feats = np.zeros((n, NODE_FEATURE_WIDTH))
    feats[:, VEL] = state.v
    feats[:, SIG] = state.sigma
    feats[:, FORCE] = forces
    loaded = np.any(forces != 0.0, axis=1)
    kind = np.full(n, KIND_FREE)
    kind[loaded] = KIND_LOADED
    kind[mesh.fixed_nodes] = KIND_FIXED
    feats[np.arange(n), 9 + kind] = 1.0
    return feats


def raw_edge_features(q: np.ndarray, src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    rel = q[src] - q[dst]
    norm = np.linalg.norm(rel, axis=1, keepdims=True)
    return np.concatenate([rel, norm], axis=1)


def mesh_to_graph(mesh: SolidMesh, state: StateField, load: LoadCase | None = None,
                  stats: Normalization | None = None,
                  node_forces: np.ndarray | None = None,
                  step: int = 0) -> SimGraph:
    """Build the network input graph for one configuration.

    ``load`` contributes its constant per-node force when active at ``step``;
    ``node_forces`` (an (N, 3) array, e.g. contact or poke forces) is added
    on top.  Edge connectivity is the mesh topology; edge features use the
    deformed positions in ``state``.
    """
    if state.n_nodes != mesh.n_nodes:
        raise ValueError(f"state has {state.n_nodes} nodes, mesh has {mesh.n_nodes}")
    forces = np.zeros((mesh.n_nodes, 3))
    if load is not None:
        forces += load.nodal_forces(mesh.n_nodes, step)
    if node_forces is not None:
        forces = forces + np.asarray(node_forces, dtype=np.float64)

    nf = raw_node_features(mesh, state, forces)
    src, dst = mesh.directed_edges
    ef = raw_edge_features(state.q, src, dst)
    if stats is not None:
        nf = stats.normalize_nodes(nf)
        ef = stats.normalize_edges(ef)
    gi = _mesh_index_cache.get(mesh)
    if gi is None:
        gi = _mesh_index_cache[mesh] = GraphIndex.build(mesh.n_nodes, src, dst)
    return SimGraph(mesh.n_nodes, nf, src, dst, ef, index=gi)


def normalization_stats(trajectories, mesh: SolidMesh) -> Normalization:
    """Population mean/std per channel over every snapshot of a dataset.

    Covers node features, edge features (which need the mesh connectivity),
    and the finite-difference targets (z[t+1] - z[t]) / dt.
    """
    trajectories = list(trajectories)
    if not trajectories:
        raise ValueError("normalization needs at least one trajectory")
    src, dst = mesh.directed_edges

    node_blocks, edge_blocks, target_blocks = [], [], []
    for traj in trajectories:
        for t, snap in enumerate(traj.snapshots):
            forces = traj.load.nodal_forces(mesh.n_nodes, t)
            node_blocks.append(raw_node_features(mesh, snap, forces))
            edge_blocks.append(raw_edge_features(snap.q, src, dst))
        zs = np.stack([s.as_matrix() for s in traj.snapshots])
        target_blocks.append((zs[1:] - zs[:-1]).reshape(-1, STATE_WIDTH) / traj.dt)

    def stats_of(blocks):
        data = np.concatenate(blocks, axis=0)
        mean = data.mean(axis=0)
        std = data.std(axis=0)
        std[std == 0.0] = 1.0
        return mean, std

    nm, ns = stats_of(node_blocks)
    em, es = stats_of(edge_blocks)
    tm, ts = stats_of(target_blocks)
    return Normalization(nm, ns, em, es, tm, ts)
