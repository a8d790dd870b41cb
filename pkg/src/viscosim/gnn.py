"""Encode-process-decode graph network emitting per-node metriplectic outputs.

Node and edge features are encoded to a shared hidden width, refined by K
message-passing blocks (edge update from both endpoint states, sum
aggregation of incoming messages, node update; residual connections on
both), then four heads decode the energy gradient, entropy gradient and the
L/M operator parameters.

All MLPs are shared across nodes and edges.  Aggregation uses the
order-independent fixed-point segment sum from :mod:`viscosim.autodiff`, so
relabeling the mesh permutes the outputs bit-exactly.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Mlp, Tensor, init_mlp, mlp_forward
from .generic import D, N_L_PARAMS, N_M_PARAMS, GenericOutputs
from .graph import (EDGE_FEATURE_WIDTH, NODE_FEATURE_WIDTH, GraphIndex,
                    Normalization, SimGraph)

CKPT_SCHEMA = "ckpt/1"

DEFAULT_HIDDEN = 32
DEFAULT_K = 6


@dataclass
class ProcessorBlock:
    edge_update: Mlp   # 3*hidden -> hidden
    node_update: Mlp   # 2*hidden -> hidden


@dataclass
class TignnModel:
    node_encoder: Mlp
    edge_encoder: Mlp
    blocks: list[ProcessorBlock]
    de_head: Mlp
    ds_head: Mlp
    l_head: Mlp
    m_head: Mlp
    hidden: int

    @property
    def k_steps(self) -> int:
        return len(self.blocks)

    def components(self) -> list[tuple[str, Mlp]]:
        out = [("node_encoder", self.node_encoder), ("edge_encoder", self.edge_encoder)]
        for i, blk in enumerate(self.blocks):
            out.append((f"block{i}.edge_update", blk.edge_update))
            out.append((f"block{i}.node_update", blk.node_update))
        out += [("de_head", self.de_head), ("ds_head", self.ds_head),
                ("l_head", self.l_head), ("m_head", self.m_head)]
        return out

    def params(self) -> list[Tensor]:
        return [p for _, mlp in self.components() for p in mlp.params()]


def build_model(hidden: int = DEFAULT_HIDDEN, k_steps: int = DEFAULT_K,
                seed: int = 0, head_scale: float = 1.0) -> TignnModel:
    """Xavier-initialized network; ``head_scale`` shrinks the decoder output
    layers so the quadratic rate L dE + M dS starts small and grows as
    training shapes the operators (1.0 = plain Xavier)."""
    rng = np.random.default_rng(seed)
    blocks = [ProcessorBlock(
        edge_update=init_mlp([3 * hidden, hidden, hidden], rng, f"block{i}.edge"),
        node_update=init_mlp([2 * hidden, hidden, hidden], rng, f"block{i}.node"),
    ) for i in range(k_steps)]
    model = TignnModel(
        node_encoder=init_mlp([NODE_FEATURE_WIDTH, hidden, hidden], rng, "node_enc"),
        edge_encoder=init_mlp([EDGE_FEATURE_WIDTH, hidden, hidden], rng, "edge_enc"),
        blocks=blocks,
        de_head=init_mlp([hidden, hidden, D], rng, "de_head"),
        ds_head=init_mlp([hidden, hidden, D], rng, "ds_head"),
        l_head=init_mlp([hidden, hidden, N_L_PARAMS], rng, "l_head"),
        m_head=init_mlp([hidden, hidden, N_M_PARAMS], rng, "m_head"),
        hidden=hidden,
    )
    if head_scale != 1.0:
        for head in (model.de_head, model.ds_head, model.l_head, model.m_head):
            head.layers[-1][0].data *= head_scale
    return model


def parameter_count(model: TignnModel) -> int:
    return sum(p.data.size for p in model.params())


@dataclass
class TensorOutputs:
    """Differentiable twin of :class:`GenericOutputs`."""

    dE: Tensor
    dS: Tensor
    l_params: Tensor
    m_params: Tensor


def forward_tensors(model: TignnModel, node_feat: Tensor, edge_feat: Tensor,
                    gi: GraphIndex) -> TensorOutputs:
    """Forward pass over autodiff tensors (shared by training and inference)."""
    h = mlp_forward(model.node_encoder, node_feat)
    e = mlp_forward(model.edge_encoder, edge_feat)
    for blk in model.blocks:
        h_src = ad.gather_rows(h, gi.src, gi.by_src)
        h_dst = ad.gather_rows(h, gi.dst, gi.by_dst)
        e = ad.add(e, mlp_forward(blk.edge_update, ad.concat_cols([h_src, h_dst, e])))
        agg = ad.segment_sum(e, gi.by_dst)
        h = ad.add(h, mlp_forward(blk.node_update, ad.concat_cols([h, agg])))
    return TensorOutputs(
        dE=mlp_forward(model.de_head, h),
        dS=mlp_forward(model.ds_head, h),
        l_params=mlp_forward(model.l_head, h),
        m_params=mlp_forward(model.m_head, h),
    )


def forward(model: TignnModel, g: SimGraph) -> GenericOutputs:
    """Evaluate the network on one graph; returns plain arrays."""
    if g.node_features.shape[1] != model.node_encoder.in_width:
        raise ValueError(f"node feature width {g.node_features.shape[1]} != "
                         f"encoder width {model.node_encoder.in_width}")
    if g.edge_features.shape[1] != model.edge_encoder.in_width:
        raise ValueError(f"edge feature width {g.edge_features.shape[1]} != "
                         f"encoder width {model.edge_encoder.in_width}")
    out = forward_tensors(model, Tensor(g.node_features), Tensor(g.edge_features),
                          g.get_index())
    return GenericOutputs(out.dE.data, out.dS.data, out.l_params.data, out.m_params.data)


# ---------------------------------------------------------------------------
# checkpoints


@dataclass
class TrainedSimulator:
    """A model plus the frozen normalization it was trained with."""

    model: TignnModel
    stats: Normalization
    seed: int = 0
    config_hash: str = ""
    meta: dict = field(default_factory=dict)


def config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()[:16]


def save_checkpoint(sim: TrainedSimulator, path: str) -> None:
    weights = {}
    for name, mlp in sim.model.components():
        weights[name] = [[w.data.tolist(), b.data.tolist()] for w, b in mlp.layers]
    doc = {
        "schema": CKPT_SCHEMA,
        "arch": {"hidden": sim.model.hidden, "k_steps": sim.model.k_steps},
        "weights": weights,
        "stats": sim.stats.to_dict(),
        "seed": sim.seed,
        "config_hash": sim.config_hash,
        "meta": sim.meta,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def load_checkpoint(path: str) -> TrainedSimulator:
    from .errors import SchemaError

    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("schema") != CKPT_SCHEMA:
        raise SchemaError(f"expected schema {CKPT_SCHEMA!r}, got {doc.get('schema')!r}", location=path)
    model = build_model(hidden=int(doc["arch"]["hidden"]), k_steps=int(doc["arch"]["k_steps"]))
    for name, mlp in model.components():
        stored = doc["weights"][name]
        if len(stored) != len(mlp.layers):
            raise SchemaError(f"layer count mismatch in component {name}", location=path)
        for (w, b), (wdat, bdat) in zip(mlp.layers, stored):
            w.data = np.asarray(wdat, dtype=np.float64).reshape(w.data.shape)
            b.data = np.asarray(bdat, dtype=np.float64).reshape(b.data.shape)
    return TrainedSimulator(
        model=model,
        stats=Normalization.from_dict(doc["stats"]),
        seed=int(doc.get("seed", 0)),
        config_hash=doc.get("config_hash", ""),
        meta=doc.get("meta", {}),
    )
