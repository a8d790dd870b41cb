"""Loss assembly, the training loop, learned rollouts, and error statistics.

The model is fitted to one-step rates: for each consecutive snapshot pair
the loss is the mean squared error between the predicted normalized rate
L dE + M dS and the normalized finite-difference target (z_next - z_t)/dt,
plus a penalty driving the degeneracy products L dS and M dE to zero.

Small Gaussian noise (a fraction of each channel's spread) perturbs the
input state during training - positions included, which feed the edge
features - and the target is measured against the perturbed state so the
model learns to damp drift during autoregressive rollouts.
"""
from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import AdamState, Tensor, adam_step, backward
from .errors import TrainingDivergenceError
from .fem import Dataset, Trajectory
from .generic import (GenericOutputs, assemble_operators, degeneracy_products,
                      degeneracy_residual, rate_from_params, step)
from .gnn import (DEFAULT_HIDDEN, DEFAULT_K, TignnModel, TrainedSimulator,
                  build_model, config_hash, forward, forward_tensors)
from .graph import (KIND, SIG, VEL, GraphIndex, Normalization, mesh_to_graph,
                    normalization_stats, raw_node_features)
from .mesh import STATE_WIDTH, LoadCase, SolidMesh, StateField


@dataclass
class TrainConfig:
    epochs: int = 600
    batch_size: int = 32            # graphs per optimizer step
    lr: float = 3e-3
    lambda_deg: float = 1e-2
    noise: float = 1e-3             # input noise as a fraction of channel std
    seed: int = 0
    k_steps: int = DEFAULT_K
    hidden: int = DEFAULT_HIDDEN
    head_scale: float = 1.0       # decoder output-layer init multiplier
    dt: float = 5e-2
    split: float = 0.8

    def __post_init__(self):
        if self.lambda_deg < 0 or self.noise < 0:
            raise ValueError("lambda_deg and noise must be non-negative")
        if not 0.0 < self.split < 1.0:
            raise ValueError("split must be in (0, 1)")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in
                ("epochs", "batch_size", "lr", "lambda_deg", "noise", "seed",
                 "k_steps", "hidden", "head_scale", "dt", "split")}


def loss(outputs: GenericOutputs, z_t: StateField, z_next: StateField, dt: float,
         lambda_deg: float, stats: Normalization) -> tuple[float, float, float]:
    """(total, data term, degeneracy term) for one snapshot pair.

    Reference implementation on plain arrays; the training loop evaluates
    the identical formula through the autodiff ops.
    """
    target = stats.normalize_target((z_next.as_matrix() - z_t.as_matrix()) / dt)
    rate = rate_from_params(outputs.l_params, outputs.m_params, outputs.dE, outputs.dS)
    diff = rate - target
    data = float(np.mean(diff * diff))
    lds, mde = degeneracy_products(outputs.l_params, outputs.m_params,
                                   outputs.dE, outputs.dS)
    deg = float(np.mean(lds * lds) + np.mean(mde * mde))
    return data + lambda_deg * deg, data, deg


def _loss_tensors(out, target: np.ndarray, lambda_deg: float):
    rate = rate_from_params(out.l_params, out.m_params, out.dE, out.dS)
    diff = ad.sub(rate, Tensor(target))
    data = ad.mean_all(ad.mul(diff, diff))
    lds, mde = degeneracy_products(out.l_params, out.m_params, out.dE, out.dS)
    deg = ad.add(ad.mean_all(ad.mul(lds, lds)), ad.mean_all(ad.mul(mde, mde)))
    return ad.add(data, ad.scale(deg, lambda_deg)), data, deg


class _PairBank:
    """Per-pair raw arrays for fast batched feature assembly."""

    def __init__(self, mesh: SolidMesh, trajectories: list[Trajectory], stats: Normalization):
        self.mesh = mesh
        self.stats = stats
        self.src, self.dst = mesh.directed_edges
        q, v, sg, fr, kind, z_next = [], [], [], [], [], []
        for traj in trajectories:
            for t in range(traj.nt):
                snap = traj.snapshots[t]
                forces = traj.load.nodal_forces(mesh.n_nodes, t)
                feats = raw_node_features(mesh, snap, forces)
                q.append(snap.q)
                v.append(snap.v)
                sg.append(snap.sigma)
                fr.append(forces)
                kind.append(feats[:, KIND])
                z_next.append(traj.snapshots[t + 1].as_matrix())
        self.q = np.stack(q)
        self.v = np.stack(v)
        self.sigma = np.stack(sg)
        self.forces = np.stack(fr)
        self.kind = np.stack(kind)
        self.z_next = np.stack(z_next)
        self.n_pairs = self.q.shape[0]
        self.dt = trajectories[0].dt

    def batch(self, sel: np.ndarray, rng: np.random.Generator | None, noise: float):
        """Assemble (node_features, edge_features, normalized targets) for a
        batch of pairs, block-stacked into one big graph."""
        st = self.stats
        n = self.mesh.n_nodes
        b = sel.size
        q = self.q[sel]
        v = self.v[sel]
        sg = self.sigma[sel]
        if rng is not None and noise > 0.0:
            q = q + rng.normal(size=q.shape) * (noise * st.edge_std[:3])
            v = v + rng.normal(size=v.shape) * (noise * st.node_std[VEL])
            sg = sg + rng.normal(size=sg.shape) * (noise * st.node_std[SIG])

        nf = np.concatenate([v, sg, self.kind[sel], self.forces[sel]], axis=2)
        nf = st.normalize_nodes(nf).reshape(b * n, -1)

        rel = q[:, self.src] - q[:, self.dst]
        norm = np.linalg.norm(rel, axis=2, keepdims=True)
        ef = st.normalize_edges(np.concatenate([rel, norm], axis=2))
        ef = ef.reshape(b * self.src.size, -1)

        z_t = np.concatenate([q, v, sg], axis=2)
        target = st.normalize_target((self.z_next[sel] - z_t) / self.dt)
        return nf, ef, target.reshape(b * n, STATE_WIDTH)

    def graph_index(self, b: int) -> GraphIndex:
        n, e = self.mesh.n_nodes, self.src.size
        offs_n = np.repeat(np.arange(b) * n, e)
        src = np.tile(self.src, b) + offs_n
        dst = np.tile(self.dst, b) + offs_n
        return GraphIndex.build(b * n, src, dst)


def train(dataset: Dataset, config: TrainConfig,
          log_every: int = 0) -> tuple[TrainedSimulator, list[dict]]:
    """Fit a model to the dataset's snapshot pairs.

    Deterministic for a fixed config: the same seed reproduces bit-identical
    weights.  Returns the trained simulator (model + frozen normalization)
    and one history row per epoch.
    """
    if not dataset.trajectories:
        raise ValueError("training needs a non-empty train split")
    stats = normalization_stats(dataset.trajectories, dataset.mesh)
    model = build_model(hidden=config.hidden, k_steps=config.k_steps,
                        seed=config.seed, head_scale=config.head_scale)
    params = model.params()
    opt = AdamState.for_params(params, lr=config.lr)
    rng = np.random.default_rng(config.seed + 1)

    bank = _PairBank(dataset.mesh, dataset.trajectories, stats)
    gi_cache: dict[int, GraphIndex] = {}
    history: list[dict] = []
    t0 = time.perf_counter()

    for epoch in range(config.epochs):
        order = rng.permutation(bank.n_pairs)
        sums = np.zeros(2)
        n_batches = 0
        for lo in range(0, bank.n_pairs, config.batch_size):
            sel = order[lo:lo + config.batch_size]
            gi = gi_cache.get(sel.size)
            if gi is None:
                gi = gi_cache[sel.size] = bank.graph_index(sel.size)
            nf, ef, target = bank.batch(sel, rng, config.noise)
            out = forward_tensors(model, Tensor(nf), Tensor(ef), gi)
            total, data, deg = _loss_tensors(out, target, config.lambda_deg)
            if not np.isfinite(total.data):
                raise TrainingDivergenceError(
                    f"non-finite loss at epoch {epoch}, batch {n_batches}")
            if config.lr > 0.0:
                backward(total)
                grads = [p.grad for p in params]
                adam_step(params, grads, opt)
                for p in params:
                    p.grad = None
            sums += (float(data.data), float(deg.data))
            n_batches += 1
        data_avg, deg_avg = sums / n_batches
        history.append({"epoch": epoch, "data_term": data_avg, "degeneracy_term": deg_avg,
                        "total": data_avg + config.lambda_deg * deg_avg})
        if log_every and (epoch % log_every == 0 or epoch == config.epochs - 1):
            dt_wall = time.perf_counter() - t0
            print(f"epoch {epoch:5d}  data {data_avg:.3e}  deg {deg_avg:.3e}  [{dt_wall:.1f}s]")

    sim = TrainedSimulator(model=model, stats=stats, seed=config.seed,
                           config_hash=config_hash(config.to_dict()),
                           meta={"config": config.to_dict()})
    return sim, history


def rollout(sim: TrainedSimulator, mesh: SolidMesh, initial: StateField,
            load: LoadCase, nt: int, dt: float) -> Trajectory:
    """Autoregressive rollout: graph -> network -> Euler step, nt times."""
    state = initial.copy()
    snaps = [state.copy()]
    for t in range(nt):
        g = mesh_to_graph(mesh, state, load, sim.stats, step=t)
        outputs = forward(sim.model, g)
        state = step(state, outputs, dt, sim.stats, mesh, step_index=t)
        snaps.append(state.copy())
    return Trajectory(load=load, dt=dt, snapshots=snaps)


# ---------------------------------------------------------------------------
# evaluation

VARIABLES = ("q", "v", "sigma")


@dataclass
class ErrorReport:
    """Per-snapshot relative L2 errors per state variable, plus the count of
    snapshots excluded because the reference field had (near-)zero norm."""

    errors: dict = field(default_factory=lambda: {v: [] for v in VARIABLES})
    excluded: dict = field(default_factory=lambda: {v: 0 for v in VARIABLES})

    def merge(self, other: "ErrorReport") -> "ErrorReport":
        for v in VARIABLES:
            self.errors[v].extend(other.errors[v])
            self.excluded[v] += other.excluded[v]
        return self

    def summary(self, variable: str) -> dict:
        return boxplot_stats(self.errors[variable])


def evaluate(predicted: Trajectory, truth: Trajectory) -> ErrorReport:
    """Relative L2 error per snapshot (t >= 1) and per variable."""
    if len(predicted.snapshots) != len(truth.snapshots):
        raise ValueError("trajectories must have the same number of snapshots")
    if predicted.dt != truth.dt:
        raise ValueError("trajectories must share dt")
    report = ErrorReport()
    for t in range(1, len(truth.snapshots)):
        ps, ts = predicted.snapshots[t], truth.snapshots[t]
        for var in VARIABLES:
            a = getattr(ps, "sigma" if var == "sigma" else var)
            b = getattr(ts, "sigma" if var == "sigma" else var)
            ref = float(np.linalg.norm(b))
            if ref < 1e-12:
                report.excluded[var] += 1
                continue
            report.errors[var].append(float(np.linalg.norm(a - b)) / ref)
    return report


def boxplot_stats(errors) -> dict:
    """Quartiles by inclusive linear interpolation; whiskers at the most
    extreme data points within 1.5 IQR of the quartile box."""
    arr = np.asarray(list(errors), dtype=np.float64)
    if arr.size == 0:
        raise ValueError("boxplot_stats needs a non-empty list")
    lq, med, uq = np.percentile(arr, [25.0, 50.0, 75.0], method="linear")
    iqr = uq - lq
    inside = arr[(arr >= lq - 1.5 * iqr) & (arr <= uq + 1.5 * iqr)]
    return {"lw": float(inside.min()), "lq": float(lq), "med": float(med),
            "uq": float(uq), "uw": float(inside.max())}


def degeneracy_rms(sim: TrainedSimulator, mesh: SolidMesh,
                   trajectories: list[Trajectory]) -> float:
    """RMS over nodes and snapshots of the combined degeneracy residual."""
    total, count = 0.0, 0
    for traj in trajectories:
        for t in range(traj.nt):
            g = mesh_to_graph(mesh, traj.snapshots[t], traj.load, sim.stats, step=t)
            out = forward(sim.model, g)
            ops = assemble_operators(out)
            r_l, r_m = degeneracy_residual(ops, out.dE, out.dS)
            total += float(np.sum(r_l ** 2 + r_m ** 2))
            count += r_l.size
    return float(np.sqrt(total / count))


def rollout_errors(sim: TrainedSimulator, mesh: SolidMesh,
                   trajectories: list[Trajectory]) -> ErrorReport:
    """Evaluate learned rollouts against every reference trajectory."""
    report = ErrorReport()
    for traj in trajectories:
        pred = rollout(sim, mesh, traj.snapshots[0], traj.load, traj.nt, traj.dt)
        report.merge(evaluate(pred, traj))
    return report


def write_error_csv(path: str, reports: dict) -> None:
    """``reports`` maps split name -> ErrorReport."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["variable", "split", "lw", "lq", "med", "uq", "uw", "n", "excluded"])
        for split, rep in reports.items():
            for var in VARIABLES:
                s = rep.summary(var)
                w.writerow([var, split, repr(s["lw"]), repr(s["lq"]), repr(s["med"]),
                            repr(s["uq"]), repr(s["uw"]),
                            len(rep.errors[var]), rep.excluded[var]])


def write_loss_csv(path: str, history: list[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "data_term", "degeneracy_term", "total"])
        for row in history:
            w.writerow([row["epoch"], repr(row["data_term"]),
                        repr(row["degeneracy_term"]), repr(row["total"])])
