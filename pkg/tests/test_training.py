import numpy as np
import pytest

from viscosim.errors import RolloutDivergenceError
from viscosim.fem import Dataset, Trajectory
from viscosim.generic import GenericOutputs
from viscosim.gnn import build_model, forward
from viscosim.graph import Normalization, mesh_to_graph, normalization_stats
from viscosim.mesh import LoadCase, SolidMesh, StateField, build_beam_mesh
from viscosim.training import (TrainConfig, boxplot_stats, degeneracy_rms, evaluate,
                               loss, rollout, rollout_errors, train, write_error_csv,
                               write_loss_csv)

from test_generic import toy_operators


def tet_mesh():
    nodes = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]])
    elements = np.array([[0, 1, 2, 3]])
    surface = np.array([[0, 2, 1], [0, 1, 3], [1, 2, 3], [0, 3, 2]])
    return SolidMesh(nodes, elements, "tet4", surface, np.array([0]))


def synthetic_trajectory(mesh, nt=8, dt=0.05, amp=0.05, seed=0):
    """Smooth damped oscillation of the free nodes; rest at t=0."""
    rng = np.random.default_rng(seed)
    direction = rng.normal(size=(mesh.n_nodes, 3))
    direction[mesh.fixed_nodes] = 0.0
    load = LoadCase((), np.zeros(3))
    snaps = []
    omega = 2.0
    for t in range(nt + 1):
        tau = t * dt
        s = amp * np.sin(omega * tau) * np.exp(-0.3 * tau)
        ds = amp * omega * np.cos(omega * tau) * np.exp(-0.3 * tau) \
            - 0.3 * s
        q = mesh.rest_positions + s * direction
        v = ds * direction
        sigma = np.tile((1.0 - np.cos(omega * tau)) * np.linspace(0.1, 0.6, 6),
                        (mesh.n_nodes, 1))
        snaps.append(StateField(q, v, sigma, time=tau))
    return Trajectory(load, dt, snaps)


@pytest.fixture(scope="module")
def toy_dataset():
    mesh = tet_mesh()
    trajs = [synthetic_trajectory(mesh, seed=s) for s in range(3)]
    return Dataset(mesh=mesh, material=None, dt=0.05, trajectories=trajs)


# ---------------------------------------------------------------------------
# loss


def test_loss_zero_when_rate_matches_and_degenerate():
    mesh = tet_mesh()
    lp, mp, de, ds = toy_operators(a=1.0, b=2.0, c=3.0)
    n = mesh.n_nodes
    out = GenericOutputs(np.tile(de, (n, 1)), np.tile(ds, (n, 1)),
                         np.tile(lp, (n, 1)), np.tile(mp, (n, 1)))
    rate = np.zeros(12)
    rate[0], rate[1], rate[2] = 2.0, -1.0, 3.0
    dt = 0.1
    z_t = StateField.rest(mesh)
    z_next = StateField(z_t.q + dt * np.tile(rate[:3], (n, 1)),
                        z_t.v + dt * np.tile(rate[3:6], (n, 1)),
                        z_t.sigma + dt * np.tile(rate[6:], (n, 1)), time=dt)
    total, data, deg = loss(out, z_t, z_next, dt, 0.5, Normalization.identity())
    assert data <= 1e-28
    assert deg <= 1e-28
    assert total <= 1e-28


def test_loss_unit_target():
    mesh = tet_mesh()
    n = mesh.n_nodes
    out = GenericOutputs(np.zeros((n, 12)), np.zeros((n, 12)),
                         np.zeros((n, 66)), np.zeros((n, 78)))
    z_t = StateField.rest(mesh)
    dt = 1.0
    z_next = StateField(z_t.q + 1.0, z_t.v + 1.0, z_t.sigma + 1.0, time=dt)
    total, data, deg = loss(out, z_t, z_next, dt, 1.0, Normalization.identity())
    assert data == pytest.approx(1.0)
    assert deg == 0.0


def test_loss_lambda_zero_is_pure_data_term():
    mesh = tet_mesh()
    rng = np.random.default_rng(0)
    n = mesh.n_nodes
    out = GenericOutputs(rng.normal(size=(n, 12)), rng.normal(size=(n, 12)),
                         rng.normal(size=(n, 66)), rng.normal(size=(n, 78)))
    z_t = StateField.rest(mesh)
    z_next = StateField(z_t.q + 0.1, z_t.v, z_t.sigma, time=0.1)
    t0, d0, _ = loss(out, z_t, z_next, 0.1, 0.0, Normalization.identity())
    assert t0 == d0


# ---------------------------------------------------------------------------
# train


def test_lr_zero_keeps_weights(toy_dataset):
    cfg = TrainConfig(epochs=1, batch_size=4, lr=0.0, seed=5, hidden=4, k_steps=1)
    ref = build_model(hidden=4, k_steps=1, seed=5)
    sim, history = train(toy_dataset, cfg)
    for p, q in zip(sim.model.params(), ref.params()):
        assert np.array_equal(p.data, q.data)
    assert len(history) == 1


def test_seed_determinism_bit_identical(toy_dataset):
    cfg = TrainConfig(epochs=3, batch_size=4, lr=1e-3, seed=9, hidden=4, k_steps=1)
    sim1, h1 = train(toy_dataset, cfg)
    sim2, h2 = train(toy_dataset, cfg)
    for p, q in zip(sim1.model.params(), sim2.model.params()):
        assert np.array_equal(p.data, q.data)
    assert h1 == h2


def test_toy_overfit_reaches_small_loss(toy_dataset):
    cfg = TrainConfig(epochs=1500, batch_size=24, lr=1e-2, lambda_deg=1e-2,
                      noise=0.0, seed=1, hidden=8, k_steps=2)
    sim, history = train(toy_dataset, cfg)
    assert history[-1]["data_term"] < 1e-3


def test_loss_history_csv(tmp_path, toy_dataset):
    cfg = TrainConfig(epochs=2, batch_size=8, lr=1e-3, seed=2, hidden=4, k_steps=1)
    _, history = train(toy_dataset, cfg)
    path = tmp_path / "loss.csv"
    write_loss_csv(str(path), history)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "epoch,data_term,degeneracy_term,total"
    assert len(lines) == 3


# ---------------------------------------------------------------------------
# rollout


def zero_rate_sim(mesh, hidden=4):
    model = build_model(hidden=hidden, k_steps=1, seed=0)
    for p in model.params():
        p.data = np.zeros_like(p.data)
    trajs = [synthetic_trajectory(mesh)]
    stats = normalization_stats(trajs, mesh)
    stats.target_mean = np.zeros(12)   # zero network output must mean zero rate
    from viscosim.gnn import TrainedSimulator

    return TrainedSimulator(model=model, stats=stats)


def test_rollout_zero_steps(toy_dataset):
    mesh = toy_dataset.mesh
    sim = zero_rate_sim(mesh)
    initial = StateField.rest(mesh)
    traj = rollout(sim, mesh, initial, LoadCase((), np.zeros(3)), 0, 0.05)
    assert len(traj.snapshots) == 1
    assert np.array_equal(traj.snapshots[0].q, initial.q)


def test_rollout_zero_model_is_constant(toy_dataset):
    mesh = toy_dataset.mesh
    sim = zero_rate_sim(mesh)
    traj = rollout(sim, mesh, StateField.rest(mesh), LoadCase((), np.zeros(3)), 5, 0.05)
    for snap in traj.snapshots:
        assert np.array_equal(snap.q, mesh.rest_positions)
        assert not snap.v.any()


def test_rollout_divergence_raises():
    mesh = tet_mesh()
    sim = zero_rate_sim(mesh)
    sim.stats.target_mean = np.full(12, np.nan)
    with pytest.raises(RolloutDivergenceError):
        rollout(sim, mesh, StateField.rest(mesh), LoadCase((), np.zeros(3)), 2, 0.05)


# ---------------------------------------------------------------------------
# evaluate + boxplots


def test_evaluate_identity_is_zero(toy_dataset):
    traj = toy_dataset.trajectories[0]
    rep = evaluate(traj, traj)
    for var in ("q", "v", "sigma"):
        assert rep.errors[var]
        assert all(e == 0.0 for e in rep.errors[var])


def test_evaluate_known_offset():
    mesh = tet_mesh()
    load = LoadCase((), np.zeros(3))
    q = np.tile([1.0, 0.0, 0.0], (mesh.n_nodes, 1))
    v = np.tile([1.0, 0.0, 0.0], (mesh.n_nodes, 1))
    sg = np.ones((mesh.n_nodes, 6))
    truth = Trajectory(load, 0.1, [StateField(q, v, sg), StateField(q, v, sg, time=0.1)])
    q2 = q + np.array([0.01, 0.0, 0.0])
    pred = Trajectory(load, 0.1, [StateField(q, v, sg), StateField(q2, v, sg, time=0.1)])
    rep = evaluate(pred, truth)
    assert rep.errors["q"] == [pytest.approx(0.01)]
    assert rep.errors["v"] == [0.0]


def test_evaluate_excludes_zero_reference():
    mesh = tet_mesh()
    load = LoadCase((), np.zeros(3))
    rest = StateField.rest(mesh)
    moved = StateField(rest.q + 0.1, rest.v + 0.1, rest.sigma, time=0.1)
    truth = Trajectory(load, 0.1, [rest.copy(), rest.copy()])   # sigma stays zero
    pred = Trajectory(load, 0.1, [rest.copy(), moved])
    rep = evaluate(pred, truth)
    assert rep.excluded["sigma"] == 1
    assert rep.excluded["v"] == 1
    assert not rep.errors["sigma"]


def test_boxplot_one_to_five():
    s = boxplot_stats([1, 2, 3, 4, 5])
    assert s == {"lw": 1.0, "lq": 2.0, "med": 3.0, "uq": 4.0, "uw": 5.0}


def test_boxplot_all_equal():
    s = boxplot_stats([4.2] * 7)
    assert all(v == 4.2 for v in s.values())


def test_boxplot_outlier_excluded_from_whisker():
    s = boxplot_stats([0, 0, 0, 0, 100])
    assert s["uq"] == 0.0
    assert s["uw"] == 0.0    # 100 sits beyond 1.5 IQR = 0
    assert s["lw"] == 0.0


def test_boxplot_empty_rejected():
    with pytest.raises(ValueError):
        boxplot_stats([])


def test_error_csv_schema(tmp_path, toy_dataset):
    mesh = toy_dataset.mesh
    sim = zero_rate_sim(mesh)
    rep = rollout_errors(sim, mesh, toy_dataset.trajectories)
    path = tmp_path / "errors.csv"
    write_error_csv(str(path), {"train": rep})
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "variable,split,lw,lq,med,uq,uw,n,excluded"
    assert len(lines) == 4
    assert lines[1].startswith("q,train,")


def test_degeneracy_rms_finite(toy_dataset):
    mesh = toy_dataset.mesh
    sim = zero_rate_sim(mesh)
    val = degeneracy_rms(sim, mesh, toy_dataset.trajectories)
    assert val == 0.0   # zero model has zero operators
