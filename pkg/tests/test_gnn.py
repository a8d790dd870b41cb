import numpy as np

from viscosim.generic import D, N_L_PARAMS, N_M_PARAMS
from viscosim.gnn import (GraphIndex, TrainedSimulator, build_model, forward,
                          load_checkpoint, parameter_count, save_checkpoint)
from viscosim.graph import (EDGE_FEATURE_WIDTH, NODE_FEATURE_WIDTH, Normalization,
                            SimGraph, mesh_to_graph)
from viscosim.mesh import StateField, build_beam_mesh


def rest_graph(nx=1, ny=1, nz=2, seed=None):
    mesh = build_beam_mesh(1, 1, 2, nx, ny, nz)
    state = StateField.rest(mesh)
    if seed is not None:
        rng = np.random.default_rng(seed)
        state.v = rng.normal(size=state.v.shape)
        state.sigma = rng.normal(size=state.sigma.shape)
    return mesh, state, mesh_to_graph(mesh, state, stats=Normalization.identity())


def path_graph(n, feats, hops_feats=None):
    """Chain 0-1-...-n-1 as a SimGraph (both edge directions)."""
    src, dst = [], []
    for i in range(n - 1):
        src += [i, i + 1]
        dst += [i + 1, i]
    src = np.asarray(src)
    dst = np.asarray(dst)
    order = np.lexsort((src, dst))
    src, dst = src[order], dst[order]
    ef = np.zeros((src.size, EDGE_FEATURE_WIDTH))
    ef[:, 0] = src - dst
    ef[:, 3] = 1.0
    return SimGraph(n, feats, src, dst, ef)


def test_head_widths_are_combinatorial_counts():
    assert N_L_PARAMS == D * (D - 1) // 2 == 66
    assert N_M_PARAMS == D * (D + 1) // 2 == 78
    model = build_model(hidden=8, k_steps=2, seed=0)
    assert model.de_head.out_width == 12
    assert model.ds_head.out_width == 12
    assert model.l_head.out_width == 66
    assert model.m_head.out_width == 78


def test_zero_model_outputs_head_bias():
    _, _, g = rest_graph()
    model = build_model(hidden=4, k_steps=2, seed=0)
    for p in model.params():
        p.data = np.zeros_like(p.data)
    beta = np.arange(12.0)
    model.de_head.layers[-1][1].data = beta.copy()
    out = forward(model, g)
    assert np.array_equal(out.dE, np.tile(beta, (g.n_vertices, 1)))
    assert not out.dS.any() and not out.l_params.any() and not out.m_params.any()


def test_permutation_equivariance_bit_exact():
    mesh, state, g = rest_graph(seed=3)
    model = build_model(hidden=8, k_steps=3, seed=1)
    out = forward(model, g)

    rng = np.random.default_rng(11)
    perm = rng.permutation(mesh.n_nodes)
    inv = np.argsort(perm)
    pmesh = build_beam_mesh(1, 1, 2, 1, 1, 2)
    pmesh.rest_positions = mesh.rest_positions[inv]
    pmesh.elements = perm[mesh.elements]
    pmesh.surface_triangles = perm[mesh.surface_triangles]
    pmesh.fixed_nodes = np.sort(perm[mesh.fixed_nodes])
    pstate = StateField(state.q[inv], state.v[inv], state.sigma[inv])
    pg = mesh_to_graph(pmesh, pstate, stats=Normalization.identity())
    pout = forward(model, pg)

    assert np.array_equal(pout.dE[perm], out.dE)
    assert np.array_equal(pout.dS[perm], out.dS)
    assert np.array_equal(pout.l_params[perm], out.l_params)
    assert np.array_equal(pout.m_params[perm], out.m_params)


def test_translation_invariance_bit_exact():
    mesh, state, g = rest_graph(seed=4)
    model = build_model(hidden=8, k_steps=2, seed=2)
    out = forward(model, g)
    moved = StateField(state.q + np.array([5.0, -3.0, 2.0]), state.v, state.sigma)
    gm = mesh_to_graph(mesh, moved, stats=Normalization.identity())
    outm = forward(model, gm)
    assert np.array_equal(out.dE, outm.dE)
    assert np.array_equal(out.m_params, outm.m_params)


def test_locality_respects_k_hops():
    n, k = 12, 3
    rng = np.random.default_rng(5)
    feats = rng.normal(size=(n, NODE_FEATURE_WIDTH))
    model = build_model(hidden=6, k_steps=k, seed=3)
    base = forward(model, path_graph(n, feats))

    perturbed = feats.copy()
    j = 0
    perturbed[j] += 1.0
    out = forward(model, path_graph(n, perturbed))
    changed = np.any(out.dE != base.dE, axis=1)
    dist = np.abs(np.arange(n) - j)
    assert changed[j]
    assert not changed[dist > k].any()
    assert changed[dist <= k].any()


def test_parameter_count_hand_counted():
    model = build_model(hidden=1, k_steps=0, seed=0)
    # encoders 18 + 7, heads 26 + 26 + 134 + 158
    assert parameter_count(model) == 369


def test_parameter_count_monotone_in_width():
    small = parameter_count(build_model(hidden=16, k_steps=4, seed=0))
    big = parameter_count(build_model(hidden=32, k_steps=4, seed=0))
    assert big > 2 * small


def test_parameter_count_default_regression():
    assert parameter_count(build_model()) == 56328


def test_forward_rejects_bad_widths():
    import pytest

    _, _, g = rest_graph()
    model = build_model(hidden=4, k_steps=1, seed=0)
    bad = SimGraph(g.n_vertices, g.node_features[:, :10], g.src, g.dst, g.edge_features)
    with pytest.raises(ValueError, match="width"):
        forward(model, bad)


def test_checkpoint_round_trip(tmp_path):
    mesh, state, g = rest_graph(seed=6)
    model = build_model(hidden=8, k_steps=2, seed=9)
    sim = TrainedSimulator(model=model, stats=Normalization.identity(), seed=9,
                           config_hash="abc", meta={"note": "test"})
    path = tmp_path / "ckpt.json"
    save_checkpoint(sim, str(path))
    back = load_checkpoint(str(path))
    assert back.seed == 9 and back.config_hash == "abc"
    out1 = forward(model, g)
    out2 = forward(back.model, g)
    assert np.array_equal(out1.dE, out2.dE)
    assert np.array_equal(out1.l_params, out2.l_params)


def test_graph_index_plans():
    src = np.array([1, 0, 2, 0])
    dst = np.array([0, 1, 1, 2])
    gi = GraphIndex.build(3, src, dst)
    rows = np.random.default_rng(0).normal(size=(4, 2))
    agg = gi.by_dst.sum_f @ rows
    assert np.allclose(agg[1], rows[1] + rows[2])
    assert np.allclose(agg[0], rows[0])
    back = gi.by_src.sum_f @ rows
    assert np.allclose(back[0], rows[1] + rows[3])
