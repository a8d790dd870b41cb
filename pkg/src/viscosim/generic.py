"""Metriplectic operators and the one-step state update.

Per node, the decoder emits parameter vectors that assemble into a
skew-symmetric operator L (66 strictly-lower entries, row-major) and a
positive-semidefinite operator M = A A^T (78 lower-triangular entries of A,
row-major including the diagonal).  The state rate is

    dz/dt = L grad_E + M grad_S

with skewness and PSD-ness holding by construction; the degeneracy
conditions L grad_S = 0 and M grad_E = 0 are driven down by a training
penalty rather than hard-wired.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import RolloutDivergenceError
from .graph import Normalization
from .mesh import SolidMesh, StateField

D = 12  # per-node state width: q(3) + v(3) + sigma(6)

N_L_PARAMS = D * (D - 1) // 2   # 66
N_M_PARAMS = D * (D + 1) // 2   # 78

# strictly-lower pairs, row-major: (1,0), (2,0), (2,1), ...
L_ROWS = np.array([i for i in range(D) for j in range(i)])
L_COLS = np.array([j for i in range(D) for j in range(i)])
# lower-triangular pairs including the diagonal: (0,0), (1,0), (1,1), ...
M_ROWS = np.array([i for i in range(D) for j in range(i + 1)])
M_COLS = np.array([j for i in range(D) for j in range(i + 1)])


def _selector(idx: np.ndarray) -> np.ndarray:
    """(D, len(idx)) matrix with S[idx[k], k] = 1; x @ S gathers columns."""
    s = np.zeros((D, idx.size))
    s[idx, np.arange(idx.size)] = 1.0
    return s


def _indicator(idx: np.ndarray) -> np.ndarray:
    """(len(idx), D) matrix with I[k, idx[k]] = 1; x @ I sums per group."""
    return _selector(idx).T


# constant matrices shared by the inference and training rate paths
SEL_L_ROW, SEL_L_COL = _selector(L_ROWS), _selector(L_COLS)
IND_L_ROW, IND_L_COL = _indicator(L_ROWS), _indicator(L_COLS)
SEL_M_ROW, SEL_M_COL = _selector(M_ROWS), _selector(M_COLS)
IND_M_ROW, IND_M_COL = _indicator(M_ROWS), _indicator(M_COLS)


@dataclass
class GenericOutputs:
    """Per-node decoder outputs feeding the evolution law."""

    dE: np.ndarray        # (N, 12)
    dS: np.ndarray        # (N, 12)
    l_params: np.ndarray  # (N, 66)
    m_params: np.ndarray  # (N, 78)


@dataclass
class GenericOperators:
    L: np.ndarray  # (..., 12, 12) skew-symmetric
    M: np.ndarray  # (..., 12, 12) symmetric PSD


def assemble_L(l_params: np.ndarray) -> np.ndarray:
    """Skew-symmetric L from 66 parameters; works on (66,) or (N, 66)."""
    p = np.asarray(l_params, dtype=np.float64)
    single = p.ndim == 1
    p = np.atleast_2d(p)
    lower = np.zeros((p.shape[0], D, D))
    lower[:, L_ROWS, L_COLS] = p
    l = lower - np.swapaxes(lower, 1, 2)
    return l[0] if single else l


def assemble_M(m_params: np.ndarray) -> np.ndarray:
    """PSD M = A A^T from 78 lower-triangular parameters of A."""
    p = np.asarray(m_params, dtype=np.float64)
    single = p.ndim == 1
    p = np.atleast_2d(p)
    a = np.zeros((p.shape[0], D, D))
    a[:, M_ROWS, M_COLS] = p
    m = a @ np.swapaxes(a, 1, 2)
    return m[0] if single else m


def assemble_operators(outputs: GenericOutputs) -> GenericOperators:
    return GenericOperators(assemble_L(outputs.l_params), assemble_M(outputs.m_params))


def generic_rate(ops: GenericOperators, dE: np.ndarray, dS: np.ndarray) -> np.ndarray:
    """dz/dt = L dE + M dS, per node."""
    if ops.L.ndim == 2:
        return ops.L @ dE + ops.M @ dS
    return np.einsum("nij,nj->ni", ops.L, dE) + np.einsum("nij,nj->ni", ops.M, dS)


def rate_from_params(l_params, m_params, dE, dS) -> np.ndarray:
    """Matrix-free rate, the exact arithmetic used by the training loss.

    L dE = lower @ dE - lower^T @ dE and M dS = A (A^T dS), all expressed as
    per-node products with constant selector/indicator matrices so the same
    formula runs on plain arrays or autodiff tensors.
    """
    lde = (l_params * (dE @ SEL_L_COL)) @ IND_L_ROW \
        - (l_params * (dE @ SEL_L_ROW)) @ IND_L_COL
    u = (m_params * (dS @ SEL_M_ROW)) @ IND_M_COL
    mds = (m_params * (u @ SEL_M_COL)) @ IND_M_ROW
    return lde + mds


def degeneracy_products(l_params, m_params, dE, dS):
    """Matrix-free (L dS, M dE), the quantities the training penalty drives
    to zero.  Polymorphic over plain arrays and autodiff tensors."""
    lds = (l_params * (dS @ SEL_L_COL)) @ IND_L_ROW \
        - (l_params * (dS @ SEL_L_ROW)) @ IND_L_COL
    u = (m_params * (dE @ SEL_M_ROW)) @ IND_M_COL
    mde = (m_params * (u @ SEL_M_COL)) @ IND_M_ROW
    return lds, mde


def degeneracy_residual(ops: GenericOperators, dE: np.ndarray, dS: np.ndarray):
    """(||L dS||_2, ||M dE||_2); both zero iff the degeneracy conditions hold."""
    if ops.L.ndim == 2:
        return float(np.linalg.norm(ops.L @ dS)), float(np.linalg.norm(ops.M @ dE))
    r_l = np.linalg.norm(np.einsum("nij,nj->ni", ops.L, dS), axis=1)
    r_m = np.linalg.norm(np.einsum("nij,nj->ni", ops.M, dE), axis=1)
    return r_l, r_m


def step(z: StateField, outputs: GenericOutputs, dt: float, denorm: Normalization,
         mesh: SolidMesh, step_index: int = 0) -> StateField:
    """Forward-Euler update z + dt * (L dE + M dS) in physical units.

    Operator outputs live in normalized target space; the rate is
    denormalized before integrating.  Dirichlet nodes are projected back
    afterwards (position to rest, velocity to zero) - their stress keeps
    evolving.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    ops = assemble_operators(outputs)
    rate = generic_rate(ops, outputs.dE, outputs.dS)
    rate = denorm.denormalize_target(rate)
    if not np.all(np.isfinite(rate)):
        raise RolloutDivergenceError(step_index)

    q = z.q + dt * rate[:, 0:3]
    v = z.v + dt * rate[:, 3:6]
    sigma = z.sigma + dt * rate[:, 6:12]
    fixed = mesh.fixed_nodes
    q[fixed] = mesh.rest_positions[fixed]
    v[fixed] = 0.0
    return StateField(q, v, sigma, time=z.time + dt)
