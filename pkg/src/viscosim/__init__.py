"""Learned real-time dynamics of viscoelastic solids.

The package covers the full loop: a finite-element oracle generates
trajectories, a metriplectic graph network learns the one-step evolution,
and an interactive session serves the trained model with poking and
body-body contact behind a WebSocket wire protocol.
"""

__version__ = "0.1.0"

from .materials import MaterialParams, PronyTerm
from .mesh import LoadCase, NodeState, SolidMesh, StateField, build_beam_mesh, load_mesh, save_mesh
from .graph import Normalization, SimGraph, mesh_to_graph, normalization_stats
from .fem import (Dataset, Trajectory, deformation_gradient, generate_dataset,
                  pk2_stress, prony_update, simulate, stability_dt)
from .generic import (GenericOutputs, assemble_L, assemble_M, degeneracy_residual,
                      generic_rate, step)
from .gnn import TignnModel, TrainedSimulator, build_model, forward, load_checkpoint, parameter_count, save_checkpoint
from .training import TrainConfig, boxplot_stats, evaluate, rollout, train
from .rendermath import Camera, ModelPose, PhongMaterial, colormap, depth_mask, model_matrix, phong, project, projection_matrix, view_matrix
from .interaction import Poke, contact_forces, pick_nodes, poke_force, unproject
