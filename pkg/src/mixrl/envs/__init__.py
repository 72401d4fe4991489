from .base import Environment, Trajectory, env_step, rollout
from .linear import LinearQuadraticEnv, random_lq_matrices
from .tabular import TabularMDP, random_mdp
from .vehicle import (
    LaneChangeResult,
    ReferencePath,
    VehicleEnv,
    VehicleParams,
    fiala_force,
    reference_path_dlc,
    simulate_lane_change,
    vehicle_derivative,
)

__all__ = [
    "Environment",
    "Trajectory",
    "env_step",
    "rollout",
    "LinearQuadraticEnv",
    "random_lq_matrices",
    "TabularMDP",
    "random_mdp",
    "VehicleEnv",
    "VehicleParams",
    "ReferencePath",
    "LaneChangeResult",
    "fiala_force",
    "reference_path_dlc",
    "simulate_lane_change",
    "vehicle_derivative",
]
