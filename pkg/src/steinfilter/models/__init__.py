"""Process and observation models for the filtering scenarios."""

from .base import ModelPair, ObservationModel, TransitionModel, wrap_angle
from .constvel import ConstantVelocityModel, PositionObservationModel
from .gridmap import (
    BeamEval,
    BeamScan,
    BeamScanModel,
    GridMap2D,
    PlanarOdometryModel,
    load_map,
    save_map,
)
from .lingauss import LinearGaussianModel, kalman_steady_state_cov, lingauss_step_oracle
from .serialize import (
    load_scans_csv,
    load_trajectory_csv,
    save_scans_csv,
    save_trajectory_csv,
)
from .sinebank import SineBankModel
from .toy import MirroredGaussianModel, RandomWalkTransition

__all__ = [
    "BeamEval",
    "BeamScan",
    "BeamScanModel",
    "ConstantVelocityModel",
    "GridMap2D",
    "LinearGaussianModel",
    "MirroredGaussianModel",
    "ModelPair",
    "ObservationModel",
    "PlanarOdometryModel",
    "PositionObservationModel",
    "RandomWalkTransition",
    "SineBankModel",
    "TransitionModel",
    "kalman_steady_state_cov",
    "lingauss_step_oracle",
    "load_map",
    "load_scans_csv",
    "load_trajectory_csv",
    "save_map",
    "save_scans_csv",
    "save_trajectory_csv",
    "wrap_angle",
]
