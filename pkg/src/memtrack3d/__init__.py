"""Memory-based 3D single-object tracking on LiDAR point clouds."""

from .config import RunConfig, parse_config, load_config, dump_config
from .geometry import (
    Box3D,
    Motion4DOF,
    apply_motion,
    canonicalize,
    crop_search_region,
    iou3d,
    points_in_box,
)
from .metrics import OpeResult, aggregate, ope_run, precision_auc, success_auc
from .model import TrackNet
from .propagation import FrameEntry, MemoryBank
from .tracker import OracleTracker, Tracker, TrackStatus

__all__ = [
    "Box3D",
    "FrameEntry",
    "MemoryBank",
    "Motion4DOF",
    "OpeResult",
    "OracleTracker",
    "RunConfig",
    "TrackNet",
    "TrackStatus",
    "Tracker",
    "aggregate",
    "apply_motion",
    "canonicalize",
    "crop_search_region",
    "dump_config",
    "iou3d",
    "load_config",
    "ope_run",
    "parse_config",
    "points_in_box",
    "precision_auc",
    "success_auc",
]
