"""Multi-view 3D keypoint estimation with multivariate t-distributions."""

from .camera import Camera, ParaPerspectiveMap, para_perspective_at, project_perspective
from .estimator import FitConfig, KeypointEstimate, ScaleChol, fit_frame, fit_keypoint, materialize_sigma
from .evaluation import MetricsReport, coverage, mpjpe, summarize
from .io_formats import read_estimates, read_scene, write_estimates, write_scene
from .simulator import NoiseSpec, RigSpec, Scene, build_rig, simulate_scene
from .tdist import MvtDist2, MvtDist3, affine_pushforward, confidence_radius2, nll, sample
from .triangulation import Heatmap, soft_argmax, triangulate_dlt

__all__ = [
    "Camera", "ParaPerspectiveMap", "para_perspective_at", "project_perspective",
    "FitConfig", "KeypointEstimate", "ScaleChol", "fit_frame", "fit_keypoint", "materialize_sigma",
    "MetricsReport", "coverage", "mpjpe", "summarize",
    "read_estimates", "read_scene", "write_estimates", "write_scene",
    "NoiseSpec", "RigSpec", "Scene", "build_rig", "simulate_scene",
    "MvtDist2", "MvtDist3", "affine_pushforward", "confidence_radius2", "nll", "sample",
    "Heatmap", "soft_argmax", "triangulate_dlt",
]
