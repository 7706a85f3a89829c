"""Metric scale of a monocular SLAM map from object detections and class height priors."""
from .errors import ScaleSenseError
from .geometry import (
    CameraIntrinsics,
    CameraPose,
    DetectionBox,
    FeatureEstimate,
    Frame,
    HeightObservation,
    make_observation,
)
from .inference import GeometryContext, ScaleEstimator, ScaleGrid, map_estimate, uniform_prior
from .priors import HeightHistogram, PriorRegistry, load_priors

__version__ = "0.1.0"

__all__ = [
    "CameraIntrinsics",
    "CameraPose",
    "DetectionBox",
    "FeatureEstimate",
    "Frame",
    "GeometryContext",
    "HeightHistogram",
    "HeightObservation",
    "PriorRegistry",
    "ScaleEstimator",
    "ScaleGrid",
    "ScaleSenseError",
    "load_priors",
    "make_observation",
    "map_estimate",
    "uniform_prior",
]
