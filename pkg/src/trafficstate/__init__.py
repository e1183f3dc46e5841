"""Multi-object tracking and traffic-state measurement from detections.

The pipeline: parse per-frame detections (`detstream`), track them through
occlusion with a Kalman filter plus gated assignment (`motion`, `assoc`,
`tracker`), map pixel trajectories to world coordinates (`calib`), and
measure classified flow and speed over a counting line (`traffic`).
`metrics` evaluates detection quality and measurement agreement; `synth`
builds synthetic scenes with exact ground truth.
"""

from .assoc import (
    AppearanceGallery,
    CostMatrix,
    build_cost_matrix,
    cosine_gallery_distance,
    gate,
    iou,
    mahalanobis_sq,
    solve_assignment,
)
from .calib import CalibrationParams, ReferenceObject, derive_magnification, to_pixel, to_world
from .config import RunConfig, parse_config
from .detstream import ClassCatalog, Detection, normalize_appearance, parse_detections
from .errors import ContractError, NumericalError, ParseError, ValidationError
from .metrics import (
    EvalReport,
    average_precision,
    evaluate_detections,
    f1,
    match_to_ground_truth,
    mean_ap,
    paired_t_test,
    pearson,
    precision,
    recall,
    rmse,
)
from .motion import KalmanFilter, MeasurementProjection, TrackState
from .synth import AgentSpec, GroundTruth, ScenarioSpec, generate
from .tracker import Track, Tracker, TrackerConfig, TrackSnapshot, TrackStatus
from .traffic import (
    IntervalMeasurement,
    LineOfInterest,
    Trajectory,
    assemble_trajectories,
    count_and_flow,
    interval_speed,
    measure_intervals,
    segment_crosses,
)

__version__ = "0.1.0"
