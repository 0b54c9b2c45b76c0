"""Detect implicit obstacles: regions query trajectories bypass while
reference trajectories traverse them.

Pipeline: partition trajectories into fixed-width windows, compare windows
with normalized dynamic time warping, find nearest neighbors through a
navigable small-world graph, turn neighbor lists into kernel densities, and
flag windows whose continuation density drops significantly on the query
side.  See the README for the full tour.
"""

from .density import DensityParams, DensityProfile, density, density_profile, kernel, succ_density
from .detector import (
    ALL_OPTIMIZATIONS,
    DetectParams,
    DetectionResult,
    Obstacle,
    build_obstacle,
    convex_hull,
    detect,
    is_candidate,
    score,
)
from .geo import (
    EvalReport,
    GroundTruthRegion,
    Scenario,
    ScenarioParams,
    evaluate,
    export_geojson,
    generate_scenario,
    load_trajectories,
    load_truth,
    write_scenario,
)
from .knn import CorpusIndex, IndexParams, build_index, exact_distinct_knn, exact_knn
from .model import GeoPoint, PartitionParams, SubTrajectory, SubTrajectoryStore, Trajectory, partition, succ
from .similarity import dtw, euclidean, ndtw, path_length

__version__ = "0.1.0"

__all__ = [
    "ALL_OPTIMIZATIONS",
    "CorpusIndex",
    "DensityParams",
    "DensityProfile",
    "DetectParams",
    "DetectionResult",
    "EvalReport",
    "GeoPoint",
    "GroundTruthRegion",
    "IndexParams",
    "Obstacle",
    "PartitionParams",
    "Scenario",
    "ScenarioParams",
    "SubTrajectory",
    "SubTrajectoryStore",
    "Trajectory",
    "build_index",
    "build_obstacle",
    "convex_hull",
    "density",
    "density_profile",
    "detect",
    "dtw",
    "euclidean",
    "evaluate",
    "exact_distinct_knn",
    "exact_knn",
    "export_geojson",
    "generate_scenario",
    "is_candidate",
    "kernel",
    "load_trajectories",
    "load_truth",
    "ndtw",
    "partition",
    "path_length",
    "score",
    "succ",
    "succ_density",
    "write_scenario",
]
