"""Accident-type prediction from simulated vehicle trajectories.

Surrogate safety measures computed from trajectories feed a nested logit
model (no accident versus a nest of rear-end, lane-change and run-off-road
accidents), estimated by weighted exogenous sample maximum likelihood.
"""
from .domain import (
    EventRecord,
    FeatureVector,
    GapError,
    ModelParameters,
    Outcome,
    RoadSection,
    Scaling,
    ValidationError,
    VehicleObservation,
    paper_parameters,
)
from .estimation import (
    EstimationResult,
    OptimizerConfig,
    confusion_metrics,
    crossvalidate,
    estimate,
    predict,
    probability_ratios,
)
from .features import build_dataset, extract_features
from .measures import FrictionConfig
from .nested import (
    CellDataset,
    SamplingWeights,
    nl_probabilities,
    sampling_weights,
    wesml_loglik,
)
from .scores import ScoreVector, score_vector

__version__ = "0.1.0"

__all__ = [
    "CellDataset", "EstimationResult", "EventRecord", "FeatureVector", "FrictionConfig", "GapError",
    "ModelParameters", "OptimizerConfig", "Outcome", "RoadSection", "SamplingWeights", "Scaling",
    "ScoreVector", "ValidationError", "VehicleObservation", "build_dataset", "confusion_metrics",
    "crossvalidate", "estimate", "extract_features", "nl_probabilities", "paper_parameters", "predict",
    "probability_ratios", "sampling_weights", "score_vector", "wesml_loglik",
]
