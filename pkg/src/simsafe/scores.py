"""Availability rules and the linear safety scores of the three accident types."""
from __future__ import annotations

import dataclasses

import numpy as np

from .domain import (
    FEATURE_NAMES,
    FeatureVector,
    ModelParameters,
    RoadSection,
    Scaling,
    VehicleObservation,
)


@dataclasses.dataclass(frozen=True)
class ScoreVector:
    """Systematic scores for (NA, RE, LC, ROR).

    Unavailable alternatives keep a score of 0 here but are excluded by
    ``avail`` when probabilities are computed.
    """

    v_na: float = 0.0
    v_re: float = 0.0
    v_lc: float = 0.0
    v_ror: float = 0.0
    avail: tuple = (True, True, True, True)

    def __post_init__(self):
        object.__setattr__(self, "avail", tuple(bool(a) for a in self.avail))
        if len(self.avail) != 4:
            raise ValueError("avail needs four flags (NA, RE, LC, ROR)")

    def values(self) -> np.ndarray:
        return np.array([self.v_na, self.v_re, self.v_lc, self.v_ror])


def availability(obs: VehicleObservation, section: RoadSection) -> tuple[bool, bool, bool]:
    """(RE, LC, ROR) availability for one observation; NA is always available."""
    avail_re = obs.leader_id is not None
    avail_lc = section.n_lanes >= 2 and obs.changing_lane
    avail_ror = section.is_curve or obs.changing_lane
    return avail_re, avail_lc, avail_ror


def scale_features(f: FeatureVector, scaling: Scaling = Scaling()) -> FeatureVector:
    scaled = f.as_array() * scaling.factors()
    return FeatureVector.from_array(scaled, f.availability())


def effective_betas(p: ModelParameters) -> np.ndarray:
    """The 12 score coefficients with excluded (masked) ones set to zero."""
    return p.vector()[:12] * np.array(p.free_mask[:12], dtype=float)


def _linear(const_and_slopes: np.ndarray, features: np.ndarray) -> float:
    return float(const_and_slopes[0] + np.dot(const_and_slopes[1:], features))


def score_re(f: FeatureVector, p: ModelParameters) -> float:
    x = scale_features(f, p.scaling).as_array()
    return _linear(effective_betas(p)[0:4], x[0:3])


def score_lc(f: FeatureVector, p: ModelParameters) -> float:
    x = scale_features(f, p.scaling).as_array()
    return _linear(effective_betas(p)[4:9], x[3:7])


def score_ror(f: FeatureVector, p: ModelParameters) -> float:
    x = scale_features(f, p.scaling).as_array()
    return _linear(effective_betas(p)[9:12], x[7:9])


def score_vector(f: FeatureVector, p: ModelParameters) -> ScoreVector:
    return ScoreVector(
        0.0,
        score_re(f, p) if f.avail_re else 0.0,
        score_lc(f, p) if f.avail_lc else 0.0,
        score_ror(f, p) if f.avail_ror else 0.0,
        (True, f.avail_re, f.avail_lc, f.avail_ror),
    )


def score_matrix(features: np.ndarray, betas: np.ndarray) -> np.ndarray:
    """Scores (RE, LC, ROR) for an (M, 9) array of already-scaled features."""
    features = np.asarray(features, dtype=float)
    v = np.empty((features.shape[0], 3))
    v[:, 0] = betas[0] + features[:, 0:3] @ betas[1:4]
    v[:, 1] = betas[4] + features[:, 3:7] @ betas[5:9]
    v[:, 2] = betas[9] + features[:, 7:9] @ betas[10:12]
    return v


__all__ = [
    "FEATURE_NAMES", "ScoreVector", "availability", "scale_features", "effective_betas",
    "score_re", "score_lc", "score_ror", "score_vector", "score_matrix",
]
