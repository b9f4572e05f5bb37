"""Kinematic surrogate safety measures for a single observation.

These are the reference (scalar) definitions.  :mod:`simsafe.features`
evaluates the same quantities column-wise over whole trajectory tables.
"""
from __future__ import annotations

import dataclasses
from typing import NamedTuple, Optional

from .domain import (
    KMH,
    GapError,
    RoadSection,
    Surface,
    ValidationError,
    VehicleObservation,
    VehicleType,
)


@dataclasses.dataclass(frozen=True)
class FrictionConfig:
    dry_long_at_0: float = 0.85
    dry_long_at_vmax: float = 0.75
    wet_long_at_0: float = 0.70
    wet_long_at_vmax: float = 0.20
    vmax: float = 130.0 * KMH
    lateral_factor: float = 1.10
    heavy_dry_factor: float = 0.70
    g: float = 9.81
    lc_peak_factor: float = 0.5

    def __post_init__(self):
        coefs = (self.dry_long_at_0, self.dry_long_at_vmax, self.wet_long_at_0,
                 self.wet_long_at_vmax, self.heavy_dry_factor)
        if any(not 0 < c <= 1 for c in coefs):
            raise ValidationError("friction coefficients and factors must lie in (0, 1]")
        if not (self.vmax > 0 and self.g > 0 and self.lateral_factor > 0 and self.lc_peak_factor >= 0):
            raise ValidationError("vmax, g and lateral factor must be positive")

    def endpoints(self, surface: Surface) -> tuple[float, float]:
        if Surface(surface) is Surface.DRY:
            return self.dry_long_at_0, self.dry_long_at_vmax
        return self.wet_long_at_0, self.wet_long_at_vmax


class SplitValue(NamedTuple):
    """A signed quantity split into its nonnegative and nonpositive parts."""

    plus: float
    minus: float

    @classmethod
    def of(cls, x: float) -> "SplitValue":
        return cls(max(0.0, x), min(0.0, x))


# Returned (by identity) when the target-lane neighbour does not exist.
ABSENT_NEIGHBOR = SplitValue(0.0, 0.0)


def following_gap(follower: VehicleObservation, leader: VehicleObservation) -> float:
    """Bumper-to-bumper distance; raises GapError when the pair overlaps."""
    gap = leader.position - follower.position - leader.length
    if not gap > 0:
        raise GapError(gap, f"follower {follower.vehicle_id} behind leader {leader.vehicle_id} at t={follower.time}")
    return gap


def drac(follower: VehicleObservation, leader: VehicleObservation) -> float:
    """Deceleration rate required to avoid a crash (0 when the pair is not closing)."""
    gap = following_gap(follower, leader)
    closing = follower.speed - leader.speed
    if closing <= 0:
        return 0.0
    return closing**2 / (2.0 * gap)


def ttc(follower: VehicleObservation, leader: VehicleObservation) -> Optional[float]:
    """Time to collision, or None when the follower is not closing in."""
    gap = following_gap(follower, leader)
    closing = follower.speed - leader.speed
    if closing <= 0:
        return None
    return gap / closing


def ra_need(follower: VehicleObservation, leader: VehicleObservation) -> SplitValue:
    """Relative needed deceleration ratio, split into (+, -) parts, in 1/s.

    The needed deceleration is ``DRAC + (a_follower - a_leader)``; negative
    values mean the follower already brakes harder (relative to its leader)
    than the DRAC.  Both parts are divided by the TTC and are zero when the
    pair is not on a collision course.
    """
    t = ttc(follower, leader)
    if t is None:
        return SplitValue(0.0, 0.0)
    need = drac(follower, leader) + (follower.accel - leader.accel)
    split = SplitValue.of(need)
    return SplitValue(split.plus / t, split.minus / t)


def mu_long(speed: float, vehicle_type: VehicleType, surface: Surface,
            cfg: FrictionConfig = FrictionConfig()) -> float:
    """Maximum available longitudinal friction coefficient.

    Linear in speed between the 0 and ``vmax`` endpoints of the surface,
    constant above ``vmax``.  Heavy vehicles on dry pavement get
    ``heavy_dry_factor``.
    """
    if speed < 0:
        raise ValidationError(f"speed must be >= 0, got {speed}")
    at_0, at_vmax = cfg.endpoints(surface)
    frac = min(speed, cfg.vmax) / cfg.vmax
    mu = at_0 + (at_vmax - at_0) * frac
    if VehicleType(vehicle_type) is VehicleType.HEAVY and Surface(surface) is Surface.DRY:
        mu *= cfg.heavy_dry_factor
    return mu


def mu_lat(speed: float, vehicle_type: VehicleType, surface: Surface,
           cfg: FrictionConfig = FrictionConfig()) -> float:
    return cfg.lateral_factor * mu_long(speed, vehicle_type, surface, cfg)


def ra_lim(follower: VehicleObservation, leader: VehicleObservation, section: RoadSection,
           surface: Surface, cfg: FrictionConfig = FrictionConfig()) -> float:
    """Excess of the DRAC over the available deceleration, per second of TTC."""
    t = ttc(follower, leader)
    if t is None:
        return 0.0
    available = (mu_long(follower.speed, follower.vehicle_type, surface, cfg) + section.grade) * cfg.g
    return (drac(follower, leader) - available) / t


def relative_gap(gap: Optional[float], dv: float) -> SplitValue:
    """Relative gap variation ``dv / gap`` split into growing (+) and shrinking (-) parts.

    ``gap=None`` denotes an absent neighbour and returns ``ABSENT_NEIGHBOR``.
    """
    if gap is None:
        return ABSENT_NEIGHBOR
    if not gap > 0:
        raise GapError(gap)
    return SplitValue.of(dv / gap)


def lead_gap_variation(subject: VehicleObservation, lead: Optional[VehicleObservation]) -> SplitValue:
    if lead is None:
        return relative_gap(None, 0.0)
    gap = lead.position - lead.length - subject.position
    return relative_gap(gap, lead.speed - subject.speed)


def lag_gap_variation(subject: VehicleObservation, lag: Optional[VehicleObservation]) -> SplitValue:
    if lag is None:
        return relative_gap(None, 0.0)
    gap = subject.position - subject.length - lag.position
    return relative_gap(gap, subject.speed - lag.speed)


def lateral_acceleration(obs: VehicleObservation, section: RoadSection,
                         cfg: FrictionConfig = FrictionConfig()) -> float:
    """Circular-path lateral acceleration plus the lane-change add-on."""
    a = obs.speed**2 / section.radius if section.radius is not None else 0.0
    if obs.changing_lane:
        a += cfg.lc_peak_factor * cfg.g
    return a


def critical_lateral_acceleration(obs: VehicleObservation, section: RoadSection, surface: Surface,
                                  cfg: FrictionConfig = FrictionConfig()) -> float:
    return (mu_lat(obs.speed, obs.vehicle_type, surface, cfg) + section.superelevation) * cfg.g


def delta_a_lat(a_lat: float, a_crit: float) -> SplitValue:
    return SplitValue.of(a_lat - a_crit)
