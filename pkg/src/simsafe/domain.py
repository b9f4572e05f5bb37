"""Shared data types, unit conventions and space-time cell bookkeeping.

All quantities are SI: metres, seconds, m/s and m/s^2.  Positions are
front-bumper chainages that increase in the direction of travel.
"""
from __future__ import annotations

import dataclasses
import enum
import math
from collections import defaultdict
from typing import Any, Iterable, NamedTuple, Optional, Sequence

import numpy as np

KMH = 1.0 / 3.6

DEFAULT_CELL_LENGTH = 50.0
DEFAULT_CELL_DURATION = 300.0


class ValidationError(ValueError):
    """Input data violates a domain invariant."""


class GapError(ValidationError):
    """Non-positive bumper-to-bumper gap between two vehicles."""

    def __init__(self, gap: float, detail: str = ""):
        msg = f"overlap/negative gap ({gap:.6g} m)"
        if detail:
            msg = f"{msg}: {detail}"
        super().__init__(msg)
        self.gap = gap


class Outcome(enum.IntEnum):
    NA = 0
    RE = 1
    LC = 2
    ROR = 3

    @classmethod
    def parse(cls, value: "Outcome | str | int") -> "Outcome":
        if isinstance(value, cls):
            return value
        if isinstance(value, str):
            try:
                return cls[value.strip().upper()]
            except KeyError:
                raise ValidationError(f"unknown outcome {value!r}") from None
        return cls(int(value))


ACCIDENTS = (Outcome.RE, Outcome.LC, Outcome.ROR)


class VehicleType(str, enum.Enum):
    CAR = "car"
    HEAVY = "heavy"


class Surface(str, enum.Enum):
    DRY = "dry"
    WET = "wet"


class LaneChangeState(str, enum.Enum):
    NONE = "none"
    CHANGING = "changing"


def _enum(cls, value):
    try:
        return cls(value)
    except ValueError:
        allowed = ", ".join(m.value for m in cls)
        raise ValidationError(f"invalid {cls.__name__} {value!r} (expected one of {allowed})") from None


@dataclasses.dataclass(frozen=True)
class VehicleObservation:
    event_id: str
    replication: int
    vehicle_id: str
    time: float
    lane: int
    position: float
    speed: float
    accel: float
    length: float
    vehicle_type: VehicleType = VehicleType.CAR
    leader_id: Optional[str] = None
    lc_state: LaneChangeState = LaneChangeState.NONE
    lead_neighbor_id: Optional[str] = None
    lag_neighbor_id: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "vehicle_type", _enum(VehicleType, self.vehicle_type))
        object.__setattr__(self, "lc_state", _enum(LaneChangeState, self.lc_state))
        if not self.speed >= 0:
            raise ValidationError(f"speed must be >= 0, got {self.speed}")
        if not self.length > 0:
            raise ValidationError(f"length must be > 0, got {self.length}")

    @property
    def changing_lane(self) -> bool:
        return self.lc_state is LaneChangeState.CHANGING

    @property
    def rear(self) -> float:
        return self.position - self.length


@dataclasses.dataclass(frozen=True)
class RoadSection:
    section_id: str
    start: float
    end: float
    n_lanes: int = 2
    radius: Optional[float] = None
    superelevation: float = 0.0
    grade: float = 0.0

    def __post_init__(self):
        if not self.start < self.end:
            raise ValidationError(f"section {self.section_id}: start {self.start} must be < end {self.end}")
        if self.n_lanes < 1:
            raise ValidationError(f"section {self.section_id}: n_lanes must be >= 1")
        if self.radius is not None and not self.radius > 0:
            raise ValidationError(f"section {self.section_id}: radius must be > 0")

    @property
    def is_curve(self) -> bool:
        return self.radius is not None

    def contains(self, position: float) -> bool:
        return self.start <= position < self.end


def check_sections(sections: Sequence[RoadSection]) -> list[RoadSection]:
    """Return sections sorted by chainage, verifying they tile the road without gaps."""
    ordered = sorted(sections, key=lambda s: s.start)
    if not ordered:
        raise ValidationError("no road sections")
    for a, b in zip(ordered, ordered[1:]):
        if b.start < a.end:
            raise ValidationError(f"sections {a.section_id} and {b.section_id} overlap")
        if b.start > a.end:
            raise ValidationError(f"gap in geometry between {a.end} and {b.start}")
    return ordered


def locate_sections(sections: Sequence[RoadSection], positions) -> np.ndarray:
    """Index into ``sections`` (sorted, contiguous) for each position.

    The last section is closed at its end so a vehicle exactly at the road end
    still resolves.
    """
    starts = np.array([s.start for s in sections])
    end = sections[-1].end
    pos = np.asarray(positions, dtype=float)
    idx = np.searchsorted(starts, pos, side="right") - 1
    bad = (idx < 0) | (pos > end) | ~np.isfinite(pos)
    if np.any(bad):
        first = pos[bad].flat[0]
        raise ValidationError(f"position {first!r} m lies outside all road sections")
    return idx


@dataclasses.dataclass(frozen=True)
class EventRecord:
    event_id: str
    outcome: Outcome
    surface: Surface
    anchor_position: float
    anchor_time: float
    cell_length: float = DEFAULT_CELL_LENGTH
    cell_duration: float = DEFAULT_CELL_DURATION

    def __post_init__(self):
        object.__setattr__(self, "outcome", Outcome.parse(self.outcome))
        object.__setattr__(self, "surface", _enum(Surface, self.surface))
        if not self.cell_length > 0:
            raise ValidationError("cell_length must be > 0")
        if not self.cell_duration > 0:
            raise ValidationError("cell_duration must be > 0")


@dataclasses.dataclass(frozen=True)
class FeatureVector:
    ra_need_pos: float = 0.0
    ra_need_neg: float = 0.0
    ra_lim: float = 0.0
    rg_lag_pos: float = 0.0
    rg_lag_neg: float = 0.0
    rg_lead_pos: float = 0.0
    rg_lead_neg: float = 0.0
    dalat_pos: float = 0.0
    dalat_neg: float = 0.0
    avail_re: bool = False
    avail_lc: bool = False
    avail_ror: bool = False

    def __post_init__(self):
        for pos, neg in PAIRED_FEATURES:
            p, n = getattr(self, pos), getattr(self, neg)
            if p < 0 or n > 0 or (p != 0 and n != 0):
                raise ValidationError(f"{pos}/{neg} must split into a nonnegative and a nonpositive part, got ({p}, {n})")
        for flag, names in AVAILABILITY_GROUPS.items():
            if not getattr(self, flag) and any(getattr(self, f) != 0 for f in names):
                raise ValidationError(f"features {names} must be zero when {flag} is false")

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, f) for f in FEATURE_NAMES], dtype=float)

    def availability(self) -> np.ndarray:
        return np.array([self.avail_re, self.avail_lc, self.avail_ror], dtype=bool)

    @classmethod
    def from_array(cls, values, avail) -> "FeatureVector":
        kw = {f: float(v) for f, v in zip(FEATURE_NAMES, values)}
        kw.update(zip(("avail_re", "avail_lc", "avail_ror"), (bool(a) for a in avail)))
        return cls(**kw)


FEATURE_NAMES = (
    "ra_need_pos", "ra_need_neg", "ra_lim",
    "rg_lag_pos", "rg_lag_neg", "rg_lead_pos", "rg_lead_neg",
    "dalat_pos", "dalat_neg",
)
PAIRED_FEATURES = (
    ("ra_need_pos", "ra_need_neg"),
    ("rg_lag_pos", "rg_lag_neg"),
    ("rg_lead_pos", "rg_lead_neg"),
    ("dalat_pos", "dalat_neg"),
)
AVAILABILITY_GROUPS = {
    "avail_re": FEATURE_NAMES[0:3],
    "avail_lc": FEATURE_NAMES[3:7],
    "avail_ror": FEATURE_NAMES[7:9],
}


@dataclasses.dataclass(frozen=True)
class Scaling:
    """Unit conversion applied to raw SI features before they enter a score.

    Relative gap variations are divided by ``rg_divisor``; lateral
    acceleration differences are multiplied by ``dalat_multiplier`` (10 turns
    m/s^2 into 0.1 m/s^2 units).
    """

    rg_divisor: float = 10.0
    dalat_multiplier: float = 10.0

    def __post_init__(self):
        if not (self.rg_divisor > 0 and self.dalat_multiplier > 0):
            raise ValidationError("scaling factors must be positive")

    def factors(self) -> np.ndarray:
        """Per-feature multipliers aligned with FEATURE_NAMES."""
        rg = 1.0 / self.rg_divisor
        return np.array([1.0, 1.0, 1.0, rg, rg, rg, rg, self.dalat_multiplier, self.dalat_multiplier])


UNIT_SCALING = Scaling(1.0, 1.0)

PARAM_NAMES = (
    "beta_re_0", "beta_re_1", "beta_re_2", "beta_re_3",
    "beta_lc_0", "beta_lc_1", "beta_lc_2", "beta_lc_3", "beta_lc_4",
    "beta_ror_0", "beta_ror_1", "beta_ror_2",
    "mu",
)
N_PARAMS = len(PARAM_NAMES)
MU_INDEX = N_PARAMS - 1


@dataclasses.dataclass(frozen=True)
class ModelParameters:
    beta_re: tuple = (0.0, 0.0, 0.0, 0.0)
    beta_lc: tuple = (0.0, 0.0, 0.0, 0.0, 0.0)
    beta_ror: tuple = (0.0, 0.0, 0.0)
    mu: float = 1.0
    free_mask: tuple = (True,) * N_PARAMS
    scaling: Scaling = Scaling()

    def __post_init__(self):
        object.__setattr__(self, "beta_re", tuple(float(b) for b in self.beta_re))
        object.__setattr__(self, "beta_lc", tuple(float(b) for b in self.beta_lc))
        object.__setattr__(self, "beta_ror", tuple(float(b) for b in self.beta_ror))
        object.__setattr__(self, "mu", float(self.mu))
        object.__setattr__(self, "free_mask", tuple(bool(m) for m in self.free_mask))
        if (len(self.beta_re), len(self.beta_lc), len(self.beta_ror)) != (4, 5, 3):
            raise ValidationError("expected 4 RE, 5 LC and 3 ROR coefficients")
        if len(self.free_mask) != N_PARAMS:
            raise ValidationError(f"free_mask must have {N_PARAMS} entries")
        if not self.mu >= 1.0:
            raise ValidationError(f"nest scale mu must be >= 1, got {self.mu}")

    def vector(self) -> np.ndarray:
        return np.array(self.beta_re + self.beta_lc + self.beta_ror + (self.mu,))

    def with_vector(self, theta) -> "ModelParameters":
        theta = [float(t) for t in theta]
        return dataclasses.replace(
            self, beta_re=theta[0:4], beta_lc=theta[4:9], beta_ror=theta[9:12], mu=theta[12]
        )

    @property
    def n_free(self) -> int:
        return sum(self.free_mask)

    def free_names(self) -> list[str]:
        return [n for n, m in zip(PARAM_NAMES, self.free_mask) if m]


def paper_parameters(reduced: bool = True) -> ModelParameters:
    """Coefficients reported for the A44 urban motorway model.

    With ``reduced`` the two positive relative gap variation terms that were
    dropped from the final model are fixed at zero.
    """
    beta_lc = (-7.08, -0.011, -0.568, -0.311, -0.628)
    mask = [True] * N_PARAMS
    if reduced:
        beta_lc = (-7.08, 0.0, -0.568, 0.0, -0.628)
        mask[5] = mask[7] = False
    return ModelParameters(
        beta_re=(-13.09, 2.917, -1.92, 2.03),
        beta_lc=beta_lc,
        beta_ror=(-12.45, 0.023, 1.775),
        mu=1.622,
        free_mask=tuple(mask),
    )


class CellKey(NamedTuple):
    event_id: str
    replication: int
    s_index: int
    p_index: int


@dataclasses.dataclass(frozen=True)
class CellObservation:
    event_id: str
    replication: int
    s_index: int
    p_index: int
    probs: tuple
    n_obs: int
    outcome: Outcome
    weight_class: Outcome

    def __post_init__(self):
        object.__setattr__(self, "probs", tuple(float(p) for p in self.probs))
        object.__setattr__(self, "outcome", Outcome.parse(self.outcome))
        object.__setattr__(self, "weight_class", Outcome.parse(self.weight_class))
        if len(self.probs) != 4 or any(not 0.0 <= p <= 1.0 for p in self.probs):
            raise ValidationError(f"cell probabilities must be four values in [0, 1], got {self.probs}")
        if self.n_obs < 1:
            raise ValidationError("a cell needs at least one observation")
        if abs(math.fsum(self.probs) - 1.0) > 1e-12:
            raise ValidationError(f"cell probabilities sum to {math.fsum(self.probs)!r}")

    @property
    def key(self) -> CellKey:
        return CellKey(self.event_id, self.replication, self.s_index, self.p_index)


def cell_index(position, time, event: EventRecord):
    """Upstream/backward cell offsets from the event anchor (0 = anchor cell)."""
    s = np.floor((event.anchor_position - np.asarray(position, dtype=float)) / event.cell_length)
    p = np.floor((event.anchor_time - np.asarray(time, dtype=float)) / event.cell_duration)
    return s.astype(np.int64), p.astype(np.int64)


def build_cells(
    observations: Iterable[VehicleObservation],
    event: EventRecord,
    n_space: int = 1,
    n_time: int = 1,
) -> list[tuple[CellKey, list[VehicleObservation]]]:
    """Group an event's observations into (space, period) cells.

    Cell ``s`` covers chainages ``(anchor - (s+1) L, anchor - s L]`` and period
    ``p`` covers times ``(anchor - (p+1) T, anchor - p T]``.  Only the
    ``n_space`` x ``n_time`` cells upstream of and before the anchor are kept.
    """
    cells: dict[CellKey, list[VehicleObservation]] = defaultdict(list)
    for obs in observations:
        if obs.event_id != event.event_id:
            raise ValidationError(f"observation of event {obs.event_id!r} passed for event {event.event_id!r}")
        s = math.floor((event.anchor_position - obs.position) / event.cell_length)
        p = math.floor((event.anchor_time - obs.time) / event.cell_duration)
        if 0 <= s < n_space and 0 <= p < n_time:
            cells[CellKey(obs.event_id, obs.replication, s, p)].append(obs)
    if not cells:
        raise ValidationError(f"no observations in event window (event {event.event_id!r})")
    return sorted(cells.items())


def to_record(obj) -> dict[str, Any]:
    """Plain-dict form of a domain dataclass (enums by value, tuples as lists)."""
    out = {}
    for f in dataclasses.fields(obj):
        v = getattr(obj, f.name)
        if isinstance(v, enum.Enum):
            v = v.value if not isinstance(v, enum.IntEnum) else v.name
        elif dataclasses.is_dataclass(v):
            v = to_record(v)
        elif isinstance(v, tuple):
            v = list(v)
        out[f.name] = v
    return out


def from_record(cls, record: dict[str, Any]):
    kw = dict(record)
    if cls is ModelParameters and isinstance(kw.get("scaling"), dict):
        kw["scaling"] = Scaling(**kw["scaling"])
    return cls(**kw)
