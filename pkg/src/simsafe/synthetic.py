"""Synthetic trajectories, outcome labels and choice-based samples.

The trajectory generator is a deliberately simple 1 Hz microsimulation: each
driver accelerates towards a desired speed, reacts to the speed difference
and spacing to its leader, and occasionally brakes hard.  Lane changes take
a few seconds, during which the target-lane lead and lag vehicles are
recorded.  Its purpose is feature variation across safe and unsafe regimes,
not behavioural realism.

:func:`synthesize_cells` skips the kinematics and samples member features
directly; it is what large parameter-recovery experiments use.
"""
from __future__ import annotations

import dataclasses
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from .domain import (
    DEFAULT_CELL_DURATION,
    DEFAULT_CELL_LENGTH,
    FEATURE_NAMES,
    EventRecord,
    ModelParameters,
    Outcome,
    RoadSection,
    Scaling,
    Surface,
    ValidationError,
    check_sections,
    locate_sections,
)
from .features import AVAIL_COLUMNS, TRAJECTORY_COLUMNS, build_dataset, extract_features
from .measures import FrictionConfig
from .nested import CellDataset, SamplingWeights, cell_probabilities, sampling_weights

CAR_LENGTH = 4.5
HEAVY_LENGTH = 12.0
MIN_GAP = 0.5
LC_DURATION = 3
CF_RANGE = 100.0


def default_sections() -> list[RoadSection]:
    return [
        RoadSection("S1", 0.0, 150.0, 2, None, 0.0, 0.0),
        RoadSection("S2", 150.0, 300.0, 2, 180.0, 0.04, 0.02),
        RoadSection("S3", 300.0, 400.0, 2, None, 0.0, -0.02),
    ]


@dataclasses.dataclass(frozen=True)
class ScenarioConfig:
    n_events: int = 20
    duration: float = DEFAULT_CELL_DURATION
    warmup: float = 60.0
    sections: tuple = dataclasses.field(default_factory=lambda: tuple(default_sections()))
    arrival_rate: float = 0.5
    speed_mean: float = 22.0
    speed_sd: float = 4.0
    cf_sensitivity: float = 0.6
    lane_change_rate: float = 1.0
    hard_brake_rate: float = 0.3
    heavy_share: float = 0.1
    wet_share: float = 0.3
    replications: int = 1
    cell_length: float = DEFAULT_CELL_LENGTH
    seed: int = 0

    def __post_init__(self):
        rates = (self.arrival_rate, self.lane_change_rate, self.hard_brake_rate, self.speed_sd,
                 self.cf_sensitivity)
        if any(r < 0 for r in rates) or self.n_events < 0 or self.replications < 1:
            raise ValidationError("rates and counts must be nonnegative")
        if not (0 <= self.heavy_share <= 1 and 0 <= self.wet_share <= 1):
            raise ValidationError("shares must lie in [0, 1]")
        if self.duration <= 0 or self.warmup < 0:
            raise ValidationError("duration must be positive")
        lanes = {s.n_lanes for s in self.sections}
        if len(lanes) != 1:
            raise ValidationError("the generator needs the same lane count on every section")


@dataclasses.dataclass
class Scenario:
    trajectories: pd.DataFrame
    sections: list
    events: list


class _Veh:
    __slots__ = ("vid", "lane", "x", "v", "a", "length", "heavy", "v_des", "brake_left",
                 "lc_left", "lc_target")

    def __init__(self, vid, lane, x, v, length, heavy, v_des):
        self.vid, self.lane, self.x, self.v = vid, lane, x, v
        self.a = 0.0
        self.length, self.heavy, self.v_des = length, heavy, v_des
        self.brake_left = 0
        self.lc_left = 0
        self.lc_target = -1


def _neighbors(lane_list, x):
    """(ahead, behind) vehicles in a lane list sorted by descending position, relative to x."""
    ahead = behind = None
    for v in lane_list:
        if v.x > x:
            ahead = v
        else:
            behind = v
            break
    return ahead, behind


def _simulate_event(cfg: ScenarioConfig, sections, event_index: int, replication: int):
    rng = np.random.default_rng([cfg.seed, event_index, replication])
    n_lanes = sections[0].n_lanes
    start, end = sections[0].start, sections[-1].end
    t_end = int(round(cfg.warmup + cfg.duration))
    t_rec = int(round(cfg.warmup))
    lanes: list[list[_Veh]] = [[] for _ in range(n_lanes)]
    queue: list[list[_Veh]] = [[] for _ in range(n_lanes)]
    counter = 0
    rows = []
    per_lane_rate = cfg.arrival_rate / n_lanes
    sec_starts = np.array([s.start for s in sections])

    for t in range(t_end + 1):
        # arrivals
        for ln in range(n_lanes):
            for _ in range(rng.poisson(per_lane_rate)):
                heavy = rng.random() < cfg.heavy_share
                v_des = float(np.clip(rng.normal(cfg.speed_mean, cfg.speed_sd), 5.0, 45.0))
                if heavy:
                    v_des *= 0.85
                queue[ln].append(_Veh(f"V{counter:05d}", ln, start, v_des, HEAVY_LENGTH if heavy else CAR_LENGTH,
                                      heavy, v_des))
                counter += 1
            if queue[ln]:
                last = lanes[ln][-1] if lanes[ln] else None
                if last is None or last.x - last.length - start > 2.0 + 0.8 * queue[ln][0].v_des:
                    veh = queue[ln].pop(0)
                    if last is not None:
                        veh.v = min(veh.v, last.v + 2.0)
                    lanes[ln].append(veh)
                elif len(queue[ln]) > 50:
                    raise ValidationError("infeasible density: vehicles cannot be placed with a positive gap")

        # lane-change bookkeeping: finish or abort, then start new ones
        for ln in range(n_lanes):
            for veh in list(lanes[ln]):
                if veh.lc_left > 0:
                    veh.lc_left -= 1
                    target = lanes[veh.lc_target]
                    ahead, behind = _neighbors(target, veh.x)
                    ok = (ahead is None or ahead.x - ahead.length - veh.x > 1.0) and \
                         (behind is None or veh.x - veh.length - behind.x > 1.0)
                    if not ok:
                        veh.lc_left = 0
                    elif veh.lc_left == 0:
                        lanes[ln].remove(veh)
                        target.append(veh)
                        target.sort(key=lambda u: -u.x)
                        veh.lane = veh.lc_target
                elif n_lanes >= 2 and rng.random() < cfg.lane_change_rate / 60.0:
                    tgt = ln + (1 if ln == 0 else -1) if n_lanes == 2 else int(
                        np.clip(ln + rng.choice([-1, 1]), 0, n_lanes - 1))
                    ahead, behind = _neighbors(lanes[tgt], veh.x)
                    ok = (ahead is None or ahead.x - ahead.length - veh.x > 1.0) and \
                         (behind is None or veh.x - veh.length - behind.x > 1.0)
                    if ok and tgt != ln:
                        veh.lc_left = LC_DURATION
                        veh.lc_target = tgt

        # record
        if t >= t_rec:
            for ln in range(n_lanes):
                lst = lanes[ln]
                for i, veh in enumerate(lst):
                    leader = lst[i - 1] if i > 0 else None
                    leader_id = None
                    if leader is not None and leader.x - leader.length - veh.x <= CF_RANGE:
                        leader_id = leader.vid
                    lead_id = lag_id = None
                    state = "none"
                    if veh.lc_left > 0:
                        state = "changing"
                        ahead, behind = _neighbors(lanes[veh.lc_target], veh.x)
                        lead_id = ahead.vid if ahead is not None else None
                        lag_id = behind.vid if behind is not None else None
                    rows.append((veh.vid, float(t), ln, veh.x, veh.v, veh.a, veh.length,
                                 "heavy" if veh.heavy else "car", leader_id, state, lead_id, lag_id))

        # longitudinal update, front to back in every lane
        for ln in range(n_lanes):
            lst = lanes[ln]
            for i, veh in enumerate(lst):
                leader = lst[i - 1] if i > 0 else None
                a = float(np.clip(0.6 * (veh.v_des - veh.v), -3.0, 2.5))
                if leader is not None:
                    gap = leader.x - leader.length - veh.x
                    desired = 2.0 + 1.2 * veh.v
                    a_cf = cfg.cf_sensitivity * (leader.v - veh.v) + 0.15 * (gap - desired)
                    a = min(a, a_cf)
                if veh.brake_left > 0:
                    veh.brake_left -= 1
                    a = min(a, -4.0)
                elif rng.random() < cfg.hard_brake_rate / 60.0:
                    veh.brake_left = 2
                    a = min(a, -4.0)
                a = float(np.clip(a + rng.normal(0.0, 0.2), -9.0, 2.5))
                v_new = max(0.0, veh.v + a)
                x_new = veh.x + 0.5 * (veh.v + v_new)
                if leader is not None:
                    limit = leader.x - leader.length - MIN_GAP
                    if x_new > limit:
                        x_new = max(limit, veh.x)
                        v_new = min(v_new, leader.v)
                veh.a = a
                veh.v, veh.x = v_new, x_new
            lanes[ln] = [v for v in lst if v.x <= end]
        # lanes stay sorted: no overtaking within a lane

    return rows


def generate_trajectories(cfg: ScenarioConfig) -> Scenario:
    """Simulate ``cfg.n_events`` independent events (x replications).

    Every event gets a surface, an anchor location drawn along the road and
    an anchor time at the end of the simulated period; outcomes are set to
    NA until :func:`label_outcomes` assigns them.
    """
    sections = check_sections(cfg.sections)
    start, end = sections[0].start, sections[-1].end
    frames = []
    events = []
    for e in range(cfg.n_events):
        eid = f"E{e:04d}"
        rng = np.random.default_rng([cfg.seed, e, 10_000])
        surface = Surface.WET if rng.random() < cfg.wet_share else Surface.DRY
        anchor = float(np.round(rng.uniform(start + cfg.cell_length, end), 1))
        events.append(EventRecord(eid, Outcome.NA, surface, anchor, float(cfg.warmup + cfg.duration),
                                  cfg.cell_length, cfg.duration))
        for r in range(cfg.replications):
            rows = _simulate_event(cfg, sections, e, r)
            if not rows:
                continue
            df = pd.DataFrame(rows, columns=["vehicle_id", "time_s", "lane_id", "pos_m", "speed", "accel",
                                             "length_m", "veh_type", "leader_id", "lc_state",
                                             "lead_neighbor_id", "lag_neighbor_id"])
            df.insert(0, "replication", r)
            df.insert(0, "event_id", eid)
            frames.append(df)
    if frames:
        traj = pd.concat(frames, ignore_index=True)
    else:
        traj = pd.DataFrame({c: [] for c in TRAJECTORY_COLUMNS})
    traj = traj[list(TRAJECTORY_COLUMNS)]
    traj = traj.sort_values(["event_id", "replication", "vehicle_id", "time_s"], kind="mergesort")
    if len(traj):
        locate_sections(sections, traj["pos_m"].to_numpy())
    return Scenario(traj.reset_index(drop=True), sections, events)


def sample_outcomes(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One categorical draw per row of an (n, 4) probability array."""
    probs = np.atleast_2d(probs)
    cum = np.cumsum(probs, axis=1)
    cum[:, -1] = 1.0
    u = rng.random(probs.shape[0])
    return (u[:, None] >= cum).sum(axis=1).clip(0, 3)


def label_outcomes(scenario: Scenario, true_params: ModelParameters, seed: int,
                   friction: FrictionConfig = FrictionConfig(),
                   perturbation: Optional[np.ndarray] = None) -> list[EventRecord]:
    """Draw each event's outcome from the model's own anchor-cell probabilities.

    Replications of an event are averaged before drawing.  ``perturbation``
    (added to the 13-vector of true parameters) produces deliberately
    misspecified labels.
    """
    events = {e.event_id: e for e in scenario.events}
    feats = extract_features(scenario.trajectories, scenario.sections, events, friction)
    data = build_dataset(feats, events, true_params.scaling)
    theta = true_params.vector()
    if perturbation is not None:
        theta = theta + np.asarray(perturbation, float)
        theta[-1] = max(theta[-1], 1.0)
    probs = cell_probabilities(theta, data, true_params.free_mask)
    by_event: dict[str, list[np.ndarray]] = {}
    for key, p in zip(data.keys, probs):
        by_event.setdefault(key.event_id, []).append(p)
    out = []
    for idx, ev in enumerate(scenario.events):
        if ev.event_id not in by_event:
            out.append(ev)
            continue
        p = np.mean(by_event[ev.event_id], axis=0)
        k = int(sample_outcomes(p, np.random.default_rng([seed, idx]))[0])
        out.append(dataclasses.replace(ev, outcome=Outcome(k)))
    return out


def choice_based_indices(labels, target_counts, seed: int) -> np.ndarray:
    """Sorted indices of a uniform without-replacement sample within each outcome class."""
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    targets = np.zeros(4, dtype=np.int64)
    if isinstance(target_counts, dict):
        for k, v in target_counts.items():
            targets[Outcome.parse(k)] = v
    else:
        targets[:] = target_counts
    keep = []
    for k in Outcome:
        idx = np.flatnonzero(labels == k)
        if targets[k] > idx.size:
            raise ValidationError(f"only {idx.size} {k.name} events available, {targets[k]} requested")
        keep.append(rng.choice(idx, size=int(targets[k]), replace=False))
    return np.sort(np.concatenate(keep))


def choice_based_sample(events: Sequence[EventRecord], target_counts, seed: int
                        ) -> tuple[list[EventRecord], SamplingWeights]:
    """Outcome-stratified sample of events and the matching WESML weights."""
    labels = np.array([int(e.outcome) for e in events])
    idx = choice_based_indices(labels, target_counts, seed)
    population = np.bincount(labels, minlength=4)
    sample = np.bincount(labels[idx], minlength=4)
    return [events[i] for i in idx], sampling_weights(population, sample)


# True parameters used by the recovery experiments: constants between -8 and
# -10 and slope signs as in the estimated motorway model.
RECOVERY_PARAMETERS = ModelParameters(
    beta_re=(-9.0, 2.5, -1.5, 1.0),
    beta_lc=(-8.0, -2.0, -6.0, -2.0, -8.0),
    beta_ror=(-8.0, 0.3, 0.05),
    mu=1.6,
)


# Milder constants for the trajectory generator, whose cells average hundreds
# of observations; gives a few percent accidents per event for demos.
DEMO_PARAMETERS = ModelParameters(
    beta_re=(-2.0, 2.9, -1.9, 2.0),
    beta_lc=(-1.0, -0.5, -0.6, -0.3, -0.6),
    beta_ror=(-1.5, 0.05, 0.1),
    mu=1.6,
)


def synthesize_cells(n_cells: int, true_params: ModelParameters, seed: int,
                     mean_members: float = 8.0, scaling: Optional[Scaling] = None,
                     curve_share: float = 0.8, margin: tuple = (-1.2, 0.8)) -> CellDataset:
    """Cells of directly sampled member features, labelled from the model.

    Each cell has a congestion level that shifts the rear-end and gap
    features of its members and a curve flag; members follow a leader, change
    lane, or both.  Features respect the sign/pairing conventions of raw SI
    feature vectors.
    """
    scaling = true_params.scaling if scaling is None else scaling
    rng = np.random.default_rng(seed)
    z = rng.normal(size=n_cells)
    curve = rng.random(n_cells) < curve_share
    cell_margin = rng.normal(margin[0] + 0.3 * z, margin[1])
    sizes = 1 + rng.poisson(mean_members - 1, size=n_cells)
    cell = np.repeat(np.arange(n_cells), sizes)
    m = cell.size
    zc = z[cell]

    follow = rng.random(m) < 0.75
    changing = rng.random(m) < np.clip(0.12 + 0.05 * zc, 0.02, 0.4)
    avail = np.stack([follow, changing, curve[cell] | changing], axis=1)
    f = np.zeros((m, 9))

    on_course = follow & (rng.random(m) < 0.6)
    need = rng.normal(0.4 + 0.5 * zc, 1.2)
    f[:, 0] = np.where(on_course, np.maximum(need, 0.0), 0.0)
    f[:, 1] = np.where(on_course, np.minimum(need, 0.0), 0.0)
    f[:, 2] = np.where(on_course, -np.exp(rng.normal(-0.3 - 0.3 * zc, 0.5)), 0.0)

    for col, has_p in ((3, 0.9), (5, 0.8)):
        has = changing & (rng.random(m) < has_p)
        rg = rng.normal(-1.5 - 1.0 * zc, 3.0)
        f[:, col] = np.where(has, np.maximum(rg, 0.0), 0.0)
        f[:, col + 1] = np.where(has, np.minimum(rg, 0.0), 0.0)

    # lateral-acceleration margin: mostly a cell property; lane changes eat into it
    d = cell_margin[cell] + 0.8 * changing + rng.normal(0.0, 0.3, m)
    f[:, 7] = np.where(avail[:, 2], np.maximum(d, 0.0), 0.0)
    f[:, 8] = np.where(avail[:, 2], np.minimum(d, 0.0), 0.0)
    f += 0.0

    data = CellDataset(f, avail, cell, np.zeros(n_cells, dtype=np.int64), None, scaling)
    probs = cell_probabilities(true_params.vector(), data, true_params.free_mask)
    labels = sample_outcomes(probs, rng)
    return data.with_labels(labels)


def cells_to_tables(data: CellDataset) -> tuple[pd.DataFrame, list[EventRecord]]:
    """Features table and events list for a feature-level dataset.

    Every cell becomes one event (``C000000``...) with its members as
    observations of the anchor cell, so the file pipeline rebuilds the same
    dataset.
    """
    ids = np.array([f"C{i:06d}" for i in range(data.n_cells)])
    member = np.arange(data.n_members) - data.starts[data.cell]
    df = pd.DataFrame({
        "event_id": ids[data.cell],
        "replication": 0,
        "vehicle_id": [f"M{j:04d}" for j in member],
        "time_s": 0.0,
        "s_index": 0,
        "p_index": 0,
    })
    for j, name in enumerate(FEATURE_NAMES):
        df[name] = data.raw[:, j]
    for j, name in enumerate(AVAIL_COLUMNS):
        df[name] = data.avail[:, j]
    events = [EventRecord(e, Outcome(int(y)), Surface.DRY, 0.0, 0.0) for e, y in zip(ids, data.labels)]
    return df, events
