"""Column-wise feature extraction from trajectory tables.

A trajectory table is a :class:`pandas.DataFrame` with the columns of
``TRAJECTORY_COLUMNS`` (SI units).  An optional ``line`` column carries the
source file line for error messages.
"""
from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from .domain import (
    FEATURE_NAMES,
    CellKey,
    EventRecord,
    GapError,
    Outcome,
    RoadSection,
    Scaling,
    ValidationError,
    check_sections,
    locate_sections,
)
from .measures import FrictionConfig
from .nested import CellDataset

TRAJECTORY_COLUMNS = (
    "event_id", "replication", "vehicle_id", "time_s", "lane_id", "pos_m", "speed", "accel",
    "length_m", "veh_type", "leader_id", "lc_state", "lead_neighbor_id", "lag_neighbor_id",
)
KEY_COLUMNS = ("event_id", "replication", "vehicle_id", "time_s", "s_index", "p_index")
AVAIL_COLUMNS = ("avail_re", "avail_lc", "avail_ror")
FEATURE_COLUMNS = KEY_COLUMNS + FEATURE_NAMES + AVAIL_COLUMNS


def _where(df: pd.DataFrame, mask: np.ndarray) -> str:
    row = df.iloc[int(np.flatnonzero(mask)[0])]
    line = f"line {int(row['line'])}" if "line" in df.columns else f"row {int(np.flatnonzero(mask)[0])}"
    return f"{line} (event {row['event_id']}, vehicle {row['vehicle_id']}, t={row['time_s']})"


def _split(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return np.maximum(x, 0.0), np.minimum(x, 0.0)


def mu_long_array(speed, heavy, wet, cfg: FrictionConfig) -> np.ndarray:
    frac = np.minimum(speed, cfg.vmax) / cfg.vmax
    at_0 = np.where(wet, cfg.wet_long_at_0, cfg.dry_long_at_0)
    at_vmax = np.where(wet, cfg.wet_long_at_vmax, cfg.dry_long_at_vmax)
    mu = at_0 + (at_vmax - at_0) * frac
    return np.where(heavy & ~wet, mu * cfg.heavy_dry_factor, mu)


def _lookup(df: pd.DataFrame, id_column: str) -> np.ndarray:
    """Row index of the referenced vehicle at the same event/replication/time (-1 if absent)."""
    present = df[id_column].notna().to_numpy()
    out = np.full(len(df), -1, dtype=np.int64)
    if not present.any():
        return out
    index = pd.MultiIndex.from_arrays(
        [df["event_id"], df["replication"], df["time_s"], df["vehicle_id"]]
    )
    if not index.is_unique:
        dup = index.duplicated()
        raise ValidationError(f"duplicate vehicle observation at {_where(df, dup)}")
    sub = df[present]
    target = pd.MultiIndex.from_arrays(
        [sub["event_id"], sub["replication"], sub["time_s"], sub[id_column]]
    )
    pos = index.get_indexer(target)
    if np.any(pos < 0):
        missing = np.zeros(len(df), bool)
        missing[np.flatnonzero(present)[pos < 0]] = True
        raise ValidationError(f"{id_column} not found at the same time for {_where(df, missing)}")
    out[present] = pos
    return out


def extract_features(
    trajectories: pd.DataFrame,
    sections: Sequence[RoadSection],
    events: Mapping[str, EventRecord],
    friction: FrictionConfig = FrictionConfig(),
    n_space: int = 1,
    n_time: int = 1,
) -> pd.DataFrame:
    """Raw SI features and availability for every observation inside an event window.

    Rows are ordered by (event, replication, vehicle, time).  Neighbour
    vehicles are resolved through the id columns and may lie outside the
    window.
    """
    df = trajectories.reset_index(drop=True)
    if len(df) == 0:
        raise ValidationError("no observations")
    sections = check_sections(sections)
    unknown = ~df["event_id"].isin(list(events))
    if unknown.any():
        raise ValidationError(f"unknown event_id at {_where(df, unknown.to_numpy())}")

    ev = [events[e] for e in df["event_id"]]
    anchor_x = np.array([e.anchor_position for e in ev])
    anchor_t = np.array([e.anchor_time for e in ev])
    cell_l = np.array([e.cell_length for e in ev])
    cell_d = np.array([e.cell_duration for e in ev])
    wet_all = np.array([e.surface.value == "wet" for e in ev])

    pos = df["pos_m"].to_numpy(float)
    t = df["time_s"].to_numpy(float)
    s_idx = np.floor((anchor_x - pos) / cell_l).astype(np.int64)
    p_idx = np.floor((anchor_t - t) / cell_d).astype(np.int64)
    in_window = (s_idx >= 0) & (s_idx < n_space) & (p_idx >= 0) & (p_idx < n_time)
    if not in_window.any():
        raise ValidationError("no observations in event window")

    leader = _lookup(df, "leader_id")
    lead = _lookup(df, "lead_neighbor_id")
    lag = _lookup(df, "lag_neighbor_id")

    rows = np.flatnonzero(in_window)
    w = df.iloc[rows]
    speed_all = df["speed"].to_numpy(float)
    accel_all = df["accel"].to_numpy(float)
    length_all = df["length_m"].to_numpy(float)
    v = speed_all[rows]
    x = pos[rows]
    a = accel_all[rows]
    length = length_all[rows]
    heavy = (df["veh_type"].to_numpy() == "heavy")[rows]
    changing = (df["lc_state"].to_numpy() == "changing")[rows]
    wet = wet_all[rows]

    sec_idx = locate_sections(sections, x)
    n_lanes = np.array([s.n_lanes for s in sections])[sec_idx]
    radius = np.array([np.inf if s.radius is None else s.radius for s in sections])[sec_idx]
    superelev = np.array([s.superelevation for s in sections])[sec_idx]
    grade = np.array([s.grade for s in sections])[sec_idx]

    n = rows.size
    feats = np.zeros((n, 9))

    # rear-end
    li = leader[rows]
    avail_re = li >= 0
    lsafe = np.where(avail_re, li, 0)
    gap = pos[lsafe] - x - length_all[lsafe]
    if np.any(avail_re & ~(gap > 0)):
        bad = avail_re & ~(gap > 0)
        raise GapError(float(gap[bad][0]), f"leader at {_where(w, bad)}")
    closing = v - speed_all[lsafe]
    on_course = avail_re & (closing > 0)
    safe_gap = np.where(avail_re, gap, 1.0)
    safe_close = np.where(on_course, closing, 1.0)
    drac = np.where(on_course, safe_close**2 / (2.0 * safe_gap), 0.0)
    ttc = np.where(on_course, safe_gap / safe_close, np.inf)
    need = drac + (a - accel_all[lsafe])
    need_pos, need_neg = _split(need)
    feats[:, 0] = np.where(on_course, need_pos / ttc, 0.0)
    feats[:, 1] = np.where(on_course, need_neg / ttc, 0.0)
    mu_l = mu_long_array(v, heavy, wet, friction)
    feats[:, 2] = np.where(on_course, (drac - (mu_l + grade) * friction.g) / ttc, 0.0)

    # lane change
    avail_lc = changing & (n_lanes >= 2)
    for col, idx_all, is_lead in ((5, lead, True), (3, lag, False)):
        ni = idx_all[rows]
        has = avail_lc & (ni >= 0)
        nsafe = np.where(has, ni, 0)
        if is_lead:
            g = pos[nsafe] - length_all[nsafe] - x
            dv = speed_all[nsafe] - v
        else:
            g = x - length - pos[nsafe]
            dv = v - speed_all[nsafe]
        if np.any(has & ~(g > 0)):
            bad = has & ~(g > 0)
            which = "lead" if is_lead else "lag"
            raise GapError(float(g[bad][0]), f"{which} neighbour at {_where(w, bad)}")
        rg = np.where(has, dv / np.where(has, g, 1.0), 0.0)
        feats[:, col], feats[:, col + 1] = _split(rg)

    # run-off-road
    avail_ror = np.isfinite(radius) | changing
    a_lat = v**2 / radius + np.where(changing, friction.lc_peak_factor * friction.g, 0.0)
    a_crit = (friction.lateral_factor * mu_l + superelev) * friction.g
    dpos, dneg = _split(a_lat - a_crit)
    feats[:, 7] = np.where(avail_ror, dpos, 0.0)
    feats[:, 8] = np.where(avail_ror, dneg, 0.0)
    feats += 0.0  # normalise -0.0

    out = pd.DataFrame({
        "event_id": w["event_id"].to_numpy(),
        "replication": w["replication"].to_numpy(np.int64),
        "vehicle_id": w["vehicle_id"].to_numpy(),
        "time_s": w["time_s"].to_numpy(float),
        "s_index": s_idx[rows],
        "p_index": p_idx[rows],
    })
    for j, name in enumerate(FEATURE_NAMES):
        out[name] = feats[:, j]
    out["avail_re"] = avail_re
    out["avail_lc"] = avail_lc
    out["avail_ror"] = avail_ror
    out = out.sort_values(["event_id", "replication", "vehicle_id", "time_s"], kind="mergesort")
    return out.reset_index(drop=True)


def cell_labels(keys: Sequence[CellKey], events: Mapping[str, EventRecord]) -> np.ndarray:
    """Event outcome for each event's anchor cell (0, 0); NA for every other cell."""
    out = np.zeros(len(keys), dtype=np.int64)
    for i, k in enumerate(keys):
        if k.s_index == 0 and k.p_index == 0:
            out[i] = int(events[k.event_id].outcome)
    return out


def build_dataset(features: pd.DataFrame, events: Mapping[str, EventRecord],
                  scaling: Scaling = Scaling()) -> CellDataset:
    """Group feature rows into cells labelled from the events table."""
    if len(features) == 0:
        raise ValidationError("no observations")
    key_frame = features[["event_id", "replication", "s_index", "p_index"]]
    index = pd.MultiIndex.from_frame(key_frame)
    codes = index.unique().sort_values()
    cell = codes.get_indexer(index)
    keys = [CellKey(str(e), int(r), int(s), int(p)) for e, r, s, p in codes]
    labels = cell_labels(keys, events)
    return CellDataset(
        features[list(FEATURE_NAMES)].to_numpy(float),
        features[list(AVAIL_COLUMNS)].to_numpy(bool),
        cell, labels, keys, scaling,
    )
