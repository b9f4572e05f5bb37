"""Readers and writers for the text file formats.

CSV files have a mandatory header, "." decimals and LF line endings; a blank
field means an absent optional value.  Model files are JSON with sorted keys
and shortest round-trip float representations, so they diff and round-trip
bit-exactly.
"""
from __future__ import annotations

import dataclasses
import json
import math
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np
import pandas as pd

from .domain import (
    DEFAULT_CELL_DURATION,
    DEFAULT_CELL_LENGTH,
    FEATURE_NAMES,
    KMH,
    CellKey,
    EventRecord,
    ModelParameters,
    Outcome,
    RoadSection,
    Scaling,
    Surface,
    ValidationError,
    check_sections,
    from_record,
    to_record,
)
from .features import AVAIL_COLUMNS, FEATURE_COLUMNS, TRAJECTORY_COLUMNS
from .measures import FrictionConfig

GEOMETRY_COLUMNS = ("section_id", "start_m", "end_m", "n_lanes", "radius_m", "superelevation", "grade")
EVENT_COLUMNS = ("event_id", "outcome", "surface", "anchor_pos_m", "anchor_time_s")
PREDICTION_COLUMNS = ("event_id", "replication", "s_index", "p_index", "n_obs", "outcome",
                      "p_na", "p_re", "p_lc", "p_ror", "predicted")
MODEL_FORMAT = "simsafe-model/1"
OPTIONAL_IDS = ("leader_id", "lead_neighbor_id", "lag_neighbor_id")


def _read_table(path, columns: Sequence[str]) -> pd.DataFrame:
    """All-string frame with a ``line`` column holding 1-based file line numbers."""
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"{path}: file not found")
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False, na_filter=False, skip_blank_lines=True)
    except pd.errors.EmptyDataError:
        raise ValidationError(f"{path}: empty file (header row required)") from None
    except pd.errors.ParserError as exc:
        raise ValidationError(f"{path}: {exc}") from None
    missing = [c for c in columns if c not in df.columns]
    if missing:
        raise ValidationError(f"{path}:1: missing column(s) {', '.join(missing)}")
    df = df[list(columns)].copy()
    for c in columns:
        df[c] = df[c].str.strip()
    df["line"] = np.arange(len(df)) + 2
    df.attrs["path"] = str(path)
    return df


def _fail(df: pd.DataFrame, bad: np.ndarray, column: str, message: str):
    i = int(np.flatnonzero(bad)[0])
    value = df[column].iloc[i]
    raise ValidationError(f"{df.attrs['path']}:{int(df['line'].iloc[i])}: column {column}: {message} (got {value!r})")


def _float(df, column, allow_blank=False) -> np.ndarray:
    raw = df[column]
    blank = (raw == "").to_numpy()
    filled = raw.where(~blank, "nan")
    try:
        # astype parses exactly; to_numeric's fast path can be off by an ulp
        vals = filled.astype(float).to_numpy()
    except ValueError:
        vals = pd.to_numeric(filled, errors="coerce").to_numpy(float)
    bad = ~np.isfinite(vals) & ~(blank & allow_blank)
    if bad.any():
        _fail(df, bad, column, "expected a finite number")
    return vals


def _int(df, column) -> np.ndarray:
    vals = _float(df, column)
    bad = vals != np.round(vals)
    if bad.any():
        _fail(df, bad, column, "expected an integer")
    return vals.astype(np.int64)


def _nonblank(df, column):
    bad = (df[column] == "").to_numpy()
    if bad.any():
        _fail(df, bad, column, "value required")


def _choice(df, column, allowed):
    bad = ~df[column].isin(allowed).to_numpy()
    if bad.any():
        _fail(df, bad, column, f"expected one of {', '.join(allowed)}")


def read_trajectories(path, speed_unit: str = "m/s") -> pd.DataFrame:
    """Validated trajectory table in SI units (with a ``line`` column)."""
    if speed_unit not in ("m/s", "km/h"):
        raise ValidationError(f"unknown speed unit {speed_unit!r}")
    df = _read_table(path, TRAJECTORY_COLUMNS)
    if len(df) == 0:
        raise ValidationError(f"{path}: no observations")
    for c in ("event_id", "vehicle_id"):
        _nonblank(df, c)
    out = pd.DataFrame({"event_id": df["event_id"]})
    out["replication"] = _int(df, "replication")
    out["vehicle_id"] = df["vehicle_id"]
    out["time_s"] = _float(df, "time_s")
    out["lane_id"] = _int(df, "lane_id")
    out["pos_m"] = _float(df, "pos_m")
    speed = _float(df, "speed")
    if (speed < 0).any():
        _fail(df, speed < 0, "speed", "speed must be >= 0")
    out["speed"] = speed * KMH if speed_unit == "km/h" else speed
    out["accel"] = _float(df, "accel")
    length = _float(df, "length_m")
    if (length <= 0).any():
        _fail(df, length <= 0, "length_m", "length must be > 0")
    out["length_m"] = length
    _choice(df, "veh_type", ("car", "heavy"))
    out["veh_type"] = df["veh_type"]
    _choice(df, "lc_state", ("none", "changing"))
    out["lc_state"] = df["lc_state"]
    for c in OPTIONAL_IDS:
        out[c] = df[c].where(df[c] != "", None)
    out["line"] = df["line"]
    out.attrs["path"] = df.attrs["path"]
    return out.reset_index(drop=True)


def read_geometry(path) -> list[RoadSection]:
    df = _read_table(path, GEOMETRY_COLUMNS)
    _nonblank(df, "section_id")
    start, end = _float(df, "start_m"), _float(df, "end_m")
    lanes = _int(df, "n_lanes")
    radius = _float(df, "radius_m", allow_blank=True)
    sup, grade = _float(df, "superelevation"), _float(df, "grade")
    sections = []
    for i in range(len(df)):
        try:
            sections.append(RoadSection(
                df["section_id"].iloc[i], float(start[i]), float(end[i]), int(lanes[i]),
                None if math.isnan(radius[i]) else float(radius[i]), float(sup[i]), float(grade[i]),
            ))
        except ValidationError as exc:
            raise ValidationError(f"{path}:{int(df['line'].iloc[i])}: {exc}") from None
    try:
        return check_sections(sections)
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}") from None


def read_events(path, cell_length: float = DEFAULT_CELL_LENGTH,
                cell_duration: float = DEFAULT_CELL_DURATION) -> dict[str, EventRecord]:
    df = _read_table(path, EVENT_COLUMNS)
    _nonblank(df, "event_id")
    _choice(df, "outcome", tuple(k.name for k in Outcome))
    _choice(df, "surface", tuple(s.value for s in Surface))
    pos, t = _float(df, "anchor_pos_m"), _float(df, "anchor_time_s")
    dup = df["event_id"].duplicated().to_numpy()
    if dup.any():
        _fail(df, dup, "event_id", "duplicate event id")
    return {
        e: EventRecord(e, Outcome[o], Surface(s), float(p), float(a), cell_length, cell_duration)
        for e, o, s, p, a in zip(df["event_id"], df["outcome"], df["surface"], pos, t)
    }


def _write_csv(df: pd.DataFrame, path):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False, lineterminator="\n", na_rep="")


def write_trajectories(df: pd.DataFrame, path):
    _write_csv(df[list(TRAJECTORY_COLUMNS)], path)


def write_geometry(sections: Sequence[RoadSection], path):
    rows = [(s.section_id, s.start, s.end, s.n_lanes, s.radius, s.superelevation, s.grade) for s in sections]
    _write_csv(pd.DataFrame(rows, columns=list(GEOMETRY_COLUMNS)), path)


def write_events(events: Sequence[EventRecord], path):
    rows = [(e.event_id, e.outcome.name, e.surface.value, e.anchor_position, e.anchor_time) for e in events]
    _write_csv(pd.DataFrame(rows, columns=list(EVENT_COLUMNS)), path)


def _dump_json(obj: Any, path):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


def _load_json(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"{path}: file not found")
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}:{exc.lineno}: {exc.msg}") from None


@dataclasses.dataclass(frozen=True)
class FeatureMeta:
    """Settings a features file was produced with; stored next to it as JSON."""

    friction: FrictionConfig = FrictionConfig()
    scaling: Scaling = Scaling()
    cell_length: float = DEFAULT_CELL_LENGTH
    cell_duration: float = DEFAULT_CELL_DURATION
    n_space: int = 1
    n_time: int = 1

    def record(self) -> dict:
        return {
            "friction": to_record(self.friction), "scaling": to_record(self.scaling),
            "cell_length": self.cell_length, "cell_duration": self.cell_duration,
            "n_space": self.n_space, "n_time": self.n_time,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureMeta":
        return cls(FrictionConfig(**d["friction"]), Scaling(**d["scaling"]), d["cell_length"],
                   d["cell_duration"], d["n_space"], d["n_time"])


def meta_path(features_path) -> Path:
    p = Path(features_path)
    return p.with_name(p.name + ".meta.json")


def write_features(df: pd.DataFrame, path, meta: FeatureMeta):
    out = df[list(FEATURE_COLUMNS)].copy()
    for c in AVAIL_COLUMNS:
        out[c] = out[c].astype(int)
    _write_csv(out, path)
    _dump_json(meta.record(), meta_path(path))


def read_features(path) -> tuple[pd.DataFrame, FeatureMeta]:
    df = _read_table(path, FEATURE_COLUMNS)
    out = pd.DataFrame({"event_id": df["event_id"]})
    out["replication"] = _int(df, "replication")
    out["vehicle_id"] = df["vehicle_id"]
    out["time_s"] = _float(df, "time_s")
    out["s_index"] = _int(df, "s_index")
    out["p_index"] = _int(df, "p_index")
    for c in FEATURE_NAMES:
        out[c] = _float(df, c)
    for c in AVAIL_COLUMNS:
        _choice(df, c, ("0", "1"))
        out[c] = df[c].to_numpy() == "1"
    try:
        meta = FeatureMeta.from_dict(_load_json(meta_path(path)))
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"{meta_path(path)}: malformed metadata ({exc})") from None
    return out, meta


def model_document(params: ModelParameters, friction: FrictionConfig = FrictionConfig(),
                   result=None) -> dict:
    doc = {"format": MODEL_FORMAT, "parameters": to_record(params), "friction": to_record(friction)}
    if result is not None:
        doc["fit"] = {
            "loglik_initial": result.loglik_initial, "loglik_final": result.loglik_final,
            "rho2": result.rho2, "rho2_adjusted": result.rho2_adjusted,
            "n_obs": result.n_obs, "n_cells": result.n_cells, "n_parameters": result.n_free,
            "converged": result.converged, "iterations": result.iterations,
            "gradient_norm": result.gradient_norm, "message": result.message,
            "std_errors": result.std_errors, "t_stats": result.t_stats, "p_values": result.p_values,
            "weights": list(result.weights.w),
        }
    return doc


def save_model(path, params: ModelParameters, friction: FrictionConfig = FrictionConfig(), result=None):
    _dump_json(model_document(params, friction, result), path)


def load_model(path) -> tuple[ModelParameters, FrictionConfig, Optional[dict]]:
    doc = _load_json(path)
    if doc.get("format") != MODEL_FORMAT:
        raise ValidationError(f"{path}: not a model file (format {doc.get('format')!r})")
    try:
        params = from_record(ModelParameters, doc["parameters"])
        friction = FrictionConfig(**doc["friction"])
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"{path}: malformed model file ({exc})") from None
    return params, friction, doc.get("fit")


def write_predictions(prediction, path):
    keys = prediction.keys
    df = pd.DataFrame({
        "event_id": [k.event_id for k in keys],
        "replication": [k.replication for k in keys],
        "s_index": [k.s_index for k in keys],
        "p_index": [k.p_index for k in keys],
        "n_obs": prediction.n_obs,
        "outcome": [Outcome(int(y)).name for y in prediction.labels],
    })
    for j, c in enumerate(("p_na", "p_re", "p_lc", "p_ror")):
        df[c] = prediction.probs[:, j]
    df["predicted"] = [Outcome(int(y)).name for y in prediction.predicted]
    _write_csv(df, path)


def read_predictions(path) -> pd.DataFrame:
    df = _read_table(path, PREDICTION_COLUMNS)
    out = pd.DataFrame({"event_id": df["event_id"]})
    for c in ("replication", "s_index", "p_index", "n_obs"):
        out[c] = _int(df, c)
    names = tuple(k.name for k in Outcome)
    _choice(df, "outcome", names)
    _choice(df, "predicted", names)
    out["outcome"] = df["outcome"].map(lambda s: int(Outcome[s]))
    for c in ("p_na", "p_re", "p_lc", "p_ror"):
        out[c] = _float(df, c)
    out["predicted"] = df["predicted"].map(lambda s: int(Outcome[s]))
    return out


def prediction_keys(df: pd.DataFrame) -> list[CellKey]:
    return [CellKey(e, int(r), int(s), int(p)) for e, r, s, p in
            zip(df["event_id"], df["replication"], df["s_index"], df["p_index"])]
