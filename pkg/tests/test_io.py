import json

import numpy as np
import pytest

from simsafe import io
from simsafe.domain import KMH, ModelParameters, Scaling, ValidationError, paper_parameters
from simsafe.estimation import estimate, predict
from simsafe.measures import FrictionConfig
from simsafe.synthetic import RECOVERY_PARAMETERS, synthesize_cells

HEADER = ",".join(("event_id", "replication", "vehicle_id", "time_s", "lane_id", "pos_m", "speed", "accel",
                   "length_m", "veh_type", "leader_id", "lc_state", "lead_neighbor_id", "lag_neighbor_id"))


def write(path, *lines):
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def test_trajectory_parsing_and_blank_ids(tmp_path):
    p = write(tmp_path / "t.csv", HEADER,
              "E1,0,F,10,1,100,72,0,4.5,car,L,none,,",
              "E1,0,L,10,1,130,36,0,4.5,heavy,,changing,,")
    df = io.read_trajectories(p, speed_unit="km/h")
    assert df["speed"].tolist() == pytest.approx([72 * KMH, 36 * KMH])
    assert df["speed"].iloc[0] == pytest.approx(20.0)
    assert df["leader_id"].tolist() == ["L", None]
    assert df["lag_neighbor_id"].isna().all()


@pytest.mark.parametrize("row, column", [
    ("E1,0,F,10,1,100,-3,0,4.5,car,,none,,", "speed"),
    ("E1,0,F,10,1,100,20,0,0,car,,none,,", "length_m"),
    ("E1,0,F,10,1,abc,20,0,4.5,car,,none,,", "pos_m"),
    ("E1,0,F,10,1,100,20,0,4.5,bus,,none,,", "veh_type"),
    ("E1,0.5,F,10,1,100,20,0,4.5,car,,none,,", "replication"),
])
def test_trajectory_errors_name_line_and_column(tmp_path, row, column):
    p = write(tmp_path / "t.csv", HEADER, "E1,0,G,10,1,50,20,0,4.5,car,,none,,", row)
    with pytest.raises(ValidationError, match=rf"t\.csv:3: column {column}"):
        io.read_trajectories(p)


def test_empty_and_missing_files(tmp_path):
    with pytest.raises(ValidationError, match="no observations"):
        io.read_trajectories(write(tmp_path / "t.csv", HEADER))
    with pytest.raises(ValidationError, match="not found"):
        io.read_events(tmp_path / "nope.csv")
    with pytest.raises(ValidationError, match="missing column"):
        io.read_events(write(tmp_path / "e.csv", "event_id,outcome"))


def test_geometry_and_events(tmp_path):
    g = write(tmp_path / "g.csv", "section_id,start_m,end_m,n_lanes,radius_m,superelevation,grade",
              "A,0,100,2,,0,0", "B,100,250,2,300,0.05,-0.01")
    secs = io.read_geometry(g)
    assert secs[0].radius is None and secs[1].radius == 300.0
    bad = write(tmp_path / "g2.csv", "section_id,start_m,end_m,n_lanes,radius_m,superelevation,grade",
                "A,0,100,2,,0,0", "B,120,250,2,,0,0")
    with pytest.raises(ValidationError, match="gap"):
        io.read_geometry(bad)
    e = write(tmp_path / "e.csv", "event_id,outcome,surface,anchor_pos_m,anchor_time_s",
              "E1,RE,wet,200,600", "E1,NA,dry,100,600")
    with pytest.raises(ValidationError, match="e.csv:3: column event_id: duplicate"):
        io.read_events(e)


def test_model_round_trip_is_bit_exact(tmp_path):
    params = paper_parameters().with_vector(np.nextafter(paper_parameters().vector(), 0))
    friction = FrictionConfig(heavy_dry_factor=0.65)
    io.save_model(tmp_path / "m.json", params, friction)
    back, fr, fit = io.load_model(tmp_path / "m.json")
    assert back == params and fr == friction and fit is None
    assert np.array_equal(back.vector(), params.vector())
    first = (tmp_path / "m.json").read_bytes()
    io.save_model(tmp_path / "m2.json", back, fr)
    assert (tmp_path / "m2.json").read_bytes() == first


def test_model_file_validation(tmp_path):
    (tmp_path / "m.json").write_text(json.dumps({"format": "other"}))
    with pytest.raises(ValidationError, match="not a model file"):
        io.load_model(tmp_path / "m.json")
    (tmp_path / "m.json").write_text("{")
    with pytest.raises(ValidationError):
        io.load_model(tmp_path / "m.json")


def test_fit_block_written(tmp_path):
    data = synthesize_cells(300, RECOVERY_PARAMETERS, 0)
    mask = [False] * 13
    mask[0] = mask[4] = mask[9] = True
    res = estimate(data, None, ModelParameters(free_mask=tuple(mask)))
    io.save_model(tmp_path / "m.json", res.params, FrictionConfig(), res)
    fit = io.load_model(tmp_path / "m.json")[2]
    assert fit["loglik_final"] == res.loglik_final and fit["n_parameters"] == 3


def test_features_and_predictions_round_trip(tmp_path):
    from simsafe.synthetic import cells_to_tables
    data = synthesize_cells(200, RECOVERY_PARAMETERS, 2)
    feats, events = cells_to_tables(data)
    meta = io.FeatureMeta(scaling=Scaling(5.0, 10.0), n_space=2)
    io.write_features(feats, tmp_path / "f.csv", meta)
    back, meta2 = io.read_features(tmp_path / "f.csv")
    assert meta2 == meta
    assert np.array_equal(back[list(feats.columns[6:15])].to_numpy(float), feats[list(feats.columns[6:15])].to_numpy(float))
    pred = predict(data, RECOVERY_PARAMETERS)
    io.write_predictions(pred, tmp_path / "p.csv")
    df = io.read_predictions(tmp_path / "p.csv")
    assert np.array_equal(df[["p_na", "p_re", "p_lc", "p_ror"]].to_numpy(float), pred.probs)
    assert io.prediction_keys(df) == pred.keys
    assert b"\r\n" not in (tmp_path / "p.csv").read_bytes()
