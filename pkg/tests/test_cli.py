import json
import xml.etree.ElementTree as ET

import pandas as pd
import pytest

from simsafe import io
from simsafe.cli import main
from simsafe.domain import paper_parameters
from simsafe.measures import FrictionConfig
from simsafe.synthetic import DEMO_PARAMETERS

from .test_io import HEADER, write


@pytest.fixture(scope="module")
def cells_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("cells")
    assert main(["simulate", "--kind", "cells", "--cells", "50000", "--na-ratio", "10", "--seed", "3",
                 "--out-dir", str(out)]) == 0
    return out


def counts_arg(events_path):
    counts = pd.read_csv(events_path, keep_default_na=False)["outcome"].value_counts()
    return ",".join(f"{k}={int(v)}" for k, v in counts.items())


def test_estimate_predict_report_chain(cells_dir, capsys):
    d = cells_dir
    rc = main(["estimate", "--features", str(d / "features.csv"), "--events", str(d / "events.csv"),
               "--out", str(d / "model.json"), "--weights", "auto", "--population", "NA=49400,RE=220,LC=350,ROR=30"])
    out = capsys.readouterr().out
    assert rc == 0 and "beta_ror_2" in out and "mu" in out
    assert json.loads((d / "model.json").read_text())["fit"]["converged"] is True
    assert main(["predict", "--features", str(d / "features.csv"), "--events", str(d / "events.csv"),
                 "--model", str(d / "model.json"), "--out", str(d / "pred.csv")]) == 0
    assert main(["metrics", "--predictions", str(d / "pred.csv"), "--out", str(d / "metrics.txt")]) == 0
    assert main(["ratios", "--predictions", str(d / "pred.csv"), "--out", str(d / "ratios.txt")]) == 0
    ratios = (d / "ratios.txt").read_text()
    assert ratios.index("RE") < ratios.index("LC") < ratios.index("ROR")
    assert main(["heatmap", "--predictions", str(d / "pred.csv"), "--out", str(d / "map.svg")]) == 0
    ET.parse(d / "map.svg")


def test_unit_and_auto_weights_agree_on_balanced_data(cells_dir, tmp_path):
    d = cells_dir
    base = ["estimate", "--features", str(d / "features.csv"), "--events", str(d / "events.csv")]
    assert main(base + ["--out", str(tmp_path / "unit.json"), "--weights", "unit"]) == 0
    # population shares equal to sample shares give unit weights
    assert main(base + ["--out", str(tmp_path / "auto.json"), "--weights", "auto",
                        "--population", counts_arg(d / "events.csv")]) == 0
    a = io.load_model(tmp_path / "unit.json")[0].vector()
    b = io.load_model(tmp_path / "auto.json")[0].vector()
    assert abs(a - b).max() < 1e-8


def test_missing_events_file_is_a_validation_error(cells_dir, tmp_path, capsys):
    rc = main(["estimate", "--features", str(cells_dir / "features.csv"), "--events", str(tmp_path / "none.csv"),
               "--out", str(tmp_path / "m.json")])
    assert rc == 2 and "not found" in capsys.readouterr().err
    assert not (tmp_path / "m.json").exists()


def test_auto_weights_need_population(cells_dir, tmp_path):
    assert main(["estimate", "--features", str(cells_dir / "features.csv"), "--events",
                 str(cells_dir / "events.csv"), "--out", str(tmp_path / "m.json"), "--weights", "auto"]) == 2


def pair_files(tmp_path, speed_f="20", speed_l="10"):
    t = write(tmp_path / "t.csv", HEADER,
              f"E1,0,F,100,1,970,{speed_f},0,4.5,car,L,none,,",
              f"E1,0,L,100,1,999.5,{speed_l},0,4.5,car,,none,,")
    g = write(tmp_path / "g.csv", "section_id,start_m,end_m,n_lanes,radius_m,superelevation,grade",
              "S1,0,2000,2,,0,0")
    e = write(tmp_path / "e.csv", "event_id,outcome,surface,anchor_pos_m,anchor_time_s", "E1,RE,dry,1000,300")
    return t, g, e


def test_score_minimal_pair(tmp_path):
    t, g, e = pair_files(tmp_path)
    assert main(["score", "--trajectories", str(t), "--geometry", str(g), "--events", str(e),
                 "--out", str(tmp_path / "f.csv")]) == 0
    df, meta = io.read_features(tmp_path / "f.csv")
    assert df.set_index("vehicle_id").loc["F", "ra_need_pos"] == pytest.approx(0.8)
    assert meta.scaling.rg_divisor == 10.0


def test_score_kmh_flag(tmp_path):
    t, g, e = pair_files(tmp_path, "72", "36")
    assert main(["score", "--trajectories", str(t), "--geometry", str(g), "--events", str(e),
                 "--speed-unit", "km/h", "--out", str(tmp_path / "f.csv")]) == 0
    df, _ = io.read_features(tmp_path / "f.csv")
    assert df.set_index("vehicle_id").loc["F", "ra_need_pos"] == pytest.approx(0.8)


def test_score_empty_and_bad_geometry(tmp_path, capsys):
    t, g, e = pair_files(tmp_path)
    empty = write(tmp_path / "empty.csv", HEADER)
    args = ["score", "--geometry", str(g), "--events", str(e), "--out", str(tmp_path / "f.csv")]
    assert main(args + ["--trajectories", str(empty)]) == 2
    assert "no observations" in capsys.readouterr().err
    short = write(tmp_path / "g2.csv", "section_id,start_m,end_m,n_lanes,radius_m,superelevation,grade",
                  "S1,0,500,2,,0,0")
    assert main(["score", "--trajectories", str(t), "--geometry", str(short), "--events", str(e),
                 "--out", str(tmp_path / "f.csv")]) == 2
    assert "970" in capsys.readouterr().err


def test_predict_rejects_friction_mismatch(cells_dir, tmp_path):
    io.save_model(tmp_path / "m.json", paper_parameters(), FrictionConfig(heavy_dry_factor=0.6))
    assert main(["predict", "--features", str(cells_dir / "features.csv"), "--events",
                 str(cells_dir / "events.csv"), "--model", str(tmp_path / "m.json"),
                 "--out", str(tmp_path / "p.csv")]) == 2


def test_trajectory_pipeline_runs(tmp_path):
    d = tmp_path
    assert main(["simulate", "--out-dir", str(d), "--events", "6", "--seed", "2", "--cell-duration", "120"]) == 0
    assert main(["score", "--trajectories", str(d / "trajectories.csv"), "--geometry", str(d / "geometry.csv"),
                 "--events", str(d / "events.csv"), "--cell-duration", "120", "--n-space", "2",
                 "--out", str(d / "features.csv")]) == 0
    io.save_model(d / "m.json", DEMO_PARAMETERS)
    assert main(["predict", "--features", str(d / "features.csv"), "--events", str(d / "events.csv"),
                 "--model", str(d / "m.json"), "--out", str(d / "pred.csv")]) == 0
    pred = io.read_predictions(d / "pred.csv")
    assert set(pred["s_index"]) == {0, 1}
