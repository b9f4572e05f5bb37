"""Simulated trajectories -> features -> cell probabilities -> heatmap.

Writes its files to demo_output/ (or the directory given as argument).

Run: python3 demos/04_trajectory_pipeline.py [out_dir]
"""
import sys
from pathlib import Path

from simsafe import io
from simsafe.estimation import confusion_metrics, confusion_table, predict
from simsafe.features import build_dataset, extract_features
from simsafe.heatmap import render_svg
from simsafe.synthetic import DEMO_PARAMETERS, ScenarioConfig, generate_trajectories, label_outcomes

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_output")
out.mkdir(parents=True, exist_ok=True)

cfg = ScenarioConfig(n_events=30, duration=300, arrival_rate=0.6, lane_change_rate=1.5, seed=1)
scenario = generate_trajectories(cfg)
events = label_outcomes(scenario, DEMO_PARAMETERS, seed=1)
print(len(scenario.trajectories), "observations in", len(events), "events")
print("outcomes:", [e.outcome.name for e in events].count("NA"), "NA of", len(events))

# three 50 m cells upstream of each event location
lookup = {e.event_id: e for e in events}
feats = extract_features(scenario.trajectories, scenario.sections, lookup, n_space=3)
data = build_dataset(feats, lookup, DEMO_PARAMETERS.scaling)
print(f"{data.n_members} scored observations in {data.n_cells} cells")

pred = predict(data, DEMO_PARAMETERS)
print(confusion_table(confusion_metrics(pred.predicted, pred.labels)))

io.write_predictions(pred, out / "predictions.csv")
svg = render_svg(io.read_predictions(out / "predictions.csv"), title="mean probabilities, demo parameters")
(out / "heatmap.svg").write_text(svg, encoding="utf-8")
print("wrote", out / "predictions.csv", "and", out / "heatmap.svg")
