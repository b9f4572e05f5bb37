"""Command-line pipeline: simulate, score, estimate, predict, metrics, ratios, heatmap.

Exit codes: 0 success, 2 validation error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .domain import (
    DEFAULT_CELL_DURATION,
    DEFAULT_CELL_LENGTH,
    Outcome,
    Scaling,
    ValidationError,
    paper_parameters,
)
from .estimation import (
    EstimationError,
    OptimizerConfig,
    Prediction,
    coefficient_table,
    confusion_metrics,
    confusion_table,
    estimate,
    initial_parameters,
    predict,
    probability_ratios,
    ratio_table,
)
from .features import build_dataset, extract_features
from .heatmap import render_svg
from .measures import FrictionConfig
from .nested import SamplingWeights, ZeroProbabilityError, sampling_weights
from .synthetic import (
    DEMO_PARAMETERS,
    RECOVERY_PARAMETERS,
    ScenarioConfig,
    cells_to_tables,
    choice_based_indices,
    generate_trajectories,
    label_outcomes,
    synthesize_cells,
)

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 2, 3
log = logging.getLogger("simsafe")


def _counts(text: str) -> np.ndarray:
    """Parse "NA=...,RE=...,LC=...,ROR=..." (missing classes count 0)."""
    out = np.zeros(4)
    for part in filter(None, text.split(",")):
        try:
            name, value = part.split("=")
            out[Outcome.parse(name.strip())] = float(value)
        except ValueError:
            raise ValidationError(f"bad count specification {part!r} (expected NAME=value)") from None
    return out


def _write_text(path, text: str):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _truth(name: str, default):
    named = {"demo": DEMO_PARAMETERS, "recovery": RECOVERY_PARAMETERS, "paper": paper_parameters()}
    if name is None:
        return default
    if name in named:
        return named[name]
    return io.load_model(name)[0]


def cmd_simulate(args) -> int:
    out = Path(args.out_dir)
    if args.kind == "cells":
        return _simulate_cells(args, out)
    cfg = ScenarioConfig(n_events=args.events, duration=args.cell_duration, arrival_rate=args.arrival_rate,
                         lane_change_rate=args.lane_change_rate, replications=args.replications,
                         cell_length=args.cell_length, seed=args.seed)
    scenario = generate_trajectories(cfg)
    truth = _truth(args.params, DEMO_PARAMETERS)
    events = label_outcomes(scenario, truth, seed=args.seed) if len(scenario.trajectories) else scenario.events
    io.write_trajectories(scenario.trajectories, out / "trajectories.csv")
    io.write_geometry(scenario.sections, out / "geometry.csv")
    io.write_events(events, out / "events.csv")
    counts = np.bincount([int(e.outcome) for e in events], minlength=4)
    print(f"{len(scenario.trajectories)} observations, {len(events)} events "
          + " ".join(f"{k.name}={counts[k]}" for k in Outcome))
    return EXIT_OK


def _simulate_cells(args, out: Path) -> int:
    truth = _truth(args.params, RECOVERY_PARAMETERS)
    data = synthesize_cells(args.cells, truth, args.seed)
    population = data.outcome_counts().astype(np.int64)
    if args.na_ratio is not None:
        target = population.copy()
        target[0] = min(population[0], int(round(args.na_ratio * population[1:].sum())))
        data = data.subset(choice_based_indices(data.labels, target, args.seed))
    feats, events = cells_to_tables(data)
    io.write_features(feats, out / "features.csv", io.FeatureMeta(scaling=data.scaling))
    io.write_events(events, out / "events.csv")
    fmt = ",".join(f"{k.name}={population[k]}" for k in Outcome)
    print(f"{data.n_cells} cells ({data.n_members} observations) written; population {fmt}")
    return EXIT_OK


def _friction(args) -> FrictionConfig:
    return FrictionConfig(heavy_dry_factor=args.heavy_dry_factor, lateral_factor=args.lateral_factor)


def cmd_score(args) -> int:
    traj = io.read_trajectories(args.trajectories, args.speed_unit)
    sections = io.read_geometry(args.geometry)
    events = io.read_events(args.events, args.cell_length, args.cell_duration)
    friction = _friction(args)
    feats = extract_features(traj, sections, events, friction, args.n_space, args.n_time)
    meta = io.FeatureMeta(friction, Scaling(args.rg_divisor, args.dalat_multiplier),
                          args.cell_length, args.cell_duration, args.n_space, args.n_time)
    io.write_features(feats, args.out, meta)
    print(f"{len(feats)} feature rows written to {args.out}")
    return EXIT_OK


def _dataset(features_path, events_path):
    feats, meta = io.read_features(features_path)
    events = io.read_events(events_path, meta.cell_length, meta.cell_duration)
    return build_dataset(feats, events, meta.scaling), meta


def _weights(args, data) -> SamplingWeights:
    if args.weights == "unit":
        return SamplingWeights()
    if args.weights == "explicit":
        if not args.weight_values:
            raise ValidationError("--weights explicit needs --weight-values")
        return SamplingWeights(tuple(_counts(args.weight_values)))
    if not args.population:
        raise ValidationError("--weights auto needs --population (class counts or shares of the population)")
    return sampling_weights(_counts(args.population), data.outcome_counts())


def cmd_estimate(args) -> int:
    data, meta = _dataset(args.features, args.events)
    weights = _weights(args, data)
    mask = paper_parameters(reduced=True).free_mask if args.reduced else None
    start = initial_parameters(mask, data.scaling)
    result = estimate(data, weights, start, OptimizerConfig(robust=args.robust))
    print(coefficient_table(result))
    io.save_model(args.out, result.params, meta.friction, result)
    if not result.converged:
        print(f"error: {result.message}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_predict(args) -> int:
    params, friction, _ = io.load_model(args.model)
    data, meta = _dataset(args.features, args.events)
    if meta.friction != friction:
        raise ValidationError("model friction settings differ from those the features were scored with")
    pred = predict(data, params)
    io.write_predictions(pred, args.out)
    print(f"{len(pred.keys)} cell predictions written to {args.out}")
    return EXIT_OK


def _load_prediction(path) -> Prediction:
    df = io.read_predictions(path)
    probs = df[["p_na", "p_re", "p_lc", "p_ror"]].to_numpy(float)
    return Prediction(io.prediction_keys(df), probs, df["predicted"].to_numpy(np.int64),
                      df["n_obs"].to_numpy(np.int64), df["outcome"].to_numpy(np.int64))


def cmd_metrics(args) -> int:
    pred = _load_prediction(args.predictions)
    text = confusion_table(confusion_metrics(pred.predicted, pred.labels)) + "\n"
    print(text, end="")
    if args.out:
        _write_text(args.out, text)
    return EXIT_OK


def cmd_ratios(args) -> int:
    pred = _load_prediction(args.predictions)
    text = ratio_table(probability_ratios(None, None, prediction=pred)) + "\n"
    print(text, end="")
    if args.out:
        _write_text(args.out, text)
    return EXIT_OK


def cmd_heatmap(args) -> int:
    df = io.read_predictions(args.predictions)
    if len(df) == 0:
        raise ValidationError(f"{args.predictions}: no predictions")
    _write_text(args.out, render_svg(df, args.cell_length, args.cell_duration, args.title))
    print(f"heatmap written to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="simsafe", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def cells(sp):
        sp.add_argument("--cell-length", type=float, default=DEFAULT_CELL_LENGTH, help="metres")
        sp.add_argument("--cell-duration", type=float, default=DEFAULT_CELL_DURATION, help="seconds")

    s = sub.add_parser("simulate", help="generate labelled synthetic data")
    s.add_argument("--out-dir", required=True)
    s.add_argument("--kind", choices=("trajectories", "cells"), default="trajectories",
                   help="trajectories + geometry + events, or feature-level cells (features + events)")
    s.add_argument("--cells", type=int, default=50000, help="number of cells for --kind cells")
    s.add_argument("--na-ratio", type=float, help="choice-based sample: NA cells per accident cell")
    s.add_argument("--events", type=int, default=20)
    s.add_argument("--replications", type=int, default=1)
    s.add_argument("--arrival-rate", type=float, default=0.5, help="vehicles per second, all lanes")
    s.add_argument("--lane-change-rate", type=float, default=1.0, help="per vehicle per minute")
    s.add_argument("--params", help="true parameters: 'demo' (trajectory default), 'recovery' "
                                    "(cells default), 'paper' or a model file")
    s.add_argument("--seed", type=int, default=0)
    cells(s)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("score", help="compute surrogate-measure features per observation")
    s.add_argument("--trajectories", required=True)
    s.add_argument("--geometry", required=True)
    s.add_argument("--events", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--speed-unit", choices=("m/s", "km/h"), default="m/s")
    s.add_argument("--n-space", type=int, default=1, help="cells upstream of each event")
    s.add_argument("--n-time", type=int, default=1, help="periods before each event")
    s.add_argument("--rg-divisor", type=float, default=10.0)
    s.add_argument("--dalat-multiplier", type=float, default=10.0)
    s.add_argument("--heavy-dry-factor", type=float, default=FrictionConfig.heavy_dry_factor)
    s.add_argument("--lateral-factor", type=float, default=FrictionConfig.lateral_factor)
    cells(s)
    s.set_defaults(func=cmd_score)

    s = sub.add_parser("estimate", help="fit the nested logit model by weighted maximum likelihood")
    s.add_argument("--features", required=True)
    s.add_argument("--events", required=True)
    s.add_argument("--out", required=True, help="model file (JSON)")
    s.add_argument("--weights", choices=("auto", "unit", "explicit"), default="unit")
    s.add_argument("--population", help="population class counts, e.g. NA=6000,RE=300,LC=200,ROR=44")
    s.add_argument("--weight-values", help="explicit weights, e.g. NA=2.5,RE=0.1,LC=0.1,ROR=0.1")
    s.add_argument("--reduced", action="store_true", help="fix the two insignificant LC slopes at zero")
    s.add_argument("--robust", action="store_true", help="sandwich standard errors")
    s.set_defaults(func=cmd_estimate)

    s = sub.add_parser("predict", help="cell probabilities and predicted outcome")
    s.add_argument("--features", required=True)
    s.add_argument("--events", required=True)
    s.add_argument("--model", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_predict)

    for name, func, helptext in (("metrics", cmd_metrics, "accuracy and false-alarm table"),
                                 ("ratios", cmd_ratios, "mean P(k)/P(NA) by true class")):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("--predictions", required=True)
        s.add_argument("--out")
        s.set_defaults(func=func)

    s = sub.add_parser("heatmap", help="SVG of mean probabilities over the space-time grid")
    s.add_argument("--predictions", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--title", default="")
    cells(s)
    s.set_defaults(func=cmd_heatmap)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (EstimationError, ZeroProbabilityError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
