"""Command-line front end.

Every stage reads and writes plain files so intermediate artifacts can be
inspected; ``evaluate`` chains the same stage functions in one process.

Exit codes: 0 success, 1 unexpected failure, 2 usage error, 3 missing file,
4 malformed input or schema mismatch, 5 invalid configuration, 6 data that
violates a documented invariant.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import shutil
import sys

import pandas as pd

from .config import RunConfig
from .evaluation import (SplitPlan, build_report, dumps_report, fit_models, format_table,
                         predict_models, split_tables, table_frame)
from .exceptions import ConfigError, GapError, OffscreenError, ParseError, SchemaError, ValidationError
from .models import load_model, save_model
from .features import GAME_FEATURES, SUBTRACK_FEATURES
from .pipeline import GAME_META, ID_COLUMNS, SUBTRACK_META, build_tables, censor_corpus
from .synthgen import generate_corpus, write_corpus
from .tracking import (parse_events, parse_frames, read_table, segment_subtracks,
                       subtracks_from_frame, subtracks_to_frame, write_table)

log = logging.getLogger("offscreen")

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_MISSING, EXIT_PARSE, EXIT_CONFIG, EXIT_DATA = 0, 1, 2, 3, 4, 5, 6

# stage artifacts, relative to the data or work directory
FRAMES = "frames"
EVENTS = "events"
SUBTRACKS = "subtracks.csv.gz"
METRICS = "metrics.csv.gz"
GAMES = "game_features.csv.gz"
SUB_FEATURES = "subtrack_features.csv.gz"
MODELS = "models"
ERRORS = "fit_errors.json"
SPLIT = "split.json"
PREDICTIONS = "predictions.csv.gz"
REPORT = "report.json"
RESIDUALS = "residuals.csv.gz"

_ID_DTYPES = {"game_id": str, "player_id": str, "position": str, "subtrack_id": str,
              "metric": str, "level": str, "model": str}


def _path(directory, name, must_exist=False):
    p = os.path.join(directory, name)
    if must_exist and not os.path.exists(p):
        raise FileNotFoundError(f"required input {p} does not exist")
    return p


def _find(directory, stem, required=True):
    """Path of ``stem.csv.gz`` or ``stem.csv`` in ``directory``."""
    for ext in (".csv.gz", ".csv"):
        p = os.path.join(directory, stem + ext)
        if os.path.exists(p):
            return p
    if required:
        raise FileNotFoundError(f"required input {os.path.join(directory, stem)}.csv[.gz] does not exist")
    return None


def _read(directory, name, required=()):
    path = _path(directory, name, must_exist=True)
    try:
        df = read_table(path, dtype=_ID_DTYPES)
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    missing = [c for c in required if c not in df.columns]
    if missing:
        raise SchemaError(f"{path} lacks columns {missing}")
    return df


def _read_features(directory):
    games = _read(directory, GAMES, ID_COLUMNS + GAME_META + GAME_FEATURES)
    subs = _read(directory, SUB_FEATURES, ID_COLUMNS + SUBTRACK_META + SUBTRACK_FEATURES)
    return games, subs


def _write_json(obj, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _load_inputs(directory):
    tracks = parse_frames(_find(directory, FRAMES))
    events_path = _find(directory, EVENTS, required=False)
    events = parse_events(events_path) if events_path else {}
    return tracks, events


# ---- stages -------------------------------------------------------------

def stage_simulate(cfg: RunConfig, outdir):
    corpus = generate_corpus(cfg.synth_config())
    write_corpus(corpus, outdir)
    log.info("simulated %d games, %d player-halves", len(corpus.game_ids), len(corpus.tracks))
    return corpus


def stage_ingest(cfg, indir, outdir):
    """Validate raw frames and events and stage them unchanged in the work directory."""
    frames_path = _find(indir, FRAMES)
    events_path = _find(indir, EVENTS, required=False)
    tracks = parse_frames(frames_path)
    if events_path:
        events = parse_events(events_path)
    else:
        log.warning("no events file in %s; only uncensored processing is possible", indir)
        events = {}
    os.makedirs(outdir, exist_ok=True)
    if not os.path.samefile(indir, outdir):
        for stem in (FRAMES, EVENTS):
            stale = _find(outdir, stem, required=False)
            if stale:
                os.remove(stale)
        for src in filter(None, (frames_path, events_path)):
            shutil.copyfile(src, os.path.join(outdir, os.path.basename(src)))
    log.info("ingested %d player-halves", len(tracks))
    return tracks, events


def stage_censor(cfg, indir, outdir):
    tracks, events = _load_inputs(indir)
    subs = censor_corpus(tracks, events, cfg.window())
    os.makedirs(outdir, exist_ok=True)
    write_table(subtracks_to_frame([s for key in sorted(subs) for s in subs[key]]),
                _path(outdir, SUBTRACKS))
    n_cens = sum(not s.observed for v in subs.values() for s in v)
    log.info("%d censored subtracks", n_cens)
    return subs


def _tables(cfg, indir):
    tracks, _ = _load_inputs(indir)
    sub_path = _path(indir, SUBTRACKS)
    if os.path.exists(sub_path):
        subs = subtracks_from_frame(_read(indir, SUBTRACKS, ["game_id", "player_id", "half", "observed",
                                                             "start", "stop"]), tracks)
    else:
        log.warning("no subtracks in %s; treating every frame as observed", indir)
        subs = {}
    for tr in tracks:
        if tr.key not in subs:
            subs[tr.key] = segment_subtracks(tr, [True] * len(tr))
    return build_tables(tracks, subs, cfg.bandwidth, cfg.velocity_bands(), cfg.acceleration_bands())


def stage_metrics(cfg, indir, outdir, tables=None):
    tables = tables or _tables(cfg, indir)
    os.makedirs(outdir, exist_ok=True)
    write_table(tables.metrics, _path(outdir, METRICS))
    return tables


def stage_features(cfg, indir, outdir, tables=None):
    tables = tables or _tables(cfg, indir)
    os.makedirs(outdir, exist_ok=True)
    write_table(tables.games, _path(outdir, GAMES))
    write_table(tables.subtracks, _path(outdir, SUB_FEATURES))
    return tables


def _split(cfg, games):
    s = cfg.split
    return SplitPlan.from_corpus(games["game_id"], int(s["train"]), int(s["test"]), s.get("order"))


def stage_fit(cfg, indir, outdir):
    games, subs = _read_features(indir)
    split = _split(cfg, games)
    train, _, sub_train, _ = split_tables(games, subs, split)
    models, errors = fit_models(train, sub_train, cfg.models["metrics"], cfg.models["roster"],
                                cfg.boost_params(), cfg.seed)
    mdir = _path(outdir, MODELS)
    os.makedirs(mdir, exist_ok=True)
    for name in os.listdir(mdir):
        if name.endswith(".json"):
            os.remove(os.path.join(mdir, name))
    for key, m in sorted(models.items()):
        save_model(m, os.path.join(mdir, key + ".json"))
    _write_json(errors, _path(outdir, ERRORS))
    _write_json({"train": split.train_games, "test": split.test_games}, _path(outdir, SPLIT))
    log.info("fitted %d models (%d failed)", len(models), len(errors))
    return models, errors


def _load_models(directory):
    mdir = _path(directory, MODELS, must_exist=True)
    return {name[:-5]: load_model(os.path.join(mdir, name))
            for name in sorted(os.listdir(mdir)) if name.endswith(".json")}


def _load_split(directory):
    with open(_path(directory, SPLIT, must_exist=True), encoding="utf-8") as fh:
        d = json.load(fh)
    return SplitPlan(d["train"] + d["test"], len(d["train"]), len(d["test"]))


def stage_predict(cfg, indir, outdir):
    games, subs = _read_features(indir)
    models = _load_models(indir)
    split = _load_split(indir)
    _, test, _, sub_test = split_tables(games, subs, split)
    preds = predict_models(models, test, sub_test)
    os.makedirs(outdir, exist_ok=True)
    write_table(preds, _path(outdir, PREDICTIONS))
    return preds


def stage_report(cfg, indir, outdir, stream=None):
    stream = stream or sys.stdout
    games = _read(indir, GAMES, ID_COLUMNS + GAME_META + GAME_FEATURES)
    preds = _read(indir, PREDICTIONS, ["metric", "level", "model", "game_id", "player_id", "prediction"])
    models = _load_models(indir)
    split = _load_split(indir)
    with open(_path(indir, ERRORS, must_exist=True), encoding="utf-8") as fh:
        errors = json.load(fh)
    test = games[games["game_id"].isin(split.test_games)]
    metrics = [m for m in cfg.models["metrics"] if m in set(preds["metric"])] or cfg.models["metrics"]
    report, residuals = build_report(preds, test, models, errors, split, metrics, cfg.models["roster"])
    os.makedirs(outdir, exist_ok=True)
    with open(_path(outdir, REPORT), "w", encoding="utf-8") as fh:
        fh.write(dumps_report(report))
    write_table(residuals, _path(outdir, RESIDUALS))
    for level in ("subtrack", "game"):
        write_table(table_frame(report, level), _path(outdir, f"table_{level}.csv"))
        print(f"\n{level}-level predictions", file=stream)
        print(format_table(report, level), file=stream)
    return report


def stage_evaluate(cfg, indir, outdir, stream=None):
    stage_ingest(cfg, indir, outdir)
    stage_censor(cfg, outdir, outdir)
    tables = _tables(cfg, outdir)
    stage_metrics(cfg, outdir, outdir, tables)
    stage_features(cfg, outdir, outdir, tables)
    stage_fit(cfg, outdir, outdir)
    stage_predict(cfg, outdir, outdir)
    return stage_report(cfg, outdir, outdir, stream)


# ---- argument handling --------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(prog="offscreen",
                                     description="Estimate player load while off camera.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    parser.add_argument("--config", help="JSON run configuration")
    parser.add_argument("--seed", type=int, help="override the configured seed")
    # accepted after the subcommand as well; SUPPRESS keeps a value given before it
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="JSON run configuration")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="override the configured seed")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help, input_default, output_default):
        p = sub.add_parser(name, parents=[common], help=help)
        if input_default is not None:
            p.add_argument("--input", default=input_default, help=f"input directory (default {input_default})")
        p.add_argument("--output", default=output_default, help=f"output directory (default {output_default})")
        return p

    add("simulate", "generate a synthetic corpus", None, "data")
    add("ingest", "parse and validate frames and events", "data", "work")
    add("censor", "split tracks into observed and censored subtracks", "work", "work")
    add("metrics", "compute load metrics per player-game", "work", "work")
    add("features", "build predictor tables", "work", "work")
    add("fit", "train the model roster on the training games", "work", "work")
    add("predict", "predict the held-out games", "work", "work")
    add("report", "score predictions and print the error tables", "work", "work")
    add("evaluate", "run every stage from ingest to report", "data", "work")
    return parser


def _config(args):
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("seed must be nonnegative")
        d = cfg.to_dict()
        d["seed"] = args.seed
        cfg = RunConfig.from_dict(d)
    return cfg


def run(args, stream=None):
    cfg = _config(args)
    cmd = args.command
    if cmd == "simulate":
        stage_simulate(cfg, args.output)
    elif cmd == "ingest":
        stage_ingest(cfg, args.input, args.output)
    elif cmd == "censor":
        stage_censor(cfg, args.input, args.output)
    elif cmd == "metrics":
        stage_metrics(cfg, args.input, args.output)
    elif cmd == "features":
        stage_features(cfg, args.input, args.output)
    elif cmd == "fit":
        stage_fit(cfg, args.input, args.output)
    elif cmd == "predict":
        stage_predict(cfg, args.input, args.output)
    elif cmd == "report":
        stage_report(cfg, args.input, args.output, stream)
    elif cmd == "evaluate":
        stage_evaluate(cfg, args.input, args.output, stream)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        run(args)
    except FileNotFoundError as exc:
        code, msg = EXIT_MISSING, str(exc)
    except (ParseError, SchemaError) as exc:
        code, msg = EXIT_PARSE, str(exc)
    except ConfigError as exc:
        code, msg = EXIT_CONFIG, str(exc)
    except (ValidationError, GapError) as exc:
        code, msg = EXIT_DATA, str(exc)
    except OffscreenError as exc:
        code, msg = EXIT_FAIL, str(exc)
    else:
        return EXIT_OK
    print(f"offscreen {args.command}: error: {msg}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
