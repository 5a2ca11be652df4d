"""Command-line entry point: ``fakeads <subcommand> [options]``.

Stages read and write files in the output directory, so
``synth -> extract -> clean -> train -> evaluate`` can run as separate
processes. Exit codes: 0 success, 1 usage or configuration error, 2 data
error, 3 training error. Errors go to stderr as one JSON object.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import bundle as B
from . import clean, corpus, eval as ev, extract, geo, pipeline, synth
from .config import ConfigError, PipelineConfig, load_config
from .ensemble import StackError, StratifyError
from .featurize import FeaturizeError
from .learners import DegenerateLabels, LearnerError, SchemaError
from .parallel import n_threads

log = logging.getLogger("fakeads")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_TRAIN = 0, 1, 2, 3

_DATA_ERRORS = (SchemaError, corpus.CorpusError, geo.GazetteerError, geo.UnknownRoad, FileNotFoundError,
                B.IntegrityError, B.VersionError, StratifyError, FeaturizeError, synth.LabelError,
                extract.AssemblyError, json.JSONDecodeError, UnicodeDecodeError)
_TRAIN_ERRORS = (StackError, DegenerateLabels, LearnerError, ev.EvalError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fakeads", description="Fake real-estate listing detection pipeline.")
    p.add_argument("--config", help="pipeline config (TOML)")
    p.add_argument("--seed", type=int, help="overrides the config seed")
    p.add_argument("--out", help="output directory (default from config, else ./out)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="generate a synthetic corpus, labels and gazetteer")
    s.add_argument("--n-ads", type=int)
    s.add_argument("--fake-fraction", type=float)

    s = sub.add_parser("extract", help="preprocess, extract entities and filter")
    s.add_argument("--corpus")
    s.add_argument("--gazetteer")

    s = sub.add_parser("clean", help="denoise, drop outliers and duplicates")
    s.add_argument("--extracted")

    s = sub.add_parser("train", help="split, featurize and train the stacked ensemble")
    s.add_argument("--cleaned")
    s.add_argument("--gazetteer")
    s.add_argument("--labels")

    for name, text in (("evaluate", "score a bundle on labelled records"),
                       ("importance", "permutation importance of a bundle")):
        s = sub.add_parser(name, help=text)
        s.add_argument("--bundle")
        s.add_argument("--records", help="assembled records JSONL (instead of cleaned listings)")
        s.add_argument("--cleaned")
        s.add_argument("--labels")
        s.add_argument("--all", action="store_true", help="use every record, not only the held-out test ids")
        if name == "importance":
            s.add_argument("--n-shuffles", type=int, default=5)

    s = sub.add_parser("predict", help="label new listings with a bundle")
    s.add_argument("--bundle")
    g = s.add_mutually_exclusive_group()
    g.add_argument("--records", help="assembled records JSONL")
    g.add_argument("--corpus", help="raw listings JSONL/CSV")

    s = sub.add_parser("ablate", help="retrain with feature sets removed cumulatively")
    s.add_argument("--cleaned")
    s.add_argument("--gazetteer")
    s.add_argument("--labels")
    return p


# -- helpers ---------------------------------------------------------------------

def _write_json(path: Path, obj) -> Path:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False, default=B._jsonable) + "\n",
                    encoding="utf-8")
    return path


def _pick(cli_value, cfg_value, default: Path) -> Path:
    return Path(cli_value or cfg_value or default)


def _exists(path: Path, what: str) -> Path:
    if not path.exists():
        raise FileNotFoundError(f"{what} not found: {path}")
    return path


def _records_for(args, cfg, out: Path, gazetteer, labels_required=True):
    """Labelled records from --records, or assembled from cleaned listings."""
    if args.records:
        return pipeline.read_records(_exists(Path(args.records), "records"))
    cleaned = pipeline.read_extracted(_exists(_pick(args.cleaned, None, out / "cleaned.jsonl"), "cleaned listings"))
    labels = None
    lab_path = _pick(getattr(args, "labels", None), cfg.paths.labels, out / "labels.csv")
    if labels_required or lab_path.exists():
        labels = synth.load_labels(_exists(lab_path, "labels"))
    records, _ = pipeline.assemble_stage(cleaned, gazetteer, labels)
    return records


def _restrict(records, ids, use_all):
    if use_all or not ids:
        return records
    wanted = set(ids)
    chosen = [r for r in records if r.id in wanted]
    if not chosen:
        raise SchemaError("none of the bundle's held-out test ids occur in the given records; pass --all")
    return chosen


# -- subcommands -------------------------------------------------------------------

def cmd_synth(args, cfg, out):
    sc = cfg.synth
    if args.n_ads is not None:
        sc = replace(sc, n_ads=args.n_ads)
    if args.fake_fraction is not None:
        sc = replace(sc, fake_fraction=args.fake_fraction)
    paths = synth.generate_corpus(sc).write(out)
    _write_json(out / "synth_manifest.json", {"config": sc.__dict__, "files": paths})
    return paths


def cmd_extract(args, cfg, out):
    raw = corpus.ingest(_exists(_pick(args.corpus, cfg.paths.corpus, out / "corpus.jsonl"), "corpus"))
    gaz = geo.load_gazetteer(_exists(_pick(args.gazetteer, cfg.paths.gazetteer, out / "gazetteer.csv"), "gazetteer"))
    rules = extract.load_rules(cfg.paths.rules) if cfg.paths.rules else None
    res = pipeline.extract_stage(raw, rules, gaz)
    pipeline.write_extracted(res.kept, out / "extracted.jsonl")
    _write_json(out / "extraction_report.json", res.to_json())
    return res.to_json()


def cmd_clean(args, cfg, out):
    ads = pipeline.read_extracted(_exists(_pick(args.extracted, None, out / "extracted.jsonl"), "extracted listings"))
    kept, report = clean.clean_records(ads, cfg.ranges, cfg.dedup)
    pipeline.write_extracted(kept, out / "cleaned.jsonl")
    _write_json(out / "cleaning_report.json", report.to_json())
    return {"kept": report.kept, "input": report.n_input}


def cmd_train(args, cfg, out):
    cleaned = pipeline.read_extracted(_exists(_pick(args.cleaned, None, out / "cleaned.jsonl"), "cleaned listings"))
    gaz_path = _exists(_pick(args.gazetteer, cfg.paths.gazetteer, out / "gazetteer.csv"), "gazetteer")
    gaz = geo.load_gazetteer(gaz_path)
    labels = synth.load_labels(_exists(_pick(args.labels, cfg.paths.labels, out / "labels.csv"), "labels"))
    records, flags = pipeline.assemble_stage(cleaned, gaz, labels)
    train, test = pipeline.split_records(records, cfg.split.test_fraction, cfg.seed)
    rules = extract.load_rules(cfg.paths.rules) if cfg.paths.rules else None
    bundle = pipeline.train_bundle(train, gaz, cfg, rules, [r.id for r in test], gaz_path)
    B.save_bundle(bundle, out / "bundle.zip")
    _write_json(out / "leaderboard.json", bundle.ensemble.leaderboard())
    (out / "leaderboard.txt").write_text(ev.leaderboard_table(bundle.ensemble) + "\n", encoding="utf-8")
    _write_json(out / "split.json", {"train": [r.id for r in train], "test": [r.id for r in test],
                                     "spatial_flags": flags})
    return {"bundle": str(out / "bundle.zip"), "chosen_final": bundle.ensemble.chosen_final,
            "validation_accuracy": bundle.ensemble.val_scores[bundle.ensemble.chosen_final]}


def _load_bundle(args, out):
    return B.load_bundle(_exists(_pick(args.bundle, None, out / "bundle.zip"), "bundle"))


def cmd_evaluate(args, cfg, out):
    bundle = _load_bundle(args, out)
    records = _restrict(_records_for(args, cfg, out, bundle.gazetteer), bundle.test_ids, args.all)
    report = pipeline.evaluate_bundle(bundle, records)
    (out / "metrics.json").write_text(report.to_json() + "\n", encoding="utf-8")
    (out / "metrics.txt").write_text(ev.metrics_table({"stacked ensemble": report}) + "\n", encoding="utf-8")
    return report.as_dict()


def cmd_importance(args, cfg, out):
    bundle = _load_bundle(args, out)
    records = _restrict(_records_for(args, cfg, out, bundle.gazetteer), bundle.test_ids, args.all)
    X = bundle.featurizer.transform(records)
    rep = ev.permutation_importance(bundle.ensemble, X, pipeline.label_vector(records),
                                    n_shuffles=args.n_shuffles, seed=cfg.seed)
    _write_json(out / "importance.json", rep.as_dict())
    (out / "importance.txt").write_text(ev.importance_table(rep) + "\n", encoding="utf-8")
    return {"ranking": rep.ranking()[:5]}


def cmd_predict(args, cfg, out):
    bundle = _load_bundle(args, out)
    dropped = {}
    if args.corpus:
        raw = corpus.ingest(_exists(Path(args.corpus), "corpus"))
        res = pipeline.extract_stage(raw, bundle.rules, bundle.gazetteer)
        records, _ = pipeline.assemble_stage(res.kept, bundle.gazetteer, None)
        dropped = res.dropped
    else:
        records = pipeline.read_records(_exists(_pick(args.records, None, out / "records.jsonl"), "records"))
    rows = []
    if records:
        labels, p = B.predict_records(bundle, records)
        rows = [{"id": r.id, "label": extract.FAKE if lab else extract.REAL, "p_fake": float(q)}
                for r, lab, q in zip(records, labels, p)]
    with open(out / "predictions.jsonl", "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")
    if dropped:
        _write_json(out / "predict_dropped.json", dropped)
    return {"predicted": len(rows), "dropped": len(dropped), "predictions": rows[:10]}


def cmd_ablate(args, cfg, out):
    cleaned = pipeline.read_extracted(_exists(_pick(args.cleaned, None, out / "cleaned.jsonl"), "cleaned listings"))
    gaz = geo.load_gazetteer(_exists(_pick(args.gazetteer, cfg.paths.gazetteer, out / "gazetteer.csv"), "gazetteer"))
    labels = synth.load_labels(_exists(_pick(args.labels, cfg.paths.labels, out / "labels.csv"), "labels"))
    records, _ = pipeline.assemble_stage(cleaned, gaz, labels)
    train, test = pipeline.split_records(records, cfg.split.test_fraction, cfg.seed)
    from .featurize import Featurizer

    fz = Featurizer(cfg.featurizer)
    Xtr = fz.fit_transform(train)
    Xte = fz.transform(test)
    rows = ev.ablation(Xtr, pipeline.label_vector(train), Xte, pipeline.label_vector(test),
                       cfg.stack_config(), cfg.ablation_order)
    _write_json(out / "ablation.json", [r.as_dict() for r in rows])
    (out / "ablation.txt").write_text(ev.ablation_table(rows) + "\n", encoding="utf-8")
    return {r.label: r.report.accuracy for r in rows}


COMMANDS = {"synth": cmd_synth, "extract": cmd_extract, "clean": cmd_clean, "train": cmd_train,
            "evaluate": cmd_evaluate, "predict": cmd_predict, "importance": cmd_importance,
            "ablate": cmd_ablate}


def _fail(code, exc) -> int:
    kind = {EXIT_USAGE: "usage", EXIT_DATA: "data", EXIT_TRAIN: "training"}[code]
    print(json.dumps({"error": kind, "type": type(exc).__name__, "message": str(exc), "exit_code": code},
                     ensure_ascii=False), file=sys.stderr)
    return code


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        n_threads()  # validates the thread-count variable early
        cfg = load_config(args.config) if args.config else PipelineConfig()
        if args.seed is not None:
            if args.seed < 0:
                raise UsageError("--seed must be non-negative")
            cfg = cfg.with_seed(args.seed)
        out = Path(args.out or cfg.paths.out)
    except (UsageError, ConfigError, ValueError) as exc:
        return _fail(EXIT_USAGE, exc)
    except FileNotFoundError as exc:
        return _fail(EXIT_USAGE, exc)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out.mkdir(parents=True, exist_ok=True)
    try:
        result = COMMANDS[args.command](args, cfg, out)
    except _DATA_ERRORS as exc:
        return _fail(EXIT_DATA, exc)
    except _TRAIN_ERRORS as exc:
        return _fail(EXIT_TRAIN, exc)
    except (ConfigError, extract.RulesError) as exc:
        return _fail(EXIT_USAGE, exc)
    print(json.dumps({"command": args.command, "out": str(out), "result": result},
                     indent=2, ensure_ascii=False, default=B._jsonable))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
