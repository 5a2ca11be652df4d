"""Stage functions shared by the CLI, the scripts and the tests."""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import clean, corpus, extract, geo
from .ensemble import stratified_split, train_stack
from .eval import evaluate
from .extract import FAKE, REAL
from .featurize import Featurizer
from .learners import SchemaError

log = logging.getLogger(__name__)


@dataclass
class ExtractionResult:
    kept: list  # ExtractedAd
    dropped: dict = field(default_factory=dict)  # id -> reason

    def to_json(self) -> dict:
        return {"kept": len(self.kept), "dropped": len(self.dropped), "reasons": dict(sorted(self.dropped.items()))}


def extract_stage(raw_ads, rules=None, gazetteer: geo.Gazetteer | None = None) -> ExtractionResult:
    """Preprocess, extract and relevance-filter raw listings."""
    rules = rules or extract.default_rules()
    if gazetteer is not None:
        rules = rules.with_road_lexicon(gazetteer.road_names())
    out = ExtractionResult([])
    for raw in raw_ads:
        try:
            ad = corpus.preprocess(raw)
        except corpus.EmptyAfterCleaning:
            out.dropped[raw.id] = "empty after cleaning"
            continue
        ex, decision = extract.extract_ad(ad, rules)
        if decision.keep:
            out.kept.append(ex)
        else:
            out.dropped[raw.id] = decision.reason
    return out


def assemble_stage(extracted, gazetteer: geo.Gazetteer, labels: dict | None = None):
    """Attach spatial features and labels; returns (records, flags by id)."""
    records, flags = [], {}
    for ex in extracted:
        roads, flag = geo.spatial_features(ex.road, str(ex.district), gazetteer)
        if flag:
            flags[ex.id] = flag
        label = None if labels is None else labels.get(ex.id)
        records.append(extract.assemble_record(ex.as_clean_ad(), ex.draft, ex.enriched, tuple(roads), label))
    return records, flags


def records_from_raw(raw_ads, gazetteer, labels=None, rules=None, ranges=None, dedup=None):
    """Full data preparation: extract, clean, then assemble records."""
    ext = extract_stage(raw_ads, rules, gazetteer)
    kept, report = clean.clean_records(ext.kept, ranges, dedup)
    records, flags = assemble_stage(kept, gazetteer, labels)
    return records, ext, report, flags


def label_vector(records) -> np.ndarray:
    labels = [r.label for r in records]
    bad = [r.id for r in records if r.label not in (REAL, FAKE)]
    if bad:
        raise SchemaError(f"records without a real/fake label: {bad[:5]}")
    return np.array([1 if lab == FAKE else 0 for lab in labels], dtype=np.int64)


# -- records on disk -----------------------------------------------------------

_RECORD_FIELDS = tuple(f.name for f in fields(extract.AdRecord))


def record_to_json(rec: extract.AdRecord) -> dict:
    return asdict(rec)


def record_from_json(obj: dict, where: str = "record") -> extract.AdRecord:
    if not isinstance(obj, dict):
        raise SchemaError(f"{where}: expected an object")
    missing = [f for f in _RECORD_FIELDS if f != "label" and f not in obj]
    if missing:
        raise SchemaError(f"{where}: missing fields {missing}")
    extra = set(obj) - set(_RECORD_FIELDS)
    if extra:
        raise SchemaError(f"{where}: unexpected fields {sorted(extra)}")
    try:
        rec = extract.AdRecord(**obj)
        for f in ("price", "area", "road_width"):
            setattr(rec, f, float(getattr(rec, f)))
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"{where}: {exc}") from None
    return rec


def write_records(records, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(record_to_json(rec), ensure_ascii=False) + "\n")


def read_records(path) -> list:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"{path}:{lineno}: {exc.msg}") from None
            out.append(record_from_json(obj, f"{path}:{lineno}"))
    return out


def write_extracted(ads, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ad in ads:
            fh.write(json.dumps(ad.to_json(), ensure_ascii=False) + "\n")


def read_extracted(path) -> list:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(extract.ExtractedAd.from_json(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise SchemaError(f"{path}:{lineno}: not an extracted listing ({exc})") from None
    return out


# -- training and evaluation ---------------------------------------------------

def split_records(records, test_fraction=0.2, seed=0):
    """Stratified train/test split of labelled records."""
    y = label_vector(records)
    keep, held = stratified_split(y, test_fraction, seed)
    return [records[i] for i in keep], [records[i] for i in held]


def train_bundle(train_records, gazetteer, cfg, rules=None, test_ids=(), gazetteer_path=None):
    """Featurize the training records, fit the stack and wrap it in a bundle."""
    from .bundle import ModelBundle, file_sha256

    fz = Featurizer(cfg.featurizer)
    X = fz.fit_transform(train_records)
    ens = train_stack(X, label_vector(train_records), cfg.stack_config())
    return ModelBundle(fz, ens, gazetteer, rules, cfg.fingerprint(),
                       str(gazetteer_path or ""), file_sha256(gazetteer_path) if gazetteer_path else "",
                       tuple(r.id for r in train_records), tuple(test_ids))


def evaluate_bundle(bundle, records):
    from .bundle import predict_records

    pred, _ = predict_records(bundle, records)
    return evaluate(pred, label_vector(records))


@dataclass
class RunResult:
    bundle: object
    metrics: object
    train: list
    test: list
    extraction: ExtractionResult
    cleaning: object


def run_pipeline(cfg, raw_ads=None, gazetteer=None, labels=None) -> RunResult:
    """Fused ingest -> extract -> clean -> train -> evaluate, all in memory."""
    cfg.paths.require(*(k for k, v in (("corpus", raw_ads), ("gazetteer", gazetteer), ("labels", labels))
                        if v is None))
    raw_ads = raw_ads if raw_ads is not None else corpus.ingest(cfg.paths.corpus)
    gaz_path = cfg.paths.gazetteer if gazetteer is None else None
    gazetteer = gazetteer if gazetteer is not None else geo.load_gazetteer(cfg.paths.gazetteer)
    if labels is None:
        from .synth import load_labels
        labels = load_labels(cfg.paths.labels)
    rules = extract.load_rules(cfg.paths.rules) if cfg.paths.rules else None
    records, ext, report, _ = records_from_raw(raw_ads, gazetteer, labels, rules, cfg.ranges, cfg.dedup)
    train, test = split_records(records, cfg.split.test_fraction, cfg.seed)
    bundle = train_bundle(train, gazetteer, cfg, rules, [r.id for r in test], gaz_path)
    return RunResult(bundle, evaluate_bundle(bundle, test), train, test, ext, report)
