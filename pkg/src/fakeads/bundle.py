"""Self-describing model bundle: a zip of a JSON manifest plus pickled sections.

The manifest lists every section with its sha256; load verifies the format
version first, then each checksum, and only then unpickles.
"""
from __future__ import annotations

import hashlib
import json
import pickle
import zipfile
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import ensemble as E
from . import learners as L
from .featurize import Featurizer

FORMAT_VERSION = 1
MANIFEST = "manifest.json"
_SECTIONS = ("featurizer", "ensemble", "gazetteer", "rules")
_EPOCH = (1980, 1, 1, 0, 0, 0)  # fixed zip timestamps keep archives reproducible


class BundleError(Exception):
    pass


class VersionError(BundleError):
    pass


class IntegrityError(BundleError):
    pass


@dataclass
class ModelBundle:
    featurizer: Featurizer
    ensemble: E.StackedEnsemble
    gazetteer: object  # geo.Gazetteer snapshot used for spatial features
    rules: object = None  # extract.RuleSet; None means the packaged defaults
    config_fingerprint: str = ""
    gazetteer_source: str = ""
    gazetteer_sha256: str = ""
    train_ids: tuple = ()
    test_ids: tuple = ()
    format_version: int = FORMAT_VERSION
    extra: dict = field(default_factory=dict)

    def manifest(self) -> dict:
        ens = self.ensemble
        return {
            "format_version": self.format_version,
            "config_fingerprint": self.config_fingerprint,
            "gazetteer": {"source": self.gazetteer_source, "sha256": self.gazetteer_sha256},
            "columns": len(ens.columns),
            "vocabulary_size": len(self.featurizer.vocab),
            "members": [{"name": n, "kind": m.spec.kind, "seed": m.spec.seed,
                         "hyperparameters": m.spec.hyperparameters}
                        for n, (_, m) in zip(ens.candidate_names, ens.candidates)],
            "weights": {n: float(w) for n, w in zip(ens.candidate_names, ens.weights)},
            "chosen_final": ens.chosen_final,
            "leaderboard": ens.leaderboard(),
            "excluded": ens.excluded,
            "train_ids": list(self.train_ids),
            "test_ids": list(self.test_ids),
            **self.extra,
        }


def _entry(name) -> zipfile.ZipInfo:
    info = zipfile.ZipInfo(name, date_time=_EPOCH)
    info.compress_type = zipfile.ZIP_DEFLATED
    return info


def save_bundle(bundle: ModelBundle, path) -> Path:
    path = Path(path)
    blobs = {
        "featurizer": pickle.dumps(bundle.featurizer, protocol=4),
        "ensemble": pickle.dumps(bundle.ensemble, protocol=4),
        "gazetteer": pickle.dumps(bundle.gazetteer, protocol=4),
        "rules": pickle.dumps(bundle.rules, protocol=4),
    }
    manifest = bundle.manifest()
    manifest["sections"] = {k: {"file": f"{k}.pkl", "sha256": hashlib.sha256(v).hexdigest(), "bytes": len(v)}
                            for k, v in blobs.items()}
    path.parent.mkdir(parents=True, exist_ok=True)
    with zipfile.ZipFile(path, "w") as zf:
        zf.writestr(_entry(MANIFEST), json.dumps(manifest, indent=2, sort_keys=True, default=_jsonable))
        for k, v in blobs.items():
            zf.writestr(_entry(f"{k}.pkl"), v)
    return path


def _jsonable(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (tuple, set, frozenset)):
        return list(o)
    return str(o)


def read_manifest(path) -> dict:
    try:
        with zipfile.ZipFile(path) as zf:
            return json.loads(zf.read(MANIFEST))
    except (zipfile.BadZipFile, KeyError, json.JSONDecodeError, EOFError) as exc:
        raise IntegrityError(f"{path}: unreadable bundle ({exc})") from None


def load_bundle(path) -> ModelBundle:
    path = Path(path)
    manifest = read_manifest(path)
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise VersionError(f"bundle format version {version} is not supported by this build "
                           f"(supports version {FORMAT_VERSION})")
    parts = {}
    try:
        with zipfile.ZipFile(path) as zf:
            for k in _SECTIONS:
                meta = manifest["sections"][k]
                blob = zf.read(meta["file"])
                if hashlib.sha256(blob).hexdigest() != meta["sha256"]:
                    raise IntegrityError(f"{path}: checksum mismatch in section {k!r}")
                parts[k] = pickle.loads(blob)
    except (zipfile.BadZipFile, KeyError, EOFError, zlib.error) as exc:
        raise IntegrityError(f"{path}: damaged bundle ({type(exc).__name__}: {exc})") from None
    return ModelBundle(parts["featurizer"], parts["ensemble"], parts["gazetteer"], parts["rules"],
                       manifest.get("config_fingerprint", ""), manifest["gazetteer"]["source"],
                       manifest["gazetteer"]["sha256"], tuple(manifest.get("train_ids", ())),
                       tuple(manifest.get("test_ids", ())), version)


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def predict_records(bundle: ModelBundle, records):
    """(labels, p_fake) for assembled records, featurized with the stored vocabulary."""
    X = bundle.featurizer.transform(records)
    if tuple(X.names) != bundle.ensemble.columns:
        raise L.SchemaError("bundle columns do not match the featurized records")
    return E.predict(bundle.ensemble, X)

