"""Loading raw listings from local files and light text preprocessing."""
from __future__ import annotations

import csv
import json
import logging
import re
import unicodedata
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable

logger = logging.getLogger(__name__)


class CorpusError(Exception):
    pass


class DuplicateIdError(CorpusError):
    def __init__(self, ad_id: str):
        super().__init__(f"duplicate id {ad_id!r}")
        self.ad_id = ad_id


class EmptyAfterCleaning(CorpusError):
    pass


@dataclass(frozen=True)
class RawAd:
    id: str
    source_domain: str
    raw_text: str


@dataclass(frozen=True)
class CleanAd:
    id: str
    source_domain: str
    description: str


@dataclass
class IngestReport:
    n_read: int = 0
    n_errors: int = 0
    errors: list = None

    def __post_init__(self):
        if self.errors is None:
            self.errors = []


_FIELDS = ("id", "source_domain", "raw_text")


def _validate(rec: dict, where: str) -> RawAd:
    missing = [f for f in _FIELDS if not isinstance(rec.get(f), str)]
    if missing:
        raise CorpusError(f"{where}: missing or non-string field(s) {missing}")
    if not rec["id"]:
        raise CorpusError(f"{where}: empty id")
    if not rec["raw_text"]:
        raise CorpusError(f"{where}: empty raw_text")
    return RawAd(rec["id"], rec["source_domain"], rec["raw_text"])


def ingest(path, format: str | None = None, report: IngestReport | None = None) -> list[RawAd]:
    """Read raw listings from a JSONL or CSV file.

    Malformed records are skipped and logged with their line number; the
    count ends up in ``report`` when one is passed. A repeated id is fatal.
    """
    path = Path(path)
    if format is None:
        format = "csv" if path.suffix.lower() == ".csv" else "jsonl"
    if format not in ("jsonl", "csv"):
        raise ValueError(f"unknown format {format!r}")
    report = report if report is not None else IngestReport()

    ads: list[RawAd] = []
    seen: set[str] = set()

    def accept(rec, where):
        try:
            ad = _validate(rec, where)
        except CorpusError as exc:
            report.n_errors += 1
            report.errors.append(str(exc))
            logger.warning("skipping record: %s", exc)
            return
        if ad.id in seen:
            raise DuplicateIdError(ad.id)
        seen.add(ad.id)
        ads.append(ad)
        report.n_read += 1

    with open(path, encoding="utf-8", newline="") as fh:
        if format == "jsonl":
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError as exc:
                    report.n_errors += 1
                    report.errors.append(f"line {lineno}: {exc.msg}")
                    logger.warning("line %d: malformed JSON (%s)", lineno, exc.msg)
                    continue
                if not isinstance(rec, dict):
                    report.n_errors += 1
                    report.errors.append(f"line {lineno}: not an object")
                    continue
                accept(rec, f"line {lineno}")
        else:
            reader = csv.DictReader(fh)
            for rec in reader:
                accept(rec, f"line {reader.line_num}")
    if report.n_errors:
        logger.info("ingested %d records, %d malformed", report.n_read, report.n_errors)
    return ads


def write_jsonl(records: Iterable, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            obj = asdict(rec) if hasattr(rec, "__dataclass_fields__") else rec
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")


# Tags that end a line or paragraph; they become sentence breaks.
_BREAK_TAG = re.compile(r"<\s*(?:br\s*/?|/\s*br|/\s*p)\s*>", re.IGNORECASE)
_TAG = re.compile(r"<[^<>]*>")
_ESCAPES = re.compile(r"\\[ntr]")
_SPACE = re.compile(r"\s+")
_SPACE_BEFORE_PUNCT = re.compile(r"\s+([.,;:!?])")
_ENTITIES = {"&amp;": "&", "&lt;": "<", "&gt;": ">", "&quot;": '"', "&#39;": "'"}
_ENTITY = re.compile("|".join(map(re.escape, _ENTITIES)))
_STOPS = ".,;:!?"


def _decode_entities(text: str) -> str:
    while True:
        decoded = _ENTITY.sub(lambda m: _ENTITIES[m.group(0)], text)
        if decoded == text:
            return text
        text = decoded


def _join_breaks(pieces: list[str]) -> str:
    out = pieces[0]
    for piece in pieces[1:]:
        head = out.rstrip()
        if not head or head[-1] in _STOPS:
            out = head + " " + piece
        else:
            out = head + ". " + piece
    return out


def preprocess(raw: RawAd | str) -> CleanAd | str:
    """Normalize one listing: NFC, tag stripping, lowercasing, spacing.

    Accepts a RawAd (returns CleanAd) or bare text (returns text).
    """
    text = raw.raw_text if isinstance(raw, RawAd) else raw
    out = clean_text(text)
    if isinstance(raw, RawAd):
        return CleanAd(raw.id, raw.source_domain, out)
    return out


def clean_text(text: str) -> str:
    text = unicodedata.normalize("NFC", text)
    text = _ESCAPES.sub(" ", text)
    # nested or entity-encoded markup can expose new tags after one pass
    while True:
        stripped = _decode_entities(text)
        stripped = _join_breaks(_BREAK_TAG.split(stripped))
        stripped = _TAG.sub(" ", stripped)
        if stripped == text:
            break
        text = stripped
    text = text.lower()
    text = _SPACE.sub(" ", text)
    text = _SPACE_BEFORE_PUNCT.sub(r"\1", text)
    text = text.strip(" ")
    if not text or not any(ch.isalnum() for ch in text):
        raise EmptyAfterCleaning("text is empty after cleaning")
    return text


__all__ = [
    "RawAd",
    "CleanAd",
    "IngestReport",
    "CorpusError",
    "DuplicateIdError",
    "EmptyAfterCleaning",
    "ingest",
    "preprocess",
    "clean_text",
    "write_jsonl",
]
