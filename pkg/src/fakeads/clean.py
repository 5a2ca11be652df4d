"""De-noising, outlier removal and de-duplication of extracted listings."""
from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field

MULTIPLE_LOCATIONS = "multiple locations"
CONFLICTING_PRICES = "conflicting prices"
DUPLICATE_TEXT = "duplicate description"
DUPLICATE_FEATURES = "duplicate features"

_REQUIRED = ("price", "area", "road", "district", "house_type", "road_width")


@dataclass(frozen=True)
class FeatureRanges:
    price: tuple = (100.0, 1_000_000.0)  # million VND, closed
    area: tuple = (5.0, 10_000.0)  # m², closed
    road_width: tuple = (0.0, 20.0)  # meters, (lo, hi]

    def __post_init__(self):
        for name in ("price", "area", "road_width"):
            lo, hi = getattr(self, name)
            if not lo < hi:
                raise ValueError(f"{name} range must have min < max, got {lo}, {hi}")


@dataclass(frozen=True)
class DedupConfig:
    shingle_size: int = 3
    jaccard_threshold: float = 0.9
    relative_tolerance: float = 0.01


@dataclass
class CleaningReport:
    n_input: int = 0
    kept: int = 0
    dropped_noise: int = 0
    dropped_outlier: int = 0
    dropped_duplicate: int = 0
    reasons: dict = field(default_factory=dict)
    duplicate_of: dict = field(default_factory=dict)

    def check(self):
        total = self.kept + self.dropped_noise + self.dropped_outlier + self.dropped_duplicate
        assert total == self.n_input, (total, self.n_input)

    def to_json(self) -> dict:
        return asdict(self)


def denoise(records, conflict_ratio: float = 0.2):
    """Drop records with several locations, conflicting prices or gaps.

    Returns ``(kept, dropped)`` where dropped is a list of ``(record, reason)``.
    """
    kept, dropped = [], []
    for rec in records:
        reason = _noise_reason(rec, conflict_ratio)
        if reason is None:
            kept.append(rec)
        else:
            dropped.append((rec, reason))
    return kept, dropped


def _noise_reason(rec, conflict_ratio):
    diag = rec.draft.diagnostics
    if len(diag.roads) >= 2 or len(diag.districts) >= 2:
        return MULTIPLE_LOCATIONS
    prices = [p for p in diag.price_mentions if p > 0]
    if len(prices) >= 2 and max(prices) > (1.0 + conflict_ratio) * min(prices):
        return CONFLICTING_PRICES
    for name in _REQUIRED:
        value = getattr(rec, name)
        if value is None or (isinstance(value, float) and not math.isfinite(value)):
            return f"missing {name}"
    return None


def remove_outliers(records, ranges: FeatureRanges | None = None):
    ranges = ranges or FeatureRanges()
    kept, dropped = [], []
    for rec in records:
        reason = _outlier_reason(rec, ranges)
        if reason is None:
            kept.append(rec)
        else:
            dropped.append((rec, reason))
    return kept, dropped


def _outlier_reason(rec, ranges):
    for name in ("price", "area"):
        lo, hi = getattr(ranges, name)
        value = getattr(rec, name)
        if value < lo:
            return f"{name} below range"
        if value > hi:
            return f"{name} above range"
    lo, hi = ranges.road_width
    if rec.road_width <= lo:
        return "road_width below range"
    if rec.road_width > hi:
        return "road_width above range"
    return None


def word_shingles(text: str, n: int = 3) -> frozenset:
    words = text.split()
    if len(words) < n:
        return frozenset([tuple(words)])
    return frozenset(tuple(words[i:i + n]) for i in range(len(words) - n + 1))


def jaccard(a: frozenset, b: frozenset) -> float:
    if not a and not b:
        return 1.0
    return len(a & b) / len(a | b)


def _close(x, y, tol):
    return abs(x - y) <= tol * abs(y)


def deduplicate(records, cfg: DedupConfig | None = None):
    """Two-pass de-duplication with earliest-record-survives semantics.

    Pass 1 drops a record whose word-shingle Jaccard similarity with an earlier
    kept record reaches the threshold. Pass 2 drops a record matching an
    earlier kept record on (road, district, house_type) with price and area
    within the relative tolerance.

    Returns ``(kept, dropped)``; dropped holds ``(record, reason, canonical_id)``.
    """
    cfg = cfg or DedupConfig()
    t = cfg.jaccard_threshold
    shingles = [word_shingles(r.description, cfg.shingle_size) for r in records]

    # Exact similarity join with prefix filtering: under one global token
    # order, two sets with Jaccard >= t share a token within their first
    # |s| - ceil(t*|s|) + 1 tokens.
    df = Counter(tok for s in shingles for tok in s)
    order = {tok: (df[tok], tok) for tok in df}
    index = defaultdict(list)  # token -> kept record positions
    kept_pos, dropped = [], []
    pass1_kept = []
    for i, s in enumerate(shingles):
        toks = sorted(s, key=order.__getitem__)
        prefix = toks[: len(toks) - math.ceil(t * len(toks) - 1e-9) + 1] if toks else []
        match = None
        candidates = sorted({j for tok in prefix for j in index[tok]})
        for j in candidates:
            sj = shingles[j]
            if min(len(s), len(sj)) < t * max(len(s), len(sj)) - 1e-9:
                continue
            if jaccard(s, sj) >= t:
                match = j
                break
        if match is not None:
            dropped.append((records[i], DUPLICATE_TEXT, records[match].id))
            continue
        for tok in prefix:
            index[tok].append(i)
        pass1_kept.append(i)

    groups = defaultdict(list)
    for i in pass1_kept:
        r = records[i]
        key = (r.road, r.district, r.house_type)
        match = None
        for j in groups[key]:
            other = records[j]
            if _close(r.price, other.price, cfg.relative_tolerance) and _close(r.area, other.area, cfg.relative_tolerance):
                match = j
                break
        if match is not None:
            dropped.append((r, DUPLICATE_FEATURES, records[match].id))
            continue
        groups[key].append(i)
        kept_pos.append(i)
    return [records[i] for i in kept_pos], dropped


def clean_records(records, ranges: FeatureRanges | None = None, dedup: DedupConfig | None = None):
    """Run the three cleaning stages and account for every input record."""
    records = list(records)
    report = CleaningReport(n_input=len(records))
    kept, noisy = denoise(records)
    kept, outliers = remove_outliers(kept, ranges)
    kept, dups = deduplicate(kept, dedup)
    for rec, reason in noisy:
        report.reasons[rec.id] = reason
    for rec, reason in outliers:
        report.reasons[rec.id] = reason
    for rec, reason, canonical in dups:
        report.reasons[rec.id] = reason
        report.duplicate_of[rec.id] = canonical
    report.kept = len(kept)
    report.dropped_noise = len(noisy)
    report.dropped_outlier = len(outliers)
    report.dropped_duplicate = len(dups)
    report.check()
    return kept, report
