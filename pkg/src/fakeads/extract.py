"""Rule-based entity extraction, feature enrichment and relevance filtering.

Every rule works on preprocessed text (see ``corpus.preprocess``): lowercase,
NFC-composed Vietnamese with normalized spacing.
"""
from __future__ import annotations

import re
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Optional

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .corpus import CleanAd

FRONTAGE = "frontage"
ALLEY = "alley"
REAL = "real"
FAKE = "fake"

_NUM = r"\d+(?:[.,]\d+)*"
_WORD = re.compile(r"[^\W\d_]+")
_SENTENCE_END = re.compile(r"[.!?;](?:\s|$)")


class AssemblyError(ValueError):
    pass


class RulesError(ValueError):
    pass


@dataclass
class Diagnostics:
    price_mentions: list = field(default_factory=list)  # total amounts, million VND
    unit_prices: list = field(default_factory=list)
    roads: list = field(default_factory=list)  # distinct, in order of appearance
    districts: list = field(default_factory=list)
    ward: Optional[str] = None
    notes: list = field(default_factory=list)

    @property
    def extra_price_mentions(self) -> int:
        return max(0, len(self.price_mentions) - 1)


@dataclass
class EntityDraft:
    price: Optional[float] = None
    area: Optional[float] = None
    road: Optional[str] = None
    district: Optional[str] = None
    diagnostics: Diagnostics = field(default_factory=Diagnostics, compare=False)


@dataclass(frozen=True)
class EnrichedFeatures:
    house_type: str
    road_width: float


@dataclass
class AdRecord:
    id: str
    description: str
    price: float
    area: float
    house_type: str
    road: str
    district: str
    road_width: float
    road_first: str
    road_second: str
    road_third: str
    label: Optional[str] = None


@dataclass(frozen=True)
class FilterDecision:
    keep: bool
    reason: Optional[str] = None

    def __bool__(self):
        return self.keep


KEEP = FilterDecision(True)


@dataclass(frozen=True)
class RuleSet:
    frontage_width: float
    alley_default_width: float
    alley_width_by_district: dict
    sell_words: tuple
    sell_window: int
    units: dict
    unit_price_suffix: re.Pattern
    official_markers: tuple
    marker_window: int
    road_marker: re.Pattern
    max_road_words: int
    stop_words: frozenset
    district_patterns: tuple
    named_district: Optional[re.Pattern]
    ward_pattern: re.Pattern
    frontage_marker: re.Pattern
    frontage_negations: tuple
    alley_width: re.Pattern
    lexicon: tuple
    amount_re: re.Pattern
    sell_re: re.Pattern
    official_re: re.Pattern
    road_lexicon: frozenset = frozenset()

    def with_road_lexicon(self, names) -> "RuleSet":
        """Return a copy that resolves road names against known names first."""
        return replace(self, road_lexicon=frozenset(names))

    def alley_width_for(self, district: Optional[str]) -> float:
        if district is not None and district in self.alley_width_by_district:
            return float(self.alley_width_by_district[district])
        return self.alley_default_width


def _rules_from_dict(d: dict) -> RuleSet:
    price, area, loc, house = d["price"], d["area"], d["location"], d["house"]
    units = {k: float(v) for k, v in price["units"].items()}
    unit_alt = "|".join(sorted(map(re.escape, units), key=len, reverse=True))
    # longest markers first so "mặt tiền đường" wins over "mặt tiền"
    markers = sorted(loc["road_markers"], key=len, reverse=True)
    named = loc.get("named_districts") or []
    named_re = None
    if named:
        alt = "|".join(sorted(map(re.escape, named), key=len, reverse=True))
        named_re = re.compile(rf"\b(?:quận|q\.)\s*({alt})\b")
    rules = RuleSet(
        frontage_width=float(d.get("frontage_width", 20.0)),
        alley_default_width=float(d.get("alley_default_width", 4.0)),
        alley_width_by_district={str(k): float(v) for k, v in d.get("alley_width_by_district", {}).items()},
        sell_words=tuple(price["sell_words"]),
        sell_window=int(price.get("sell_window", 30)),
        units=units,
        unit_price_suffix=re.compile(price["unit_price_suffix"]),
        official_markers=tuple(area["official_markers"]),
        marker_window=int(area.get("marker_window", 20)),
        road_marker=re.compile(r"(?<!\w)(?:" + "|".join(markers) + r")(?!\w)"),
        max_road_words=int(loc.get("max_road_words", 4)),
        stop_words=frozenset(loc["stop_words"]),
        district_patterns=tuple(re.compile(p) for p in loc["district_patterns"]),
        named_district=named_re,
        ward_pattern=re.compile(loc["ward_pattern"]),
        frontage_marker=re.compile("|".join(house["frontage_markers"])),
        frontage_negations=tuple(house.get("frontage_negations", ())),
        alley_width=re.compile(house["alley_width_pattern"]),
        lexicon=tuple(d["relevance"]["lexicon"]),
        amount_re=re.compile(rf"(?<![\w.,])({_NUM})\s*({unit_alt})(?!\w)"),
        sell_re=_word_alternation(price["sell_words"]),
        official_re=_word_alternation(area["official_markers"]),
    )
    return rules


def _word_alternation(words) -> re.Pattern:
    alt = "|".join(sorted(map(re.escape, words), key=len, reverse=True))
    return re.compile(rf"(?<!\w)(?:{alt})(?!\w)")


def load_rules(path=None) -> RuleSet:
    """Load a rule set from TOML; ``None`` loads the packaged defaults."""
    if path is None:
        return default_rules()
    try:
        with open(Path(path), "rb") as fh:
            return _rules_from_dict(tomllib.load(fh))
    except tomllib.TOMLDecodeError as exc:
        raise RulesError(f"{path}: {exc}") from None
    except (KeyError, TypeError, ValueError, re.error) as exc:
        raise RulesError(f"{path}: incomplete or invalid rule set ({type(exc).__name__}: {exc})") from None


@lru_cache(maxsize=1)
def default_rules() -> RuleSet:
    text = resources.files("fakeads").joinpath("data/rules.toml").read_bytes()
    return _rules_from_dict(tomllib.loads(text.decode("utf-8")))


def parse_number(text: str, multiplier: float = 1.0) -> float:
    """Parse a Vietnamese-style number ("55.5", "10,5", "1.200").

    A lone separator followed by exactly three digits is read as a thousands
    separator for million-denominated amounts ("1.200 triệu" = 1200).
    """
    seps = [c for c in text if c in ".,"]
    if not seps:
        return float(text)
    if len(set(seps)) == 2:
        dec = text[max(text.rfind("."), text.rfind(","))]
        thou = "," if dec == "." else "."
        return float(text.replace(thou, "").replace(dec, "."))
    sep = seps[0]
    if len(seps) > 1:
        return float(text.replace(sep, ""))
    head, tail = text.split(sep)
    if len(tail) == 3 and multiplier <= 1.0:
        return float(head + tail)
    return float(head + "." + tail)


def _sentence_spans(text: str) -> list[tuple[int, int]]:
    spans, start = [], 0
    for m in _SENTENCE_END.finditer(text):
        # decimal points never end a sentence: the regex needs a following space
        spans.append((start, m.end()))
        start = m.end()
    if start < len(text):
        spans.append((start, len(text)))
    return spans


def _sentence_of(spans, pos: int) -> int:
    for i, (a, b) in enumerate(spans):
        if a <= pos < b:
            return i
    return len(spans) - 1


@dataclass
class _Amount:
    value: float
    start: int
    end: int
    billion: bool
    unit_price: bool
    sell: bool
    sentence: int


def _amounts(text: str, rules: RuleSet, spans) -> list[_Amount]:
    out = []
    consumed = 0
    for m in rules.amount_re.finditer(text):
        if m.start() < consumed:
            # the "500 triệu" of "10 tỷ 500 triệu" was already folded in
            continue
        unit = m.group(2)
        mult = rules.units[unit]
        try:
            value = parse_number(m.group(1), mult) * mult
        except ValueError:
            continue
        end = m.end()
        if mult >= 1000:
            # "10 tỷ 500 triệu", or the spoken "10 tỷ 500" / "4 tỷ 2" (= 4 tỷ 200)
            tail = re.match(r"\s*(\d{1,3})(?:\s*(triệu|tr)(?!\w)|(?![\w/]|[.,]\d|\s*(?:m\b|m2|m²|x)))",
                            text[end:])
            if tail:
                digits = tail.group(1)
                value += float(digits) * (1 if tail.group(2) else 10 ** (3 - len(digits)))
                end += tail.end()
        consumed = end
        unit_price = bool(rules.unit_price_suffix.match(text, end))
        sent = _sentence_of(spans, m.start())
        s0 = max(spans[sent][0], m.start() - rules.sell_window)
        sell = bool(rules.sell_re.search(text, s0, m.start()))
        if value <= 0:
            continue
        out.append(_Amount(value, m.start(), end, mult >= 1000, unit_price, sell, sent))
    return out


def _select_price(amounts: list[_Amount], spans) -> Optional[_Amount]:
    totals = [a for a in amounts if not a.unit_price]
    if not totals:
        return None
    best = max((a.sell, a.billion) for a in totals)
    tier = [a for a in totals if (a.sell, a.billion) == best]
    first_sentence = min(a.sentence for a in tier)
    in_sentence = [a for a in tier if a.sentence == first_sentence]
    # nearest to the end of that sentence
    return max(in_sentence, key=lambda a: a.start)


_M2 = re.compile(rf"(?<![\w.,/])({_NUM})\s*(?:m2|m²)(?!\w)")
_WXL = re.compile(rf"(?<![\w.,])({_NUM})\s*m?\s*[x×]\s*({_NUM})\s*m?(?![\w²])")


def _select_area(text: str, rules: RuleSet, spans) -> Optional[float]:
    official, plain = [], []
    for m in _M2.finditer(text):
        try:
            value = parse_number(m.group(1))
        except ValueError:
            continue
        if value <= 0:
            continue
        sent = spans[_sentence_of(spans, m.start())]
        s0 = max(sent[0], m.start() - rules.marker_window)
        (official if rules.official_re.search(text, s0, m.start()) else plain).append(value)
    if official:
        return official[0]
    if plain:
        return plain[0]
    for m in _WXL.finditer(text):
        try:
            w, l = parse_number(m.group(1)), parse_number(m.group(2))
        except ValueError:
            continue
        if w > 0 and l > 0:
            return round(w * l, 6)
    return None


def _road_after(text: str, pos: int, rules: RuleSet) -> Optional[str]:
    words = []
    for m in re.finditer(r"\S+", text[pos:pos + 120]):
        tok = m.group(0)
        core = _WORD.fullmatch(tok.rstrip(".,;:!?)"))
        if core is None:
            break
        words.append(core.group(0))
        if tok != core.group(0) or len(words) >= rules.max_road_words + 1:
            break
    if words and words[0] == "đường":
        words = words[1:]
    if rules.road_lexicon:
        for n in range(min(len(words), rules.max_road_words), 0, -1):
            name = " ".join(words[:n])
            if name in rules.road_lexicon:
                return name
    name = []
    for w in words[: rules.max_road_words]:
        if w in rules.stop_words:
            break
        name.append(w)
    return " ".join(name) if name else None


def _districts(text: str, rules: RuleSet) -> list[tuple[int, str]]:
    found = []
    for pat in rules.district_patterns:
        for m in pat.finditer(text):
            found.append((m.start(), str(int(m.group(1)))))
    if rules.named_district is not None:
        for m in rules.named_district.finditer(text):
            found.append((m.start(), m.group(1)))
    found.sort()
    return found


def _unique(seq):
    seen, out = set(), []
    for x in seq:
        if x not in seen:
            seen.add(x)
            out.append(x)
    return out


def extract_entities(ad: CleanAd | str, rules: RuleSet | None = None) -> EntityDraft:
    """Parse price, area, road and district from one preprocessed listing.

    Price is the total asking price in million VND; per-m² unit prices are
    recorded in the diagnostics but never selected.
    """
    rules = rules or default_rules()
    text = ad.description if isinstance(ad, CleanAd) else ad
    spans = _sentence_spans(text)
    diag = Diagnostics()

    amounts = _amounts(text, rules, spans)
    diag.price_mentions = [a.value for a in amounts if not a.unit_price]
    diag.unit_prices = [a.value for a in amounts if a.unit_price]
    chosen = _select_price(amounts, spans)
    price = chosen.value if chosen else None

    area = _select_area(text, rules, spans)

    roads = []
    for m in rules.road_marker.finditer(text):
        name = _road_after(text, m.end(), rules)
        if name:
            roads.append(name)
    diag.roads = _unique(roads)
    dists = _districts(text, rules)
    diag.districts = _unique(d for _, d in dists)
    ward = rules.ward_pattern.search(text)
    diag.ward = str(int(ward.group(1))) if ward else None
    if len(diag.price_mentions) > 1:
        diag.notes.append(f"{len(diag.price_mentions) - 1} additional price mention(s)")

    return EntityDraft(
        price=price,
        area=area,
        road=diag.roads[0] if diag.roads else None,
        district=diag.districts[0] if diag.districts else None,
        diagnostics=diag,
    )


def _is_frontage(text: str, rules: RuleSet) -> bool:
    for m in rules.frontage_marker.finditer(text):
        before = text[max(0, m.start() - 12):m.start()].split()
        if before and before[-1] in rules.frontage_negations:
            continue
        return True
    return False


def enrich(ad: CleanAd | str, draft: EntityDraft, rules: RuleSet | None = None) -> EnrichedFeatures:
    rules = rules or default_rules()
    text = ad.description if isinstance(ad, CleanAd) else ad
    if _is_frontage(text, rules):
        return EnrichedFeatures(FRONTAGE, rules.frontage_width)
    m = rules.alley_width.search(text)
    if m:
        width = parse_number(m.group(1))
        if width > 0:
            return EnrichedFeatures(ALLEY, width)
    return EnrichedFeatures(ALLEY, rules.alley_width_for(draft.district))


def relevance_filter(ad: CleanAd | str, draft: EntityDraft, rules: RuleSet | None = None) -> FilterDecision:
    rules = rules or default_rules()
    text = ad.description if isinstance(ad, CleanAd) else ad
    if draft.price is None:
        return FilterDecision(False, "missing price")
    if draft.area is None:
        return FilterDecision(False, "missing area")
    if draft.district is None:
        return FilterDecision(False, "missing district")
    for word in rules.lexicon:
        if re.search(rf"(?<!\w){re.escape(word)}(?!\w)", text):
            return KEEP
    return FilterDecision(False, "not real estate")


def assemble_record(ad: CleanAd, draft: EntityDraft, enriched: EnrichedFeatures,
                    spatial: tuple, label: Optional[str] = None) -> AdRecord:
    missing = [k for k in ("price", "area", "road", "district") if getattr(draft, k) is None]
    if missing:
        raise AssemblyError(f"{ad.id}: missing {', '.join(missing)}")
    if len(spatial) != 3:
        raise AssemblyError(f"{ad.id}: expected three nearest roads, got {len(spatial)}")
    return AdRecord(
        id=ad.id,
        description=ad.description,
        price=float(draft.price),
        area=float(draft.area),
        house_type=enriched.house_type,
        road=draft.road,
        district=str(draft.district),
        road_width=float(enriched.road_width),
        road_first=spatial[0],
        road_second=spatial[1],
        road_third=spatial[2],
        label=label,
    )


@dataclass
class ExtractedAd:
    """A listing after extraction and enrichment, before spatial features."""

    id: str
    description: str
    draft: EntityDraft
    enriched: EnrichedFeatures
    source_domain: str = ""

    price = property(lambda self: self.draft.price)
    area = property(lambda self: self.draft.area)
    road = property(lambda self: self.draft.road)
    district = property(lambda self: self.draft.district)
    house_type = property(lambda self: self.enriched.house_type)
    road_width = property(lambda self: self.enriched.road_width)

    def as_clean_ad(self) -> CleanAd:
        return CleanAd(self.id, self.source_domain, self.description)

    def to_json(self) -> dict:
        d = self.draft
        return {
            "id": self.id,
            "source_domain": self.source_domain,
            "description": self.description,
            "price": d.price,
            "area": d.area,
            "road": d.road,
            "district": d.district,
            "house_type": self.enriched.house_type,
            "road_width": self.enriched.road_width,
            "diagnostics": asdict(d.diagnostics),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ExtractedAd":
        diag = Diagnostics(**obj.get("diagnostics", {}))
        draft = EntityDraft(obj["price"], obj["area"], obj["road"], obj["district"], diag)
        return cls(obj["id"], obj["description"], draft,
                   EnrichedFeatures(obj["house_type"], float(obj["road_width"])),
                   obj.get("source_domain", ""))


def extract_ad(ad: CleanAd, rules: RuleSet | None = None) -> tuple[ExtractedAd, FilterDecision]:
    rules = rules or default_rules()
    draft = extract_entities(ad, rules)
    enriched = enrich(ad, draft, rules)
    decision = relevance_filter(ad, draft, rules)
    return ExtractedAd(ad.id, ad.description, draft, enriched, ad.source_domain), decision
