"""Seeded synthetic listing corpus with price-discrepancy ground truth.

Every listing describes a property whose true value is
``area * district_base * road_multiplier * house_factor``. Real listings post
that value with a small jitter; fake ones post it off by a factor that clears
the labelling threshold with margin. Templates are shared by both classes so
the wording carries no label signal.
"""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .corpus import RawAd, write_jsonl
from .extract import ALLEY, FAKE, FRONTAGE, REAL
from .geo import Gazetteer, write_gazetteer


class ConfigError(ValueError):
    pass


class LabelError(ValueError):
    pass


def discrepancy_label(posted_price: float, estimated_price: float, threshold: float = 0.10) -> str:
    """fake iff the posted price is more than ``threshold`` away from the estimate."""
    if not (posted_price > 0 and estimated_price > 0):
        raise LabelError(f"prices must be positive, got {posted_price}, {estimated_price}")
    return FAKE if abs(posted_price - estimated_price) / estimated_price > threshold else REAL


ROAD_NAMES = (
    "nguyễn trãi", "lê lợi", "hai bà trưng", "trần hưng đạo", "lý thường kiệt", "nguyễn huệ",
    "võ văn kiệt", "an dương vương", "trần phú", "lê văn sỹ", "nguyễn đình chiểu", "pasteur",
    "điện biên phủ", "nam kỳ khởi nghĩa", "phan xích long", "hoàng văn thụ", "phan đăng lưu",
    "bạch đằng", "nguyễn văn trỗi", "trường chinh", "cộng hòa", "âu cơ", "lạc long quân",
    "hồng bàng", "ngô quyền", "nguyễn chí thanh", "sư vạn hạnh", "tô hiến thành", "thành thái",
    "bà hạt", "vĩnh viễn", "nguyễn tri phương", "lê hồng phong", "trần bình trọng",
    "nguyễn thị minh khai", "võ thị sáu", "lê quý đôn", "trần quốc thảo", "kỳ đồng",
    "trần quang khải", "đinh tiên hoàng", "phan đình phùng", "huỳnh văn bánh", "đặng văn ngữ",
    "nguyễn kiệm", "phạm văn đồng", "nguyễn oanh", "quang trung", "lê đức thọ", "phan văn trị",
    "nơ trang long", "xô viết nghệ tĩnh", "bùi đình túy", "nguyễn xí", "ung văn khiêm",
    "nguyễn hữu cảnh", "tôn đức thắng", "lê thánh tôn", "mạc đĩnh chi", "nguyễn bỉnh khiêm",
    "trần cao vân", "phạm ngọc thạch", "nguyễn văn thủ", "đề thám", "cô giang", "cô bắc",
    "trần đình xu", "nguyễn cư trinh", "trần khắc chân", "hoàng sa", "trường sa", "lê văn lương",
    "huỳnh tấn phát", "nguyễn thị thập", "trần xuân soạn", "nguyễn lương bằng", "an bình",
    "trần tuấn khải", "hùng vương", "châu văn liêm", "nguyễn biểu", "lê hồng phong",
    "bà triệu", "nguyễn văn cừ", "trần nhân tôn", "hàm tử", "phạm thế hiển", "dương bá trạc",
    "tạ quang bửu", "âu dương lân", "bến vân đồn", "hoàng diệu", "khánh hội", "tôn thất thuyết",
    "xóm chiếu", "đoàn văn bơ", "nguyễn tất thành", "lê văn thọ", "quang trung",
    "phạm văn chiêu", "thống nhất", "nguyễn văn lượng", "dương quảng hàm", "nguyễn thái sơn",
)

DISTRICTS = ("1", "3", "4", "5", "6", "7", "8", "10", "11", "12", "2", "9")

FILLERS = (
    "nhà {floors} lầu {rooms} phòng ngủ",
    "sổ hồng chính chủ",
    "gần chợ, trường học, bệnh viện",
    "khu dân cư an ninh, yên tĩnh",
    "thích hợp ở hoặc kinh doanh",
    "hướng {direction}",
    "nội thất cao cấp",
    "liên hệ {phone}",
    "pháp lý rõ ràng, công chứng ngay",
    "kết cấu {floors} tầng kiên cố",
    "có sân để xe hơi",
)
DIRECTIONS = ("đông", "tây", "nam", "bắc", "đông nam", "tây bắc", "đông bắc", "tây nam")
SOURCES = ("batdongsan.com.vn", "chotot.com", "alonhadat.com.vn", "muaban.net", "homedy.com")


@dataclass
class SynthConfig:
    n_ads: int = 2000
    fake_fraction: float = 0.58
    districts: int = 4
    roads_per_district: int = 6
    # base price in million VND per m², linearly spread over the districts
    base_unit_price: tuple = (60.0, 240.0)
    # road multipliers vary smoothly with position inside the district
    road_multiplier: tuple = (0.8, 1.25)
    frontage_share: float = 0.35
    area_width: tuple = (3.8, 5.2)
    area_length: tuple = (14, 22)
    noise: float = 0.03
    duplicate_rate: float = 0.05
    outlier_rate: float = 0.02
    junk_rate: float = 0.02
    seed: int = 0

    def validate(self):
        if self.n_ads < 1:
            raise ConfigError("n_ads must be positive")
        if not 0 < self.fake_fraction < 1:
            raise ConfigError("fake_fraction must be in (0, 1)")
        if self.districts < 1 or self.districts > len(DISTRICTS):
            raise ConfigError(f"districts must be in [1, {len(DISTRICTS)}]")
        if self.roads_per_district < 1:
            raise ConfigError("roads_per_district must be at least 1")
        if self.districts * self.roads_per_district > len(_road_pool()):
            raise ConfigError("not enough road names for this many roads")
        for name in ("duplicate_rate", "outlier_rate", "junk_rate", "frontage_share"):
            if not 0 <= getattr(self, name) < 1:
                raise ConfigError(f"{name} must be in [0, 1)")
        if self.duplicate_rate + self.outlier_rate + self.junk_rate >= 0.5:
            raise ConfigError("planted records must stay a minority")
        if not 0 <= self.noise <= 0.03:
            # larger jitter could push real listings over the labelling threshold
            raise ConfigError("noise must be in [0, 0.03]")


def _road_pool():
    return tuple(dict.fromkeys(ROAD_NAMES))


@dataclass
class Truth:
    """Generator ground truth for one listing."""

    id: str
    label: str
    kind: str  # normal | duplicate | outlier | junk
    group: str  # id of the original listing for duplicates, else own id
    posted_price: float
    true_value: float
    area: float
    road: str
    district: str
    house_type: str
    road_width: float


@dataclass
class SynthCorpus:
    ads: list
    truth: list
    gazetteer: Gazetteer
    config: SynthConfig = field(default_factory=SynthConfig)

    @property
    def labels(self) -> dict:
        return {t.id: t.label for t in self.truth}

    def write(self, out_dir) -> dict:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {
            "corpus": out / "corpus.jsonl",
            "labels": out / "labels.csv",
            "gazetteer": out / "gazetteer.csv",
            "truth": out / "truth.csv",
        }
        write_jsonl(self.ads, paths["corpus"])
        with open(paths["labels"], "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["id", "label"])
            for t in self.truth:
                w.writerow([t.id, t.label])
        with open(paths["truth"], "w", encoding="utf-8", newline="") as fh:
            cols = list(asdict(self.truth[0]))
            w = csv.DictWriter(fh, fieldnames=cols)
            w.writeheader()
            for t in self.truth:
                w.writerow(asdict(t))
        write_gazetteer(self.gazetteer, paths["gazetteer"])
        return {k: str(v) for k, v in paths.items()}


def load_labels(path) -> dict:
    with open(path, encoding="utf-8", newline="") as fh:
        return {row["id"]: row["label"] for row in csv.DictReader(fh)}


# ---------------------------------------------------------------- rendering


def _fmt(x: float, comma: bool) -> str:
    s = f"{x:.2f}".rstrip("0").rstrip(".")
    return s.replace(".", ",") if comma else s


def render_price(value: float, rng) -> tuple:
    """Text for a total price and the amount (million VND) it states."""
    if value < 1000:
        v = float(round(value))
        return f"{int(v)} triệu", v
    style = rng.integers(0, 3)
    if style == 2:
        whole = int(value // 1000)
        rest = int(round((value - 1000 * whole) / 10.0) * 10)
        if rest == 1000:
            whole, rest = whole + 1, 0
        if rest == 0:
            return f"{whole} tỷ", 1000.0 * whole
        return f"{whole} tỷ {rest} triệu", 1000.0 * whole + rest
    b = round(value / 1000.0, 2)
    return f"{_fmt(b, comma=bool(style == 1))} tỷ", round(b * 1000.0, 6)


def _district_phrase(d, rng):
    return ("quận {}", "q.{}", "q{}", "quận {}")[rng.integers(0, 4)].format(d)


def _road_phrase(house_type, width, width_stated, road, rng):
    if house_type == FRONTAGE:
        return ("mặt tiền đường {r}", "mặt tiền {r}", "nhà mt {r}", "mt đường {r}")[rng.integers(0, 4)].format(r=road)
    if width_stated:
        w = _fmt(width, comma=False)
        return ("hẻm {w}m {r}", "hxh {w}m {r}", "hẻm xe hơi {w}m đường {r}")[rng.integers(0, 3)].format(w=w, r=road)
    return ("hẻm đường {r}", "hẻm xe hơi đường {r}", "hẻm {r}")[rng.integers(0, 3)].format(r=road)


def _area_phrase(w, l, rng):
    a = round(w * l, 2)
    comma = bool(rng.integers(0, 2))
    ws, ls, as_ = _fmt(w, comma), _fmt(l, comma), _fmt(a, comma)
    k = rng.integers(0, 4)
    if k == 0:
        return f"dt: {ws}x{ls}m"
    if k == 1:
        return f"diện tích {ws} x {ls}m, công nhận {as_}m2"
    if k == 2:
        return f"dt {ws}x{ls}m, cn {as_}m2"
    return f"dtcn {as_}m2 ({ws}x{ls})"


def _filler(rng):
    t = FILLERS[rng.integers(0, len(FILLERS))]
    return t.format(
        floors=int(rng.integers(1, 6)),
        rooms=int(rng.integers(1, 7)),
        direction=DIRECTIONS[rng.integers(0, len(DIRECTIONS))],
        phone="09{:02d} {:03d} {:03d}".format(*(int(v) for v in rng.integers(0, [100, 1000, 1000]))),
    )


def _listing_sentences(p, rng):
    """Ordered sentences; the first one always names the road and district."""
    first = f"bán nhà {_road_phrase(p['house_type'], p['road_width'], p['width_stated'], p['road'], rng)}, " \
            f"{_district_phrase(p['district'], rng)}"
    price_text = p["price_text"]
    body = [
        _area_phrase(p["w"], p["l"], rng),
        ("giá {}", "giá bán {}", "cần bán gấp giá {}", "giá {} thương lượng")[rng.integers(0, 4)].format(price_text),
    ]
    if rng.random() < 0.3:
        unit = p["posted"] / p["area"]
        body.append(f"tương đương {int(round(unit))} triệu/m2")
    for _ in range(int(rng.integers(2, 6))):
        body.append(_filler(rng))
    return first, body


def _raw_text(first, body, rng):
    sentences = [first] + body
    out = []
    for s in sentences:
        if rng.random() < 0.5:
            s = s[:1].upper() + s[1:]
        out.append(s)
    joins = ("<br/>", ". ", "<br>", ".\\n")
    text = out[0]
    for s in out[1:]:
        text += joins[rng.integers(0, len(joins))] + s
    if rng.random() < 0.3:
        text = f"<p>{text}</p>"
    if rng.random() < 0.2:
        text = text.replace(", ", " &amp; ", 1)
    return text


# ---------------------------------------------------------------- generation


def _gazetteer(cfg, rng):
    pool = list(_road_pool())
    order = rng.permutation(len(pool))
    names = [pool[i] for i in order[: cfg.districts * cfg.roads_per_district]]
    entries, mult, roads = {}, {}, {}
    cols = max(1, int(math.ceil(math.sqrt(cfg.roads_per_district))))
    lo, hi = cfg.road_multiplier
    for di in range(cfg.districts):
        d = DISTRICTS[di]
        lon0 = 106.60 + 0.06 * (di % 4)
        lat0 = 10.70 + 0.06 * (di // 4)
        roads[d] = names[di * cfg.roads_per_district:(di + 1) * cfg.roads_per_district]
        span = max(cols - 1, 1)
        for k, r in enumerate(roads[d]):
            gx, gy = k % cols, k // cols
            lon = round(lon0 + 0.01 * gx + rng.uniform(-0.002, 0.002), 6)
            lat = round(lat0 + 0.01 * gy + rng.uniform(-0.002, 0.002), 6)
            entries[(d, r)] = (lon, lat)
            # smooth in space: neighbours have similar multipliers
            t = 0.5 * (gx / span + gy / span)
            mult[(d, r)] = lo + (hi - lo) * min(max(t, 0.0), 1.0)
    return Gazetteer(entries), roads, mult


def _fake_factor(rng):
    a = (0.5, 0.88)
    b = (1.15, 2.0)
    la, lb = a[1] - a[0], b[1] - b[0]
    u = rng.uniform(0, la + lb)
    return a[0] + u if u < la else b[0] + (u - la)


def _house(cfg, rng):
    if rng.random() < cfg.frontage_share:
        return FRONTAGE, 20.0, True
    width = float(rng.choice([2.0, 2.5, 3.0, 3.5, 4.0, 5.0, 6.0, 8.0]))
    stated = rng.random() < 0.75
    if not stated:
        width = 4.0
    return ALLEY, width, stated


def _house_factor(house_type, width):
    if house_type == FRONTAGE:
        return 1.0
    return 0.45 + 0.06 * width


def generate_corpus(cfg: SynthConfig | None = None) -> SynthCorpus:
    cfg = cfg or SynthConfig()
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    gaz, roads, mult = _gazetteer(cfg, rng)
    districts = [DISTRICTS[i] for i in range(cfg.districts)]
    lo, hi = cfg.base_unit_price
    base = {d: lo + (hi - lo) * i / max(cfg.districts - 1, 1) for i, d in enumerate(districts)}

    n = cfg.n_ads
    n_fake = int(round(cfg.fake_fraction * n))
    labels = np.array([FAKE] * n_fake + [REAL] * (n - n_fake), dtype=object)
    labels = labels[rng.permutation(n)]
    n_dup = int(round(cfg.duplicate_rate * n))
    n_out = int(round(cfg.outlier_rate * n))
    n_junk = int(round(cfg.junk_rate * n))
    kinds = np.array(["normal"] * n, dtype=object)
    special = rng.permutation(n)
    kinds[special[:n_dup]] = "duplicate"
    kinds[special[n_dup:n_dup + n_out]] = "outlier"
    kinds[special[n_dup + n_out:n_dup + n_out + n_junk]] = "junk"
    for lab in (FAKE, REAL):
        if np.any((kinds == "duplicate") & (labels == lab)) and not np.any((kinds == "normal") & (labels == lab)):
            raise ConfigError("duplicates need an original listing of the same class")

    ids = [f"ad{i:05d}" for i in range(n)]
    ads, truth = [None] * n, [None] * n
    props = {}
    keys = {}  # (road, district, house_type) -> [(price, area)] of originals

    def collides(p):
        # a little wider than the 1% de-duplication tolerance
        for pr, ar in keys.get((p["road"], p["district"], p["house_type"]), ()):
            if abs(p["posted"] - pr) <= 0.011 * pr and abs(p["area"] - ar) <= 0.011 * ar:
                return True
        return False

    def draw_property(label):
        d = districts[rng.integers(0, len(districts))]
        road = roads[d][rng.integers(0, len(roads[d]))]
        house_type, width, stated = _house(cfg, rng)
        w = round(float(rng.uniform(*cfg.area_width)), 1)
        l = float(rng.integers(cfg.area_length[0], cfg.area_length[1] + 1))
        area = round(w * l, 2)
        value = area * base[d] * mult[(d, road)] * _house_factor(house_type, width)
        if label == REAL:
            jitter = float(np.clip(rng.normal(0.0, cfg.noise), -3 * cfg.noise, 3 * cfg.noise)) if cfg.noise else 0.0
            target = value * (1.0 + jitter)
        else:
            target = value * _fake_factor(rng)
        text, posted = render_price(target, rng)
        return dict(district=d, road=road, house_type=house_type, road_width=width, width_stated=stated,
                    w=w, l=l, area=area, value=value, posted=posted, price_text=text)

    for i in range(n):
        if kinds[i] == "duplicate":
            continue
        label = labels[i]
        for _ in range(100):
            p = draw_property(label)
            if kinds[i] != "normal" or not collides(p):
                break
        else:
            raise ConfigError("could not draw a distinguishable listing; increase roads or districts")
        if discrepancy_label(p["posted"], p["value"]) != label:
            raise AssertionError("generator produced an inconsistent label")
        kind = kinds[i]
        if kind == "normal":
            keys.setdefault((p["road"], p["district"], p["house_type"]), []).append((p["posted"], p["area"]))
        first, body = _listing_sentences(p, rng)
        if kind == "outlier":
            first, body, p = _outlier(p, label, base, mult, rng)
        elif kind == "junk":
            first, body = _junk(p, districts, roads, rng)
        props[i] = (first, body, p)
        ads[i] = RawAd(ids[i], SOURCES[rng.integers(0, len(SOURCES))], _raw_text(first, body, rng))
        truth[i] = Truth(ids[i], label, kind, ids[i], p["posted"], p["value"], p["area"], p["road"],
                         p["district"], p["house_type"], p["road_width"])

    originals = {lab: [i for i in range(n) if kinds[i] == "normal" and labels[i] == lab] for lab in (FAKE, REAL)}
    for i in range(n):
        if kinds[i] != "duplicate":
            continue
        label = labels[i]
        src = originals[label][rng.integers(0, len(originals[label]))]
        first, body, p = props[src]
        if rng.random() < 0.5:
            text = ads[src].raw_text
        else:
            body = [body[k] for k in rng.permutation(len(body))]
            text = _raw_text(first, body, rng)
        ads[i] = RawAd(ids[i], SOURCES[rng.integers(0, len(SOURCES))], text)
        t = truth[src]
        truth[i] = Truth(ids[i], label, "duplicate", ids[src], t.posted_price, t.true_value, t.area, t.road,
                         t.district, t.house_type, t.road_width)
    return SynthCorpus(ads, truth, gaz, cfg)


def _outlier(p, label, base, mult, rng):
    """Fake slots become rentals posted as sales; real slots become huge estates."""
    p = dict(p)
    if label == FAKE:
        rent = float(rng.integers(8, 40))
        p["price_text"] = f"{int(rent)} triệu/tháng"
        p["posted"] = rent
    else:
        w = float(rng.integers(80, 150))
        l = float(rng.integers(130, 200))
        p.update(w=w, l=l, area=w * l, house_type=FRONTAGE, road_width=20.0, width_stated=True)
        p["value"] = p["area"] * base[p["district"]] * mult[(p["district"], p["road"])]
        text, posted = render_price(p["value"], rng)
        p.update(price_text=text, posted=posted)
    if discrepancy_label(p["posted"], p["value"]) != label:
        raise AssertionError("outlier label mismatch")
    first, body = _listing_sentences(p, rng)
    if label == FAKE:
        body = [s for s in body if "triệu/m2" not in s]
    return first, body, p


def _junk(p, districts, roads, rng):
    """Two properties in one listing."""
    first, body = _listing_sentences(p, rng)
    d2 = districts[rng.integers(0, len(districts))]
    others = [r for r in roads[d2] if r != p["road"]] or roads[d2]
    r2 = others[rng.integers(0, len(others))]
    value2 = p["posted"] * float(rng.uniform(1.5, 2.5))
    text2, _ = render_price(value2, rng)
    body.append(f"ngoài ra còn căn mặt tiền đường {r2}, {_district_phrase(d2, rng)} giá {text2}")
    return first, body
