import pytest
from hypothesis import given
from hypothesis import strategies as st

from fakeads import extract as X
from fakeads.corpus import CleanAd
from fakeads.extract import extract_entities, enrich, parse_number, relevance_filter

# printed sample of a fake listing, already preprocessed
PRINTED_FAKE = (
    "nhà mt an bình, phường 6, quận 5: dtkv: 10x40m, công nhận 400m2, nhà cấp iv, đang để trống, "
    "cần bán giá 55.5 tỷ. đơn giá chỉ 137 triệu/m2, đảm bảo không còn sản phẩm so sánh. vị trí mặt "
    "tiền thuận tiện kinh doanh, khuôn viên lớn phù hợp với nhiều ngành nghề hoặc xây cao cấp, building. "
    "liên hệ 0906681528 quang dương để xem bđs trên. trân trọng cảm ơn quý khách."
)


@pytest.mark.parametrize("text, mult, value", [
    ("55.5", 1000, 55.5), ("10,5", 1000, 10.5), ("1.200", 1, 1200.0), ("1.200", 1000, 1.2),
    ("1.200.000", 1, 1_200_000.0), ("1,234.5", 1, 1234.5), ("1.234,5", 1, 1234.5), ("7", 1, 7.0),
])
def test_parse_number(text, mult, value):
    assert parse_number(text, mult) == pytest.approx(value)


def test_printed_fake_sample():
    d = extract_entities(PRINTED_FAKE)
    e = enrich(PRINTED_FAKE, d)
    assert (d.price, d.area, d.road, d.district) == (55_500.0, 400.0, "an bình", "5")
    assert (e.house_type, e.road_width) == (X.FRONTAGE, 20.0)
    assert d.diagnostics.unit_prices == [137.0]
    assert d.diagnostics.ward == "6"
    assert relevance_filter(PRINTED_FAKE, d).keep


@pytest.mark.parametrize("text, price", [
    ("bán nhà hẻm quận 3, dt 50m2, giá 3 tỷ", 3000.0),
    ("bán nhà quận 3 giá 10 tỷ 500 triệu, dt 50m2", 10_500.0),
    ("bán nhà quận 3 giá 4 tỷ 2, dt 50m2", 4200.0),
    ("bán nhà quận 3 giá 4 tỷ 25 dt 50m2", 4250.0),
    ("bán nhà quận 3 giá 10 tỷ 500, dt 50m2", 10_500.0),
    ("bán nhà quận 3 giá 4 tỷ 5m x 10m", 4000.0),
    ("bán nhà quận 3 giá 850 triệu, dt 40m2", 850.0),
    ("bán nhà quận 3 giá 1.200 tr, dt 40m2", 1200.0),
    # the unit price is never chosen even when it is the only sell-adjacent amount
    ("nhà quận 1 dt 80m2. giá 120 triệu/m2. tổng 9,6 tỷ", 9600.0),
    # billions outrank millions inside the sell tier
    ("bán nhà quận 1, cọc 500 triệu, giá 7 tỷ, 60m2", 7000.0),
])
def test_price_selection(text, price):
    assert extract_entities(text).price == pytest.approx(price)


def test_price_mentions_recorded():
    d = extract_entities("bán nhà q5 giá 5 tỷ, 40m2. ngoài ra căn khác giá 9 tỷ")
    assert d.price == 5000.0
    assert d.diagnostics.price_mentions == [5000.0, 9000.0]
    assert d.diagnostics.extra_price_mentions == 1


@pytest.mark.parametrize("text, area", [
    ("nhà q1 dt: 4x20m, công nhận 78m2, giá 5 tỷ", 78.0),
    ("nhà q1 rộng 90m2, công nhận 78m2, giá 5 tỷ", 78.0),
    ("nhà q1 rộng 90m2 giá 5 tỷ", 90.0),
    ("nhà q1 4,5x20m giá 5 tỷ", 90.0),
    ("nhà q1 4.5m x 20m giá 5 tỷ", 90.0),
    ("nhà q1 giá 5 tỷ", None),
])
def test_area_selection(text, area):
    got = extract_entities(text).area
    assert got == (pytest.approx(area) if area is not None else None)


@pytest.mark.parametrize("text, road, district", [
    ("bán nhà mặt tiền đường nguyễn trãi, quận 5, giá 9 tỷ", "nguyễn trãi", "5"),
    ("bán nhà hxh 8m lê văn sỹ, q.3, giá 9 tỷ", "lê văn sỹ", "3"),
    ("bán nhà hẻm 4m đường cao thắng q10 giá 5 tỷ", "cao thắng", "10"),
    ("bán nhà mt trần hưng đạo quận 01 giá 20 tỷ", "trần hưng đạo", "1"),
    ("bán nhà đường phan xích long quận phú nhuận giá 9 tỷ", "phan xích long", "phú nhuận"),
])
def test_location(text, road, district):
    d = extract_entities(text)
    assert (d.road, d.district) == (road, district)


def test_road_lexicon_preferred():
    rules = X.default_rules().with_road_lexicon({"an dương vương"})
    text = "bán nhà mặt tiền an dương vương hoàng gia quận 5 giá 9 tỷ"
    assert extract_entities(text, rules).road == "an dương vương"
    assert extract_entities(text).road == "an dương vương hoàng"


def test_multiple_locations_in_diagnostics():
    d = extract_entities("bán nhà mặt tiền đường lê lợi quận 1 và căn mặt tiền đường pasteur quận 3 giá 9 tỷ")
    assert d.diagnostics.roads == ["lê lợi", "pasteur"]
    assert d.diagnostics.districts == ["1", "3"]
    assert (d.road, d.district) == ("lê lợi", "1")


@pytest.mark.parametrize("text, house_type, width", [
    ("bán nhà mặt tiền quận 1 giá 5 tỷ", X.FRONTAGE, 20.0),
    ("bán nhà hẻm xe hơi 6m quận 1 giá 5 tỷ", X.ALLEY, 6.0),
    ("bán nhà hxh 3,5m quận 1 giá 5 tỷ", X.ALLEY, 3.5),
    ("bán nhà hẻm quận 1 giá 5 tỷ", X.ALLEY, 4.0),
    ("bán nhà hẻm 3m gần mặt tiền quận 1 giá 5 tỷ", X.ALLEY, 3.0),
    ("bán nhà cách mt 20m quận 1 giá 5 tỷ", X.ALLEY, 4.0),
])
def test_enrich(text, house_type, width):
    e = enrich(text, extract_entities(text))
    assert (e.house_type, e.road_width) == (house_type, width)


def test_alley_width_by_district(tmp_path):
    src = (X.resources.files("fakeads") / "data/rules.toml").read_text(encoding="utf-8")
    src = src.replace('# district = width in meters, e.g. "1" = 5.0', '"1" = 5.5')
    p = tmp_path / "r.toml"
    p.write_text(src, encoding="utf-8")
    rules = X.load_rules(p)
    text = "bán nhà hẻm quận 1 giá 5 tỷ"
    assert enrich(text, extract_entities(text, rules), rules).road_width == 5.5


@pytest.mark.parametrize("bad", ["price = [", "frontage_width = 20.0\n"])
def test_bad_rules_file(tmp_path, bad):
    p = tmp_path / "r.toml"
    p.write_text(bad, encoding="utf-8")
    with pytest.raises(X.RulesError):
        X.load_rules(p)


@pytest.mark.parametrize("text, reason", [
    ("bán nhà quận 1 dt 50m2", "missing price"),
    ("bán nhà quận 1 giá 5 tỷ", "missing area"),
    ("bán nhà dt 50m2 giá 5 tỷ", "missing district"),
    ("bán xe quận 1 giá 500 triệu, dt 50m2", "not real estate"),
])
def test_relevance_filter_reasons(text, reason):
    dec = relevance_filter(text, extract_entities(text))
    assert not dec and dec.reason == reason


def test_assemble_record_requires_fields():
    ad = CleanAd("a", "x", "bán nhà quận 1 giá 5 tỷ")
    d = extract_entities(ad)
    with pytest.raises(X.AssemblyError, match="missing area, road"):
        X.assemble_record(ad, d, enrich(ad, d), ("a", "b", "c"))


def test_extracted_ad_json_round_trip():
    ex, dec = X.extract_ad(CleanAd("a1", "x.vn", PRINTED_FAKE))
    back = X.ExtractedAd.from_json(ex.to_json())
    assert dec.keep and back.to_json() == ex.to_json()


@given(st.integers(1, 999), st.integers(0, 999), st.sampled_from(["tỷ", "tỉ"]))
def test_billion_amounts_round_trip(whole, frac, unit):
    text = f"bán nhà quận 1, 50m2, giá {whole},{frac:03d} {unit}" if frac else f"bán nhà quận 1, 50m2, giá {whole} {unit}"
    assert extract_entities(text).price == pytest.approx(whole * 1000 + frac)


@given(st.floats(1, 500).map(lambda v: round(v, 1)))
def test_area_round_trip(value):
    text = f"bán nhà quận 1 diện tích {value:g}m2 giá 5 tỷ".replace(".", ",")
    assert extract_entities(text).area == pytest.approx(value)
