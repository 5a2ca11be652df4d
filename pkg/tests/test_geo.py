import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fakeads import geo
from fakeads.geo import Gazetteer, manhattan, nearest_roads, spatial_features


def grid():
    return Gazetteer({("1", "a"): (0.0, 0.0), ("1", "b"): (0.0, 1.0), ("1", "c"): (2.0, 0.0),
                      ("1", "d"): (1.0, 1.0), ("1", "e"): (5.0, 5.0), ("2", "solo"): (9.0, 9.0)})


def brute(road, district, g, k=3):
    origin = g.entries[(district, road)]
    cands = sorted((manhattan(origin, p), r) for (d, r), p in g.entries.items() if d == district and r != road)
    out = [r for _, r in cands[:k]] or [road]
    return out + [out[-1]] * (k - len(out))


def test_nearest_with_ties_broken_by_name():
    # b at 1, c at 2, d at 2: tie between c and d goes to c
    assert nearest_roads("a", "1", grid()) == ["b", "c", "d"]


def test_padding_and_singletons():
    g = Gazetteer({("1", "a"): (0.0, 0.0), ("1", "b"): (1.0, 0.0)})
    assert nearest_roads("a", "1", g) == ["b", "b", "b"]
    assert nearest_roads("solo", "2", grid()) == ["solo"] * 3


def test_unknown_road_and_fallbacks():
    g = grid()
    with pytest.raises(geo.UnknownRoad):
        nearest_roads("zzz", "1", g)
    roads, flag = spatial_features("zzz", "1", g)
    assert flag == "unknown road"
    assert roads == nearest_roads(g.centroid_road("1"), "1", g)
    assert spatial_features("a", "9", g) == (["unknown"] * 3, "unknown district")
    assert spatial_features("a", "1", g) == (["b", "c", "d"], None)


def test_centroid_road():
    assert grid().centroid_road("1") == "d"


@pytest.mark.parametrize("entries", [{("1", "a"): (float("nan"), 0.0)}, {("1", "a"): (200.0, 0.0)}])
def test_invalid_coordinates(entries):
    with pytest.raises(geo.GazetteerError):
        Gazetteer(entries)


def test_round_trip_and_errors(tmp_path):
    g = grid()
    geo.write_gazetteer(g, tmp_path / "g.csv")
    assert geo.load_gazetteer(tmp_path / "g.csv").entries == g.entries
    (tmp_path / "dup.csv").write_text("district,road,longitude,latitude\n1,a,0,0\n1,A ,1,1\n")
    with pytest.raises(geo.GazetteerError, match="duplicate"):
        geo.load_gazetteer(tmp_path / "dup.csv")
    (tmp_path / "bad.csv").write_text("district,road,longitude\n1,a,zero\n")
    with pytest.raises(geo.GazetteerError, match="line 2"):
        geo.load_gazetteer(tmp_path / "bad.csv")


coords = st.integers(-50, 50).map(lambda v: v / 10)


@given(st.dictionaries(st.tuples(st.sampled_from("12345"), st.sampled_from([f"r{i}" for i in range(12)])),
                       st.tuples(coords, coords), min_size=1, max_size=40),
       st.integers(1, 4))
def test_matches_brute_force(entries, k):
    g = Gazetteer(entries)
    for district, road in entries:
        assert nearest_roads(road, district, g, k) == brute(road, district, g, k)


def test_manhattan():
    assert manhattan((1, 2), (4, -2)) == 7
    rng = np.random.default_rng(0)
    a, b, c = rng.normal(size=(3, 2))
    assert manhattan(a, c) <= manhattan(a, b) + manhattan(b, c) + 1e-12
