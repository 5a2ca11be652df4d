"""Road gazetteer and nearest-road spatial features."""
from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path


class GazetteerError(ValueError):
    pass


class UnknownRoad(KeyError):
    def __init__(self, road, district):
        super().__init__(f"road {road!r} not in district {district!r}")
        self.road = road
        self.district = district


def manhattan(a, b) -> float:
    return abs(a[0] - b[0]) + abs(a[1] - b[1])


@dataclass
class Gazetteer:
    """(district, road) -> (longitude, latitude)."""

    entries: dict = field(default_factory=dict)

    def __post_init__(self):
        by_district = defaultdict(list)
        for (district, road), (lon, lat) in self.entries.items():
            if not (math.isfinite(lon) and math.isfinite(lat)):
                raise GazetteerError(f"non-finite coordinates for {road!r}")
            if not (-180 <= lon <= 180 and -90 <= lat <= 90):
                raise GazetteerError(f"coordinates out of range for {road!r}: {lon}, {lat}")
            by_district[district].append(road)
        self._roads = {d: sorted(r) for d, r in by_district.items()}

    def roads(self, district) -> list:
        return list(self._roads.get(district, ()))

    def districts(self) -> list:
        return sorted(self._roads)

    def road_names(self) -> set:
        return {road for _, road in self.entries}

    def __contains__(self, key) -> bool:
        return key in self.entries

    def __len__(self):
        return len(self.entries)

    def centroid_road(self, district):
        """Road with the smallest summed distance to all roads of the district."""
        roads = self._roads.get(district)
        if not roads:
            raise UnknownRoad(None, district)
        pts = [self.entries[(district, r)] for r in roads]
        best = min(roads, key=lambda r: (sum(manhattan(self.entries[(district, r)], p) for p in pts), r))
        return best


def load_gazetteer(path) -> Gazetteer:
    entries = {}
    with open(Path(path), encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            try:
                key = (row["district"].strip().lower(), row["road"].strip().lower())
                point = (float(row["longitude"]), float(row["latitude"]))
            except (KeyError, AttributeError, TypeError, ValueError) as exc:
                raise GazetteerError(f"{path}, line {reader.line_num}: bad row ({exc})") from None
            if key in entries:
                raise GazetteerError(f"duplicate gazetteer entry {key}")
            entries[key] = point
    return Gazetteer(entries)


def write_gazetteer(g: Gazetteer, path) -> None:
    with open(Path(path), "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["district", "road", "longitude", "latitude"])
        for (district, road), (lon, lat) in sorted(g.entries.items()):
            w.writerow([district, road, repr(lon), repr(lat)])


def nearest_roads(road, district, g: Gazetteer, k: int = 3) -> list:
    if (district, road) not in g.entries:
        raise UnknownRoad(road, district)
    origin = g.entries[(district, road)]
    others = [r for r in g.roads(district) if r != road]
    if not others:
        return [road] * k
    ranked = sorted(others, key=lambda r: (manhattan(origin, g.entries[(district, r)]), r))
    out = ranked[:k]
    while len(out) < k:
        out.append(out[-1])
    return out


def spatial_features(road, district, g: Gazetteer, k: int = 3):
    """Nearest roads with the centroid fallback for unlisted roads.

    Returns ``(roads, flag)`` where flag is None, "unknown road" or
    "unknown district".
    """
    try:
        return nearest_roads(road, district, g, k), None
    except UnknownRoad:
        pass
    if not g.roads(district):
        return ["unknown"] * k, "unknown district"
    return nearest_roads(g.centroid_road(district), district, g, k), "unknown road"
