"""Fake real-estate listing detection.

Crawled listings are cleaned, mined for price, area, location and house type,
de-duplicated, enriched with nearby roads from a gazetteer, and classified by
a two-layer stacked ensemble of tree, neighbour and network learners. A seeded
synthetic corpus generator stands in for labelled data.
"""

__version__ = "0.1.0"
