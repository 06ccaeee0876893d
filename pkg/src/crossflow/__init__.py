"""Cross-platform dataflow management engine.

Register datasets, models, and functions in a location-aware catalog;
compose operator dataflows; rewrite and place them across heterogeneous
platforms; execute with full provenance capture; and query the derived
knowledge graph.
"""

__version__ = "0.1.0"
