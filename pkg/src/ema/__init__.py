"""EMA study platform: content pipeline, feedback rules, sensing aggregation and JSON:API backend."""

__version__ = "0.1.0"
