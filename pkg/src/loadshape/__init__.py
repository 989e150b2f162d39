"""Toolkit for clustering household smart-meter readings into daily load profiles.

The pipeline runs: ingest -> clean -> label -> profile -> cluster/elbow -> report,
with a synthetic-data generator (synth) for testing without real meter data.
Every stage is importable as a library module and exposed as a CLI subcommand.
"""

__version__ = "0.1.0"

from loadshape.errors import LoadShapeError

__all__ = ["LoadShapeError", "__version__"]
