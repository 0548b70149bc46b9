"""Situational knowledge graphs of bimanual manipulation recordings.

Build the graph from hand-action annotations, split it by take, fit
frequency baselines and embedding models, and score parent-action and
next-action prediction with Hits@k.
"""

__version__ = "0.1.0"

from .kg_core import (
    DEFAULT_VOCABULARY,
    NodeKind,
    RecordingKey,
    RelationKind,
    SituationalGraph,
    Vocabulary,
    build_graph,
    label_projection,
    validate,
)

__all__ = [
    "DEFAULT_VOCABULARY",
    "NodeKind",
    "RecordingKey",
    "RelationKind",
    "SituationalGraph",
    "Vocabulary",
    "build_graph",
    "label_projection",
    "validate",
    "__version__",
]
