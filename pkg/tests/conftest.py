from __future__ import annotations

import pytest

from sitkg.ingest import RecordingAnnotation, Segment, ingest_annotations, recording_to_component
from sitkg.kg_core import RecordingComponent
from sitkg.splitter import split_by_take
from sitkg.synthetic import generate_synthetic


def make_component(task, subject="subject_1", take=1, left=(), right=()) -> RecordingComponent:
    """Component from per-hand lists of (action, objects)."""
    hands, assoc = {}, {}
    for hand, segs in (("left", left), ("right", right)):
        hands[hand] = [Segment(a, 10 * i, 10 * i + 9) for i, (a, _) in enumerate(segs)]
        for i, (_, objs) in enumerate(segs):
            assoc[(hand, i)] = frozenset(objs)
    return recording_to_component(RecordingAnnotation(task, subject, take, hands, {}), assoc)


@pytest.fixture(scope="session")
def synth_annotations():
    return generate_synthetic(9, 6, 10, seed=1)


@pytest.fixture(scope="session")
def synth_graph(synth_annotations):
    return ingest_annotations(synth_annotations)


@pytest.fixture(scope="session")
def synth_split(synth_graph):
    return split_by_take(synth_graph, 2)


@pytest.fixture(scope="session")
def small_graph():
    return ingest_annotations(generate_synthetic(3, 2, 3, seed=7))
