"""Repetition-based train/test split."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

from .kg_core import RecordingComponent, RecordingKey, SituationalGraph

TRAIN, TEST = "train", "test"


class InsufficientTakes(ValueError):
    def __init__(self, task: str, subject: str, available: int, needed: int):
        super().__init__(f"{task}/{subject}: {available} takes, {needed} needed for testing")
        self.task, self.subject = task, subject


class ManifestError(ValueError):
    pass


@dataclass
class Split:
    train: SituationalGraph
    test_components: list[RecordingComponent]
    manifest: dict[RecordingKey, str]

    @property
    def test_graph_keys(self) -> list[RecordingKey]:
        return [k for k, v in self.manifest.items() if v == TEST]


def split_by_take(g: SituationalGraph, test_takes: int = 2) -> Split:
    """Hold out the ``test_takes`` highest take indices of every (task, subject)."""
    groups: dict[tuple[str, str], list[RecordingKey]] = defaultdict(list)
    for key in g.recording_keys():
        groups[(key.task, key.subject)].append(key)
    manifest: dict[RecordingKey, str] = {}
    for (task, subject), keys in sorted(groups.items()):
        if len(keys) < test_takes:
            raise InsufficientTakes(task, subject, len(keys), test_takes)
        keys.sort(key=lambda k: k.take)
        cut = len(keys) - test_takes
        for i, k in enumerate(keys):
            manifest[k] = TEST if i >= cut else TRAIN
    return apply_manifest(g, manifest)


def apply_manifest(g: SituationalGraph, manifest: Mapping[RecordingKey, str]) -> Split:
    keys = set(g.recording_keys())
    missing = keys - set(manifest)
    if missing:
        raise ManifestError(f"manifest lacks recording {sorted(missing)[0]}")
    manifest = {k: manifest[k] for k in sorted(keys)}
    bad = [k for k, v in manifest.items() if v not in (TRAIN, TEST)]
    if bad:
        raise ManifestError(f"bad split value for {bad[0]}")
    comps = g.components()
    train = g.subgraph(k for k, v in manifest.items() if v == TRAIN)
    test = [comps[k] for k, v in manifest.items() if v == TEST]
    return Split(train, test, manifest)


def write_manifest(manifest: Mapping[RecordingKey, str], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for key in sorted(manifest):
            f.write(f"{key.task}\t{key.subject}\t{key.take}\t{manifest[key]}\n")


def read_manifest(path: str | Path) -> dict[RecordingKey, str]:
    out: dict[RecordingKey, str] = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\r\n")
            if not line:
                continue
            cols = line.split("\t")
            if len(cols) != 4 or cols[3] not in (TRAIN, TEST):
                raise ManifestError(f"{path}:{lineno}: expected task, subject, take, train|test")
            try:
                out[RecordingKey(cols[0], cols[1], int(cols[2]))] = cols[3]
            except ValueError:
                raise ManifestError(f"{path}:{lineno}: take must be an integer") from None
    return out
