"""Annotation parsing, object association and triple-file I/O."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

from .kg_core import (
    SIGNATURES,
    Node,
    NodeKind,
    RecordingComponent,
    RecordingKey,
    RelationKind,
    SituationalGraph,
    Triple,
    build_graph,
    node_id,
    weakly_connected_components,
)

logger = logging.getLogger(__name__)

HANDS = ("left", "right")
HAND_BODIES = {"left": "left_hand", "right": "right_hand"}

Box = tuple[float, float, float, float, float, float]


class SchemaError(ValueError):
    pass


class EmptyRecording(ValueError):
    pass


class ParseError(ValueError):
    def __init__(self, path: str | Path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path = str(path)
        self.line = line


@dataclass(frozen=True)
class Segment:
    action: str
    start: int
    end: int


@dataclass
class RecordingAnnotation:
    task: str
    subject: str
    take: int
    hands: dict[str, list[Segment]]
    boxes: dict[str, list[tuple[int, Box]]] = field(default_factory=dict)
    repairs: list[str] = field(default_factory=list)

    @property
    def key(self) -> RecordingKey:
        return RecordingKey(self.task, self.subject, self.take)

    def to_document(self) -> dict[str, Any]:
        return {
            "task": self.task,
            "subject": self.subject,
            "take": self.take,
            "hands": {
                h: [{"action": s.action, "start": s.start, "end": s.end} for s in segs]
                for h, segs in self.hands.items()
            },
            "boxes": {
                body: [{"frame": f, "box": list(b)} for f, b in frames]
                for body, frames in self.boxes.items()
            },
        }


@dataclass(frozen=True)
class AssociationPolicy:
    min_overlap_fraction: float = 0.5

    def __post_init__(self) -> None:
        if not 0.0 <= self.min_overlap_fraction <= 1.0:
            raise ValueError(f"min_overlap_fraction must be in [0, 1], got {self.min_overlap_fraction}")


def _require(doc: dict, name: str, typ: type | tuple[type, ...]) -> Any:
    if name not in doc:
        raise SchemaError(name)
    value = doc[name]
    if not isinstance(value, typ) or isinstance(value, bool):
        raise SchemaError(name)
    return value


def _repair(segments: list[Segment], hand: str, repairs: list[str]) -> list[Segment]:
    ordered = sorted(segments, key=lambda s: (s.start, s.end))
    if ordered != segments:
        repairs.append(f"{hand}: segments reordered by start frame")
    out: list[Segment] = []
    for seg in ordered:
        if out and out[-1].end > seg.start:
            prev = out[-1]
            out[-1] = Segment(prev.action, prev.start, seg.start)
            repairs.append(
                f"{hand}: clipped {prev.action} [{prev.start},{prev.end}] to end at {seg.start}"
            )
        out.append(seg)
    return out


def parse_recording(document: str | bytes | dict) -> RecordingAnnotation:
    """Parse one annotation document (JSON text or already-decoded dict).

    Overlapping segments of one hand are repaired by clipping the earlier
    segment's end to the later segment's start; every repair is logged and
    kept on ``annotation.repairs``.
    """
    if isinstance(document, (str, bytes)):
        try:
            doc = json.loads(document)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"invalid JSON: {exc}") from exc
    else:
        doc = document
    if not isinstance(doc, dict):
        raise SchemaError("document")

    task = _require(doc, "task", str)
    subject = _require(doc, "subject", str)
    take = _require(doc, "take", int)
    if take < 1:
        raise SchemaError("take")
    hands_doc = _require(doc, "hands", dict)

    repairs: list[str] = []
    hands: dict[str, list[Segment]] = {}
    for hand in HANDS:
        raw = hands_doc.get(hand, [])
        if not isinstance(raw, list):
            raise SchemaError(f"hands.{hand}")
        segs = []
        for i, item in enumerate(raw):
            where = f"hands.{hand}[{i}]"
            if not isinstance(item, dict):
                raise SchemaError(where)
            try:
                action = _require(item, "action", str)
                start = _require(item, "start", int)
                end = _require(item, "end", int)
            except SchemaError as exc:
                raise SchemaError(f"{where}.{exc}") from None
            if start > end:
                raise SchemaError(f"{where}: start > end")
            segs.append(Segment(action, start, end))
        hands[hand] = _repair(segs, hand, repairs)
    extra = set(hands_doc) - set(HANDS)
    if extra:
        raise SchemaError(f"hands.{sorted(extra)[0]}")
    if not any(hands.values()):
        raise EmptyRecording(str(RecordingKey(task, subject, take)))

    boxes: dict[str, list[tuple[int, Box]]] = {}
    boxes_doc = doc.get("boxes", {})
    if not isinstance(boxes_doc, dict):
        raise SchemaError("boxes")
    for body, frames in boxes_doc.items():
        if not isinstance(frames, list):
            raise SchemaError(f"boxes.{body}")
        entries = []
        for item in frames:
            if not isinstance(item, dict) or "frame" not in item or "box" not in item:
                raise SchemaError(f"boxes.{body}")
            box = item["box"]
            if not isinstance(box, list) or len(box) != 6:
                raise SchemaError(f"boxes.{body}.box")
            b = tuple(float(v) for v in box)
            if any(b[i] > b[i + 3] for i in range(3)):
                raise SchemaError(f"boxes.{body}.box: min > max")
            entries.append((int(item["frame"]), b))
        boxes[body] = sorted(entries, key=lambda e: e[0])

    ann = RecordingAnnotation(task, subject, take, hands, boxes, repairs)
    for msg in repairs:
        logger.warning("repair %s: %s", ann.key, msg)
    return ann


def boxes_intersect(a: Sequence[float], b: Sequence[float]) -> bool:
    """Closed-interval overlap on all three axes; touching boxes intersect."""
    return all(a[i] <= b[i + 3] and b[i] <= a[i + 3] for i in range(3))


SegmentRef = tuple[str, int]


def associate_objects(
    r: RecordingAnnotation, p: AssociationPolicy = AssociationPolicy()
) -> dict[SegmentRef, frozenset[str]]:
    """Objects per (hand, segment index).

    A segment covers frames start..end inclusive. Only frames carrying a box
    for both the hand and the object count towards the overlap fraction.
    """
    by_frame = {body: dict(frames) for body, frames in r.boxes.items()}
    objects = sorted(b for b in by_frame if b not in HAND_BODIES.values())
    out: dict[SegmentRef, frozenset[str]] = {}
    for hand, segs in r.hands.items():
        hand_boxes = by_frame.get(HAND_BODIES[hand], {})
        for i, seg in enumerate(segs):
            found = set()
            for obj in objects:
                obj_boxes = by_frame[obj]
                both = hits = 0
                for f in range(seg.start, seg.end + 1):
                    hb, ob = hand_boxes.get(f), obj_boxes.get(f)
                    if hb is None or ob is None:
                        continue
                    both += 1
                    hits += boxes_intersect(hb, ob)
                if both and hits / both >= p.min_overlap_fraction:
                    found.add(obj)
            out[(hand, i)] = frozenset(found)
    return out


def recording_to_component(
    r: RecordingAnnotation, assoc: dict[SegmentRef, frozenset[str]]
) -> RecordingComponent:
    key = r.key
    counter = iter(range(1 << 30))
    parent = Node(node_id(r.task, key, next(counter)), NodeKind.PARENT_ACTION, r.task)
    actor = Node(node_id(r.subject, key, next(counter)), NodeKind.ACTOR, r.subject)
    nodes = [parent, actor]
    triples = [Triple(parent.id, RelationKind.HAS_ACTOR, actor.id)]
    object_nodes: dict[str, Node] = {}
    object_triples: list[Triple] = []
    for hand in HANDS:
        prev: Node | None = None
        for i, seg in enumerate(r.hands.get(hand, [])):
            sub = Node(node_id(seg.action, key, next(counter)), NodeKind.SUB_ACTION, seg.action)
            nodes.append(sub)
            triples.append(Triple(parent.id, RelationKind.HAS_ELEMENT, sub.id))
            if prev is not None:
                triples.append(Triple(prev.id, RelationKind.HAS_NEXT, sub.id))
            prev = sub
            for obj in sorted(assoc.get((hand, i), ())):
                if obj not in object_nodes:
                    object_nodes[obj] = Node(node_id(obj, key, next(counter)), NodeKind.OBJECT, obj)
                object_triples.append(Triple(sub.id, RelationKind.HAS_OBJECT, object_nodes[obj].id))
    nodes.extend(object_nodes.values())
    return RecordingComponent(key, nodes, triples + object_triples)


def ingest_annotations(
    annotations: Iterable[RecordingAnnotation], policy: AssociationPolicy = AssociationPolicy()
) -> SituationalGraph:
    return build_graph([recording_to_component(a, associate_objects(a, policy)) for a in annotations])


# --- triple files -----------------------------------------------------------


def nodes_path_for(triples_path: str | Path) -> Path:
    p = Path(triples_path)
    stem = p.name[: -len(".tsv")] if p.name.endswith(".tsv") else p.name
    return p.with_name(f"{stem}.nodes.tsv")


def write_triples(g: SituationalGraph, path: str | Path, nodes_path: str | Path | None = None) -> None:
    """Write ``head<TAB>relation<TAB>tail`` plus the companion node file."""
    path = Path(path)
    nodes_path = Path(nodes_path) if nodes_path else nodes_path_for(path)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for h, r, t in g.triples:
            f.write(f"{h}\t{r.value}\t{t}\n")
    with open(nodes_path, "w", encoding="utf-8", newline="\n") as f:
        for nid, node in g.nodes.items():
            f.write(f"{nid}\t{node.kind.value}\t{node.label}\t{g.recording_of[nid]}\n")


def _read_rows(path: Path, width: int) -> Iterable[tuple[int, list[str]]]:
    with open(path, encoding="utf-8", newline="") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n").rstrip("\r")
            if not line:
                continue
            cols = line.split("\t")
            if len(cols) != width:
                raise ParseError(path, lineno, f"expected {width} tab-separated columns, got {len(cols)}")
            yield lineno, cols


def read_triples(path: str | Path, nodes_path: str | Path | None = None) -> SituationalGraph:
    """Load a triple file and its node file.

    Without a node file, kinds come from relation signatures and labels and
    recordings from ``label#task/subject/take#ordinal`` ids; ids of any other
    shape keep the id as label and use their weak component as recording.
    """
    path = Path(path)
    triples: list[Triple] = []
    seen: set[Triple] = set()
    for lineno, (h, r, t) in _read_rows(path, 3):
        try:
            rel = RelationKind(r)
        except ValueError:
            raise ParseError(path, lineno, f"unknown relation {r!r}") from None
        tr = Triple(h, rel, t)
        if tr not in seen:
            seen.add(tr)
            triples.append(tr)

    nodes_path = Path(nodes_path) if nodes_path else nodes_path_for(path)
    nodes: dict[str, Node] = {}
    recording_of: dict[str, RecordingKey] = {}
    if nodes_path.exists():
        for lineno, (nid, kind, label, key) in _read_rows(nodes_path, 4):
            try:
                nodes[nid] = Node(nid, NodeKind(kind), label)
                recording_of[nid] = RecordingKey.parse(key)
            except ValueError as exc:
                raise ParseError(nodes_path, lineno, str(exc)) from None
        for lineno, tr in enumerate(triples, 1):
            if tr.head not in nodes or tr.tail not in nodes:
                raise ParseError(path, lineno, f"triple references node missing from {nodes_path.name}")
        return SituationalGraph(nodes, tuple(triples), recording_of)
    return _infer_nodes(path, triples)


def _infer_nodes(path: Path, triples: list[Triple]) -> SituationalGraph:
    kinds: dict[str, NodeKind] = {}
    for lineno, (h, r, t) in enumerate(triples, 1):
        hk, tk = SIGNATURES[r]
        for nid, k in ((h, hk), (t, tk)):
            if kinds.setdefault(nid, k) is not k:
                raise ParseError(path, lineno, f"node {nid!r} used as {kinds[nid].value} and {k.value}")
    nodes: dict[str, Node] = {}
    recording_of: dict[str, RecordingKey] = {}
    for nid, kind in kinds.items():
        parts = nid.split("#")
        label = parts[0] if len(parts) == 3 and parts[0] else nid
        nodes[nid] = Node(nid, kind, label)
        if len(parts) == 3:
            try:
                recording_of[nid] = RecordingKey.parse(parts[1])
            except ValueError:
                pass
    g = SituationalGraph(nodes, tuple(triples), recording_of)
    if len(recording_of) == len(nodes):
        return g
    # fall back on weak components, named after their parent action
    comp = weakly_connected_components(SituationalGraph(nodes, tuple(triples), {}))
    parent_label: dict[int, str] = {}
    for nid, c in comp.items():
        if nodes[nid].kind is NodeKind.PARENT_ACTION:
            parent_label.setdefault(c, nodes[nid].label)
    recording_of = {
        nid: RecordingKey(parent_label.get(c, "unknown"), f"component_{c}", 1) for nid, c in comp.items()
    }
    return SituationalGraph(nodes, tuple(triples), recording_of)


def canonicalize_triples(text: str) -> str:
    """Canonical form of a triple file: LF endings, no blanks, no repeated lines."""
    seen: set[str] = set()
    out = []
    for line in text.replace("\r\n", "\n").split("\n"):
        if line and line not in seen:
            seen.add(line)
            out.append(line + "\n")
    return "".join(out)


def load_annotation_files(paths: Iterable[str | Path]) -> list[RecordingAnnotation]:
    out = []
    for p in paths:
        p = Path(p)
        files = sorted(p.glob("*.json")) if p.is_dir() else [p]
        for f in files:
            try:
                out.append(parse_recording(f.read_text(encoding="utf-8")))
            except SchemaError as exc:
                raise SchemaError(f"{f}: {exc}") from None
    return out

