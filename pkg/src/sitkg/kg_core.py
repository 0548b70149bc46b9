"""Situational graph data model.

A situational graph is a directed, labeled multigraph of household activity
recordings. Every recording contributes one weakly connected component made
of a parent action, its actor, a chain of sub-actions per hand and the
objects those sub-actions touch.
"""

from __future__ import annotations

import enum
import json
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple, Sequence


class NodeKind(str, enum.Enum):
    PARENT_ACTION = "ParentAction"
    SUB_ACTION = "SubAction"
    ACTOR = "Actor"
    OBJECT = "Object"


class RelationKind(str, enum.Enum):
    HAS_ACTOR = "has_actor"
    HAS_OBJECT = "has_object"
    HAS_ELEMENT = "has_element"
    HAS_NEXT = "has_next"


SIGNATURES: dict[RelationKind, tuple[NodeKind, NodeKind]] = {
    RelationKind.HAS_ACTOR: (NodeKind.PARENT_ACTION, NodeKind.ACTOR),
    RelationKind.HAS_OBJECT: (NodeKind.SUB_ACTION, NodeKind.OBJECT),
    RelationKind.HAS_ELEMENT: (NodeKind.PARENT_ACTION, NodeKind.SUB_ACTION),
    RelationKind.HAS_NEXT: (NodeKind.SUB_ACTION, NodeKind.SUB_ACTION),
}

PARENT_ACTIONS: tuple[str, ...] = (
    "cooking",
    "cooking_with_bowls",
    "pouring",
    "wiping",
    "cereals",
    "hard_drive",
    "free_hard_drive",
    "hammering",
    "sawing",
)

SUB_ACTIONS: tuple[str, ...] = (
    "idle",
    "approach",
    "retreat",
    "lift",
    "place",
    "hold",
    "stir",
    "pour",
    "cut",
    "drink",
    "wipe",
    "hammer",
    "saw",
    "screw",
)


@dataclass(frozen=True)
class Vocabulary:
    """Closed label sets for parent actions and sub-actions."""

    parent_actions: tuple[str, ...] = PARENT_ACTIONS
    sub_actions: tuple[str, ...] = SUB_ACTIONS

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        """Read a JSON file with ``parent_actions`` and ``sub_actions`` lists."""
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(tuple(data["parent_actions"]), tuple(data["sub_actions"]))

    def dump(self, path: str | Path) -> None:
        payload = {"parent_actions": list(self.parent_actions), "sub_actions": list(self.sub_actions)}
        Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


DEFAULT_VOCABULARY = Vocabulary()


class RecordingKey(NamedTuple):
    task: str
    subject: str
    take: int

    def __str__(self) -> str:
        return f"{self.task}/{self.subject}/{self.take}"

    @classmethod
    def parse(cls, text: str) -> "RecordingKey":
        task, subject, take = text.rsplit("/", 2)
        return cls(task, subject, int(take))


@dataclass(frozen=True)
class Node:
    id: str
    kind: NodeKind
    label: str


class Triple(NamedTuple):
    head: str
    relation: RelationKind
    tail: str


def node_id(label: str, key: RecordingKey, ordinal: int) -> str:
    return f"{label}#{key}#{ordinal}"


class GraphError(Exception):
    pass


class DuplicateRecordingKey(GraphError):
    pass


class RelationSignatureViolation(GraphError):
    pass


@dataclass(frozen=True)
class Violation:
    kind: str
    subject: str
    detail: str = ""

    def __str__(self) -> str:
        return f"{self.kind}: {self.subject}" + (f" ({self.detail})" if self.detail else "")


@dataclass
class RecordingComponent:
    """One recording's subgraph: nodes and triples in emission order."""

    key: RecordingKey | None
    nodes: list[Node]
    triples: list[Triple]

    def node_map(self) -> dict[str, Node]:
        return {n.id: n for n in self.nodes}

    def label(self, nid: str) -> str:
        return self.node_map()[nid].label

    @property
    def parent(self) -> Node:
        return next(n for n in self.nodes if n.kind is NodeKind.PARENT_ACTION)

    @property
    def actor(self) -> Node | None:
        return next((n for n in self.nodes if n.kind is NodeKind.ACTOR), None)

    def sub_actions(self) -> list[Node]:
        return [n for n in self.nodes if n.kind is NodeKind.SUB_ACTION]

    def objects_of(self) -> dict[str, list[str]]:
        """Sub-action id -> object labels, in triple order."""
        nodes = self.node_map()
        out: dict[str, list[str]] = defaultdict(list)
        for h, r, t in self.triples:
            if r is RelationKind.HAS_OBJECT:
                out[h].append(nodes[t].label)
        return out

    def relation_triples(self, relation: RelationKind) -> list[Triple]:
        return [tr for tr in self.triples if tr.relation is relation]

    def masked(self, placeholder: str = "PARENT") -> "RecordingComponent":
        """Copy with the parent label hidden and node ids anonymized."""
        rename = {n.id: f"n{i}" for i, n in enumerate(self.nodes)}
        nodes = [
            Node(rename[n.id], n.kind, placeholder if n.kind is NodeKind.PARENT_ACTION else n.label)
            for n in self.nodes
        ]
        triples = [Triple(rename[h], r, rename[t]) for h, r, t in self.triples]
        return RecordingComponent(None, nodes, triples)


@dataclass(frozen=True)
class SituationalGraph:
    """Immutable instance-level graph.

    ``triples`` keeps insertion order; membership has set semantics.
    """

    nodes: Mapping[str, Node]
    triples: tuple[Triple, ...]
    recording_of: Mapping[str, RecordingKey]
    _triple_set: frozenset = field(default=frozenset(), repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "_triple_set", frozenset(self.triples))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SituationalGraph):
            return NotImplemented
        return (
            dict(self.nodes) == dict(other.nodes)
            and self._triple_set == other._triple_set
            and dict(self.recording_of) == dict(other.recording_of)
        )

    __hash__ = None  # type: ignore[assignment]

    def __contains__(self, triple: Triple) -> bool:
        return triple in self._triple_set

    @property
    def node_count(self) -> int:
        return len(self.nodes)

    @property
    def edge_count(self) -> int:
        return len(self.triples)

    def recording_keys(self) -> list[RecordingKey]:
        return sorted(set(self.recording_of.values()))

    def label(self, nid: str) -> str:
        return self.nodes[nid].label

    def components(self) -> dict[RecordingKey, RecordingComponent]:
        """Split into per-recording components, keyed and ordered by recording key."""
        comps: dict[RecordingKey, RecordingComponent] = {
            k: RecordingComponent(k, [], []) for k in self.recording_keys()
        }
        for nid, node in self.nodes.items():
            comps[self.recording_of[nid]].nodes.append(node)
        for tr in self.triples:
            comps[self.recording_of[tr.head]].triples.append(tr)
        return comps

    def subgraph(self, keys: Iterable[RecordingKey]) -> "SituationalGraph":
        keep = set(keys)
        nodes = {nid: n for nid, n in self.nodes.items() if self.recording_of[nid] in keep}
        triples = tuple(tr for tr in self.triples if tr.head in nodes)
        rec = {nid: self.recording_of[nid] for nid in nodes}
        return SituationalGraph(nodes, triples, rec)


def build_graph(recordings: Sequence[RecordingComponent]) -> SituationalGraph:
    """Merge recording components into one graph.

    Raises DuplicateRecordingKey when two components share a key and
    RelationSignatureViolation when a triple's endpoint kinds do not match
    its relation.
    """
    nodes: dict[str, Node] = {}
    recording_of: dict[str, RecordingKey] = {}
    triples: list[Triple] = []
    seen_keys: set[RecordingKey] = set()
    seen_triples: set[Triple] = set()
    for comp in recordings:
        if comp.key is None:
            raise GraphError("component without recording key")
        if comp.key in seen_keys:
            raise DuplicateRecordingKey(str(comp.key))
        seen_keys.add(comp.key)
        for n in comp.nodes:
            if n.id in nodes:
                raise GraphError(f"node id {n.id!r} reused")
            nodes[n.id] = n
            recording_of[n.id] = comp.key
        for tr in comp.triples:
            head, tail = nodes.get(tr.head), nodes.get(tr.tail)
            if head is None or tail is None:
                raise GraphError(f"triple {tr} references unknown node")
            if (head.kind, tail.kind) != SIGNATURES[tr.relation]:
                raise RelationSignatureViolation(f"{tr.head} {tr.relation.value} {tr.tail}")
            if recording_of[tr.tail] != comp.key:
                raise GraphError(f"triple {tr} crosses recordings")
            if tr not in seen_triples:
                seen_triples.add(tr)
                triples.append(tr)
    return SituationalGraph(nodes, tuple(triples), recording_of)


def weakly_connected_components(g: SituationalGraph) -> dict[str, int]:
    """Node id -> dense component index, numbered by first appearance."""
    parent = {nid: nid for nid in g.nodes}

    def find(x: str) -> str:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for h, _, t in g.triples:
        rh, rt = find(h), find(t)
        if rh != rt:
            parent[rt] = rh

    index: dict[str, int] = {}
    out: dict[str, int] = {}
    for nid in g.nodes:
        root = find(nid)
        if root not in index:
            index[root] = len(index)
        out[nid] = index[root]
    return out


@dataclass
class LabelProjection:
    """Label-level view: per relation, (head label, tail label) -> count."""

    counts: dict[RelationKind, Counter] = field(
        default_factory=lambda: {r: Counter() for r in RelationKind}
    )

    def total(self, relation: RelationKind) -> int:
        return sum(self.counts[relation].values())

    def label_triples(self) -> list[tuple[str, RelationKind, str, int]]:
        """All (head, relation, tail, count) entries, deterministically ordered."""
        out = []
        for r in RelationKind:
            for (h, t), c in sorted(self.counts[r].items()):
                out.append((h, r, t, c))
        return out

    def labels_of(self, kind: NodeKind) -> list[str]:
        found: set[str] = set()
        for r, (hk, tk) in SIGNATURES.items():
            for h, t in self.counts[r]:
                if hk is kind:
                    found.add(h)
                if tk is kind:
                    found.add(t)
        return sorted(found)

    def __bool__(self) -> bool:
        return any(self.counts[r] for r in RelationKind)


def label_projection(g: SituationalGraph) -> LabelProjection:
    proj = LabelProjection()
    for h, r, t in g.triples:
        proj.counts[r][(g.nodes[h].label, g.nodes[t].label)] += 1
    return proj


def _is_acyclic(g: SituationalGraph) -> list[str]:
    """Return ids of nodes left on cycles (empty when acyclic)."""
    indeg = {nid: 0 for nid in g.nodes}
    succ: dict[str, list[str]] = defaultdict(list)
    for h, _, t in g.triples:
        if h in indeg and t in indeg:
            succ[h].append(t)
            indeg[t] += 1
    stack = [n for n, d in indeg.items() if d == 0]
    while stack:
        n = stack.pop()
        for m in succ[n]:
            indeg[m] -= 1
            if indeg[m] == 0:
                stack.append(m)
    return sorted(n for n, d in indeg.items() if d > 0)


def validate(g: SituationalGraph, vocab: Vocabulary | None = DEFAULT_VOCABULARY) -> list[Violation]:
    """Check every graph invariant; violations are returned, never raised."""
    out: list[Violation] = []
    for nid, node in g.nodes.items():
        if node.id != nid:
            out.append(Violation("NodeIdMismatch", nid, node.id))
        if not node.label:
            out.append(Violation("EmptyLabel", nid))
        if nid not in g.recording_of:
            out.append(Violation("MissingRecording", nid))
        if vocab is not None:
            if node.kind is NodeKind.PARENT_ACTION and node.label not in vocab.parent_actions:
                out.append(Violation("UnknownLabel", nid, node.label))
            if node.kind is NodeKind.SUB_ACTION and node.label not in vocab.sub_actions:
                out.append(Violation("UnknownLabel", nid, node.label))

    pairs = {(h, t) for h, _, t in g.triples}
    for tr in g.triples:
        h, r, t = tr
        name = f"{h} {r.value} {t}"
        if h not in g.nodes or t not in g.nodes:
            out.append(Violation("DanglingTriple", name))
            continue
        if (g.nodes[h].kind, g.nodes[t].kind) != SIGNATURES[r]:
            out.append(Violation("RelationSignatureViolation", name))
        if g.recording_of.get(h) != g.recording_of.get(t):
            out.append(Violation("CrossRecordingEdge", name))
        if (t, h) in pairs:
            out.append(Violation("ReciprocalEdge", name))

    for nid in _is_acyclic(g):
        out.append(Violation("Cycle", nid))

    wcc = weakly_connected_components(g)
    n_wcc = len(set(wcc.values()))
    n_rec = len(set(g.recording_of.values()))
    if n_wcc != n_rec:
        out.append(Violation("ComponentMismatch", "graph", f"{n_wcc} components for {n_rec} recordings"))
    return out
