"""Frequency baselines for parent-action and next-action prediction.

B1 keys on the sub-action label alone; B2 keys on (sub-action, object)
pairs and backs off to B1, then to global label frequency.
"""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Hashable, Iterable

from .kg_core import (
    DEFAULT_VOCABULARY,
    NodeKind,
    RecordingComponent,
    RelationKind,
    SituationalGraph,
    Vocabulary,
)

B1, B2 = "b1", "b2"
PARENT, NEXT = "parent", "next"
GLOBAL_KEY = "*"


class EmptyTrainingGraph(ValueError):
    pass


class UnknownLabel(ValueError):
    pass


Key = Hashable  # str for B1, (str, str | None) for B2


def ranked(counts: Counter) -> list[tuple[str, int]]:
    return sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))


@dataclass
class FrequencyTable:
    task: str
    variant: str
    table: dict[Key, Counter] = field(default_factory=lambda: defaultdict(Counter))
    fallback: Counter = field(default_factory=Counter)
    backoff: "FrequencyTable | None" = None

    def top(self, key: Key) -> tuple[str, int] | None:
        counts = self.table.get(key)
        if not counts:
            return None
        return ranked(counts)[0]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FrequencyTable):
            return NotImplemented
        mine = {k: dict(v) for k, v in self.table.items() if v}
        theirs = {k: dict(v) for k, v in other.table.items() if v}
        return (
            (self.task, self.variant, mine, dict(self.fallback), self.backoff)
            == (other.task, other.variant, theirs, dict(other.fallback), other.backoff)
        )


def _objects(g: SituationalGraph) -> dict[str, list[str]]:
    out: dict[str, list[str]] = defaultdict(list)
    for h, r, t in g.triples:
        if r is RelationKind.HAS_OBJECT:
            out[h].append(g.label(t))
    return out


def _keys(label: str, objects: Iterable[str], variant: str) -> list[Key]:
    if variant == B1:
        return [label]
    objs = list(objects)
    return [(label, o) for o in objs] if objs else [(label, None)]


def _check(train: SituationalGraph, variant: str) -> None:
    if variant not in (B1, B2):
        raise ValueError(f"unknown variant {variant!r}")
    if not train.triples:
        raise EmptyTrainingGraph("training graph has no triples")


def fit_parent(train: SituationalGraph, variant: str = B1) -> FrequencyTable:
    _check(train, variant)
    objs = _objects(train) if variant == B2 else {}
    t = FrequencyTable(PARENT, variant)
    for h, r, s in train.triples:
        if r is RelationKind.HAS_ELEMENT:
            parent = train.label(h)
            for key in _keys(train.label(s), objs.get(s, ()), variant):
                t.table[key][parent] += 1
    for node in train.nodes.values():
        if node.kind is NodeKind.PARENT_ACTION:
            t.fallback[node.label] += 1
    if variant == B2:
        t.backoff = fit_parent(train, B1)
    return t


def fit_next(train: SituationalGraph, variant: str = B1) -> FrequencyTable:
    _check(train, variant)
    objs = _objects(train) if variant == B2 else {}
    t = FrequencyTable(NEXT, variant)
    for a, r, b in train.triples:
        if r is RelationKind.HAS_NEXT:
            nxt = train.label(b)
            for key in _keys(train.label(a), objs.get(a, ()), variant):
                t.table[key][nxt] += 1
            t.fallback[nxt] += 1
    if variant == B2:
        t.backoff = fit_next(train, B1)
    return t


def _vote(key: Key, label: str, table: FrequencyTable) -> tuple[str, int] | None:
    """Top candidate for a key following the back-off chain."""
    top = table.top(key)
    if top is None and table.backoff is not None:
        top = table.backoff.top(label)
    if top is None and table.fallback:
        top = ranked(table.fallback)[0]
    return top


def predict_parent(
    component: RecordingComponent,
    table: FrequencyTable,
    vocab: Vocabulary = DEFAULT_VOCABULARY,
) -> list[str]:
    """Majority vote of per-sub-action predictions, as a full ranking.

    Vote ties are broken by the summed counts behind each vote, then by
    label. Parents without votes follow in global training frequency order,
    then lexicographically.
    """
    objs = component.objects_of()
    votes: Counter = Counter()
    support: Counter = Counter()
    for sub in component.sub_actions():
        for key in _keys(sub.label, objs.get(sub.id, ()), table.variant):
            top = _vote(key, sub.label, table)
            if top is not None:
                votes[top[0]] += 1
                support[top[0]] += top[1]
    order = sorted(votes, key=lambda p: (-votes[p], -support[p], p))
    rest = sorted(
        (p for p in vocab.parent_actions if p not in votes),
        key=lambda p: (-table.fallback.get(p, 0), p),
    )
    return [p for p in order if p in vocab.parent_actions] + rest


def predict_next(
    current: str,
    objects: Iterable[str],
    table: FrequencyTable,
    vocab: Vocabulary = DEFAULT_VOCABULARY,
) -> list[str]:
    """Rank all sub-actions as successors of ``current``.

    B2 sums counts over every (current, object) key it knows; with no known
    key it falls back to B1 on ``current``, then to global successor counts.
    """
    if current not in vocab.sub_actions:
        raise UnknownLabel(current)
    counts: Counter = Counter()
    for key in _keys(current, objects, table.variant):
        counts.update(table.table.get(key, {}))
    if not counts and table.backoff is not None:
        counts = Counter(table.backoff.table.get(current, {}))
    if not counts:
        counts = Counter(table.fallback)
    head = [label for label, _ in ranked(counts) if label in vocab.sub_actions]
    seen = set(head)
    return head + sorted(label for label in vocab.sub_actions if label not in seen)


# --- serialization ----------------------------------------------------------

_NONE = "<none>"


def _encode_key(key: Key) -> str:
    if isinstance(key, tuple):
        return f"{key[0]}|{_NONE if key[1] is None else key[1]}"
    return str(key)


def _decode_key(text: str) -> Key:
    if "|" in text:
        label, obj = text.split("|", 1)
        return (label, None if obj == _NONE else obj)
    return text


def write_table(table: FrequencyTable, path: str | Path) -> None:
    """TSV ``key<TAB>candidate<TAB>count``; the B1 back-off rows follow a B2 table."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(f"#\t{table.task}\t{table.variant}\n")
        for t in filter(None, (table, table.backoff)):
            for key in sorted(t.table, key=_encode_key):
                for cand, count in ranked(t.table[key]):
                    f.write(f"{_encode_key(key)}\t{cand}\t{count}\n")
        for cand, count in ranked(table.fallback):
            f.write(f"{GLOBAL_KEY}\t{cand}\t{count}\n")


def read_table(path: str | Path) -> FrequencyTable:
    with open(path, encoding="utf-8") as f:
        lines = [line.rstrip("\n").split("\t") for line in f if line.strip()]
    if not lines or lines[0][0] != "#" or len(lines[0]) != 3:
        raise ValueError(f"{path}: missing table header")
    _, task, variant = lines[0]
    table = FrequencyTable(task, variant)
    if variant == B2:
        table.backoff = FrequencyTable(task, B1)
    fallback: Counter = Counter()
    for lineno, cols in enumerate(lines[1:], 2):
        if len(cols) != 3:
            raise ValueError(f"{path}:{lineno}: expected 3 columns")
        key_text, cand, count = cols
        if key_text == GLOBAL_KEY:
            fallback[cand] = int(count)
            continue
        key = _decode_key(key_text)
        target = table if (variant == B1 or isinstance(key, tuple)) else table.backoff
        target.table[key][cand] = int(count)
    table.fallback = fallback
    if table.backoff is not None:
        table.backoff.fallback = Counter(fallback)
    return table
