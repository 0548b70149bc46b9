"""Query construction, predictors and Hits@k tables."""

from __future__ import annotations

import csv
import io
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Protocol, Sequence

import numpy as np

from .baselines import FrequencyTable, predict_next, predict_parent
from .embed import ModelParams, rank_candidates
from .kg_core import DEFAULT_VOCABULARY, RecordingComponent, RelationKind, Vocabulary

KS = (1, 3, 5)


class LengthMismatch(ValueError):
    pass


class PredictionError(RuntimeError):
    def __init__(self, qid: str, cause: Exception):
        super().__init__(f"query {qid}: {type(cause).__name__}: {cause}")
        self.qid = qid


@dataclass(frozen=True)
class ParentQuery:
    qid: str
    component: RecordingComponent  # parent label masked
    gold: str
    candidates: tuple[str, ...]


@dataclass(frozen=True)
class NextQuery:
    qid: str
    current: str
    objects: tuple[str, ...]
    gold: str
    candidates: tuple[str, ...]


Query = ParentQuery | NextQuery


def build_queries(
    test_components: Sequence[RecordingComponent], vocab: Vocabulary = DEFAULT_VOCABULARY
) -> tuple[list[ParentQuery], list[NextQuery]]:
    """One parent query per component and one next query per has_next edge."""
    parents: list[ParentQuery] = []
    nexts: list[NextQuery] = []
    for comp in sorted(test_components, key=lambda c: c.key):
        nodes = comp.node_map()
        objs = comp.objects_of()
        parents.append(ParentQuery(f"{comp.key}#parent", comp.masked(), comp.parent.label, vocab.parent_actions))
        for i, (a, _, b) in enumerate(comp.relation_triples(RelationKind.HAS_NEXT)):
            nexts.append(
                NextQuery(
                    f"{comp.key}#next{i}",
                    nodes[a].label,
                    tuple(sorted(objs.get(a, ()))),
                    nodes[b].label,
                    vocab.sub_actions,
                )
            )
    return parents, nexts


def hits_at_k(predictions: Sequence[Sequence[str]], golds: Sequence[str], k: int) -> float:
    if len(predictions) != len(golds):
        raise LengthMismatch(f"{len(predictions)} predictions for {len(golds)} golds")
    if not golds:
        raise ValueError("no queries")
    if k < 1:
        raise ValueError("k must be >= 1")
    return sum(gold in list(pred[:k]) for pred, gold in zip(predictions, golds)) / len(golds)


# --- predictors ---------------------------------------------------------------


class Predictor(Protocol):
    name: str

    def rank_parent(self, q: ParentQuery) -> list[str]: ...

    def rank_next(self, q: NextQuery) -> list[str]: ...


def _query_rng(seed: int, qid: str) -> np.random.Generator:
    return np.random.default_rng([seed, zlib.crc32(qid.encode("utf-8"))])


@dataclass
class RandomPredictor:
    seed: int = 0
    name: str = "random"

    def _rank(self, q: Query) -> list[str]:
        perm = _query_rng(self.seed, q.qid).permutation(len(q.candidates))
        return [q.candidates[i] for i in perm]

    rank_parent = _rank
    rank_next = _rank


@dataclass
class OraclePredictor:
    """Gold first; for checking the ranking protocol."""

    name: str = "oracle"

    def _rank(self, q: Query) -> list[str]:
        return [q.gold] + [c for c in q.candidates if c != q.gold]

    rank_parent = _rank
    rank_next = _rank


@dataclass
class AntiOraclePredictor:
    """Gold last."""

    name: str = "anti-oracle"

    def _rank(self, q: Query) -> list[str]:
        return [c for c in q.candidates if c != q.gold] + [q.gold]

    rank_parent = _rank
    rank_next = _rank


@dataclass
class BaselinePredictor:
    parent_table: FrequencyTable | None
    next_table: FrequencyTable | None
    vocab: Vocabulary = DEFAULT_VOCABULARY
    name: str = ""

    def __post_init__(self) -> None:
        if not self.name:
            table = self.parent_table or self.next_table
            self.name = table.variant if table else "baseline"

    def rank_parent(self, q: ParentQuery) -> list[str]:
        return predict_parent(q.component, self.parent_table, self.vocab)

    def rank_next(self, q: NextQuery) -> list[str]:
        return predict_next(q.current, q.objects, self.next_table, self.vocab)


@dataclass
class EmbeddingPredictor:
    """Scores parent candidates by their has_element links to every observed
    sub-action plus their has_actor link; next candidates by has_next from
    the current sub-action."""

    model: ModelParams
    name: str = ""

    def __post_init__(self) -> None:
        if not self.name:
            self.name = self.model.config.model

    def rank_parent(self, q: ParentQuery) -> list[str]:
        patterns = [(None, RelationKind.HAS_ELEMENT, s.label) for s in q.component.sub_actions()]
        actor = q.component.actor
        if actor is not None:
            patterns.append((None, RelationKind.HAS_ACTOR, actor.label))
        return rank_candidates(self.model, patterns, list(q.candidates))

    def rank_next(self, q: NextQuery) -> list[str]:
        return rank_candidates(self.model, [(q.current, RelationKind.HAS_NEXT, None)], list(q.candidates))


# --- metrics ------------------------------------------------------------------


@dataclass(frozen=True)
class MetricsRow:
    model: str
    task: str
    queries: int
    hits: tuple[float, float, float]

    @property
    def hits1(self) -> float:
        return self.hits[0]

    @property
    def hits3(self) -> float:
        return self.hits[1]

    @property
    def hits5(self) -> float:
        return self.hits[2]


@dataclass
class MetricsTable:
    rows: list[MetricsRow] = field(default_factory=list)

    def get(self, model: str, task: str) -> MetricsRow:
        for row in self.rows:
            if row.model == model and row.task == task:
                return row
        raise KeyError((model, task))

    def extend(self, other: "MetricsTable") -> "MetricsTable":
        self.rows.extend(other.rows)
        return self


def rank_all(predictor: Predictor, queries: Sequence[Query], threads: int = 1) -> list[list[str]]:
    def one(q: Query) -> list[str]:
        try:
            if isinstance(q, ParentQuery):
                return list(predictor.rank_parent(q))
            return list(predictor.rank_next(q))
        except Exception as exc:
            raise PredictionError(q.qid, exc) from exc

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, queries))
    return [one(q) for q in queries]


def evaluate(predictor: Predictor, queries: Sequence[Query], task: str | None = None, threads: int = 1) -> MetricsTable:
    """Hits@1/3/5 of one predictor over one task's queries."""
    if not queries:
        raise ValueError("no queries")
    task = task or ("parent" if isinstance(queries[0], ParentQuery) else "next")
    preds = rank_all(predictor, queries, threads)
    golds = [q.gold for q in queries]
    hits = tuple(hits_at_k(preds, golds, k) for k in KS)
    return MetricsTable([MetricsRow(predictor.name, task, len(queries), hits)])


def bootstrap(queries: Sequence[Query], n: int, seed: int = 0) -> list[Query]:
    """Resample ``n`` queries with replacement; each copy gets a unique id."""
    rng = np.random.default_rng(seed)
    picks = rng.integers(len(queries), size=n)
    return [replace(queries[p], qid=f"{queries[p].qid}@{i}") for i, p in enumerate(picks)]


# --- rendering ----------------------------------------------------------------

HEADER = ["model", "task", "queries", "hits@1", "hits@3", "hits@5"]


def report(table: MetricsTable, fmt: str = "text") -> str:
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(HEADER)
        for r in table.rows:
            w.writerow([r.model, r.task, r.queries, *(repr(h) for h in r.hits)])
        return buf.getvalue()
    cells = [[r.model, r.task, str(r.queries), *(f"{100 * h:.2f}%" for h in r.hits)] for r in table.rows]
    if fmt == "markdown":
        lines = ["| " + " | ".join(HEADER) + " |", "|" + "---|" * len(HEADER)]
        lines += ["| " + " | ".join(c) + " |" for c in cells]
        return "\n".join(lines) + "\n"
    if fmt == "text":
        widths = [max([len(h)] + [len(c[i]) for c in cells]) for i, h in enumerate(HEADER)]
        out = ["  ".join(h.ljust(w) for h, w in zip(HEADER, widths)).rstrip()]
        out += ["  ".join(v.ljust(w) for v, w in zip(c, widths)).rstrip() for c in cells]
        return "\n".join(out) + "\n"
    raise ValueError(f"unknown format {fmt!r}")


def parse_csv(text: str) -> MetricsTable:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header != HEADER:
        raise ValueError(f"unexpected header {header}")
    rows = [
        MetricsRow(m, t, int(n), (float(a), float(b), float(c)))
        for m, t, n, a, b, c in (row for row in reader if row)
    ]
    return MetricsTable(rows)
