"""Filtered negative sampling over a label projection."""

from __future__ import annotations

from collections import defaultdict

import numpy as np

from ..kg_core import SIGNATURES, LabelProjection, NodeKind, RelationKind

LabelTriple = tuple[str, RelationKind, str]


class NoValidCorruption(ValueError):
    pass


class Corruptor:
    """Precomputed valid head/tail replacements for every known positive.

    Replacements come from the labels of the relation's head (tail) kind
    found in the projection; known positives are filtered out.
    """

    def __init__(self, projection: LabelProjection):
        self.vocab: dict[NodeKind, list[str]] = {k: projection.labels_of(k) for k in NodeKind}
        self.known: set[LabelTriple] = {(h, r, t) for h, r, t, _ in projection.label_triples()}
        by_rt: dict[tuple[RelationKind, str], set[str]] = defaultdict(set)
        by_hr: dict[tuple[str, RelationKind], set[str]] = defaultdict(set)
        for h, r, t in self.known:
            by_rt[(r, t)].add(h)
            by_hr[(h, r)].add(t)
        self._by_rt, self._by_hr = by_rt, by_hr
        self._cache: dict[LabelTriple, tuple[list[str], list[str]]] = {}

    def options(self, triple: LabelTriple) -> tuple[list[str], list[str]]:
        if triple not in self._cache:
            h, r, t = triple
            hk, tk = SIGNATURES[r]
            heads = [x for x in self.vocab[hk] if x not in self._by_rt[(r, t)] and (x, r, t) != triple]
            tails = [x for x in self.vocab[tk] if x not in self._by_hr[(h, r)] and (h, r, x) != triple]
            self._cache[triple] = (heads, tails)
        return self._cache[triple]

    def sample(self, triple: LabelTriple, k: int, rng: np.random.Generator) -> list[LabelTriple]:
        heads, tails = self.options(triple)
        if not heads and not tails:
            raise NoValidCorruption(f"{triple[0]} {triple[1].value} {triple[2]}")
        h, r, t = triple
        out = []
        for _ in range(k):
            corrupt_head = rng.random() < 0.5
            if corrupt_head and not heads:
                corrupt_head = False
            elif not corrupt_head and not tails:
                corrupt_head = True
            pool = heads if corrupt_head else tails
            pick = pool[int(rng.integers(len(pool)))]
            out.append((pick, r, t) if corrupt_head else (h, r, pick))
        return out


def negative_sample(
    positive: LabelTriple,
    projection: LabelProjection,
    k: int,
    seed: int | np.random.Generator = 0,
) -> list[LabelTriple]:
    """``k`` filtered corruptions of ``positive``, deterministic per seed."""
    if k < 1:
        raise ValueError("k must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return Corruptor(projection).sample(positive, k, rng)
