from __future__ import annotations

import pytest
from hypothesis import given, settings, strategies as st

from conftest import make_component
from sitkg.baselines import B1, B2, fit_next, fit_parent
from sitkg.embed import EmbeddingConfig, train
from sitkg.evaluation import (
    AntiOraclePredictor,
    BaselinePredictor,
    EmbeddingPredictor,
    LengthMismatch,
    MetricsRow,
    MetricsTable,
    OraclePredictor,
    PredictionError,
    RandomPredictor,
    bootstrap,
    build_queries,
    evaluate,
    hits_at_k,
    parse_csv,
    report,
)
from sitkg.kg_core import RelationKind, label_projection


def test_query_counts(synth_split):
    parents, nexts = build_queries(synth_split.test_components)
    assert len(parents) == 108
    n_next = sum(len(c.relation_triples(RelationKind.HAS_NEXT)) for c in synth_split.test_components)
    assert len(nexts) == n_next
    assert all(q.gold in q.candidates for q in [*parents, *nexts])
    assert all(len(q.candidates) == 9 for q in parents) and all(len(q.candidates) == 14 for q in nexts)
    keys = sorted(c.key for c in synth_split.test_components)
    assert [q.qid for q in parents] == [f"{k}#parent" for k in keys]


def test_chain_of_five_gives_four_queries():
    comp = make_component("pouring", right=[(a, []) for a in ("approach", "lift", "pour", "place", "retreat")])
    parents, nexts = build_queries([comp])
    assert len(parents) == 1 and len(nexts) == 4
    assert [(q.current, q.gold) for q in nexts] == [("approach", "lift"), ("lift", "pour"), ("pour", "place"), ("place", "retreat")]
    assert "pouring" not in {n.label for n in parents[0].component.nodes}


def test_hits_examples():
    preds = [["a", "b", "c"], ["b", "c", "d", "a"]]
    assert hits_at_k(preds, ["a", "a"], 3) == 0.5
    assert hits_at_k(preds, ["a", "a"], 4) == 1.0
    with pytest.raises(LengthMismatch):
        hits_at_k(preds, ["a"], 1)
    with pytest.raises(ValueError):
        hits_at_k([], [], 1)


def test_oracle_and_anti_oracle(synth_split):
    parents, nexts = build_queries(synth_split.test_components)
    for queries in (parents, nexts):
        assert evaluate(OraclePredictor(), queries).rows[0].hits == (1.0, 1.0, 1.0)
    assert evaluate(AntiOraclePredictor(), nexts).rows[0].hits5 == 0.0


@pytest.mark.parametrize("task,expected", [("parent", 1 / 9), ("next", 1 / 14)])
def test_random_ranker_expectation(synth_split, task, expected):
    parents, nexts = build_queries(synth_split.test_components)
    queries = bootstrap(parents if task == "parent" else nexts, 10_000, seed=1)
    row = evaluate(RandomPredictor(1), queries).rows[0]
    assert row.queries == 10_000
    assert row.hits1 == pytest.approx(expected, abs=0.01)


def test_bootstrap_ids_unique(synth_split):
    parents, _ = build_queries(synth_split.test_components)
    sample = bootstrap(parents, 500, seed=3)
    assert len({q.qid for q in sample}) == 500


def test_errors_name_the_query(synth_split):
    parents, _ = build_queries(synth_split.test_components)

    class Broken:
        name = "broken"

        def rank_parent(self, q):
            raise RuntimeError("boom")

    with pytest.raises(PredictionError) as exc:
        evaluate(Broken(), parents)
    assert exc.value.qid == parents[0].qid


def test_evaluation_deterministic_and_thread_safe(synth_split):
    parents, nexts = build_queries(synth_split.test_components)
    pred = BaselinePredictor(fit_parent(synth_split.train, B2), fit_next(synth_split.train, B2))
    for queries in (parents, nexts):
        a = evaluate(pred, queries)
        assert evaluate(pred, queries) == a
        assert evaluate(pred, queries, threads=4) == a


def test_embedding_predictor(synth_split):
    model = train(label_projection(synth_split.train), EmbeddingConfig(model="distmult", dim=8, epochs=5))
    parents, nexts = build_queries(synth_split.test_components)
    for queries in (parents, nexts):
        row = evaluate(EmbeddingPredictor(model), queries).rows[0]
        assert row.model == "distmult"
        assert row.hits1 <= row.hits3 <= row.hits5


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_hits_monotone_in_k(synth_split, seed):
    parents, nexts = build_queries(synth_split.test_components)
    for queries in (parents, nexts[:200]):
        row = evaluate(RandomPredictor(seed), queries).rows[0]
        assert row.hits1 <= row.hits3 <= row.hits5


def test_report_shapes():
    empty = MetricsTable()
    assert report(empty, "csv") == "model,task,queries,hits@1,hits@3,hits@5\n"
    assert len(report(empty, "text").splitlines()) == 1
    one = MetricsTable([MetricsRow("b2", "parent", 108, (0.5, 0.75, 1.0))])
    assert len(report(one, "csv").splitlines()) == 2
    md = report(one, "markdown").splitlines()
    assert md[0].startswith("| model") and "50.00%" in md[2]
    with pytest.raises(ValueError):
        report(one, "html")


rows = st.builds(
    MetricsRow,
    st.text(st.characters(whitelist_categories=("L", "N", "P", "Zs")), min_size=1),
    st.sampled_from(["parent", "next"]),
    st.integers(0, 10**6),
    st.tuples(*[st.floats(0, 1, allow_nan=False)] * 3),
)


@given(st.lists(rows, max_size=8))
def test_csv_roundtrip(rs):
    table = MetricsTable(rs)
    assert parse_csv(report(table, "csv")) == table
