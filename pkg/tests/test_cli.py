from __future__ import annotations

import hashlib
import socket
from pathlib import Path

import pytest

from sitkg.cli import main
from sitkg.evaluation import parse_csv

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    d = tmp_path_factory.mktemp("corpus")
    assert main(["synth", "--seed", "1", "-o", str(d)]) == 0
    return d


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_synth_then_stats(tmp_path, capsys):
    d = tmp_path / "d"
    code, _, _ = run(capsys, "synth", "--tasks", 2, "--subjects", 1, "--takes", 3, "--seed", 1, "-o", d)
    assert code == 0
    code, out, _ = run(capsys, "stats", d / "graph.tsv")
    assert code == 0
    line = next(l for l in out.splitlines() if l.startswith("Number of Weakly Connected Components"))
    assert line.split()[-1] == "6"
    code, out, _ = run(capsys, "stats", d / "graph.tsv", "--csv")
    assert "wcc_count,6" in out.splitlines()


def test_usage_errors_exit_1(capsys):
    code, _, err = run(capsys, "stats", "--no-such-flag", "g.tsv")
    assert code == 1 and "usage:" in err
    code, _, err = run(capsys, "frobnicate")
    assert code == 1 and "usage:" in err


def test_data_errors_exit_2(tmp_path, capsys):
    code, _, err = run(capsys, "stats", tmp_path / "missing.tsv")
    assert code == 2 and "missing.tsv" in err
    bad = tmp_path / "bad.tsv"
    bad.write_text("a\thas_next\n")
    code, _, err = run(capsys, "stats", bad)
    assert code == 2 and "bad.tsv:1" in err


def test_provenance_files(corpus):
    cfg = (corpus / "config.effective").read_text()
    assert "seed=1\n" in cfg and "command=synth\n" in cfg
    entries = dict(reversed(line.split("  ")) for line in (corpus / "MANIFEST").read_text().splitlines())
    for name in ("graph.tsv", "graph.nodes.tsv"):
        assert entries[name] == hashlib.sha256((corpus / name).read_bytes()).hexdigest()


def test_random_evaluation_near_chance(corpus, capsys):
    code, out, _ = run(capsys, "evaluate", "--graph", corpus / "graph.tsv", "--predictor", "random", "--task", "parent",
                       "--seed", 1, "--bootstrap", 10000)
    assert code == 0
    hits1 = float(out.splitlines()[1].split()[3].rstrip("%")) / 100
    assert abs(hits1 - 1 / 9) < 0.01


def _pipeline(root: Path, capsys) -> dict[str, bytes]:
    assert run(capsys, "synth", "--tasks", 3, "--subjects", 2, "--takes", 4, "--seed", 5, "-o", root)[0] == 0
    assert run(capsys, "split", root / "graph.tsv", "-o", root / "split")[0] == 0
    for task in ("parent", "next"):
        for variant in ("b1", "b2"):
            code, _, _ = run(capsys, "baseline", "--graph", root / "graph.tsv", "--split", root / "split" / "split.tsv",
                             "--task", task, "--variant", variant, "--out", root / "res" / f"{variant}-{task}.csv",
                             "--table-out", root / "res" / f"{variant}-{task}.table.tsv")
            assert code == 0
    code, _, _ = run(capsys, "train", "--graph", root / "graph.tsv", "--model", "transe", "--dim", 8, "--epochs", 5,
                     "--seed", 5, "-o", root / "res" / "transe.ckpt")
    assert code == 0
    code, _, _ = run(capsys, "evaluate", "--graph", root / "graph.tsv", "--predictor", "transe", "--checkpoint",
                     root / "res" / "transe.ckpt", "--task", "next", "--out", root / "res" / "transe-next.csv")
    assert code == 0
    return {
        str(p.relative_to(root)): p.read_bytes()
        for p in sorted(root.rglob("*"))
        if p.is_file() and p.name != "config.effective"
    }


def test_pipeline_reproducible(tmp_path, capsys):
    a = _pipeline(tmp_path / "a", capsys)
    b = _pipeline(tmp_path / "b", capsys)
    assert a == b
    assert "res/transe.ckpt" in a and "split/train.tsv" in a


def test_config_file_and_overrides(tmp_path, corpus, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# embedding run\nmodel = distmult\nepochs=2\ndim=4\n")
    out = tmp_path / "m" / "model.ckpt"
    code, _, _ = run(capsys, "--config", cfg, "train", "--graph", corpus / "graph.tsv", "--epochs", 1, "-o", out)
    assert code == 0
    eff = (out.parent / "config.effective").read_text().splitlines()
    assert "model=distmult" in eff and "epochs=1" in eff and "dim=4" in eff
    header = out.read_text().splitlines()[:20]
    assert "config\tmodel\tdistmult" in header and "config\tepochs\t1" in header

    bad = tmp_path / "bad.cfg"
    bad.write_text("just words\n")
    assert run(capsys, "--config", bad, "stats", corpus / "graph.tsv")[0] == 1


def test_checkpoint_model_mismatch(tmp_path, corpus, capsys):
    ck = tmp_path / "t.ckpt"
    assert run(capsys, "train", "--graph", corpus / "graph.tsv", "--dim", 4, "--epochs", 1, "-o", ck)[0] == 0
    code, _, err = run(capsys, "evaluate", "--graph", corpus / "graph.tsv", "--predictor", "rotate", "--checkpoint", ck, "--task", "next")
    assert code == 1 and "transe" in err


def test_llm_eval_with_mock(tmp_path, corpus, capsys, monkeypatch):
    def refuse(*args, **kwargs):
        raise AssertionError("network access attempted")

    monkeypatch.setattr(socket.socket, "connect", refuse)
    out = tmp_path / "llm.csv"
    code, stdout, _ = run(capsys, "llm-eval", "--graph", corpus / "graph.tsv", "--mock", FIXTURES / "mock_llm.json", "--out", out)
    assert code == 0 and "llm" in stdout
    row = parse_csv(out.read_text()).rows[0]
    assert row.queries == 108 and row.hits1 == pytest.approx(15 / 108)


def test_llm_without_endpoint_is_data_error(corpus, capsys, monkeypatch):
    monkeypatch.delenv("SITKG_LLM_ENDPOINT", raising=False)
    code, _, err = run(capsys, "evaluate", "--graph", corpus / "graph.tsv", "--predictor", "llm", "--task", "parent")
    assert code == 2 and "SITKG_LLM_ENDPOINT" in err


def test_report_merges_csvs(tmp_path, corpus, capsys):
    for v in ("b1", "b2"):
        assert run(capsys, "evaluate", "--graph", corpus / "graph.tsv", "--predictor", v, "--task", "next",
                   "--out", tmp_path / f"{v}.csv")[0] == 0
    code, out, _ = run(capsys, "report", tmp_path / "b1.csv", tmp_path / "b2.csv", "--format", "markdown")
    assert code == 0 and out.count("| next |") == 2


def test_ingest_matches_synth(tmp_path, capsys):
    d = tmp_path / "s"
    assert run(capsys, "synth", "--tasks", 2, "--subjects", 2, "--takes", 2, "--seed", 3, "--annotations", "-o", d)[0] == 0
    assert run(capsys, "ingest", d / "annotations", "-o", tmp_path / "i")[0] == 0
    assert (tmp_path / "i" / "graph.tsv").read_bytes() == (d / "graph.tsv").read_bytes()
    assert (tmp_path / "i" / "graph.nodes.tsv").read_bytes() == (d / "graph.nodes.tsv").read_bytes()
