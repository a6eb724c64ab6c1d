import hashlib
import json
import subprocess
import sys

import numpy as np
import pytest

from crawlsim import cli
from crawlsim.engine import CrawlResult


def run(capsys, *argv):
    code = cli.main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def write_config(path, **values):
    path.write_text("# test config\n" + "".join(f"{k}={v}\n" for k, v in values.items()))
    return path


def digests(directory):
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(directory.iterdir())}


@pytest.fixture
def chain_corpus(tmp_path):
    d = tmp_path / "chain"
    d.mkdir()
    (d / "edges.tsv").write_text("0\t1\n1\t2\n2\t3\n")
    (d / "docs.jsonl").write_text("".join(json.dumps({"id": i, "url": f"u{i}", "text": f"page {i}"}) + "\n" for i in range(4)))
    return d


@pytest.fixture(scope="module")
def synth_corpus(tmp_path_factory):
    base = tmp_path_factory.mktemp("synth")
    cfg = write_config(
        base / "synth.cfg",
        **{"synth.node_count": 3000, "synth.rng_seed": 5, "synth.quality_link_correlation": 0.7},
    )
    assert cli.main(["synth", "--config", str(cfg), "--out", str(base / "corpus")]) == 0
    return base / "corpus"


def test_synth_happy_path(tmp_path, capsys):
    cfg = write_config(tmp_path / "s.cfg", **{"synth.node_count": 200, "synth.rng_seed": 1})
    code, out, _ = run(capsys, "synth", "--config", str(cfg), "--out", str(tmp_path / "o"))
    assert code == 0
    assert sorted(p.name for p in (tmp_path / "o").iterdir()) == ["docs.jsonl", "edges.tsv", "manifest.json", "truth.tsv"]
    assert "nodes=200" in out
    code, _, _ = run(capsys, "synth", "--config", str(cfg), "--out", str(tmp_path / "o2"))
    assert digests(tmp_path / "o") == digests(tmp_path / "o2")


def test_synth_missing_seed(tmp_path, capsys):
    cfg = write_config(tmp_path / "s.cfg", **{"synth.node_count": 200})
    code, _, err = run(capsys, "synth", "--config", str(cfg), "--out", str(tmp_path / "o"))
    assert code == 2
    assert "synth.rng_seed" in err
    code, _, _ = run(capsys, "synth", "--config", str(cfg), "--out", str(tmp_path / "o3"), "--seed", "3")
    assert code == 0


def test_synth_bad_value(tmp_path, capsys):
    cfg = write_config(tmp_path / "s.cfg", **{"synth.node_count": "many", "synth.rng_seed": 1})
    assert run(capsys, "synth", "--config", str(cfg), "--out", str(tmp_path / "o"))[0] == 2
    (tmp_path / "bad.cfg").write_text("no equals sign here\n")
    assert run(capsys, "synth", "--config", str(tmp_path / "bad.cfg"), "--out", str(tmp_path / "o2"))[0] == 2


def test_refuses_non_empty_out_without_force(tmp_path, capsys):
    cfg = write_config(tmp_path / "s.cfg", **{"synth.node_count": 50, "synth.rng_seed": 1})
    out = tmp_path / "o"
    out.mkdir()
    (out / "junk").write_text("x")
    assert run(capsys, "synth", "--config", str(cfg), "--out", str(out))[0] == 2
    assert not (out / "manifest.json").exists()
    assert run(capsys, "synth", "--config", str(cfg), "--out", str(out), "--force")[0] == 0


def crawl_cfg(tmp_path, corpus, name="c.cfg", **extra):
    values = {
        "corpus.dir": corpus,
        "crawl.seeds": "0",
        "crawl.total_pages": 3,
        "crawl.per_iteration": 1,
        "scorer.kind": "indegree",
    }
    values.update(extra)
    return write_config(tmp_path / name, **values)


def test_crawl_chain(tmp_path, capsys, chain_corpus):
    cfg = crawl_cfg(tmp_path, chain_corpus)
    code, out, _ = run(capsys, "crawl", "--config", str(cfg), "--out", str(tmp_path / "a"))
    assert code == 0
    assert out.strip() == "crawled=3 visited=3 terminated_by=budget_reached"
    assert CrawlResult.read(tmp_path / "a" / "crawl.tsv").crawled == (0, 1, 2)
    run(capsys, "crawl", "--config", str(cfg), "--out", str(tmp_path / "b"))
    assert digests(tmp_path / "a") == digests(tmp_path / "b")


def test_crawl_exhaustion_exit_zero(tmp_path, capsys, chain_corpus):
    cfg = crawl_cfg(tmp_path, chain_corpus, **{"crawl.total_pages": 50})
    code, out, _ = run(capsys, "crawl", "--config", str(cfg), "--out", str(tmp_path / "a"))
    assert code == 0
    assert "terminated_by=frontier_exhausted" in out


def test_crawl_missing_corpus(tmp_path, capsys):
    cfg = crawl_cfg(tmp_path, tmp_path / "nowhere")
    assert run(capsys, "crawl", "--config", str(cfg), "--out", str(tmp_path / "a"))[0] == 2


def test_crawl_unknown_policy(tmp_path, capsys, chain_corpus):
    cfg = crawl_cfg(tmp_path, chain_corpus, **{"scorer.kind": "pagerank"})
    assert run(capsys, "crawl", "--config", str(cfg), "--out", str(tmp_path / "a"))[0] == 2


def test_threads_env_validation(tmp_path, capsys, chain_corpus, monkeypatch):
    cfg = crawl_cfg(tmp_path, chain_corpus)
    monkeypatch.setenv("CRAWLSIM_THREADS", "lots")
    assert run(capsys, "crawl", "--config", str(cfg), "--out", str(tmp_path / "a"))[0] == 2
    monkeypatch.setenv("CRAWLSIM_THREADS", "2")
    assert run(capsys, "crawl", "--config", str(cfg), "--out", str(tmp_path / "b"))[0] == 0


def test_internal_error_exit_one(tmp_path, capsys, chain_corpus, monkeypatch):
    def boom(cfg, out):
        raise RuntimeError("bug")

    monkeypatch.setitem(cli.COMMANDS, "crawl", boom)
    cfg = crawl_cfg(tmp_path, chain_corpus)
    assert run(capsys, "crawl", "--config", str(cfg), "--out", str(tmp_path / "a"))[0] == 1


def test_synth_sampled_seeds_and_classifier_crawl(tmp_path, capsys, synth_corpus):
    train = write_config(
        tmp_path / "t.cfg",
        **{"train.corpus": synth_corpus, "train.top_k": 200, "train.seed": 1, "train.hash_dim": 4096},
    )
    code, out, _ = run(capsys, "train", "--config", str(train), "--out", str(tmp_path / "clf"))
    assert code == 0
    cfg = write_config(
        tmp_path / "c.cfg",
        **{
            "corpus.dir": synth_corpus,
            "crawl.seed_count": 20,
            "crawl.rng_seed": 3,
            "crawl.total_pages": 300,
            "crawl.per_iteration": 20,
            "crawl.checkpoint_every": 50,
            "scorer.kind": "classifier",
            "scorer.path": tmp_path / "clf" / "classifier.txt",
        },
    )
    code, out, _ = run(capsys, "crawl", "--config", str(cfg), "--out", str(tmp_path / "run"))
    assert code == 0 and "crawled=300" in out
    manifest = json.loads((tmp_path / "run" / "manifest.json").read_text())
    assert manifest["subcommand"] == "crawl"
    assert manifest["rng_seeds"] == {"crawl.rng_seed": "3"}
    assert "scorer.path" in manifest["input_digests"]


def test_manifest_replay_reproduces(tmp_path, capsys, chain_corpus):
    cfg = crawl_cfg(tmp_path, chain_corpus)
    run(capsys, "crawl", "--config", str(cfg), "--out", str(tmp_path / "a"))
    code, _, _ = run(capsys, "crawl", "--config", str(tmp_path / "a" / "manifest.json"), "--out", str(tmp_path / "b"))
    assert code == 0
    assert (tmp_path / "a" / "crawl.tsv").read_bytes() == (tmp_path / "b" / "crawl.tsv").read_bytes()


def test_select_oracle_top_decile(tmp_path, capsys, synth_corpus):
    cfg = write_config(
        tmp_path / "o.cfg",
        **{
            "corpus.dir": synth_corpus,
            "select.mode": "oracle",
            "select.target": 300,
            "select.top_fraction": 0.1,
            "selector.kind": "table",
            "selector.path": synth_corpus / "truth.tsv",
        },
    )
    assert run(capsys, "select", "--config", str(cfg), "--out", str(tmp_path / "o"))[0] == 0
    truth = np.array([float(line.split("\t")[1]) for line in (synth_corpus / "truth.tsv").read_text().splitlines()])
    brute = sorted(np.argsort(-truth, kind="mergesort")[:300].tolist())
    assert (tmp_path / "o" / "selection.txt").read_text() == "".join(f"{u}\n" for u in brute)
    too_big = write_config(tmp_path / "o2.cfg", **{**dict(l.split("=", 1) for l in cfg.read_text().splitlines()[1:]), "select.target": 301})
    assert run(capsys, "select", "--config", str(too_big), "--out", str(tmp_path / "o2"))[0] == 2


def test_select_crawl_then_select(tmp_path, capsys, synth_corpus):
    common = {
        "corpus.dir": synth_corpus,
        "select.mode": "crawl_then_select",
        "select.target": 200,
        "crawl.seeds": "1,2,3",
        "crawl.per_iteration": 10,
        "scorer.kind": "indegree",
        "selector.kind": "table",
        "selector.path": synth_corpus / "truth.tsv",
    }
    one = write_config(tmp_path / "1.cfg", **common, **{"select.multiplier": 1})
    assert run(capsys, "select", "--config", str(one), "--out", str(tmp_path / "one"))[0] == 0
    crawled = CrawlResult.read(tmp_path / "one" / "crawl.tsv").crawled
    assert (tmp_path / "one" / "selection.txt").read_text() == "".join(f"{u}\n" for u in sorted(crawled))

    two = write_config(tmp_path / "2.cfg", **common, **{"select.multiplier": 2})
    assert run(capsys, "select", "--config", str(two), "--out", str(tmp_path / "two"))[0] == 0
    pool = CrawlResult.read(tmp_path / "two" / "crawl.tsv").crawled
    assert len(pool) == 400
    truth = {int(a): float(b) for a, b in (l.split("\t") for l in (synth_corpus / "truth.tsv").read_text().splitlines())}
    brute = sorted(sorted(pool, key=lambda u: (-truth[u], u))[:200])
    assert (tmp_path / "two" / "selection.txt").read_text() == "".join(f"{u}\n" for u in brute)


def test_select_bad_mode(tmp_path, capsys, chain_corpus):
    cfg = write_config(tmp_path / "x.cfg", **{"corpus.dir": chain_corpus, "select.mode": "magic", "select.target": 1})
    assert run(capsys, "select", "--config", str(cfg), "--out", str(tmp_path / "x"))[0] == 2


def test_analyze_efficiency_and_coverage(tmp_path, capsys, chain_corpus):
    run(capsys, "crawl", "--config", str(crawl_cfg(tmp_path, chain_corpus)), "--out", str(tmp_path / "a"))
    run(capsys, "crawl", "--config", str(crawl_cfg(tmp_path, chain_corpus, "c2.cfg")), "--out", str(tmp_path / "b"))
    (tmp_path / "oracle.txt").write_text("3\n")
    cfg = write_config(
        tmp_path / "an.cfg",
        **{
            "analyze.efficiency.a": tmp_path / "a" / "crawl.tsv",
            "analyze.efficiency.b": tmp_path / "b" / "crawl.tsv",
            "analyze.coverage.result": tmp_path / "a" / "crawl.tsv",
            "analyze.coverage.oracle": tmp_path / "oracle.txt",
        },
    )
    code, out, _ = run(capsys, "analyze", "--config", str(cfg), "--out", str(tmp_path / "an"))
    assert code == 0
    assert "crawled_ratio=1.0" in out.split()
    assert "metric=crawled_ratio value=1.0" in out
    rows = (tmp_path / "an" / "coverage.csv").read_text().splitlines()[1:]
    assert rows and all(r.split(",")[1:3] == ["0.0", "0.0"] for r in rows)


def test_analyze_spearman_inline_and_na(tmp_path, capsys):
    cfg = write_config(tmp_path / "s.cfg", **{"analyze.spearman.x": "1,2,3,4", "analyze.spearman.y": "2,1,4,3"})
    code, out, _ = run(capsys, "analyze", "--config", str(cfg), "--out", str(tmp_path / "s"))
    assert code == 0
    assert "metric=spearman value=0.6" in out
    flat = write_config(tmp_path / "f.cfg", **{"analyze.spearman.x": "1,1,1", "analyze.spearman.y": "2,1,4"})
    code, out, _ = run(capsys, "analyze", "--config", str(flat), "--out", str(tmp_path / "f"))
    assert code == 0
    assert "metric=spearman value=NA" in out
    assert (tmp_path / "f" / "correlation.csv").read_text().splitlines()[1] == "spearman,NA"


def test_analyze_graph_metrics(tmp_path, capsys, synth_corpus):
    cfg = write_config(
        tmp_path / "g.cfg",
        **{
            "corpus.dir": synth_corpus,
            "analyze.hop.scores": synth_corpus / "truth.tsv",
            "analyze.indegree.scores": synth_corpus / "truth.tsv",
            "analyze.pagerank": "true",
            "analyze.sample": 500,
        },
    )
    code, out, _ = run(capsys, "analyze", "--config", str(cfg), "--out", str(tmp_path / "g"))
    assert code == 0
    for name in ("hop1_score_correlation", "hop2_score_correlation", "score_indegree_spearman", "pagerank_indegree_spearman"):
        assert f"metric={name} value=" in out
    assert len((tmp_path / "g" / "pagerank.tsv").read_text().splitlines()) == 3000


def test_analyze_missing_inputs(tmp_path, capsys):
    cfg = write_config(tmp_path / "m.cfg", **{"analyze.efficiency.a": tmp_path / "x.tsv", "analyze.efficiency.b": tmp_path / "y.tsv"})
    assert run(capsys, "analyze", "--config", str(cfg), "--out", str(tmp_path / "m"))[0] == 2
    empty = write_config(tmp_path / "e.cfg")
    assert run(capsys, "analyze", "--config", str(empty), "--out", str(tmp_path / "e"))[0] == 2


def docs_file(path, texts):
    path.write_text("".join(json.dumps({"id": i, "url": f"u{i}", "text": t}) + "\n" for i, t in enumerate(texts)))
    return path


def accuracy_of(out):
    return float(next(t for t in out.split() if t.startswith("heldout_accuracy=")).split("=")[1])


def test_train_separable_and_deterministic(tmp_path, capsys):
    pos = docs_file(tmp_path / "pos.jsonl", ["science " * (1 + i % 4) + "notes" for i in range(200)])
    neg = docs_file(tmp_path / "neg.jsonl", ["spam " * (1 + i % 4) + "notes" for i in range(200)])
    cfg = write_config(tmp_path / "t.cfg", **{"train.positives": pos, "train.negatives": neg, "train.seed": 4, "train.hash_dim": 4096})
    code, out, _ = run(capsys, "train", "--config", str(cfg), "--out", str(tmp_path / "a"))
    assert code == 0
    assert accuracy_of(out) >= 0.95
    run(capsys, "train", "--config", str(cfg), "--out", str(tmp_path / "b"))
    assert digests(tmp_path / "a") == digests(tmp_path / "b")


def test_train_no_signal(tmp_path, capsys):
    rng = np.random.default_rng(8)
    texts = [" ".join(rng.choice([f"t{i}" for i in range(40)], size=15)) for _ in range(300)]
    same = docs_file(tmp_path / "same.jsonl", texts)
    cfg = write_config(tmp_path / "t.cfg", **{"train.positives": same, "train.negatives": same, "train.seed": 2, "train.hash_dim": 4096})
    code, out, _ = run(capsys, "train", "--config", str(cfg), "--out", str(tmp_path / "a"))
    assert code == 0
    assert abs(accuracy_of(out) - 0.5) <= 0.1


def test_train_empty_class(tmp_path, capsys):
    pos = docs_file(tmp_path / "pos.jsonl", ["a b"])
    (tmp_path / "neg.jsonl").write_text("")
    cfg = write_config(tmp_path / "t.cfg", **{"train.positives": pos, "train.negatives": tmp_path / "neg.jsonl"})
    assert run(capsys, "train", "--config", str(cfg), "--out", str(tmp_path / "a"))[0] == 2


def test_console_entry_point(tmp_path, chain_corpus):
    cfg = crawl_cfg(tmp_path, chain_corpus)
    proc = subprocess.run(
        [sys.executable, "-m", "crawlsim.cli", "crawl", "--config", str(cfg), "--out", str(tmp_path / "p")],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert proc.stdout.startswith("crawled=3 ")
    proc = subprocess.run([sys.executable, "-m", "crawlsim.cli", "crawl"], capture_output=True, text=True)
    assert proc.returncode == 2
