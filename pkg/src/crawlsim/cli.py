"""``crawlsim`` command line.

Every subcommand reads one flat ``key=value`` config file (``#`` comments),
writes ``manifest.json`` into ``--out`` before anything else, and prints
``key=value`` summary lines. Exit codes: 0 ok (frontier exhaustion included),
2 user/config error, 1 internal error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import traceback
from pathlib import Path

import numpy as np

from crawlsim import __version__
from crawlsim.engine import CrawlConfig, CrawlResult, SelectionResult, crawl_then_select, oracle_select, run_crawl
from crawlsim.errors import ConfigError, CrawlSimError, UndefinedMetricError
from crawlsim.graph_store import ingest_documents, ingest_edges, load_graph_cache
from crawlsim.metrics import (
    coverage_curve,
    efficiency_report,
    hop_score_correlation,
    pagerank,
    spearman,
    write_coverage_csv,
    write_metrics_csv,
)
from crawlsim.scorers import ScorerPolicy, TrainConfig, TrainedClassifier, load_score_table, train_classifier
from crawlsim.synth import DOC_FILE, EDGE_FILE, TRUTH_FILE, SynthConfig, VocabProfile, emit, generate, sample_seeds

MANIFEST = "manifest.json"
THREADS_ENV = "CRAWLSIM_THREADS"

PATH_KEYS = {
    "corpus.dir", "corpus.edges", "corpus.docs", "corpus.truth", "corpus.graph_cache",
    "crawl.seeds_file", "scorer.path", "selector.path",
    "train.positives", "train.negatives", "train.corpus", "train.truth",
    "analyze.coverage.result", "analyze.coverage.oracle",
    "analyze.efficiency.a", "analyze.efficiency.b",
    "analyze.spearman.x_table", "analyze.spearman.y_table",
    "analyze.hop.scores", "analyze.indegree.scores",
}

SEED_KEYS = {
    "synth": "synth.rng_seed",
    "crawl": "crawl.rng_seed",
    "select": "select.rng_seed",
    "analyze": "analyze.rng_seed",
    "train": "train.seed",
}


class Config:
    """Flat string config with typed, validated accessors."""

    def __init__(self, values, source="<config>"):
        self.values = dict(values)
        self.source = source

    def has(self, key):
        return key in self.values

    def raw(self, key, default=None):
        if key in self.values:
            return self.values[key]
        if default is None:
            raise ConfigError(f"{self.source}: missing required key {key!r}")
        return default

    def _typed(self, key, conv, default, what):
        if key not in self.values:
            if default is None:
                raise ConfigError(f"{self.source}: missing required key {key!r}")
            return default
        text = self.raw(key)
        try:
            return conv(text)
        except ValueError:
            raise ConfigError(f"{self.source}: {key}={text!r} is not a valid {what}") from None

    def int(self, key, default=None):
        return self._typed(key, int, default, "integer")

    def float(self, key, default=None):
        return self._typed(key, float, default, "number")

    def str(self, key, default=None):
        return self.raw(key, default)

    def path(self, key, default=None):
        return Path(self.raw(key, default))

    def ints(self, key, default=None):
        return self._typed(key, lambda s: [int(t) for t in s.split(",") if t.strip()], default, "integer list")

    def floats(self, key, default=None):
        return self._typed(key, lambda s: [float(t) for t in s.split(",") if t.strip()], default, "number list")


def parse_config_text(text, source="<config>"):
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {line!r}")
        values[key.strip()] = value.strip()
    return values


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    if path.suffix == ".json":
        try:
            manifest = json.loads(text)
            values = {k: str(v) for k, v in manifest["resolved"].items()}
        except (json.JSONDecodeError, KeyError, AttributeError) as exc:
            raise ConfigError(f"{path}: not a crawlsim manifest ({exc})") from None
        return values
    values = parse_config_text(text, str(path))
    base = path.resolve().parent
    for key in PATH_KEYS & values.keys():
        if values[key]:
            values[key] = str((base / values[key]).resolve())
    return values


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def prepare_out_dir(out, force):
    out = Path(out)
    if out.exists():
        if not out.is_dir():
            raise ConfigError(f"output path {out} is not a directory")
        if any(out.iterdir()) and not force:
            raise ConfigError(f"output directory {out} is not empty (use --force to overwrite)")
    out.mkdir(parents=True, exist_ok=True)
    return out


def write_manifest(out, subcommand, config_path, values):
    inputs = {}
    for key in sorted(PATH_KEYS & values.keys()):
        p = Path(values[key])
        if p.is_file():
            inputs[key] = sha256_file(p)
        elif p.is_dir():
            for child in sorted(p.iterdir()):
                if child.is_file() and child.name != MANIFEST:
                    inputs[f"{key}/{child.name}"] = sha256_file(child)
    manifest = {
        "tool": "crawlsim",
        "version": __version__,
        "subcommand": subcommand,
        "config_path": str(config_path),
        "resolved": dict(sorted(values.items())),
        "input_digests": inputs,
        "rng_seeds": {k: v for k, v in sorted(values.items()) if k in SEED_KEYS.values()},
    }
    with open(out / MANIFEST, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def emit_line(**pairs):
    print(" ".join(f"{k}={_fmt(v)}" for k, v in pairs.items()))


def _fmt(v):
    if v is None:
        return "NA"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def threads_cap():
    raw = os.environ.get(THREADS_ENV, "0")
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV}={raw!r} is not an integer") from None
    if value < 0:
        raise ConfigError(f"{THREADS_ENV} must be >= 0")
    return value or (os.cpu_count() or 1)


# corpus / policy resolution

def corpus_paths(cfg):
    if cfg.has("corpus.dir"):
        base = cfg.path("corpus.dir")
        edges, docs, truth = base / EDGE_FILE, base / DOC_FILE, base / TRUTH_FILE
    else:
        edges, docs, truth = cfg.path("corpus.edges"), cfg.path("corpus.docs"), None
    if cfg.has("corpus.truth"):
        truth = cfg.path("corpus.truth")
    return edges, docs, truth


def load_corpus(cfg):
    edges, docs, truth = corpus_paths(cfg)
    if cfg.has("corpus.graph_cache"):
        graph = load_graph_cache(cfg.path("corpus.graph_cache"))
    else:
        mode = cfg.str("corpus.out_of_range", "error")
        graph = ingest_edges(edges, on_out_of_range=mode)
    store = ingest_documents(docs, node_count=graph.node_count)
    return graph, store, truth


def build_policy(cfg, prefix, graph, default_seed=0):
    kind = cfg.str(f"{prefix}.kind")
    if kind == "classifier":
        return ScorerPolicy.from_classifier(TrainedClassifier.load(cfg.path(f"{prefix}.path")))
    if kind == "table":
        return ScorerPolicy.from_table(load_score_table(cfg.path(f"{prefix}.path")))
    if kind == "indegree":
        return ScorerPolicy.from_indegree(graph)
    if kind == "random":
        return ScorerPolicy.from_seed(cfg.int(f"{prefix}.seed", default_seed))
    raise ConfigError(f"{prefix}.kind={kind!r}; expected classifier, table, indegree or random")


def resolve_seeds(cfg, graph, truth_path):
    if cfg.has("crawl.seeds"):
        return cfg.ints("crawl.seeds")
    if cfg.has("crawl.seeds_file"):
        with open(cfg.path("crawl.seeds_file"), encoding="utf-8") as fh:
            try:
                return [int(line) for line in fh if line.strip()]
            except ValueError:
                raise ConfigError("crawl.seeds_file must hold one integer per line") from None
    count = cfg.int("crawl.seed_count")
    rng_seed = cfg.int("crawl.rng_seed", 0)
    if truth_path is not None and Path(truth_path).is_file():
        table = load_score_table(truth_path)
        quality = np.array([table.lookup(u) for u in range(graph.node_count)])
        band = cfg.floats("crawl.seed_band", [0.3, 0.7])
        if len(band) != 2:
            raise ConfigError("crawl.seed_band must be 'lo,hi'")
        return sample_seeds(quality, count, rng_seed, tuple(band))
    if count > graph.node_count:
        raise ConfigError(f"crawl.seed_count={count} exceeds node count {graph.node_count}")
    rng = np.random.default_rng(rng_seed)
    return sorted(rng.choice(graph.node_count, size=count, replace=False).tolist())


def crawl_config(cfg, graph, truth_path, total_pages=None):
    seeds = resolve_seeds(cfg, graph, truth_path)
    rng_seed = cfg.int("crawl.rng_seed", 0)
    policy = build_policy(cfg, "scorer", graph, default_seed=rng_seed)
    return CrawlConfig(
        seeds=seeds,
        total_pages=total_pages if total_pages is not None else cfg.int("crawl.total_pages"),
        per_iteration=cfg.int("crawl.per_iteration"),
        policy=policy,
        checkpoint_every=cfg.int("crawl.checkpoint_every", 1000),
        rng_seed=rng_seed,
    )


# subcommands

def cmd_synth(cfg, out):
    config = SynthConfig(
        node_count=cfg.int("synth.node_count"),
        rng_seed=cfg.int("synth.rng_seed"),
        out_degree_mean=cfg.float("synth.out_degree_mean", 8.0),
        attachment_exponent=cfg.float("synth.attachment_exponent", 1.0),
        quality_link_correlation=cfg.float("synth.quality_link_correlation", 0.0),
        similarity_window=cfg.float("synth.similarity_window", 0.005),
        vocab_profile=VocabProfile(
            clean_size=cfg.int("synth.vocab.clean_size", 200),
            noisy_size=cfg.int("synth.vocab.noisy_size", 200),
            doc_length=cfg.int("synth.vocab.doc_length", 100),
        ),
    )
    graph, store, truth = generate(config)
    emit(graph, store, truth, out)
    emit_line(nodes=graph.node_count, edges=graph.edge_count, documents=len(store))


def cmd_crawl(cfg, out):
    graph, store, truth = load_corpus(cfg)
    config = crawl_config(cfg, graph, truth)
    result = run_crawl(config, graph, store)
    result.write(out / "crawl.tsv")
    emit_line(crawled=len(result.crawled), visited=result.visited_count, terminated_by=result.terminated_by)


def cmd_select(cfg, out):
    mode = cfg.str("select.mode")
    graph, store, truth = load_corpus(cfg)
    target = cfg.int("select.target")
    rng_seed = cfg.int("select.rng_seed", 0)
    if mode == "oracle":
        selector = build_policy(cfg, "selector", graph, default_seed=rng_seed)
        sel = oracle_select(store, selector, target, cfg.float("select.top_fraction", 0.1), rng_seed)
    elif mode == "crawl_then_select":
        multiplier = cfg.float("select.multiplier", 1.0)
        config = crawl_config(cfg, graph, truth, total_pages=int(round(multiplier * target)))
        selector = build_policy(cfg, "selector", graph, default_seed=rng_seed)
        sel = crawl_then_select(config, graph, store, multiplier, selector, target)
        sel.crawl.write(out / "crawl.tsv")
    else:
        raise ConfigError(f"select.mode={mode!r}; expected crawl_then_select or oracle")
    sel.write(out / "selection.txt")
    emit_line(selected=len(sel.selected), pool=sel.pool_size, exhausted=str(sel.exhausted).lower())


def _aligned_tables(x_path, y_path):
    x, y = load_score_table(x_path), load_score_table(y_path)
    common = sorted(set(x.scores) & set(y.scores))
    return [x.scores[u] for u in common], [y.scores[u] for u in common]


def _safe(fn, *args):
    try:
        return fn(*args)
    except UndefinedMetricError:
        return None


def _sample_nodes(node_count, sample, rng_seed):
    rng = np.random.default_rng(rng_seed)
    k = min(sample, node_count)
    return np.sort(rng.choice(node_count, size=k, replace=False))


def cmd_analyze(cfg, out):
    rng_seed = cfg.int("analyze.rng_seed", 0)
    metrics = []
    if cfg.has("analyze.coverage.result"):
        result = CrawlResult.read(cfg.path("analyze.coverage.result"))
        oracle = SelectionResult.read(cfg.path("analyze.coverage.oracle"))
        curve = coverage_curve(result, oracle)
        write_coverage_csv(curve, out / "coverage.csv")
        last = curve.points[-1]
        metrics += [
            ("coverage.final_precision", last.precision),
            ("coverage.final_recall", last.recall),
            ("coverage.final_recall_upper_bound", last.recall_upper_bound),
        ]
    if cfg.has("analyze.efficiency.a"):
        rep = efficiency_report(
            CrawlResult.read(cfg.path("analyze.efficiency.a")),
            CrawlResult.read(cfg.path("analyze.efficiency.b")),
        )
        write_metrics_csv(sorted(rep.as_dict().items()), out / "efficiency.csv")
        emit_line(crawled_ratio=rep.crawled_ratio, visited_ratio=rep.visited_ratio)
        metrics += [("crawled_ratio", rep.crawled_ratio), ("visited_ratio", rep.visited_ratio)]
    correlations = []
    if cfg.has("analyze.spearman.x"):
        correlations.append(("spearman", _safe(spearman, cfg.floats("analyze.spearman.x"), cfg.floats("analyze.spearman.y"))))
    if cfg.has("analyze.spearman.x_table"):
        x, y = _aligned_tables(cfg.path("analyze.spearman.x_table"), cfg.path("analyze.spearman.y_table"))
        correlations.append(("spearman_tables", _safe(spearman, x, y)))
    needs_graph = any(cfg.has(k) for k in ("analyze.hop.scores", "analyze.indegree.scores", "analyze.pagerank"))
    if needs_graph:
        edges, _, _ = corpus_paths(cfg)
        graph = load_graph_cache(cfg.path("corpus.graph_cache")) if cfg.has("corpus.graph_cache") else ingest_edges(edges)
        sample = cfg.int("analyze.sample", 2000)
        if cfg.has("analyze.hop.scores"):
            table = load_score_table(cfg.path("analyze.hop.scores"))
            for hop in cfg.ints("analyze.hop.levels", [1, 2]):
                correlations.append((f"hop{hop}_score_correlation", _safe(hop_score_correlation, graph, table, hop, sample, rng_seed)))
        if cfg.has("analyze.indegree.scores"):
            table = load_score_table(cfg.path("analyze.indegree.scores"))
            nodes = [u for u in _sample_nodes(graph.node_count, sample, rng_seed).tolist() if u in table]
            correlations.append((
                "score_indegree_spearman",
                _safe(spearman, [table.scores[u] for u in nodes], graph.indegrees[nodes].tolist()),
            ))
        if cfg.str("analyze.pagerank", "false").lower() == "true":
            pr = pagerank(
                graph,
                damping=cfg.float("analyze.pagerank.damping", 0.85),
                iterations=cfg.int("analyze.pagerank.iterations", 100),
            )
            with open(out / "pagerank.tsv", "w", encoding="utf-8", newline="\n") as fh:
                for u, v in enumerate(pr.tolist()):
                    fh.write(f"{u}\t{v!r}\n")
            nodes = _sample_nodes(graph.node_count, sample, rng_seed)
            correlations.append(("pagerank_indegree_spearman", _safe(spearman, pr[nodes], graph.indegrees[nodes])))
    if correlations:
        write_metrics_csv(correlations, out / "correlation.csv")
        metrics += correlations
    if not metrics:
        raise ConfigError("analyze config requests no analyses")
    for name, value in metrics:
        emit_line(metric=name, value=value)


def _split_holdout(pos, neg, fraction, rng):
    # hold out whole texts so a duplicated page never sits on both sides of the split
    texts = sorted({d.text for d in pos} | {d.text for d in neg})
    if len(texts) < 2 or fraction <= 0:
        return pos, neg, [], []
    order = rng.permutation(len(texts)).tolist()
    held = {texts[i] for i in order[: math.ceil(fraction * len(texts))]}
    pos_train = [d for d in pos if d.text not in held]
    neg_train = [d for d in neg if d.text not in held]
    if not pos_train or not neg_train:
        return pos, neg, [], []
    return pos_train, neg_train, [d for d in pos if d.text in held], [d for d in neg if d.text in held]


def _training_docs(cfg):
    if cfg.has("train.positives"):
        pos = list(ingest_documents(cfg.path("train.positives")).documents.values())
        neg = list(ingest_documents(cfg.path("train.negatives")).documents.values())
        return pos, neg
    corpus = cfg.path("train.corpus")
    docs_file = corpus / DOC_FILE if corpus.is_dir() else corpus
    store = ingest_documents(docs_file)
    truth = load_score_table(cfg.path("train.truth", str(corpus / TRUTH_FILE) if corpus.is_dir() else None))
    k = cfg.int("train.top_k", 500)
    ranked = sorted((u for u in store.ids() if u in truth), key=lambda u: (-truth.scores[u], u))
    if 2 * k > len(ranked):
        raise ConfigError(f"train.top_k={k} needs at least {2 * k} labelled documents")
    return [store.documents[u] for u in ranked[:k]], [store.documents[u] for u in ranked[-k:]]


def cmd_train(cfg, out):
    pos, neg = _training_docs(cfg)
    if not pos or not neg:
        raise ConfigError("both training classes need at least one document")
    seed = cfg.int("train.seed", 0)
    rng = np.random.default_rng(seed)
    fraction = cfg.float("train.holdout_fraction", 0.2)
    pos_train, neg_train, pos_held, neg_held = _split_holdout(pos, neg, fraction, rng)
    config = TrainConfig(
        hash_dim=cfg.int("train.hash_dim", 1 << 18),
        ngram_orders=tuple(cfg.ints("train.orders", [1, 2])),
        epochs=cfg.int("train.epochs", 5),
        learning_rate=cfg.float("train.learning_rate", 0.5),
        seed=seed,
    )
    try:
        clf = train_classifier(pos_train, neg_train, config)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    clf.save(out / "classifier.txt")
    held = [(d, 1) for d in pos_held] + [(d, 0) for d in neg_held]
    accuracy = None
    if held:
        accuracy = sum((clf.score_text(d.text) > 0.5) == bool(y) for d, y in held) / len(held)
    emit_line(train_examples=len(pos_train) + len(neg_train), heldout_examples=len(held), heldout_accuracy=accuracy)


COMMANDS = {
    "synth": cmd_synth,
    "crawl": cmd_crawl,
    "select": cmd_select,
    "analyze": cmd_analyze,
    "train": cmd_train,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="crawlsim", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"crawlsim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="key=value config file, or a manifest.json to replay")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, help=f"override {SEED_KEYS[name]}")
        p.add_argument("--force", action="store_true", help="allow writing into a non-empty output directory")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        threads_cap()
        values = load_config(args.config)
        if args.seed is not None:
            values[SEED_KEYS[args.command]] = str(args.seed)
        cfg = Config(values, str(args.config))
        out = prepare_out_dir(args.out, args.force)
        write_manifest(out, args.command, args.config, values)
        COMMANDS[args.command](cfg, out)
    except (CrawlSimError, FileNotFoundError, IsADirectoryError, NotADirectoryError) as exc:
        print(f"crawlsim: error: {exc}", file=sys.stderr)
        return 2
    except Exception:
        traceback.print_exc()
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
