"""Crawl loop, crawl-then-select baselines and oracle selection.

One crawl iteration fetches the current sources into the crawled set, scores
every newly discovered outlink once (in ascending node-id order) and pushes it
onto the frontier, then dequeues the top ``per_iteration`` nodes as the next
sources. Iteration 0 uses the seeds directly.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field

import numpy as np

from crawlsim.errors import ConfigError, ContentMissingError, ParseError
from crawlsim.frontier import Frontier
from crawlsim.graph_store import FetchCounter, fetch_page
from crawlsim.scorers import ScorerPolicy, ScoreTable, score_document

BUDGET_REACHED = "budget_reached"
FRONTIER_EXHAUSTED = "frontier_exhausted"

UNSCOREABLE = float("-inf")


@dataclass(frozen=True)
class CrawlConfig:
    seeds: tuple
    total_pages: int
    per_iteration: int
    policy: ScorerPolicy
    checkpoint_every: int = 1000
    rng_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if self.total_pages < len(self.seeds):
            raise ConfigError(
                f"total_pages={self.total_pages} is smaller than the {len(self.seeds)} seeds"
            )
        if self.per_iteration < 1:
            raise ConfigError("per_iteration must be >= 1")
        if self.checkpoint_every < 1:
            raise ConfigError("checkpoint_every must be >= 1")

    def echo(self):
        policy = {"kind": self.policy.kind}
        if self.policy.kind == "random":
            policy["seed"] = self.policy.seed
        return {
            "seeds": list(self.seeds),
            "total_pages": self.total_pages,
            "per_iteration": self.per_iteration,
            "checkpoint_every": self.checkpoint_every,
            "rng_seed": self.rng_seed,
            "policy": policy,
        }


@dataclass(frozen=True)
class IterationTrace:
    iteration_index: int
    sources: tuple
    fetched: tuple
    discovered: int
    enqueued_new: int


@dataclass(frozen=True)
class Checkpoint:
    crawled_count: int
    visited_count: int
    new_members: tuple


@dataclass
class CrawlResult:
    crawled: tuple
    visited_count: int
    seed_count: int
    fetch_count_crawl: int
    fetch_count_score: int
    terminated_by: str
    checkpoints: list = field(default_factory=list)
    iterations: list = field(default_factory=list)
    config_echo: dict = field(default_factory=dict)

    def header(self):
        return {
            "format": "crawlsim-crawl-v1",
            "config": self.config_echo,
            "terminated_by": self.terminated_by,
            "crawled": len(self.crawled),
            "visited": self.visited_count,
            "seed_count": self.seed_count,
            "fetch_count_crawl": self.fetch_count_crawl,
            "fetch_count_score": self.fetch_count_score,
            "iterations": len(self.iterations),
        }

    def write(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("# " + json.dumps(self.header(), sort_keys=True) + "\n")
            for ck in self.checkpoints:
                members = ",".join(str(u) for u in ck.new_members)
                fh.write(f"{ck.crawled_count}\t{ck.visited_count}\t{members}\n")

    @classmethod
    def read(cls, path):
        """Load a result file. Per-iteration traces are not stored, so ``iterations`` is empty."""
        with open(path, encoding="utf-8") as fh:
            first = fh.readline()
            if not first.startswith("# "):
                raise ParseError("missing crawl result header", 1, path)
            try:
                head = json.loads(first[2:])
            except json.JSONDecodeError as exc:
                raise ParseError(f"bad crawl result header: {exc.msg}", 1, path) from None
            checkpoints, crawled = [], []
            for lineno, line in enumerate(fh, 2):
                line = line.rstrip("\n")
                if not line:
                    continue
                parts = line.split("\t")
                if len(parts) != 3:
                    raise ParseError("expected 3 tab-separated fields", lineno, path)
                try:
                    members = tuple(int(t) for t in parts[2].split(",") if t)
                    ck = Checkpoint(int(parts[0]), int(parts[1]), members)
                except ValueError:
                    raise ParseError(f"bad checkpoint record {line!r}", lineno, path) from None
                crawled.extend(members)
                checkpoints.append(ck)
        try:
            return cls(
                crawled=tuple(crawled),
                visited_count=int(head["visited"]),
                seed_count=int(head["seed_count"]),
                fetch_count_crawl=int(head["fetch_count_crawl"]),
                fetch_count_score=int(head["fetch_count_score"]),
                terminated_by=head["terminated_by"],
                checkpoints=checkpoints,
                config_echo=head.get("config", {}),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"incomplete crawl result header: {exc}", 1, path) from None


def _score_candidates(policy, candidates, store, counter):
    scores = []
    for v in candidates:
        try:
            doc = fetch_page(store, v, counter)
        except ContentMissingError:
            doc = None
        if doc is None and policy.needs_content:
            scores.append(UNSCOREABLE)
        else:
            scores.append(score_document(policy, v, doc))
    return scores


def run_crawl(config: CrawlConfig, graph, store) -> CrawlResult:
    for s in config.seeds:
        if not 0 <= s < graph.node_count:
            raise ConfigError(f"seed {s} is not a node of the graph")
    frontier = Frontier(config.seeds)
    budget = config.total_pages
    every = config.checkpoint_every
    crawl_counter, score_counter = FetchCounter(), FetchCounter()
    crawled, in_crawl = [], set()
    checkpoints, iterations = [], []
    last_ck = 0

    def snapshot():
        nonlocal last_ck
        checkpoints.append(
            Checkpoint(len(crawled), len(frontier.visited), tuple(crawled[last_ck:]))
        )
        last_ck = len(crawled)

    sources = list(config.seeds)
    index = 0
    while True:
        fetched = []
        for u in sources:
            if len(crawled) >= budget:
                break
            if u in in_crawl:
                continue
            try:
                fetch_page(store, u, crawl_counter)
            except ContentMissingError:
                pass  # contentless pages still count as crawled
            crawled.append(u)
            in_crawl.add(u)
            fetched.append(u)
            if len(crawled) - last_ck >= every:
                snapshot()
        if len(crawled) >= budget:
            iterations.append(IterationTrace(index, tuple(sources), tuple(fetched), 0, 0))
            terminated = BUDGET_REACHED
            break
        discovered = set()
        for u in fetched:
            discovered.update(graph.neighbors(u).tolist())
        candidates = sorted(v for v in discovered if v not in frontier.visited)
        scores = _score_candidates(config.policy, candidates, store, score_counter)
        for v, s in zip(candidates, scores):
            frontier.enqueue_if_new(v, s)
        iterations.append(
            IterationTrace(index, tuple(sources), tuple(fetched), len(discovered), len(candidates))
        )
        sources = frontier.dequeue_top(config.per_iteration)
        index += 1
        if not sources:
            terminated = FRONTIER_EXHAUSTED
            break
    if last_ck != len(crawled) or not checkpoints:
        snapshot()
    return CrawlResult(
        crawled=tuple(crawled),
        visited_count=len(frontier.visited),
        seed_count=len(config.seeds),
        fetch_count_crawl=crawl_counter.count,
        fetch_count_score=score_counter.count,
        terminated_by=terminated,
        checkpoints=checkpoints,
        iterations=iterations,
        config_echo=config.echo(),
    )


@dataclass
class SelectionResult:
    selected: frozenset
    pool_size_multiplier: float | None = None
    selection_scores: ScoreTable | None = None
    pool_size: int = 0
    target: int = 0
    exhausted: bool = False
    crawl: CrawlResult | None = None

    def write(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for u in sorted(self.selected):
                fh.write(f"{u}\n")

    @classmethod
    def read(cls, path):
        ids = []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.strip()
                if not line:
                    continue
                try:
                    ids.append(int(line))
                except ValueError:
                    raise ParseError(f"bad node id {line!r}", lineno, path) from None
        return cls(selected=frozenset(ids), pool_size=len(ids), target=len(ids))


def _pool_scores(selector, nodes, store):
    out = {}
    for u in nodes:
        doc = store.documents.get(u)
        if doc is None and selector.needs_content:
            out[u] = UNSCOREABLE
        else:
            out[u] = score_document(selector, u, doc)
    return out


def _top_k(scores, k):
    return sorted(scores, key=lambda u: (-scores[u], u))[:k]


def crawl_then_select(config, graph, store, multiplier, selector, target) -> SelectionResult:
    """Crawl ``multiplier * target`` pages, then keep the ``target`` best by ``selector``."""
    if target < 1:
        raise ConfigError("target must be >= 1")
    if multiplier <= 0:
        raise ConfigError("multiplier must be positive")
    pool_budget = int(round(multiplier * target))
    result = run_crawl(dataclasses.replace(config, total_pages=pool_budget), graph, store)
    scores = _pool_scores(selector, result.crawled, store)
    chosen = _top_k(scores, target)
    return SelectionResult(
        selected=frozenset(chosen),
        pool_size_multiplier=float(multiplier),
        selection_scores=ScoreTable(scores),
        pool_size=len(result.crawled),
        target=target,
        exhausted=len(result.crawled) < pool_budget,
        crawl=result,
    )


def oracle_select(store, scorer, target, top_fraction, rng_seed) -> SelectionResult:
    """Score the whole corpus and sample ``target`` documents from its top bucket."""
    if not 0 < top_fraction <= 1:
        raise ConfigError("top_fraction must be in (0, 1]")
    corpus = store.ids()
    bucket_size = math.ceil(top_fraction * len(corpus) - 1e-9)
    if target < 1 or target > bucket_size:
        raise ConfigError(
            f"target {target} must be between 1 and the top-bucket size {bucket_size}"
        )
    scores = _pool_scores(scorer, corpus, store)
    bucket = _top_k(scores, bucket_size)
    if target == bucket_size:
        chosen = bucket
    else:
        rng = np.random.default_rng(rng_seed)
        picks = rng.choice(len(bucket), size=target, replace=False)
        chosen = [bucket[i] for i in sorted(picks.tolist())]
    return SelectionResult(
        selected=frozenset(chosen),
        pool_size_multiplier=len(corpus) / target,
        selection_scores=ScoreTable(scores),
        pool_size=len(corpus),
        target=target,
    )
