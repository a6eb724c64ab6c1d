"""Analyses over crawl outputs: rank correlation, PageRank, oracle coverage,
hop-neighbourhood score correlation and crawl-efficiency ratios."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from crawlsim.errors import UndefinedCorrelationError, UndefinedMetricError


def average_ranks(values):
    """1-based ranks; tied values share the mean of the positions they occupy."""
    x = np.asarray(values, dtype=np.float64)
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    n = len(x)
    ranks = np.empty(n, dtype=np.float64)
    starts = np.flatnonzero(np.r_[True, xs[1:] != xs[:-1]])
    ends = np.r_[starts[1:], n]
    for a, b in zip(starts.tolist(), ends.tolist()):
        ranks[order[a:b]] = (a + 1 + b) / 2.0
    return ranks


def spearman(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 1 or x.shape != y.shape:
        raise UndefinedCorrelationError(f"length mismatch: {x.shape} vs {y.shape}")
    if len(x) < 2:
        raise UndefinedCorrelationError("need at least two observations")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise UndefinedCorrelationError("inputs must be finite")
    rx = average_ranks(x)
    ry = average_ranks(y)
    dx = rx - rx.mean()
    dy = ry - ry.mean()
    sxx = math.fsum((dx * dx).tolist())
    syy = math.fsum((dy * dy).tolist())
    if sxx == 0.0 or syy == 0.0:
        raise UndefinedCorrelationError("zero rank variance (constant input)")
    r = math.fsum((dx * dy).tolist()) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def pagerank(graph, damping=0.85, iterations=100, tol=1e-10):
    """Power iteration from the uniform vector; dangling mass is spread uniformly.

    Every reduction sums a value-sorted array, so the result is exactly
    equivariant under node relabelling.
    """
    n = graph.node_count
    if n == 0:
        raise UndefinedMetricError("pagerank of an empty graph")
    if not 0 < damping < 1:
        raise ValueError("damping must be in (0, 1)")
    outdeg = graph.outdegrees()
    src = graph.edge_sources()
    tgt = graph.targets
    dangling = np.flatnonzero(outdeg == 0)
    has_in = np.flatnonzero(graph.indegrees > 0)
    seg_starts = np.r_[0, np.cumsum(graph.indegrees[has_in])[:-1]].astype(np.int64)
    inv_out = np.zeros(n)
    nz = outdeg > 0
    inv_out[nz] = 1.0 / outdeg[nz]
    base = (1.0 - damping) / n
    pr = np.full(n, 1.0 / n)
    for _ in range(iterations):
        contrib = pr[src] * inv_out[src]
        order = np.lexsort((contrib, tgt))
        incoming = np.zeros(n)
        if len(order):
            incoming[has_in] = np.add.reduceat(contrib[order], seg_starts)
        dangling_mass = float(np.sort(pr[dangling]).sum()) if len(dangling) else 0.0
        new = base + damping * (incoming + dangling_mass / n)
        delta = float(np.sort(np.abs(new - pr)).sum())
        pr = new
        if delta < tol:
            break
    return pr


@dataclass(frozen=True)
class CoveragePoint:
    crawled_count: int
    precision: float
    recall: float
    recall_upper_bound: float


@dataclass(frozen=True)
class CoverageCurve:
    points: tuple

    def rows(self):
        return [(p.crawled_count, p.precision, p.recall, p.recall_upper_bound) for p in self.points]


def coverage_curve(result, oracle) -> CoverageCurve:
    target = oracle.selected if hasattr(oracle, "selected") else frozenset(oracle)
    if not target:
        raise UndefinedMetricError("oracle set is empty")
    if not result.checkpoints:
        raise UndefinedMetricError("crawl result has no checkpoints")
    size = len(target)
    hits = 0
    points = []
    for ck in result.checkpoints:
        hits += sum(1 for u in ck.new_members if u in target)
        c = ck.crawled_count
        precision = hits / c if c else 0.0
        points.append(CoveragePoint(c, precision, hits / size, min(c, size) / size))
    return CoverageCurve(tuple(points))


def hop_neighbourhood(graph, u, hop):
    """Distinct endpoints of ``hop``-step outlink walks from ``u``, excluding ``u``."""
    if hop not in (1, 2):
        raise ValueError("hop must be 1 or 2")
    first = graph.neighbors(u)
    if hop == 1:
        reach = set(first.tolist())
    else:
        reach = set()
        for w in first.tolist():
            reach.update(graph.neighbors(w).tolist())
    reach.discard(u)
    return reach


def _lookup(scores, u):
    return scores.lookup(u) if hasattr(scores, "lookup") else float(scores[u])


def hop_score_correlation(graph, scores, hop, sample, rng_seed) -> float:
    """Spearman between a node's score and the mean score of its hop-neighbourhood.

    Nodes are drawn uniformly (seeded) among those with a non-empty
    neighbourhood until ``sample`` are collected.
    """
    rng = np.random.default_rng(rng_seed)
    candidates = np.flatnonzero(graph.outdegrees() > 0)
    own, means = [], []
    for u in rng.permutation(candidates).tolist():
        if len(own) >= sample:
            break
        reach = hop_neighbourhood(graph, u, hop)
        if not reach:
            continue
        own.append(_lookup(scores, u))
        means.append(math.fsum(_lookup(scores, v) for v in sorted(reach)) / len(reach))
    if len(own) < 2:
        raise UndefinedCorrelationError(f"only {len(own)} eligible nodes for hop {hop}")
    return spearman(own, means)


@dataclass(frozen=True)
class EfficiencyReport:
    crawled_ratio: float
    visited_ratio: float
    crawled_a: int
    visited_a: int
    crawled_b: int
    visited_b: int
    fetch_total_a: int
    fetch_total_b: int

    def as_dict(self):
        return dict(self.__dict__)


def efficiency_report(run_a, run_b) -> EfficiencyReport:
    """Crawled and visited counts of run A relative to run B."""
    pa, pb = len(run_a.crawled), len(run_b.crawled)
    va, vb = run_a.visited_count, run_b.visited_count
    if pa == 0 or pb == 0 or va == 0 or vb == 0:
        raise UndefinedMetricError("efficiency ratios need non-empty crawls on both sides")
    return EfficiencyReport(
        crawled_ratio=pa / pb,
        visited_ratio=va / vb,
        crawled_a=pa,
        visited_a=va,
        crawled_b=pb,
        visited_b=vb,
        fetch_total_a=run_a.fetch_count_crawl + run_a.fetch_count_score,
        fetch_total_b=run_b.fetch_count_crawl + run_b.fetch_count_score,
    )


def pages_to_reach_recall(curve, recall):
    """First checkpoint crawl count whose recall reaches ``recall``, or None."""
    for p in curve.points:
        if p.recall >= recall:
            return p.crawled_count
    return None


def write_coverage_csv(curve, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["crawled_count", "precision", "recall", "recall_upper_bound"])
        for row in curve.rows():
            w.writerow([row[0]] + [repr(float(v)) for v in row[1:]])


def write_metrics_csv(rows, path):
    """``rows`` is an iterable of (name, value); value None is written as NA."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["metric", "value"])
        for name, value in rows:
            w.writerow([name, "NA" if value is None else repr(float(value))])
