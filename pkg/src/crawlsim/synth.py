"""Synthetic web corpora with planted document quality.

Construction, all driven by independent child streams of one seed:

1. quality ~ Beta(2, 5) per node (high quality is scarce);
2. link structure by preferential attachment: node ``t`` sends
   ``1 + Poisson(out_degree_mean - 1)`` links to earlier nodes, chosen with
   weight ``(indegree + 1) ** attachment_exponent`` (node 0 links into the
   finished graph);
3. each link target is redrawn with probability ``quality_link_correlation``
   from a window of nodes adjacent in quality rank;
4. each document is ``doc_length`` tokens, each drawn from the "clean"
   vocabulary with probability equal to the node's quality, else from the
   "noisy" one.

Because the streams are separate, changing the link correlation leaves the
qualities, the attachment graph and all texts unchanged.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from crawlsim.errors import ConfigError
from crawlsim.graph_store import Document, DocumentStore, WebGraph, write_documents, write_edges
from crawlsim.scorers import ScoreTable


@dataclass(frozen=True)
class VocabProfile:
    clean_size: int = 200
    noisy_size: int = 200
    doc_length: int = 100

    def __post_init__(self):
        if min(self.clean_size, self.noisy_size, self.doc_length) < 1:
            raise ConfigError("vocabulary sizes and doc_length must be >= 1")


@dataclass(frozen=True)
class SynthConfig:
    node_count: int
    rng_seed: int | None = None
    out_degree_mean: float = 8.0
    attachment_exponent: float = 1.0
    quality_link_correlation: float = 0.0
    similarity_window: float = 0.005
    vocab_profile: VocabProfile = field(default_factory=VocabProfile)

    def __post_init__(self):
        if self.rng_seed is None:
            raise ConfigError("rng_seed is required")
        if self.node_count < 2:
            raise ConfigError("node_count must be >= 2")
        if not self.out_degree_mean > 0:
            raise ConfigError("out_degree_mean must be > 0")
        if self.attachment_exponent < 0:
            raise ConfigError("attachment_exponent must be >= 0")
        if not 0.0 <= self.quality_link_correlation <= 1.0:
            raise ConfigError("quality_link_correlation must be in [0, 1]")
        if not 0.0 < self.similarity_window <= 1.0:
            raise ConfigError("similarity_window must be in (0, 1]")

    def as_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class PlantedTruth:
    quality: np.ndarray

    def to_table(self):
        return ScoreTable.from_array(self.quality)

    def __len__(self):
        return len(self.quality)


class _Fenwick:
    def __init__(self, n):
        self.n = n
        self.tree = [0.0] * (n + 1)
        self.total = 0.0

    def add(self, i, delta):
        self.total += delta
        i += 1
        while i <= self.n:
            self.tree[i] += delta
            i += i & -i

    def find(self, value):
        """Smallest index whose prefix sum exceeds ``value``."""
        pos = 0
        step = 1 << self.n.bit_length()
        while step:
            nxt = pos + step
            if nxt <= self.n and self.tree[nxt] <= value:
                pos = nxt
                value -= self.tree[nxt]
            step >>= 1
        return min(pos, self.n - 1)


def _attach_linear(outdeg, draws):
    """Weight indegree + 1 via the urn trick: one ticket per node plus one per inlink."""
    n = len(outdeg)
    src, dst = [], []
    pool = [0]
    e = 0
    deg = outdeg.tolist()
    for t in range(1, n):
        size = len(pool)
        picked = []
        for _ in range(deg[t]):
            picked.append(pool[int(draws[e] * size)])
            e += 1
        pool.append(t)
        pool.extend(picked)
        src.extend([t] * len(picked))
        dst.extend(picked)
    size = len(pool)
    for _ in range(deg[0]):
        v = pool[int(draws[e] * size)]
        e += 1
        if v != 0:
            src.append(0)
            dst.append(v)
    return src, dst


def _attach_weighted(outdeg, draws, exponent):
    n = len(outdeg)
    tree = _Fenwick(n)
    indeg = [0] * n

    def weight(k):
        return (k + 1.0) ** exponent

    src, dst = [], []
    e = 0
    deg = outdeg.tolist()
    tree.add(0, weight(0))
    for t in range(1, n):
        picked = []
        for _ in range(deg[t]):
            v = tree.find(draws[e] * tree.total)
            e += 1
            v = min(v, t - 1)
            picked.append(v)
        for v in picked:
            tree.add(v, weight(indeg[v] + 1) - weight(indeg[v]))
            indeg[v] += 1
        tree.add(t, weight(0))
        src.extend([t] * len(picked))
        dst.extend(picked)
    for _ in range(deg[0]):
        v = tree.find(draws[e] * tree.total)
        e += 1
        if v != 0:
            src.append(0)
            dst.append(v)
    return src, dst


def _rewire(src, dst, quality, rho, window_frac, rng):
    n = len(quality)
    if rho <= 0 or len(src) == 0:
        return dst
    order = np.argsort(quality, kind="mergesort")
    rank = np.empty(n, dtype=np.int64)
    rank[order] = np.arange(n)
    width = max(1, int(round(window_frac * n)))
    redraw = rng.random(len(src)) < rho
    offsets = rng.integers(1, width + 1, size=len(src)) * np.where(rng.random(len(src)) < 0.5, -1, 1)
    r0 = rank[src]
    r = r0 + offsets
    r = np.where(r < 0, -r, r)
    r = np.where(r > n - 1, 2 * (n - 1) - r, r)
    r = np.clip(r, 0, n - 1)
    clash = r == r0
    r[clash] = np.where(r0[clash] < n - 1, r0[clash] + 1, r0[clash] - 1)
    out = dst.copy()
    out[redraw] = order[r[redraw]]
    return out


def _texts(quality, profile, rng, chunk=8192):
    vocab = np.array(
        [f"w{i:03d}" for i in range(profile.clean_size)]
        + [f"x{i:03d}" for i in range(profile.noisy_size)]
    )
    length = profile.doc_length
    texts = []
    for start in range(0, len(quality), chunk):
        q = quality[start:start + chunk]
        m = len(q)
        clean = rng.random((m, length)) < q[:, None]
        clean_ids = rng.integers(0, profile.clean_size, size=(m, length))
        noisy_ids = profile.clean_size + rng.integers(0, profile.noisy_size, size=(m, length))
        tokens = vocab[np.where(clean, clean_ids, noisy_ids)]
        texts.extend(" ".join(row) for row in tokens.tolist())
    return texts


def doc_url(u):
    return f"https://synthetic.invalid/page/{u}"


def generate(config: SynthConfig):
    """Returns ``(graph, store, truth)``; deterministic in ``config``."""
    n = config.node_count
    q_seq, link_seq, rewire_seq, text_seq = np.random.SeedSequence(config.rng_seed).spawn(4)
    quality = np.random.default_rng(q_seq).beta(2.0, 5.0, size=n)

    link_rng = np.random.default_rng(link_seq)
    outdeg = 1 + link_rng.poisson(max(config.out_degree_mean - 1.0, 0.0), size=n)
    draws = link_rng.random(int(outdeg.sum()))
    if config.attachment_exponent == 1.0:
        src, dst = _attach_linear(outdeg, draws)
    else:
        src, dst = _attach_weighted(outdeg, draws, config.attachment_exponent)
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    dst = _rewire(
        src, dst, quality, config.quality_link_correlation, config.similarity_window,
        np.random.default_rng(rewire_seq),
    )
    graph = WebGraph.from_edges(src, dst, n)

    texts = _texts(quality, config.vocab_profile, np.random.default_rng(text_seq))
    store = DocumentStore({u: Document(u, doc_url(u), t) for u, t in enumerate(texts)}, n)
    return graph, store, PlantedTruth(quality)


def sample_seeds(truth, count, rng_seed, band=(0.3, 0.7)):
    """Uniform sample of ``count`` node ids whose planted quality lies in ``band``."""
    q = np.asarray(truth.quality if hasattr(truth, "quality") else truth)
    lo, hi = band
    eligible = np.flatnonzero((q >= lo) & (q <= hi))
    if count > len(eligible):
        raise ConfigError(f"only {len(eligible)} nodes in quality band {band}, asked for {count}")
    rng = np.random.default_rng(rng_seed)
    return sorted(rng.choice(eligible, size=count, replace=False).tolist())


def top_fraction_ids(values, fraction):
    """Ids of the top ``ceil(fraction * n)`` values, ties broken by ascending id."""
    v = np.asarray(values, dtype=np.float64)
    k = math.ceil(fraction * len(v) - 1e-9)
    order = np.lexsort((np.arange(len(v)), -v))
    return frozenset(order[:k].tolist())


EDGE_FILE = "edges.tsv"
DOC_FILE = "docs.jsonl"
TRUTH_FILE = "truth.tsv"


def emit(graph, store, truth, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"edges": out / EDGE_FILE, "docs": out / DOC_FILE, "truth": out / TRUTH_FILE}
    write_edges(graph, paths["edges"])
    write_documents(store, paths["docs"])
    truth.to_table().write(paths["truth"])
    return paths
