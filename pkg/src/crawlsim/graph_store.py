"""Web-graph snapshot and document store.

The graph is kept in a compressed-sparse-row layout (``offsets`` + ``targets``)
with a precomputed global indegree index. Both the graph and the document store
are immutable once built.
"""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from crawlsim.errors import (
    ContentMissingError,
    IngestionError,
    NodeRangeError,
    ParseError,
)

log = logging.getLogger(__name__)

CACHE_MAGIC = b"CW4Lv1"
NODE_COUNT_DIRECTIVE = "# node_count="


class WebGraph:
    """Immutable directed graph over dense node ids ``0..node_count-1``.

    Adjacency lists are sorted ascending and duplicate-free; self-loops are
    never stored.
    """

    __slots__ = ("node_count", "offsets", "targets", "indegrees", "dropped_edges")

    def __init__(self, node_count, offsets, targets, dropped_edges=0):
        self.node_count = int(node_count)
        self.offsets = np.ascontiguousarray(offsets, dtype=np.int64)
        self.targets = np.ascontiguousarray(targets, dtype=np.int64)
        if len(self.offsets) != self.node_count + 1:
            raise ValueError("offsets must have node_count + 1 entries")
        self.indegrees = np.bincount(self.targets, minlength=self.node_count).astype(np.int64)
        self.dropped_edges = int(dropped_edges)
        self.offsets.setflags(write=False)
        self.targets.setflags(write=False)
        self.indegrees.setflags(write=False)

    @classmethod
    def from_edges(cls, src, dst, node_count, dropped_edges=0):
        """Build from parallel edge arrays; drops self-loops and parallel edges."""
        src = np.asarray(src, dtype=np.int64)
        dst = np.asarray(dst, dtype=np.int64)
        keep = src != dst
        src, dst = src[keep], dst[keep]
        if len(src):
            order = np.lexsort((dst, src))
            src, dst = src[order], dst[order]
            fresh = np.ones(len(src), dtype=bool)
            fresh[1:] = (src[1:] != src[:-1]) | (dst[1:] != dst[:-1])
            src, dst = src[fresh], dst[fresh]
        counts = np.bincount(src, minlength=node_count)
        offsets = np.zeros(node_count + 1, dtype=np.int64)
        np.cumsum(counts, out=offsets[1:])
        return cls(node_count, offsets, dst, dropped_edges=dropped_edges)

    @property
    def edge_count(self):
        return int(len(self.targets))

    def outdegrees(self):
        return np.diff(self.offsets)

    def neighbors(self, u):
        """Zero-copy view of ``u``'s adjacency (no bounds check beyond numpy's)."""
        return self.targets[self.offsets[u]:self.offsets[u + 1]]

    def edge_sources(self):
        return np.repeat(np.arange(self.node_count, dtype=np.int64), self.outdegrees())

    def check_node(self, u):
        if not 0 <= u < self.node_count:
            raise NodeRangeError(f"node id {u} outside [0, {self.node_count})")

    def __eq__(self, other):
        if not isinstance(other, WebGraph):
            return NotImplemented
        return (
            self.node_count == other.node_count
            and np.array_equal(self.offsets, other.offsets)
            and np.array_equal(self.targets, other.targets)
        )

    def __repr__(self):
        return f"WebGraph(node_count={self.node_count}, edge_count={self.edge_count})"


@dataclass(frozen=True)
class Document:
    id: int
    url: str
    text: str


@dataclass
class DocumentStore:
    """Id-indexed documents. Ids in ``[0, node_count)`` without a record are contentless."""

    documents: dict = field(default_factory=dict)
    node_count: int | None = None

    def __post_init__(self):
        if self.node_count is None:
            self.node_count = (max(self.documents) + 1) if self.documents else 0

    def __len__(self):
        return len(self.documents)

    def __contains__(self, u):
        return u in self.documents

    def ids(self):
        return sorted(self.documents)

    def has_content(self, u):
        return u in self.documents


class FetchCounter:
    """Counts simulated page fetches, the unit of crawl cost."""

    __slots__ = ("count",)

    def __init__(self, count=0):
        self.count = count

    def tick(self, k=1):
        self.count += k

    def __repr__(self):
        return f"FetchCounter({self.count})"


def outlinks(graph, u):
    graph.check_node(u)
    return graph.neighbors(u).tolist()


def indegree(graph, u):
    """Global (whole-snapshot) indegree of ``u``."""
    graph.check_node(u)
    return int(graph.indegrees[u])


def fetch_page(store, u, counter=None):
    """Return the stored document for ``u``.

    The counter advances even when the page turns out to be contentless: the
    fetch was still attempted.
    """
    if u < 0:
        raise NodeRangeError(f"node id {u} is negative")
    if counter is not None:
        counter.tick()
    try:
        return store.documents[u]
    except KeyError:
        raise ContentMissingError(f"node {u} has no stored content") from None


def _parse_int(token, lineno, path):
    try:
        value = int(token)
    except ValueError:
        raise ParseError(f"expected a non-negative integer, got {token!r}", lineno, path) from None
    if value < 0:
        raise ParseError(f"negative node id {value}", lineno, path)
    return value


def ingest_edges(edge_file, expected_nodes=None, on_out_of_range="error"):
    """Read a ``src<TAB>dst`` edge list into a :class:`WebGraph`.

    ``# node_count=<n>`` is honoured as a declaration when ``expected_nodes``
    is not given; any other ``#`` line is a comment. With
    ``on_out_of_range="drop"`` edges touching ids beyond the declared node
    count are discarded and tallied in ``graph.dropped_edges``.
    """
    if on_out_of_range not in ("error", "drop"):
        raise ValueError(f"on_out_of_range must be 'error' or 'drop', not {on_out_of_range!r}")
    path = Path(edge_file)
    declared = expected_nodes
    src, dst = [], []
    dropped = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                if expected_nodes is None and line.startswith(NODE_COUNT_DIRECTIVE):
                    declared = _parse_int(line[len(NODE_COUNT_DIRECTIVE):].strip(), lineno, path)
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ParseError(f"expected 'src<TAB>dst', got {line!r}", lineno, path)
            u = _parse_int(parts[0], lineno, path)
            v = _parse_int(parts[1], lineno, path)
            if declared is not None and (u >= declared or v >= declared):
                if on_out_of_range == "drop":
                    dropped += 1
                    continue
                raise NodeRangeError(
                    f"{path}:{lineno}: edge {u}->{v} references a node >= {declared}"
                )
            src.append(u)
            dst.append(v)
    if declared is None:
        declared = max(max(src, default=-1), max(dst, default=-1)) + 1
    if dropped:
        log.warning("dropped %d edges pointing outside %d nodes", dropped, declared)
    return WebGraph.from_edges(src, dst, declared, dropped_edges=dropped)


def write_edges(graph, path):
    """Serialize ``graph`` as an edge file that :func:`ingest_edges` round-trips."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{NODE_COUNT_DIRECTIVE}{graph.node_count}\n")
        src = graph.edge_sources()
        for u, v in zip(src.tolist(), graph.targets.tolist()):
            fh.write(f"{u}\t{v}\n")


def save_graph_cache(graph, path):
    with open(path, "wb") as fh:
        fh.write(CACHE_MAGIC)
        fh.write(struct.pack("<qq", graph.node_count, graph.edge_count))
        fh.write(graph.offsets.astype("<i8").tobytes())
        fh.write(graph.targets.astype("<i8").tobytes())


def load_graph_cache(path):
    data = Path(path).read_bytes()
    if not data.startswith(CACHE_MAGIC):
        raise ParseError("not a graph cache (bad magic bytes)", path=path)
    head = len(CACHE_MAGIC)
    if len(data) < head + 16:
        raise ParseError("truncated graph cache header", path=path)
    node_count, edge_count = struct.unpack_from("<qq", data, head)
    body = head + 16
    expected = body + 8 * (node_count + 1 + edge_count)
    if len(data) != expected:
        raise ParseError(f"graph cache size {len(data)} != expected {expected}", path=path)
    offsets = np.frombuffer(data, dtype="<i8", count=node_count + 1, offset=body)
    targets = np.frombuffer(data, dtype="<i8", count=edge_count, offset=body + 8 * (node_count + 1))
    if offsets[0] != 0 or offsets[-1] != edge_count or np.any(np.diff(offsets) < 0):
        raise ParseError("graph cache offsets are inconsistent", path=path)
    return WebGraph(node_count, offsets.astype(np.int64), targets.astype(np.int64))


def ingest_documents(doc_file, node_count=None):
    """Load a JSON-lines document file (keys ``id``, ``url``, ``text``)."""
    path = Path(doc_file)
    docs = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON record: {exc.msg}", lineno, path) from None
            if not isinstance(rec, dict):
                raise ParseError("record is not an object", lineno, path)
            doc_id, url, text = rec.get("id"), rec.get("url"), rec.get("text")
            if isinstance(doc_id, bool) or not isinstance(doc_id, int) or doc_id < 0:
                raise ParseError(f"field 'id' must be a non-negative integer, got {doc_id!r}", lineno, path)
            if not isinstance(url, str) or not isinstance(text, str):
                raise ParseError("fields 'url' and 'text' must be strings", lineno, path)
            if doc_id in docs:
                raise IngestionError(f"{path}:{lineno}: duplicate document id {doc_id}")
            if node_count is not None and doc_id >= node_count:
                raise NodeRangeError(f"{path}:{lineno}: document id {doc_id} >= node count {node_count}")
            docs[doc_id] = Document(doc_id, url, text)
    return DocumentStore(docs, node_count)


def write_documents(store, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for doc_id in store.ids():
            doc = store.documents[doc_id]
            fh.write(json.dumps({"id": doc.id, "url": doc.url, "text": doc.text}, ensure_ascii=False))
            fh.write("\n")
