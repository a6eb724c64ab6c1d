"""Pluggable pretraining-influence scorers.

Four policies share one entry point, :func:`score_document`:

* ``classifier``: logistic model over hashed word n-grams (fastText-style
  bag of n-grams, trained with plain SGD)
* ``table``: externally computed scores loaded from ``id<TAB>score`` files
* ``indegree``: global indegree from the graph snapshot
* ``random``: counter-based hash of ``(seed, node)``, so independent of query order
"""

from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from crawlsim.errors import (
    ContentMissingError,
    ParseError,
    ScoreLookupError,
    TrainingError,
)
from crawlsim.graph_store import indegree

log = logging.getLogger(__name__)

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
MASK64 = 0xFFFFFFFFFFFFFFFF

CLASSIFIER_MAGIC = "CW4L-CLF v1"


def fnv1a_64(data: bytes) -> int:
    h = FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & MASK64
    return h


@functools.lru_cache(maxsize=1 << 20)
def _gram_hash(gram: str) -> int:
    return fnv1a_64(gram.encode("utf-8"))


def _check_hash_dim(hash_dim):
    if hash_dim < 1 or hash_dim & (hash_dim - 1):
        raise ValueError(f"hash_dim must be a power of two, got {hash_dim}")


def featurize(text: str, hash_dim: int, ngram_orders=(1, 2)) -> dict[int, float]:
    """Hashed bag of word n-grams, L2-normalized.

    Tokens come from whitespace splitting after lowercasing; an n-gram is its
    tokens joined by single spaces, hashed with 64-bit FNV-1a and masked to
    ``hash_dim - 1``. Colliding n-grams add up.
    """
    _check_hash_dim(hash_dim)
    orders = sorted(set(ngram_orders))
    if not orders or orders[0] < 1:
        raise ValueError("ngram_orders must be a non-empty set of positive integers")
    mask = hash_dim - 1
    tokens = text.lower().split()
    counts: dict[int, float] = {}
    for k in orders:
        if k == 1:
            grams = tokens
        else:
            grams = [" ".join(tokens[i:i + k]) for i in range(len(tokens) - k + 1)]
        for gram in grams:
            idx = _gram_hash(gram) & mask
            counts[idx] = counts.get(idx, 0.0) + 1.0
    if not counts:
        return counts
    norm = math.sqrt(math.fsum(c * c for c in counts.values()))
    return {i: c / norm for i, c in counts.items()}


def sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def _as_arrays(features):
    idx = np.fromiter(features.keys(), dtype=np.int64, count=len(features))
    val = np.fromiter(features.values(), dtype=np.float64, count=len(features))
    return idx, val


@dataclass
class TrainedClassifier:
    hash_dim: int
    weights: np.ndarray
    bias: float = 0.0
    ngram_orders: tuple = (1, 2)
    epochs: int = 0
    learning_rate: float = 0.0
    seed: int = 0

    def __post_init__(self):
        _check_hash_dim(self.hash_dim)
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.ngram_orders = tuple(sorted(set(self.ngram_orders)))
        if self.weights.shape != (self.hash_dim,):
            raise ValueError(f"weights must have length hash_dim={self.hash_dim}")
        if not np.all(np.isfinite(self.weights)) or not math.isfinite(self.bias):
            raise ValueError("classifier parameters must be finite")

    def decision(self, text: str) -> float:
        feats = featurize(text, self.hash_dim, self.ngram_orders)
        if not feats:
            return float(self.bias)
        idx, val = _as_arrays(feats)
        return float(np.dot(self.weights[idx], val)) + float(self.bias)

    def score_text(self, text: str) -> float:
        return sigmoid(self.decision(text))

    def save(self, path):
        orders = ",".join(str(k) for k in self.ngram_orders)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(
                f"{CLASSIFIER_MAGIC} hash_dim={self.hash_dim} orders={orders} bias={self.bias!r}"
                f" epochs={self.epochs} learning_rate={self.learning_rate!r} seed={self.seed}\n"
            )
            fh.write("\n".join(repr(w) for w in self.weights.tolist()))
            fh.write("\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().rstrip("\n")
            if not header.startswith(CLASSIFIER_MAGIC):
                raise ParseError("missing classifier header", 1, path)
            fields = {}
            for item in header[len(CLASSIFIER_MAGIC):].split():
                key, sep, value = item.partition("=")
                if not sep:
                    raise ParseError(f"bad header field {item!r}", 1, path)
                fields[key] = value
            try:
                hash_dim = int(fields["hash_dim"])
                orders = tuple(int(k) for k in fields["orders"].split(","))
                bias = float(fields["bias"])
            except (KeyError, ValueError) as exc:
                raise ParseError(f"bad classifier header: {exc}", 1, path) from None
            weights = []
            for lineno, line in enumerate(fh, 2):
                line = line.strip()
                if not line:
                    continue
                try:
                    weights.append(float(line))
                except ValueError:
                    raise ParseError(f"bad weight {line!r}", lineno, path) from None
        if len(weights) != hash_dim:
            raise ParseError(f"expected {hash_dim} weights, found {len(weights)}", path=path)
        return cls(
            hash_dim=hash_dim,
            weights=np.array(weights),
            bias=bias,
            ngram_orders=orders,
            epochs=int(fields.get("epochs", 0)),
            learning_rate=float(fields.get("learning_rate", 0.0)),
            seed=int(fields.get("seed", 0)),
        )


@dataclass(frozen=True)
class TrainConfig:
    hash_dim: int = 1 << 18
    ngram_orders: tuple = (1, 2)
    epochs: int = 5
    learning_rate: float = 0.5
    seed: int = 0


def _texts(items):
    return [d.text if hasattr(d, "text") else str(d) for d in items]


def train_classifier(positives, negatives, config=None) -> TrainedClassifier:
    """Logistic regression over hashed n-grams with plain per-example SGD.

    Accepts :class:`Document` objects or raw strings. The visiting order is a
    fixed per-epoch permutation drawn from ``config.seed``.
    """
    config = config or TrainConfig()
    if not positives or not negatives:
        raise TrainingError("both positive and negative example lists must be non-empty")
    _check_hash_dim(config.hash_dim)
    examples = []
    for label, texts in ((1.0, _texts(positives)), (0.0, _texts(negatives))):
        for text in texts:
            idx, val = _as_arrays(featurize(text, config.hash_dim, config.ngram_orders))
            examples.append((idx, val, label))
    weights = np.zeros(config.hash_dim, dtype=np.float64)
    bias = 0.0
    lr = config.learning_rate
    rng = np.random.default_rng(config.seed)
    for _ in range(config.epochs):
        for i in rng.permutation(len(examples)).tolist():
            idx, val, label = examples[i]
            z = float(np.dot(weights[idx], val)) + bias
            grad = sigmoid(z) - label
            weights[idx] -= lr * grad * val
            bias -= lr * grad
    return TrainedClassifier(
        hash_dim=config.hash_dim,
        weights=weights,
        bias=bias,
        ngram_orders=config.ngram_orders,
        epochs=config.epochs,
        learning_rate=config.learning_rate,
        seed=config.seed,
    )


class ScoreTable:
    """Node id to score map for externally computed scores."""

    def __init__(self, scores=None, duplicate_count=0):
        self.scores: dict[int, float] = dict(scores or {})
        self.duplicate_count = duplicate_count

    @classmethod
    def from_array(cls, values):
        return cls({i: float(v) for i, v in enumerate(np.asarray(values, dtype=np.float64).tolist())})

    def __len__(self):
        return len(self.scores)

    def __contains__(self, u):
        return u in self.scores

    def lookup(self, u):
        try:
            return self.scores[u]
        except KeyError:
            raise ScoreLookupError(f"score table has no entry for node {u}") from None

    def ids(self):
        return sorted(self.scores)

    def write(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for u in self.ids():
                fh.write(f"{u}\t{self.scores[u]!r}\n")


def load_score_table(path) -> ScoreTable:
    scores = {}
    dups = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ParseError(f"expected 'id<TAB>score', got {line!r}", lineno, path)
            try:
                u = int(parts[0])
                s = float(parts[1])
            except ValueError:
                raise ParseError(f"unparsable score line {line!r}", lineno, path) from None
            if u < 0 or not math.isfinite(s):
                raise ParseError(f"invalid id or non-finite score in {line!r}", lineno, path)
            if u in scores:
                dups += 1
            scores[u] = s
    if dups:
        log.warning("%s: %d duplicate ids, last value kept", path, dups)
    return ScoreTable(scores, duplicate_count=dups)


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def random_score(seed: int, u: int) -> float:
    """Uniform in [0, 1), a pure function of ``(seed, u)``."""
    x = _splitmix64((_splitmix64(seed & MASK64) ^ (u & MASK64)) & MASK64)
    return (x >> 11) * (1.0 / (1 << 53))


KINDS = ("classifier", "table", "indegree", "random")


@dataclass
class ScorerPolicy:
    kind: str
    classifier: TrainedClassifier | None = None
    table: ScoreTable | None = None
    graph: Any = None
    seed: int | None = None
    _memo: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown scorer kind {self.kind!r}; expected one of {KINDS}")
        payloads = {
            "classifier": self.classifier,
            "table": self.table,
            "indegree": self.graph,
            "random": self.seed,
        }
        present = [k for k, p in payloads.items() if p is not None]
        if present != [self.kind]:
            raise ValueError(f"{self.kind} policy needs exactly its own payload, got {present}")

    @classmethod
    def from_classifier(cls, clf):
        return cls("classifier", classifier=clf)

    @classmethod
    def from_table(cls, table):
        return cls("table", table=table)

    @classmethod
    def from_indegree(cls, graph):
        return cls("indegree", graph=graph)

    @classmethod
    def from_seed(cls, seed):
        return cls("random", seed=int(seed))

    @property
    def needs_content(self):
        return self.kind == "classifier"


def score_document(policy: ScorerPolicy, u: int, doc=None) -> float:
    kind = policy.kind
    if kind == "classifier":
        if doc is None:
            raise ContentMissingError(f"classifier needs content for node {u}")
        memo = policy._memo
        s = memo.get(doc)
        if s is None:
            s = memo[doc] = policy.classifier.score_text(doc.text)
        return s
    if kind == "table":
        return policy.table.lookup(u)
    if kind == "indegree":
        return float(indegree(policy.graph, u))
    return random_score(policy.seed, u)
