"""Priority-queue frontier with a visited set.

A node is scored and enqueued at most once: once in ``visited`` it is never
rescored, even after it leaves the queue. Ties on score go to the node that
was enqueued first.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

from crawlsim.errors import ConfigError


@dataclass(frozen=True, order=True)
class ScoredUrl:
    node: int
    score: float
    seq: int


class Frontier:
    def __init__(self, seeds=()):
        seeds = list(seeds)
        visited = set(seeds)
        if len(visited) != len(seeds):
            dup = next(s for i, s in enumerate(seeds) if s in seeds[:i])
            raise ConfigError(f"duplicate seed {dup}")
        self.visited = visited
        self.seed_count = len(seeds)
        self.next_seq = 0
        self._heap = []  # (-score, seq, node)

    def __len__(self):
        return len(self._heap)

    def enqueue_if_new(self, v, score):
        if v in self.visited:
            return False
        self.visited.add(v)
        heapq.heappush(self._heap, (-score, self.next_seq, v))
        self.next_seq += 1
        return True

    def dequeue_top(self, n):
        if n < 1:
            raise ValueError("n must be >= 1")
        heap = self._heap
        out = []
        while heap and len(out) < n:
            out.append(heapq.heappop(heap)[2])
        return out

    def pending(self):
        """Queued entries, best first."""
        return [ScoredUrl(node, -neg, seq) for neg, seq, node in sorted(self._heap)]


def init_frontier(seed_urls):
    return Frontier(seed_urls)


def enqueue_if_new(frontier, v, score):
    return frontier.enqueue_if_new(v, score)


def dequeue_top(frontier, n):
    return frontier.dequeue_top(n)
