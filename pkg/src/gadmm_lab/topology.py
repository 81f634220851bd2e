"""Bipartite head/tail communication graphs.

Edges are stored oriented ``(head, tail)`` once the partition is known;
for a graph that is not bipartite under the given partition the offending
edges are kept as given, and :func:`validate_bipartite` reports ``False``.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import InvalidArgumentError


@dataclass(frozen=True)
class Topology:
    num_workers: int
    edges: tuple[tuple[int, int], ...]
    heads: frozenset
    tails: frozenset
    kind: str = "bipartite"
    order: tuple[int, ...] | None = None  # chain position -> worker
    epoch: int = 0

    def __post_init__(self):
        heads, tails = frozenset(self.heads), frozenset(self.tails)
        everyone = frozenset(range(self.num_workers))
        assert heads | tails == everyone, "head/tail sets must cover every worker"
        assert not heads & tails, "head and tail sets must be disjoint"
        oriented = []
        for u, v in self.edges:
            if not (0 <= u < self.num_workers and 0 <= v < self.num_workers) or u == v:
                raise InvalidArgumentError(f"bad edge ({u}, {v})")
            oriented.append((v, u) if (v in heads and u in tails) else (u, v))
        object.__setattr__(self, "heads", heads)
        object.__setattr__(self, "tails", tails)
        object.__setattr__(self, "edges", tuple(oriented))

    @cached_property
    def neighbors(self) -> tuple[tuple[int, ...], ...]:
        adj = [[] for _ in range(self.num_workers)]
        for u, v in self.edges:
            adj[u].append(v)
            adj[v].append(u)
        return tuple(tuple(sorted(a)) for a in adj)

    @cached_property
    def degrees(self) -> np.ndarray:
        return np.array([len(a) for a in self.neighbors])

    @cached_property
    def incident(self) -> tuple[tuple[tuple[int, int], ...], ...]:
        """Per worker: ``(edge_index, sign)`` with sign +1 at the head end."""
        inc = [[] for _ in range(self.num_workers)]
        for e, (h, t) in enumerate(self.edges):
            inc[h].append((e, 1))
            inc[t].append((e, -1))
        return tuple(tuple(x) for x in inc)

    @cached_property
    def incidence(self) -> np.ndarray:
        """Signed worker-by-edge incidence matrix (+1 head, -1 tail)."""
        B = np.zeros((self.num_workers, len(self.edges)))
        for e, (h, t) in enumerate(self.edges):
            B[h, e] = 1.0
            B[t, e] = -1.0
        return B

    def head_list(self) -> list[int]:
        return sorted(self.heads)

    def tail_list(self) -> list[int]:
        return sorted(self.tails)

    def edge_list_text(self) -> str:
        return "".join(f"{u} {v}\n" for u, v in self.edges)


def build_chain(num_workers: int) -> Topology:
    """Path graph ``0-1-...-(N-1)``; even positions are heads."""
    if num_workers < 2:
        raise InvalidArgumentError("a chain needs at least 2 workers")
    return chain_from_order(range(num_workers))


def chain_from_order(order, epoch: int = 0) -> Topology:
    order = tuple(int(w) for w in order)
    n = len(order)
    if n < 2 or sorted(order) != list(range(n)):
        raise InvalidArgumentError("order must be a permutation of at least 2 workers")
    edges = tuple((order[i], order[i + 1]) for i in range(n - 1))
    return Topology(n, edges, frozenset(order[0::2]), frozenset(order[1::2]),
                    kind="chain", order=order, epoch=epoch)


def random_bipartite(num_workers: int, rng: np.random.Generator, num_edges: int | None = None,
                     epoch: int = 0) -> Topology:
    """Connected random bipartite graph with a balanced head/tail split.

    A random spanning tree across the two groups guarantees connectivity;
    further cross edges are drawn uniformly until ``num_edges`` is reached
    (default ``2 (N - 1)``, capped at the complete bipartite graph).
    """
    if num_workers < 2:
        raise InvalidArgumentError("need at least 2 workers")
    perm = rng.permutation(num_workers)
    heads = sorted(perm[: (num_workers + 1) // 2].tolist())
    tails = sorted(perm[(num_workers + 1) // 2:].tolist())
    max_edges = len(heads) * len(tails)
    if num_edges is None:
        num_edges = 2 * (num_workers - 1)
    num_edges = min(max(num_edges, num_workers - 1), max_edges)

    edges = set()
    seen_h, seen_t = [heads[0]], []
    rest = [(w, "t") for w in tails] + [(w, "h") for w in heads[1:]]
    order = rng.permutation(len(rest))
    pending = [rest[i] for i in order]
    # attach each new vertex to an already-placed vertex of the other group
    while pending:
        for i, (w, side) in enumerate(pending):
            pool = seen_h if side == "t" else seen_t
            if pool:
                other = pool[rng.integers(len(pool))]
                edges.add((other, w) if side == "t" else (w, other))
                (seen_t if side == "t" else seen_h).append(w)
                pending.pop(i)
                break
    candidates = [(h, t) for h in heads for t in tails if (h, t) not in edges]
    extra = num_edges - len(edges)
    if extra > 0:
        pick = rng.choice(len(candidates), size=extra, replace=False)
        edges.update(candidates[i] for i in sorted(pick))
    return Topology(num_workers, tuple(sorted(edges)), frozenset(heads), frozenset(tails),
                    kind="bipartite", epoch=epoch)


def validate_bipartite(topology: Topology) -> bool:
    """True iff every edge joins a head to a tail and the graph is connected."""
    heads, tails = topology.heads, topology.tails
    if heads | tails != frozenset(range(topology.num_workers)) or heads & tails:
        return False
    for u, v in topology.edges:
        if not ((u in heads and v in tails) or (u in tails and v in heads)):
            return False
    return is_connected(topology)


def is_connected(topology: Topology) -> bool:
    n = topology.num_workers
    if n == 0:
        return False
    seen = {0}
    queue = deque([0])
    while queue:
        u = queue.popleft()
        for v in topology.neighbors[u]:
            if v not in seen:
                seen.add(v)
                queue.append(v)
    return len(seen) == n


def reshuffle(topology: Topology, rng: np.random.Generator, period_marker: int = 0) -> Topology:
    """Fresh topology of the same structure class over the same workers.

    Chains become a chain over a uniformly random worker permutation (heads
    follow the new even positions); general bipartite graphs are redrawn
    with the same edge count.
    """
    if topology.kind == "chain":
        return chain_from_order(rng.permutation(topology.num_workers), epoch=period_marker)
    return random_bipartite(topology.num_workers, rng, num_edges=len(topology.edges), epoch=period_marker)


def build_topology(kind: str, num_workers: int, rng: np.random.Generator | None = None) -> Topology:
    if kind == "chain":
        return build_chain(num_workers)
    if kind == "random-bipartite":
        return random_bipartite(num_workers, rng if rng is not None else np.random.default_rng(0))
    raise InvalidArgumentError(f"unknown topology {kind!r}")
