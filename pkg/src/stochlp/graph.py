"""DAG data model: parsing, topological order, static longest path,
subgraph source/terminal classification, and small-instance path enumeration.

Vertices are stored 0-based in a topological order (for every edge ``u < v``);
the 1-based labels from the input file are kept in ``Dag.labels``.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import Iterable, Mapping, Sequence

from .errors import (
    CycleError,
    DistributionMismatchError,
    GraphFormatError,
    InputError,
    PathLimitExceeded,
)

NEG_INF = float("-inf")


class DistKind(str, Enum):
    UNIFORM = "uniform"
    EXPONENTIAL = "exp"
    ORACLE = "oracle"
    ZERO = "zero"  # internal: deterministic length 0, introduced by separation


@dataclass(frozen=True)
class DistSpec:
    """Edge length distribution tag.

    ``UNIFORM`` carries a positive integer scale ``a`` (length = a * U[0,1]).
    ``ZERO`` is internal only: an exact point mass at 0.
    """

    kind: DistKind
    scale: int = 1
    name: str = ""

    def __post_init__(self) -> None:
        if self.kind is DistKind.UNIFORM and self.scale < 1:
            raise GraphFormatError(f"uniform scale must be >= 1, got {self.scale}")
        if self.kind is DistKind.ORACLE and not self.name:
            raise GraphFormatError("oracle distribution needs a name")

    @classmethod
    def uniform(cls, a: int) -> "DistSpec":
        return cls(DistKind.UNIFORM, scale=a)

    @classmethod
    def exponential(cls) -> "DistSpec":
        return cls(DistKind.EXPONENTIAL)

    @classmethod
    def oracle(cls, name: str) -> "DistSpec":
        return cls(DistKind.ORACLE, name=name)

    @classmethod
    def zero(cls) -> "DistSpec":
        return cls(DistKind.ZERO)

    def __str__(self) -> str:
        if self.kind is DistKind.UNIFORM:
            return f"uniform {self.scale}"
        if self.kind is DistKind.ORACLE:
            return f"oracle {self.name}"
        return self.kind.value


Edge = tuple[int, int, DistSpec]


@dataclass(frozen=True)
class Dag:
    """Directed acyclic graph with per-edge distribution tags.

    Invariants: edges carry distinct (u, v) pairs with u != v, and vertex ids
    are a topological order (u < v for every edge).
    """

    n: int
    edges: tuple[Edge, ...]
    labels: tuple[int, ...] = ()  # internal id -> label in the source file

    def __post_init__(self) -> None:
        if self.n < 1:
            raise GraphFormatError("graph needs at least one vertex")
        seen: set[tuple[int, int]] = set()
        for u, v, _ in self.edges:
            if not (0 <= u < self.n and 0 <= v < self.n):
                raise GraphFormatError(f"edge ({u},{v}) out of range")
            if u == v:
                raise GraphFormatError(f"self-loop at {u}")
            if u > v:
                raise GraphFormatError("vertex ids are not topological")
            if (u, v) in seen:
                raise GraphFormatError(f"duplicate edge ({u},{v})")
            seen.add((u, v))
        if not self.labels:
            object.__setattr__(self, "labels", tuple(range(1, self.n + 1)))

    @property
    def m(self) -> int:
        return len(self.edges)

    @cached_property
    def edge_pairs(self) -> frozenset[tuple[int, int]]:
        return frozenset((u, v) for u, v, _ in self.edges)

    @cached_property
    def dist_of(self) -> dict[tuple[int, int], DistSpec]:
        return {(u, v): d for u, v, d in self.edges}

    @cached_property
    def successors(self) -> tuple[tuple[int, ...], ...]:
        out: list[list[int]] = [[] for _ in range(self.n)]
        for u, v, _ in self.edges:
            out[u].append(v)
        return tuple(tuple(sorted(s)) for s in out)

    @cached_property
    def predecessors(self) -> tuple[tuple[int, ...], ...]:
        inc: list[list[int]] = [[] for _ in range(self.n)]
        for u, v, _ in self.edges:
            inc[v].append(u)
        return tuple(tuple(sorted(p)) for p in inc)

    @cached_property
    def sources(self) -> frozenset[int]:
        """Vertices with no incoming edge (whole-graph rule)."""
        return frozenset(v for v in range(self.n) if not self.predecessors[v])

    @cached_property
    def terminals(self) -> frozenset[int]:
        """Vertices with no outgoing edge (whole-graph rule)."""
        return frozenset(v for v in range(self.n) if not self.successors[v])

    def kinds(self) -> set[DistKind]:
        return {d.kind for _, _, d in self.edges}

    def require_homogeneous(self, kind: DistKind) -> None:
        extra = self.kinds() - {kind, DistKind.ZERO}
        if extra:
            raise DistributionMismatchError(
                f"distribution mismatch: this solver needs {kind.value} edges, "
                f"found {sorted(k.value for k in extra)}"
            )


@dataclass(frozen=True)
class SubgraphRef:
    """A subgraph of a host Dag: a vertex subset plus an edge subset."""

    vertices: frozenset[int]
    edges: frozenset[tuple[int, int]]

    def __post_init__(self) -> None:
        for u, v in self.edges:
            if u not in self.vertices or v not in self.vertices:
                raise InputError(f"subgraph edge ({u},{v}) has endpoint outside vertex set")


def _strip_comment(line: str) -> str:
    pos = line.find("#")
    return line if pos < 0 else line[:pos]


def parse_graph(text: str) -> Dag:
    """Parse the external graph format.

    First non-comment line is ``n m``; then ``m`` lines ``u v spec`` with
    spec in {``uniform <a>``, ``exp``, ``oracle <name>``}.  ``#`` starts a
    comment.  Vertices are relabeled into a topological order; the original
    1-based labels are recorded in ``Dag.labels``.
    """
    rows = [t.split() for raw in text.splitlines() if (t := _strip_comment(raw).strip())]
    if not rows:
        raise GraphFormatError("empty graph file")
    head = rows[0]
    if len(head) != 2:
        raise GraphFormatError(f"header must be 'n m', got {' '.join(head)!r}")
    try:
        n, m = int(head[0]), int(head[1])
    except ValueError:
        raise GraphFormatError(f"header must be 'n m', got {' '.join(head)!r}")
    if n < 1 or m < 0:
        raise GraphFormatError(f"invalid header n={n} m={m}")
    if len(rows) - 1 != m:
        raise GraphFormatError(f"expected {m} edge lines, found {len(rows) - 1}")

    raw_edges: list[tuple[int, int, DistSpec]] = []
    for row in rows[1:]:
        if len(row) < 3:
            raise GraphFormatError(f"malformed edge line: {' '.join(row)!r}")
        try:
            u, v = int(row[0]), int(row[1])
        except ValueError:
            raise GraphFormatError(f"malformed edge line: {' '.join(row)!r}")
        if not (1 <= u <= n and 1 <= v <= n):
            raise GraphFormatError(f"edge ({u},{v}) out of range 1..{n}")
        if u == v:
            raise GraphFormatError(f"self-loop at vertex {u}")
        tag = row[2]
        if tag == "uniform":
            if len(row) != 4:
                raise GraphFormatError(f"uniform needs one scale argument: {' '.join(row)!r}")
            try:
                a = int(row[3])
            except ValueError:
                raise GraphFormatError(f"non-integer uniform scale: {row[3]!r}")
            if a < 1:
                raise GraphFormatError(f"non-positive uniform scale: {a}")
            dist = DistSpec.uniform(a)
        elif tag == "exp":
            if len(row) != 3:
                raise GraphFormatError(f"exp takes no arguments: {' '.join(row)!r}")
            dist = DistSpec.exponential()
        elif tag == "oracle":
            if len(row) != 4:
                raise GraphFormatError(f"oracle needs a name: {' '.join(row)!r}")
            dist = DistSpec.oracle(row[3])
        else:
            raise GraphFormatError(f"unknown distribution tag: {tag!r}")
        if any(e[0] == u and e[1] == v for e in raw_edges):
            raise GraphFormatError(f"duplicate edge ({u},{v})")
        raw_edges.append((u, v, dist))

    order = _topological_order(n, [(u, v) for u, v, _ in raw_edges])
    pos = {label: i for i, label in enumerate(order)}
    edges = tuple(sorted(((pos[u], pos[v], d) for u, v, d in raw_edges), key=lambda e: (e[0], e[1])))
    return Dag(n=n, edges=edges, labels=tuple(order))


def _topological_order(n: int, pairs: Iterable[tuple[int, int]]) -> list[int]:
    """Deterministic (smallest-label-first) Kahn ordering of labels 1..n."""
    indeg = [0] * (n + 1)
    succ: list[list[int]] = [[] for _ in range(n + 1)]
    for u, v in pairs:
        indeg[v] += 1
        succ[u].append(v)
    heap = [v for v in range(1, n + 1) if indeg[v] == 0]
    heapq.heapify(heap)
    order: list[int] = []
    while heap:
        u = heapq.heappop(heap)
        order.append(u)
        for v in succ[u]:
            indeg[v] -= 1
            if indeg[v] == 0:
                heapq.heappush(heap, v)
    if len(order) != n:
        raise CycleError("cycle detected")
    return order


def longest_path_dp(
    n: int,
    edges: Sequence[tuple[int, int, float]],
    src_offset: Mapping[int, float],
    term_offset: Mapping[int, float],
) -> float:
    """Core DP: max over paths from a source key to a terminal key of
    (sum of edge lengths) - src_offset[s] + term_offset[t].

    Edges must be topologically sorted pairs (u < v).  Returns -inf when no
    source reaches a terminal.
    """
    dist = [NEG_INF] * n
    for s, off in src_offset.items():
        dist[s] = max(dist[s], -off)
    for u, v, w in sorted(edges, key=lambda e: (e[0], e[1])):
        if dist[u] != NEG_INF and dist[u] + w > dist[v]:
            dist[v] = dist[u] + w
    best = NEG_INF
    for t, off in term_offset.items():
        if dist[t] != NEG_INF:
            best = max(best, dist[t] + off)
    return best


def static_longest_path(
    g: Dag,
    lengths: Mapping[tuple[int, int], float] | Sequence[float],
    src_offset: Mapping[int, float] | None = None,
    term_offset: Mapping[int, float] | None = None,
) -> float:
    """Static longest source-terminal path with per-source and per-terminal
    shifts, linear time in the graph size.

    ``lengths`` is either a sequence aligned with ``g.edges`` or a mapping
    keyed by (u, v).  Offsets default to 0 on every whole-graph
    source/terminal.  Returns the -inf sentinel when no source-terminal path
    exists.
    """
    if isinstance(lengths, Mapping):
        wl = [(u, v, float(lengths[(u, v)])) for u, v, _ in g.edges]
    else:
        if len(lengths) != g.m:
            raise InputError(f"expected {g.m} edge lengths, got {len(lengths)}")
        wl = [(u, v, float(w)) for (u, v, _), w in zip(g.edges, lengths)]
    for _, _, w in wl:
        if not math.isfinite(w):
            raise InputError("edge lengths must be finite")
    src = dict(src_offset) if src_offset is not None else {s: 0.0 for s in g.sources}
    term = dict(term_offset) if term_offset is not None else {t: 0.0 for t in g.terminals}
    return longest_path_dp(g.n, wl, src, term)


def classify_subgraph_vertices(
    g: Dag, sub: SubgraphRef
) -> tuple[frozenset[int], frozenset[int], frozenset[int]]:
    """Classify the vertices of a subgraph into (sources, terminals, internals).

    Local criterion equivalent to the path-based definition: v is a source of
    ``sub`` iff it has an outgoing edge in ``sub`` and either no incoming edge
    in ``g`` at all or some incoming edge of ``g`` missing from ``sub``;
    terminals are symmetric.  Vertices with no incident edge in ``sub`` are
    classified as neither.
    """
    for u, v in sub.edges:
        if (u, v) not in g.edge_pairs:
            raise InputError(f"subgraph edge ({u},{v}) not in host graph")
    if not sub.vertices <= frozenset(range(g.n)):
        raise InputError("subgraph vertex outside host graph")

    out_in: dict[int, list[int]] = {v: [0, 0] for v in sub.vertices}
    for u, v in sub.edges:
        out_in[u][0] += 1
        out_in[v][1] += 1

    sources, terminals, internals = set(), set(), set()
    for v in sub.vertices:
        n_out, n_in = out_in[v]
        if n_out == 0 and n_in == 0:
            continue  # no incident edge in sub: neither role
        g_in = g.predecessors[v]
        g_out = g.successors[v]
        in_absent = any((p, v) not in sub.edges for p in g_in)
        out_absent = any((v, s) not in sub.edges for s in g_out)
        is_src = n_out >= 1 and (not g_in or in_absent)
        is_term = n_in >= 1 and (not g_out or out_absent)
        if is_src:
            sources.add(v)
        if is_term:
            terminals.add(v)
        if not is_src and not is_term:
            internals.add(v)
    return frozenset(sources), frozenset(terminals), frozenset(internals)


def enumerate_st_paths(g: Dag, limit: int = 10_000) -> list[tuple[int, ...]]:
    """All source-terminal paths in lexicographic order of vertex sequences.

    Raises PathLimitExceeded as soon as more than ``limit`` paths exist; meant
    for validation oracles on small instances only.
    """
    paths: list[tuple[int, ...]] = []
    stack: list[int] = []

    def walk(v: int) -> None:
        stack.append(v)
        succs = g.successors[v]
        if not succs:
            if len(paths) >= limit:
                raise PathLimitExceeded(f"more than {limit} source-terminal paths")
            paths.append(tuple(stack))
        else:
            for w in succs:
                walk(w)
        stack.pop()

    for s in sorted(g.sources):
        if g.successors[s]:
            walk(s)
    return paths
