"""Tree decompositions: parsing/validation, a min-degree heuristic,
binarization, the vertex-tripling separation transform, and the per-bag
derived sets (bag-subgraph edges, sources/terminals, glue sets) consumed by
all three solvers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping

from .errors import InputError, InvariantViolation, TdFormatError
from .graph import Dag, DistSpec, SubgraphRef, classify_subgraph_vertices


@dataclass(frozen=True)
class TreeDecomposition:
    """Bags indexed 0..b-1 forming a tree; bag 0 is the root."""

    bags: tuple[frozenset[int], ...]
    tree_edges: tuple[tuple[int, int], ...]
    root: int = 0

    def __post_init__(self) -> None:
        b = len(self.bags)
        if b < 1:
            raise TdFormatError("decomposition needs at least one bag")
        for i, j in self.tree_edges:
            if not (0 <= i < b and 0 <= j < b) or i == j:
                raise TdFormatError(f"bad tree edge ({i},{j})")
        if not (0 <= self.root < b):
            raise TdFormatError("root index out of range")

    @property
    def b(self) -> int:
        return len(self.bags)

    @property
    def width(self) -> int:
        return max(len(bag) for bag in self.bags) - 1

    @cached_property
    def adjacency(self) -> tuple[tuple[int, ...], ...]:
        adj: list[set[int]] = [set() for _ in self.bags]
        for i, j in self.tree_edges:
            adj[i].add(j)
            adj[j].add(i)
        return tuple(tuple(sorted(a)) for a in adj)

    def is_tree(self) -> bool:
        if len(self.tree_edges) != self.b - 1:
            return False
        seen = {self.root}
        stack = [self.root]
        while stack:
            for j in self.adjacency[stack.pop()]:
                if j not in seen:
                    seen.add(j)
                    stack.append(j)
        return len(seen) == self.b

    def rooted(self) -> tuple[tuple[int | None, ...], tuple[tuple[int, ...], ...], tuple[int, ...]]:
        """(parent, children, depth) arrays for the tree rooted at ``root``."""
        parent: list[int | None] = [None] * self.b
        children: list[list[int]] = [[] for _ in range(self.b)]
        depth = [0] * self.b
        seen = {self.root}
        stack = [self.root]
        while stack:
            i = stack.pop()
            for j in self.adjacency[i]:
                if j not in seen:
                    seen.add(j)
                    parent[j] = i
                    children[i].append(j)
                    depth[j] = depth[i] + 1
                    stack.append(j)
        if len(seen) != self.b:
            raise TdFormatError("disconnected tree decomposition")
        return tuple(parent), tuple(tuple(sorted(c)) for c in children), tuple(depth)

    def relabel(self, mapping: Mapping[int, int]) -> "TreeDecomposition":
        """Map bag contents through ``mapping`` (e.g. file labels to internal ids)."""
        new_bags = []
        for bag in self.bags:
            out = set()
            for v in bag:
                if v not in mapping:
                    raise TdFormatError(f"decomposition mentions unknown vertex {v}")
                out.add(mapping[v])
            new_bags.append(frozenset(out))
        return TreeDecomposition(tuple(new_bags), self.tree_edges, self.root)


def parse_td(text: str) -> TreeDecomposition:
    """Parse a PACE-2017-style .td file.

    Header ``s td <b> <width+1> <n>``, bag lines ``b <i> <v...>`` with 1-based
    bag indices, remaining lines are tree edges ``<i> <j>``; ``c`` starts a
    comment.  Bag contents keep the file's vertex labels; call ``relabel``
    with the graph's label map before validating.
    """
    header: tuple[int, int, int] | None = None
    bags: dict[int, frozenset[int]] = {}
    edges: list[tuple[int, int]] = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("c"):
            continue
        parts = line.split()
        if parts[0] == "s":
            if header is not None:
                raise TdFormatError("duplicate 's td' header")
            if len(parts) != 5 or parts[1] != "td":
                raise TdFormatError(f"malformed header: {line!r}")
            try:
                header = (int(parts[2]), int(parts[3]), int(parts[4]))
            except ValueError:
                raise TdFormatError(f"malformed header: {line!r}")
        elif parts[0] == "b":
            if header is None:
                raise TdFormatError("bag line before 's td' header")
            try:
                idx = int(parts[1])
                verts = frozenset(int(p) for p in parts[2:])
            except ValueError:
                raise TdFormatError(f"malformed bag line: {line!r}")
            if not (1 <= idx <= header[0]):
                raise TdFormatError(f"bag index {idx} out of range 1..{header[0]}")
            if idx in bags:
                raise TdFormatError(f"duplicate bag index {idx}")
            bags[idx] = verts
        else:
            if header is None:
                raise TdFormatError("tree edge before 's td' header")
            if len(parts) != 2:
                raise TdFormatError(f"malformed tree edge line: {line!r}")
            try:
                i, j = int(parts[0]), int(parts[1])
            except ValueError:
                raise TdFormatError(f"malformed tree edge line: {line!r}")
            if not (1 <= i <= header[0] and 1 <= j <= header[0]):
                raise TdFormatError(f"bag index out of range in edge {i} {j}")
            edges.append((i - 1, j - 1))
    if header is None:
        raise TdFormatError("missing 's td' header")
    b = header[0]
    bag_list = [bags.get(i + 1, frozenset()) for i in range(b)]
    for i in range(b):
        if (i + 1) not in bags:
            raise TdFormatError(f"bag {i + 1} not declared")
    td = TreeDecomposition(tuple(bag_list), tuple(edges))
    if not td.is_tree():
        raise TdFormatError("bag graph is not a connected tree")
    return td


def format_td(td: TreeDecomposition, n: int) -> str:
    lines = [f"s td {td.b} {td.width + 1} {n}"]
    for i, bag in enumerate(td.bags):
        lines.append("b " + " ".join([str(i + 1)] + [str(v) for v in sorted(bag)]))
    for i, j in td.tree_edges:
        lines.append(f"{i + 1} {j + 1}")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class TdReport:
    valid: bool
    condition: str | None = None
    witness: object = None
    message: str = "ok"


def validate_td(g: Dag, td: TreeDecomposition) -> TdReport:
    """Check the three decomposition conditions against the underlying
    undirected graph of ``g``; report the first violation with a witness."""
    if not td.is_tree():
        return TdReport(False, "tree", None, "bag graph is not a connected tree")
    for bag in td.bags:
        for v in bag:
            if not (0 <= v < g.n):
                return TdReport(False, "vertices", v, f"bag vertex {v} outside graph")
    covered = frozenset().union(*td.bags) if td.bags else frozenset()
    missing = frozenset(range(g.n)) - covered
    if missing:
        v = min(missing)
        return TdReport(False, "condition1", v, f"vertex {v} in no bag")
    for u, v, _ in g.edges:
        if not any(u in bag and v in bag for bag in td.bags):
            return TdReport(False, "condition2", (u, v), f"edge ({u},{v}) uncovered")
    # condition 3: occurrences of each vertex form a subtree
    for v in range(g.n):
        occ = [i for i, bag in enumerate(td.bags) if v in bag]
        if not occ:
            continue
        occ_set = set(occ)
        seen = {occ[0]}
        stack = [occ[0]]
        while stack:
            i = stack.pop()
            for j in td.adjacency[i]:
                if j in occ_set and j not in seen:
                    seen.add(j)
                    stack.append(j)
        if len(seen) != len(occ):
            return TdReport(False, "condition3", v, f"occurrence set of vertex {v} disconnected")
    return TdReport(True)


def heuristic_td(g: Dag) -> TreeDecomposition:
    """Min-degree elimination-ordering decomposition of the underlying
    undirected graph.  Always valid; width not guaranteed minimal."""
    adj: dict[int, set[int]] = {v: set() for v in range(g.n)}
    for u, v, _ in g.edges:
        adj[u].add(v)
        adj[v].add(u)
    remaining = set(range(g.n))
    elim_bags: list[tuple[int, frozenset[int]]] = []  # (eliminated vertex, bag)
    elim_pos: dict[int, int] = {}
    while remaining:
        v = min(remaining, key=lambda w: (len(adj[w]), w))
        nbrs = frozenset(adj[v])
        elim_pos[v] = len(elim_bags)
        elim_bags.append((v, frozenset({v}) | nbrs))
        for a in nbrs:
            adj[a].discard(v)
        for a in nbrs:
            for b in nbrs:
                if a < b:
                    adj[a].add(b)
                    adj[b].add(a)
        remaining.discard(v)
    b = len(elim_bags)
    edges: list[tuple[int, int]] = []
    for i, (v, bag) in enumerate(elim_bags):
        later = [w for w in bag - {v}]
        if later:
            j = min(elim_pos[w] for w in later)
            edges.append((i, j))
        elif i != b - 1:
            edges.append((i, b - 1))  # keep the tree connected for isolated remnants
    # re-root at the last-eliminated bag and renumber so the root is index 0
    order = [b - 1] + [i for i in range(b - 1)]
    newpos = {old: new for new, old in enumerate(order)}
    bags = tuple(elim_bags[old][1] for old in order)
    td = TreeDecomposition(bags, tuple((newpos[i], newpos[j]) for i, j in edges))
    report = validate_td(g, td)
    if not report.valid:
        raise InvariantViolation(f"heuristic decomposition invalid: {report.message}")
    return td


def binarize_td(td: TreeDecomposition) -> TreeDecomposition:
    """Duplicate-bag chain construction: every bag ends up with at most two
    children; width unchanged; idempotent on already-binary input."""
    parent, children, _ = td.rooted()
    if all(len(c) <= 2 for c in children):
        return td
    bags = list(td.bags)
    new_children: dict[int, list[int]] = {i: list(children[i]) for i in range(td.b)}
    for i in range(td.b):
        kids = list(children[i])
        cur = i
        while len(kids) > 2:
            first = kids.pop(0)
            dup = len(bags)
            bags.append(td.bags[i])
            new_children[dup] = []
            new_children[cur] = [first, dup]
            cur = dup
        if cur != i:
            new_children[cur] = kids
    edges = []
    for p, kids in new_children.items():
        for c in kids:
            edges.append((p, c))
    out = TreeDecomposition(tuple(bags), tuple(edges), td.root)
    _, out_children, _ = out.rooted()
    if any(len(c) > 2 for c in out_children):
        raise InvariantViolation("binarize failed to bound children at 2")
    return out


@dataclass(frozen=True)
class VertexTriple:
    minus: int
    star: int
    plus: int


def separate(g: Dag, td: TreeDecomposition) -> tuple[Dag, TreeDecomposition, dict[int, VertexTriple]]:
    """Build the separated graph/decomposition pair.

    Every vertex v becomes v-, v*, v+ joined by two zero-length edges; the
    incoming edges of v move to v-; an outgoing edge of v leaves from v* when
    its head lies in v's topmost bag and from v+ when the head only appears in
    strictly deeper bags.  Bags are tripled in place, so the width grows from
    w to 3w+2 and the longest path distribution is unchanged for x >= 0.
    """
    parent, children, depth = td.rooted()
    topmost: dict[int, int] = {}
    for v in range(g.n):
        occ = [i for i, bag in enumerate(td.bags) if v in bag]
        if not occ:
            raise InputError(f"vertex {v} missing from every bag; validate the decomposition first")
        best = min(occ, key=lambda i: depth[i])
        ties = [i for i in occ if depth[i] == depth[best]]
        if len(ties) != 1:
            raise InputError(f"occurrence set of vertex {v} is disconnected")
        topmost[v] = best

    def triple(v: int) -> VertexTriple:
        return VertexTriple(3 * v, 3 * v + 1, 3 * v + 2)

    vmap = {v: triple(v) for v in range(g.n)}
    edges: list[tuple[int, int, DistSpec]] = []
    for v in range(g.n):
        t = vmap[v]
        edges.append((t.minus, t.star, DistSpec.zero()))
        edges.append((t.star, t.plus, DistSpec.zero()))
    for u, v, dist in g.edges:
        tail = vmap[u].star if v in td.bags[topmost[u]] else vmap[u].plus
        edges.append((tail, vmap[v].minus, dist))
    edges.sort(key=lambda e: (e[0], e[1]))
    g_star = Dag(n=3 * g.n, edges=tuple(edges))

    bags = tuple(
        frozenset().union(*({t.minus, t.star, t.plus} for t in (vmap[v] for v in bag)))
        if bag
        else frozenset()
        for bag in td.bags
    )
    td_star = TreeDecomposition(bags, td.tree_edges, td.root)
    return g_star, td_star, vmap


def _classify(g: Dag, vertices: Iterable[int], edges: Iterable[tuple[int, int]]):
    return classify_subgraph_vertices(g, SubgraphRef(frozenset(vertices), frozenset(edges)))


@dataclass(frozen=True)
class DecompositionContext:
    """Binarized, separated decomposition with every per-bag derived set the
    solvers need.  Construction verifies the structural invariants instead
    of assuming them."""

    dag: Dag
    td: TreeDecomposition
    parent: tuple[int | None, ...]
    children: tuple[tuple[int, ...], ...]
    depth: tuple[int, ...]
    post_order: tuple[int, ...]
    bag_edges: tuple[frozenset[tuple[int, int]], ...]  # E(G_i)
    S: tuple[frozenset[int], ...]
    T: tuple[frozenset[int], ...]
    I: tuple[frozenset[int], ...]
    S_U: tuple[frozenset[int], ...]
    T_U: tuple[frozenset[int], ...]
    V_U: tuple[frozenset[int], ...]
    S_D: tuple[frozenset[int], ...]
    T_D: tuple[frozenset[int], ...]
    I_D: tuple[frozenset[int], ...]
    S_prime: tuple[frozenset[int], ...]
    T_prime: tuple[frozenset[int], ...]
    J: tuple[frozenset[int], ...]
    subtree_vertices: tuple[int, ...]

    @property
    def b(self) -> int:
        return self.td.b

    def kept(self, i: int) -> frozenset[int]:
        """Variables that stay active after merging at bag i."""
        h = self.parent[i]
        if h is None:
            return frozenset()
        return (self.S_D[i] | self.T_D[i]) & self.td.bags[h]

    def frozen_sources(self, i: int) -> frozenset[int]:
        h = self.parent[i]
        bag_h = self.td.bags[h] if h is not None else frozenset()
        return self.S_D[i] - bag_h

    def frozen_terminals(self, i: int) -> frozenset[int]:
        h = self.parent[i]
        bag_h = self.td.bags[h] if h is not None else frozenset()
        return self.T_D[i] - bag_h


def build_context(g_star: Dag, td_star: TreeDecomposition) -> DecompositionContext:
    """Derive bag-subgraphs by the ancestor-first rule plus all per-bag sets,
    then verify every structural invariant (raises InvariantViolation)."""
    report = validate_td(g_star, td_star)
    if not report.valid:
        raise InputError(f"invalid decomposition: {report.message}")
    parent, children, depth = td_star.rooted()
    if any(len(c) > 2 for c in children):
        raise InputError("decomposition must be binarized first")

    b = td_star.b
    # ancestor-first rule: each edge belongs to the unique topmost bag holding
    # both endpoints
    bag_edges: list[set[tuple[int, int]]] = [set() for _ in range(b)]
    for u, v, _ in g_star.edges:
        occ = [i for i in range(b) if u in td_star.bags[i] and v in td_star.bags[i]]
        if not occ:
            raise InvariantViolation(f"edge ({u},{v}) covered by no bag")
        best = min(occ, key=lambda i: depth[i])
        if sum(1 for i in occ if depth[i] == depth[best]) != 1:
            raise InvariantViolation(f"edge ({u},{v}) has no unique topmost bag")
        bag_edges[best].add((u, v))

    # post-order over the rooted tree (children before parents)
    post: list[int] = []
    stack: list[tuple[int, bool]] = [(td_star.root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            post.append(node)
        else:
            stack.append((node, True))
            for c in reversed(children[node]):
                stack.append((c, False))
    post_order = tuple(post)

    sub_bags: list[set[int]] = [set() for _ in range(b)]  # bag indices in Sub(i)
    for i in post_order:
        sub_bags[i] = {i}
        for c in children[i]:
            sub_bags[i] |= sub_bags[c]

    S: list[frozenset[int]] = [frozenset()] * b
    T: list[frozenset[int]] = [frozenset()] * b
    I: list[frozenset[int]] = [frozenset()] * b
    S_U: list[frozenset[int]] = [frozenset()] * b
    T_U: list[frozenset[int]] = [frozenset()] * b
    V_U: list[frozenset[int]] = [frozenset()] * b
    S_D: list[frozenset[int]] = [frozenset()] * b
    T_D: list[frozenset[int]] = [frozenset()] * b
    I_D: list[frozenset[int]] = [frozenset()] * b
    S_p: list[frozenset[int]] = [frozenset()] * b
    T_p: list[frozenset[int]] = [frozenset()] * b
    J: list[frozenset[int]] = [frozenset()] * b
    subtree_vertices: list[int] = [0] * b

    for i in range(b):
        S[i], T[i], I[i] = _classify(g_star, td_star.bags[i], bag_edges[i])

    for i in range(b):
        sub = sub_bags[i]
        d_vertices = frozenset().union(*(td_star.bags[j] for j in sub))
        d_edges = frozenset().union(*(bag_edges[j] for j in sub))
        S_D[i], T_D[i], I_D[i] = _classify(g_star, d_vertices, d_edges)
        subtree_vertices[i] = len(d_vertices)
        u_bags = sub - {i}
        if u_bags:
            V_U[i] = frozenset().union(*(td_star.bags[j] for j in u_bags))
            u_edges = frozenset().union(*(bag_edges[j] for j in u_bags))
            S_U[i], T_U[i], _ = _classify(g_star, V_U[i], u_edges)
        bag_h = td_star.bags[parent[i]] if parent[i] is not None else frozenset()
        S_p[i] = (S[i] & T_U[i]) - bag_h
        T_p[i] = (T[i] & S_U[i]) - bag_h
        J[i] = S_p[i] | T_p[i]

    ctx = DecompositionContext(
        dag=g_star,
        td=td_star,
        parent=parent,
        children=children,
        depth=depth,
        post_order=post_order,
        bag_edges=tuple(frozenset(e) for e in bag_edges),
        S=tuple(S),
        T=tuple(T),
        I=tuple(I),
        S_U=tuple(S_U),
        T_U=tuple(T_U),
        V_U=tuple(V_U),
        S_D=tuple(S_D),
        T_D=tuple(T_D),
        I_D=tuple(I_D),
        S_prime=tuple(S_p),
        T_prime=tuple(T_p),
        J=tuple(J),
        subtree_vertices=tuple(subtree_vertices),
    )
    _verify_context(ctx)
    return ctx


def _verify_context(ctx: DecompositionContext) -> None:
    g, td = ctx.dag, ctx.td
    b = td.b

    # edge partition
    counted = sum(len(e) for e in ctx.bag_edges)
    union = frozenset().union(*ctx.bag_edges) if b else frozenset()
    if counted != g.m or len(union) != g.m:
        raise InvariantViolation("bag-subgraph edges do not partition E")

    for i in range(b):
        if ctx.S[i] & ctx.T[i]:
            raise InvariantViolation(f"bag {i}: S and T intersect (not separated)")
        if ctx.S_D[i] & ctx.T_D[i]:
            raise InvariantViolation(f"bag {i}: subtree S and T intersect")
        # successor condition of the separated decomposition
        outside = td.bags[i] - ctx.V_U[i]
        for u in ctx.T_prime[i]:
            if any(w in outside for w in g.successors[u]):
                raise InvariantViolation(f"bag {i}: T' successor condition fails at {u}")
        # role sharing between the bag and its uncapped subtree: a vertex can
        # be a source (or terminal) of both, but only as a conditioning
        # variable that stays alive into the parent bag and keeps the same
        # role in the subtree-subgraph
        shared_s = ctx.S[i] & ctx.S_U[i]
        shared_t = ctx.T[i] & ctx.T_U[i]
        bag_h = td.bags[ctx.parent[i]] if ctx.parent[i] is not None else None
        if not shared_s <= ctx.S_D[i] or not shared_t <= ctx.T_D[i]:
            raise InvariantViolation(f"bag {i}: shared role changes in the subtree-subgraph")
        if bag_h is not None and (not shared_s <= bag_h or not shared_t <= bag_h):
            raise InvariantViolation(f"bag {i}: shared role variable leaves scope at the merge")
        # glue containment: every opposed shared role is consumed here
        if (ctx.S[i] & ctx.T_U[i]) - ctx.J[i] or (ctx.T[i] & ctx.S_U[i]) - ctx.J[i]:
            raise InvariantViolation(f"bag {i}: glue variable escapes the merge")
        # the glue set must coincide with the vertices that become internal
        # exactly at this merge
        if ctx.J[i] != ctx.I_D[i] - (ctx.I[i] | _union_I_children(ctx, i)):
            raise InvariantViolation(f"bag {i}: J differs from the new-internal-vertex set")
        # child subtrees may not trade sources for terminals
        kids = ctx.children[i]
        if len(kids) == 2:
            l, r = kids
            if ctx.S_D[l] & ctx.T_D[r] or ctx.T_D[l] & ctx.S_D[r]:
                raise InvariantViolation(f"bag {i}: child subtree roles collide")

    # separation: no edge may connect the parent-bag remainder B_h \ B_i to a
    # strict-descendant remainder B_j \ B_i
    desc: list[set[int]] = [set() for _ in range(b)]
    for i in ctx.post_order:
        for c in ctx.children[i]:
            desc[i] |= desc[c] | {c}
    for i in range(b):
        h = ctx.parent[i]
        if h is None:
            continue
        upper = td.bags[h] - td.bags[i]
        if not upper:
            continue
        for j in desc[i]:
            lower = td.bags[j] - td.bags[i]
            for u in upper:
                for v in lower:
                    if (u, v) in g.edge_pairs or (v, u) in g.edge_pairs:
                        raise InvariantViolation(
                            f"separation fails: edge between {u} (above bag {i}) and {v} (below)"
                        )


def _union_I_children(ctx: DecompositionContext, i: int) -> frozenset[int]:
    kids = ctx.children[i]
    if not kids:
        return frozenset()
    # internal vertices of U_i: classify the union of the child subtrees
    sub_edges = frozenset().union(
        *(ctx.bag_edges[j] for j in _subtree_indices(ctx, i) if j != i)
    )
    if not sub_edges and not ctx.V_U[i]:
        return frozenset()
    _, _, internal = _classify(ctx.dag, ctx.V_U[i], sub_edges)
    return internal


def _subtree_indices(ctx: DecompositionContext, i: int) -> frozenset[int]:
    out = {i}
    stack = [i]
    while stack:
        node = stack.pop()
        for c in ctx.children[node]:
            out.add(c)
            stack.append(c)
    return frozenset(out)


def prepare_context(g: Dag, td: TreeDecomposition | None) -> tuple[DecompositionContext, dict[int, VertexTriple], TreeDecomposition]:
    """Shared solver front end: validate (or synthesize) a decomposition,
    binarize, separate, and build the merge context.

    Returns (context, vertex triple map, binarized pre-separation td).
    """
    if td is None:
        td = heuristic_td(g)
    report = validate_td(g, td)
    if not report.valid:
        raise InputError(f"invalid tree decomposition: {report.message} (condition={report.condition})")
    td_bin = binarize_td(td)
    g_star, td_star, vmap = separate(g, td_bin)
    ctx = build_context(g_star, td_star)
    return ctx, vmap, td_bin
