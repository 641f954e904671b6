"""Directed communication graphs, reduced graphs, and achievability checks.

A reduced graph is obtained from the communication graph by deleting the
faulty nodes (with incident links) and then, per surviving node, up to
``b`` further incoming links.  Reduced graphs capture which messages can
actually influence an agent once trimming discards extremes; consensus
with scalar inputs is achievable iff every reduced graph of every
admissible fault set has exactly one source component.

Enumerating reduced graphs is exponential, so the achievability checks
work on an exact reformulation instead: a reduced graph with two source
components exists iff two disjoint nonempty node sets can each have all
their external good incoming links (at most ``b`` per member) dropped.
Such "isolatable" sets are closed under union, which makes the search a
cheap bitmask sweep; brute-force enumeration backs this up in the tests.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import BudgetExceededError, ConfigError

ENUMERATION_BUDGET = 10**6
SUBSET_SEARCH_BUDGET = 10**7


@dataclass(frozen=True)
class Topology:
    """Directed graph on nodes 0..n-1; edge (j, i) means j sends to i."""

    n: int
    edges: frozenset

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError("topology needs at least one node")
        edges = frozenset((int(s), int(d)) for s, d in self.edges)
        for s, d in edges:
            if s == d:
                raise ConfigError(f"self-loop {s}->{d} not allowed (self term is implicit)")
            if not (0 <= s < self.n and 0 <= d < self.n):
                raise ConfigError(f"edge {s}->{d} out of range for {self.n} nodes")
        object.__setattr__(self, "edges", edges)

    @staticmethod
    def complete_graph(n: int) -> "Topology":
        return Topology(n, frozenset((s, d) for s in range(n) for d in range(n) if s != d))

    @staticmethod
    def from_text(text: str) -> "Topology":
        """Parse the edge-list format: header ``n <count>`` then ``src dst``
        lines, or the single-line shorthand ``complete <n>``."""
        lines = [ln.split("#", 1)[0].strip() for ln in text.splitlines()]
        lines = [ln for ln in lines if ln]
        if not lines:
            raise ConfigError("empty graph description")
        head = lines[0].split()
        if head[0] == "complete":
            if len(head) != 2 or len(lines) > 1:
                raise ConfigError("shorthand is a single line: complete <n>")
            return Topology.complete_graph(int(head[1]))
        if head[0] != "n" or len(head) != 2:
            raise ConfigError("graph header must be 'n <count>' or 'complete <n>'")
        n = int(head[1])
        edges = set()
        for ln in lines[1:]:
            parts = ln.split()
            if len(parts) != 2:
                raise ConfigError(f"bad edge line {ln!r}, expected 'src dst'")
            edges.add((int(parts[0]), int(parts[1])))
        return Topology(n, frozenset(edges))

    @property
    def complete(self) -> bool:
        return len(self.edges) == self.n * (self.n - 1)

    @cached_property
    def _in_lists(self) -> dict:
        inc = {v: [] for v in range(self.n)}
        for s, d in self.edges:
            inc[d].append(s)
        return {v: tuple(sorted(ns)) for v, ns in inc.items()}

    @cached_property
    def _out_lists(self) -> dict:
        out = {v: [] for v in range(self.n)}
        for s, d in self.edges:
            out[s].append(d)
        return {v: tuple(sorted(ns)) for v, ns in out.items()}

    def in_neighbors(self, v: int) -> tuple:
        return self._in_lists[v]

    def out_neighbors(self, v: int) -> tuple:
        return self._out_lists[v]


@dataclass(frozen=True)
class ReducedGraph:
    """Surviving good nodes plus the incoming links that were kept."""

    nodes: frozenset
    edges: frozenset


@dataclass(frozen=True)
class SourceComponentReport:
    """SCC decomposition; sources have no incoming links from outside."""

    components: tuple
    source_components: tuple


def _strongly_connected_components(nodes, out_edges) -> list:
    """Kosaraju's algorithm, iterative; components sorted by smallest member."""
    order = []
    visited = set()
    for root in sorted(nodes):
        if root in visited:
            continue
        visited.add(root)
        stack = [(root, iter(out_edges.get(root, ())))]
        while stack:
            v, it = stack[-1]
            for w in it:
                if w not in visited:
                    visited.add(w)
                    stack.append((w, iter(out_edges.get(w, ()))))
                    break
            else:
                order.append(v)
                stack.pop()

    reverse = {v: [] for v in nodes}
    for v, outs in out_edges.items():
        for w in outs:
            reverse[w].append(v)

    components = []
    assigned = set()
    for root in reversed(order):
        if root in assigned:
            continue
        comp = []
        stack = [root]
        assigned.add(root)
        while stack:
            v = stack.pop()
            comp.append(v)
            for w in reverse[v]:
                if w not in assigned:
                    assigned.add(w)
                    stack.append(w)
        components.append(tuple(sorted(comp)))
    return sorted(components, key=lambda c: c[0])


def source_components(g: ReducedGraph) -> SourceComponentReport:
    """SCCs of a reduced graph and the subset with no external incoming links."""
    out_edges = {v: [] for v in g.nodes}
    for s, d in g.edges:
        out_edges[s].append(d)
    comps = _strongly_connected_components(g.nodes, out_edges)
    membership = {}
    for idx, comp in enumerate(comps):
        for v in comp:
            membership[v] = idx
    has_external_in = [False] * len(comps)
    for s, d in g.edges:
        if membership[s] != membership[d]:
            has_external_in[membership[d]] = True
    sources = tuple(c for i, c in enumerate(comps) if not has_external_in[i])
    return SourceComponentReport(tuple(comps), sources)


def _induced_good_edges(topo: Topology, good: set) -> list:
    return [(s, d) for (s, d) in topo.edges if s in good and d in good]


def count_reduced_graphs(topo: Topology, fault_set, b: int) -> int:
    """Exact number of reduced graphs for one fault set (closed form).

    Per-node drop choices are independent and address disjoint edge sets,
    so distinct choices always give distinct graphs and the count is the
    product over nodes of sum_{j=0}^{min(b, indeg)} C(indeg, j).
    """
    fault_set = set(fault_set)
    _validate_fault_set(topo, fault_set, b)
    good = set(range(topo.n)) - fault_set
    total = 1
    for v in sorted(good):
        indeg = sum(1 for s in topo.in_neighbors(v) if s in good)
        total *= sum(math.comb(indeg, j) for j in range(min(b, indeg) + 1))
    return total


def enumerate_reduced_graphs(topo: Topology, fault_set, b: int, budget: int = ENUMERATION_BUDGET):
    """Yield every distinct reduced graph for one fault set exactly once.

    Raises BudgetExceededError up front when the exact count (see
    :func:`count_reduced_graphs`) exceeds ``budget``; callers must then
    fall back to :func:`sample_reduced_graphs`.
    """
    fault_set = set(fault_set)
    total = count_reduced_graphs(topo, fault_set, b)
    if total > budget:
        raise BudgetExceededError(f"{total} reduced graphs exceed budget {budget}")
    good = frozenset(range(topo.n)) - fault_set
    induced = _induced_good_edges(topo, good)
    per_node_options = []
    for v in sorted(good):
        incoming = tuple((s, v) for s in topo.in_neighbors(v) if s in good)
        options = []
        for j in range(min(b, len(incoming)) + 1):
            options.extend(itertools.combinations(incoming, j))
        per_node_options.append(options)
    induced_set = frozenset(induced)
    for drops in itertools.product(*per_node_options):
        dropped = frozenset(e for d in drops for e in d)
        yield ReducedGraph(good, induced_set - dropped)


def sample_reduced_graphs(
    topo: Topology, fault_set, b: int, count: int, rng: np.random.Generator
) -> list:
    """Approximate mode: uniform draws over per-node link-drop choices.

    Sampling is with replacement; use only when exact enumeration exceeds
    its budget, and treat any statistic derived from the result as an
    estimate.
    """
    fault_set = set(fault_set)
    _validate_fault_set(topo, fault_set, b)
    good = frozenset(range(topo.n)) - fault_set
    induced = frozenset(_induced_good_edges(topo, good))
    node_info = []
    for v in sorted(good):
        incoming = tuple((s, v) for s in topo.in_neighbors(v) if s in good)
        sizes = np.array(
            [math.comb(len(incoming), j) for j in range(min(b, len(incoming)) + 1)],
            dtype=np.float64,
        )
        node_info.append((incoming, sizes / sizes.sum()))
    out = []
    for _ in range(count):
        dropped = set()
        for incoming, probs in node_info:
            j = int(rng.choice(len(probs), p=probs))
            if j:
                picks = rng.choice(len(incoming), size=j, replace=False)
                dropped.update(incoming[p] for p in picks)
        out.append(ReducedGraph(good, induced - dropped))
    return out


def _validate_fault_set(topo: Topology, fault_set: set, b: int) -> None:
    if b < 0:
        raise ConfigError("fault budget b must be nonnegative")
    if len(fault_set) > b:
        raise ConfigError(f"fault set of size {len(fault_set)} exceeds budget b={b}")
    for v in fault_set:
        if not (0 <= v < topo.n):
            raise ConfigError(f"fault id {v} out of range")


def admissible_fault_sets(topo: Topology, b: int):
    """All subsets of nodes with size at most b, smallest first."""
    nodes = range(topo.n)
    for size in range(min(b, topo.n - 1) + 1):
        yield from (frozenset(c) for c in itertools.combinations(nodes, size))


def _good_in_masks(topo: Topology, good_sorted: list) -> list:
    index = {v: i for i, v in enumerate(good_sorted)}
    masks = [0] * len(good_sorted)
    for s, d in topo.edges:
        if s in index and d in index:
            masks[index[d]] |= 1 << index[s]
    return masks


def _is_isolatable(mask: int, in_masks: list, b: int) -> bool:
    """A set is isolatable when each member has at most b good incoming
    links from outside the set, so a drop profile can cut it off."""
    m = mask
    while m:
        low = m & -m
        v = low.bit_length() - 1
        if (in_masks[v] & ~mask).bit_count() > b:
            return False
        m ^= low
    return True


def _largest_isolatable_subset(mask: int, in_masks: list, b: int) -> int:
    """Greatest isolatable subset of ``mask`` (isolatable sets are closed
    under union, so peeling violators converges to it)."""
    changed = True
    while changed and mask:
        changed = False
        m = mask
        while m:
            low = m & -m
            v = low.bit_length() - 1
            if (in_masks[v] & ~mask).bit_count() > b:
                mask ^= low
                changed = True
            m ^= low
    return mask


def _is_induced_complete(in_masks: list) -> bool:
    full = (1 << len(in_masks)) - 1
    return all(in_masks[v] == full ^ (1 << v) for v in range(len(in_masks)))


def _has_disjoint_isolatable_pair(
    in_masks: list, b: int, budget: int = SUBSET_SEARCH_BUDGET
) -> bool:
    phi = len(in_masks)
    if phi <= 1:
        return False
    if _is_induced_complete(in_masks):
        # every member of S sees the phi - |S| outsiders, so S is
        # isolatable iff |S| >= phi - b; two disjoint such sets fit iff
        # 2 (phi - b) <= phi
        return 2 * (phi - b) <= phi
    if 1 << phi > budget:
        raise BudgetExceededError(
            f"isolatable-subset search over 2^{phi} subsets exceeds budget {budget}"
        )
    full = (1 << phi) - 1
    for s in range(1, full):
        if _is_isolatable(s, in_masks, b):
            if _largest_isolatable_subset(full & ~s, in_masks, b):
                return True
    return False


def check_consensus_achievable(
    topo: Topology, b: int, budget: int = SUBSET_SEARCH_BUDGET
) -> bool:
    """Whether every reduced graph of every fault set of size <= b has
    exactly one source component.

    A reduced graph has two or more source components iff two disjoint
    nonempty isolatable sets exist (each source component is closed, and
    conversely a closed set can be cut off by a valid drop profile and
    then contains a source component).  The bitmask search below decides
    that exactly, without materializing any reduced graph.
    """
    work = 0
    for fault_set in admissible_fault_sets(topo, b):
        good_sorted = sorted(set(range(topo.n)) - fault_set)
        if len(good_sorted) <= 1:
            continue
        in_masks = _good_in_masks(topo, good_sorted)
        if not _is_induced_complete(in_masks):
            work += 1 << len(good_sorted)
            if work > budget:
                raise BudgetExceededError(
                    f"isolatable-subset search over {work} subsets exceeds budget {budget}"
                )
        if _has_disjoint_isolatable_pair(in_masks, b, budget):
            return False
    return True


def isolatable_avoiding(topo: Topology, fault_set, b: int, avoid) -> frozenset:
    """Largest isolatable good set disjoint from ``avoid`` (empty if none).

    Nonempty output means some reduced graph confines its source component
    to nodes outside ``avoid``; used by the incomplete-graph support check.
    """
    good_sorted = sorted(set(range(topo.n)) - set(fault_set))
    in_masks = _good_in_masks(topo, good_sorted)
    index = {v: i for i, v in enumerate(good_sorted)}
    mask = 0
    for v in good_sorted:
        if v not in avoid:
            mask |= 1 << index[v]
    best = _largest_isolatable_subset(mask, in_masks, b)
    return frozenset(good_sorted[i] for i in range(len(good_sorted)) if best >> i & 1)


def has_multiple_source_components(topo: Topology, fault_set, b: int) -> bool:
    """Whether some reduced graph for this fault set has >= 2 source components."""
    good_sorted = sorted(set(range(topo.n)) - set(fault_set))
    if len(good_sorted) <= 1:
        return False
    return _has_disjoint_isolatable_pair(_good_in_masks(topo, good_sorted), b)


def _max_flow(n_nodes: int, capacity: dict, source: int, sink: int) -> int:
    """Edmonds-Karp on an adjacency-dict residual network."""
    adjacency = {v: [] for v in range(n_nodes)}
    residual = {}
    for (u, v), c in capacity.items():
        residual[(u, v)] = c
        residual.setdefault((v, u), 0)
        adjacency[u].append(v)
        adjacency[v].append(u)
    flow = 0
    while True:
        parent = {source: None}
        queue = [source]
        while queue and sink not in parent:
            u = queue.pop(0)
            for v in adjacency[u]:
                if v not in parent and residual.get((u, v), 0) > 0:
                    parent[v] = u
                    queue.append(v)
        if sink not in parent:
            return flow
        bottleneck = None
        v = sink
        while parent[v] is not None:
            u = parent[v]
            r = residual[(u, v)]
            bottleneck = r if bottleneck is None else min(bottleneck, r)
            v = u
        v = sink
        while parent[v] is not None:
            u = parent[v]
            residual[(u, v)] -= bottleneck
            residual[(v, u)] += bottleneck
            v = u
        flow += bottleneck


def node_connectivity(topo: Topology) -> int:
    """Directed vertex connectivity via unit-node-capacity max flow.

    Each node splits into an in-half and an out-half joined by a unit
    capacity arc; the minimum over non-adjacent ordered pairs of the max
    flow equals the fewest node deletions disconnecting some pair.  With
    no non-adjacent pair (complete graph) the value is n - 1 by
    convention.
    """
    n = topo.n
    if n <= 1:
        return 0
    inf = n
    base_capacity = {}
    for v in range(n):
        base_capacity[(2 * v, 2 * v + 1)] = 1  # v_in -> v_out
    for s, d in topo.edges:
        base_capacity[(2 * s + 1, 2 * d)] = inf  # s_out -> d_in
    best = None
    for s in range(n):
        for t in range(n):
            if s == t or (s, t) in topo.edges:
                continue
            flow = _max_flow(2 * n, dict(base_capacity), 2 * s + 1, 2 * t)
            if best is None or flow < best:
                best = flow
                if best == 0:
                    return 0
    return n - 1 if best is None else best
