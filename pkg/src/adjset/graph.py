"""DAGs over named nodes: reachability, d-separation and adjustment-set checks.

Node identifiers are strings mapped once to dense indices; every set used
internally is an ``int`` bitmask over those indices.  Public functions take
and return ``frozenset`` objects of node names.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional, Sequence, Union

from .errors import CycleError, InputError, ResourceError
from .subsets import canonical_subsets

NodeLike = Union[str, Iterable[str]]

ENDPOINT = "endpoint"
COLLIDER = "collider"
NON_COLLIDER = "non-collider"

DEFAULT_ENUMERATION_CAP = 20


def iter_bits(mask: int) -> Iterator[int]:
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


def as_nodeset(nodes: Optional[NodeLike]) -> frozenset:
    """Accept a single name, any iterable of names, or ``None`` (empty)."""
    if nodes is None:
        return frozenset()
    if isinstance(nodes, str):
        return frozenset([nodes])
    return frozenset(nodes)


class Dag:
    """Immutable directed acyclic graph with an observed/latent marking.

    Parameters
    ----------
    nodes:
        Node identifiers in the order that defines canonical tie-breaking.
    edges:
        ``(parent, child)`` pairs.  Endpoints must be declared nodes.
    latent:
        Nodes that are not observed.  Latent nodes take part in every graph
        query; only discovery rules are restricted to observed nodes.
    """

    __slots__ = ("_nodes", "_index", "_parents", "_children", "_edges", "_observed_mask", "_topo")

    def __init__(self, nodes: Iterable[str], edges: Iterable[tuple] = (), latent: Iterable[str] = ()):
        nodes = tuple(nodes)
        index = {}
        for n in nodes:
            if not isinstance(n, str) or not n:
                raise InputError(f"node identifiers must be non-empty strings, got {n!r}")
            if n in index:
                raise InputError(f"duplicate node {n!r}")
            index[n] = len(index)
        parents = [0] * len(nodes)
        children = [0] * len(nodes)
        edge_list = []
        for edge in edges:
            try:
                a, b = edge
            except (TypeError, ValueError):
                raise InputError(f"edge must be a (parent, child) pair, got {edge!r}") from None
            for n in (a, b):
                if n not in index:
                    raise InputError(f"edge {a} -> {b} uses undeclared node {n!r}")
            i, j = index[a], index[b]
            if i == j:
                raise InputError(f"self-loop on {a!r}")
            if parents[j] >> i & 1:
                raise InputError(f"duplicate edge {a} -> {b}")
            parents[j] |= 1 << i
            children[i] |= 1 << j
            edge_list.append((i, j))
        latent = as_nodeset(latent)
        for n in latent:
            if n not in index:
                raise InputError(f"latent node {n!r} is not declared")
        self._nodes = nodes
        self._index = index
        self._parents = tuple(parents)
        self._children = tuple(children)
        self._edges = tuple(sorted(edge_list))
        self._observed_mask = ((1 << len(nodes)) - 1) & ~self._mask_unchecked(latent)
        self._topo = self._toposort()

    @classmethod
    def from_edges(cls, edges: Iterable[tuple], latent: Iterable[str] = (), nodes: Iterable[str] = ()) -> "Dag":
        """Build a DAG whose node order is ``nodes`` followed by edge endpoints in order of appearance."""
        edges = list(edges)
        order = dict.fromkeys(nodes)
        for a, b in edges:
            order.setdefault(a)
            order.setdefault(b)
        for n in as_nodeset(latent):
            order.setdefault(n)
        return cls(order, edges, latent)

    def _toposort(self) -> tuple:
        indeg = [bin(p).count("1") for p in self._parents]
        queue = deque(i for i, d in enumerate(indeg) if d == 0)
        order = []
        while queue:
            i = queue.popleft()
            order.append(i)
            for c in iter_bits(self._children[i]):
                indeg[c] -= 1
                if indeg[c] == 0:
                    queue.append(c)
        if len(order) != len(self._nodes):
            raise CycleError(self._find_cycle(set(range(len(self._nodes))) - set(order)))
        return tuple(order)

    def _find_cycle(self, remaining: set) -> list:
        # every node left over by Kahn's algorithm has a parent that is also left over
        start = next(iter(sorted(remaining)))
        walk, pos = [], {}
        v = start
        while v not in pos:
            pos[v] = len(walk)
            walk.append(v)
            v = next(p for p in iter_bits(self._parents[v]) if p in remaining)
        cycle = walk[pos[v]:]
        cycle.reverse()
        return [self._nodes[i] for i in cycle + [cycle[0]]]

    # -- index/mask conversion -------------------------------------------------

    def _mask_unchecked(self, names: Iterable[str]) -> int:
        m = 0
        for n in names:
            m |= 1 << self._index[n]
        return m

    def mask(self, names: Optional[NodeLike]) -> int:
        m = 0
        for n in as_nodeset(names):
            try:
                m |= 1 << self._index[n]
            except KeyError:
                raise InputError(f"unknown node {n!r}") from None
        return m

    def names(self, mask: int) -> frozenset:
        return frozenset(self._nodes[i] for i in iter_bits(mask))

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise InputError(f"unknown node {name!r}") from None

    def sort_key(self, name: str) -> int:
        return self._index[name]

    def ordered(self, names: Iterable[str]) -> list:
        """``names`` sorted in canonical (declaration) order."""
        return sorted(names, key=self.index)

    # -- accessors -------------------------------------------------------------

    @property
    def nodes(self) -> tuple:
        return self._nodes

    @property
    def edges(self) -> tuple:
        return tuple((self._nodes[i], self._nodes[j]) for i, j in self._edges)

    @property
    def observed(self) -> frozenset:
        return self.names(self._observed_mask)

    @property
    def latent(self) -> frozenset:
        return self.names(((1 << len(self._nodes)) - 1) & ~self._observed_mask)

    def ordered_observed(self) -> list:
        return [n for i, n in enumerate(self._nodes) if self._observed_mask >> i & 1]

    def topological_order(self) -> list:
        return [self._nodes[i] for i in self._topo]

    def parents(self, node: str) -> frozenset:
        return self.names(self._parents[self.index(node)])

    def children(self, node: str) -> frozenset:
        return self.names(self._children[self.index(node)])

    def has_edge(self, a: str, b: str) -> bool:
        return bool(self._children[self.index(a)] >> self.index(b) & 1)

    def __contains__(self, node) -> bool:
        return node in self._index

    def __len__(self) -> int:
        return len(self._nodes)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dag):
            return NotImplemented
        return (
            self._nodes == other._nodes
            and set(self.edges) == set(other.edges)
            and self.latent == other.latent
        )

    def __hash__(self) -> int:
        return hash((self._nodes, frozenset(self.edges), self.latent))

    def __repr__(self) -> str:
        edges = ", ".join(f"{a}->{b}" for a, b in self.edges)
        lat = f", latent={sorted(self.latent)}" if self.latent else ""
        return f"Dag([{edges}]{lat})"

    # -- mask-level closures ---------------------------------------------------

    def _closure(self, mask: int, step: Sequence[int], avoid: int = 0) -> int:
        result = frontier = mask
        while frontier:
            nxt = 0
            for i in iter_bits(frontier):
                nxt |= step[i]
            frontier = nxt & ~result & ~avoid
            result |= frontier
        return result

    def _anc(self, mask: int) -> int:
        return self._closure(mask, self._parents)

    def _desc(self, mask: int) -> int:
        return self._closure(mask, self._children)


@dataclass(frozen=True)
class TierKnowledge:
    """Ordered partition of variables; earlier tiers causally precede later ones."""

    tiers: tuple

    def __init__(self, tiers: Iterable[Iterable[str]] = ()):
        tiers = tuple(as_nodeset(t) for t in tiers)
        seen = set()
        for t in tiers:
            overlap = seen & t
            if overlap:
                raise InputError(f"node(s) {sorted(overlap)} appear in more than one tier")
            seen |= t
        object.__setattr__(self, "tiers", tiers)

    @property
    def nodes(self) -> frozenset:
        return frozenset().union(*self.tiers)

    def tier_of(self, node: str) -> int:
        for i, t in enumerate(self.tiers):
            if node in t:
                return i
        raise InputError(f"node {node!r} is not in any tier")

    def precedes(self, earlier: NodeLike, later: NodeLike, strict: bool = True) -> bool:
        """True if every node of ``earlier`` sits in a tier before every node of ``later``.

        With ``strict=False`` equal tiers are allowed (used for treatments
        that share a tier but come with a user-supplied ordering).
        """
        earlier, later = as_nodeset(earlier), as_nodeset(later)
        if not earlier or not later:
            return True
        hi = max(self.tier_of(n) for n in earlier)
        lo = min(self.tier_of(n) for n in later)
        return hi < lo if strict else hi <= lo

    def __len__(self) -> int:
        return len(self.tiers)


@dataclass(frozen=True)
class PathWitness:
    nodes: tuple
    roles: tuple

    def __str__(self) -> str:
        return " ".join(self.nodes)


# -- validation helpers --------------------------------------------------------


def _disjoint(dag: Dag, **sets: frozenset) -> dict:
    masks = {k: dag.mask(v) for k, v in sets.items()}
    names = list(masks)
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            common = masks[a] & masks[b]
            if common:
                raise InputError(f"{a} and {b} overlap on {sorted(dag.names(common))}")
    return masks


# -- ancestral relations -------------------------------------------------------


def ancestors(dag: Dag, s: NodeLike) -> frozenset:
    """All nodes with a directed path (possibly empty) into ``s``."""
    return dag.names(dag._anc(dag.mask(s)))


def descendants(dag: Dag, s: NodeLike) -> frozenset:
    """All nodes reachable from ``s`` by a directed path (possibly empty)."""
    return dag.names(dag._desc(dag.mask(s)))


# -- d-separation --------------------------------------------------------------

_UP, _DOWN = 0, 1


def _connected(parents, children, sources: int, cond: int, active: int, into_only: bool = False) -> int:
    """Nodes reachable from ``sources`` along walks that are open given ``cond``.

    ``_UP`` states were entered from a child (moving against an edge), ``_DOWN``
    states from a parent.  A collider passes the walk on iff it is in
    ``active`` (the ancestors of ``cond``).  With ``into_only`` the walk must
    leave each source through an incoming edge and may never re-enter a source.
    """
    seen = [0, 0]
    reached = 0
    stack = []
    blocked = 0
    if into_only:
        blocked = sources
        for s in iter_bits(sources):
            for p in iter_bits(parents[s] & ~blocked):
                stack.append((p, _UP))
    else:
        stack.extend((s, _UP) for s in iter_bits(sources))
    while stack:
        v, d = stack.pop()
        bit = 1 << v
        if seen[d] & bit:
            continue
        seen[d] |= bit
        in_cond = cond & bit
        if not in_cond:
            reached |= bit
        if d == _UP:
            if not in_cond:
                for p in iter_bits(parents[v] & ~blocked):
                    stack.append((p, _UP))
                for c in iter_bits(children[v] & ~blocked):
                    stack.append((c, _DOWN))
        else:
            if not in_cond:
                for c in iter_bits(children[v] & ~blocked):
                    stack.append((c, _DOWN))
            if active & bit:
                for p in iter_bits(parents[v] & ~blocked):
                    stack.append((p, _UP))
    return reached


def _dsep_masks(dag: Dag, x: int, y: int, z: int) -> bool:
    reached = _connected(dag._parents, dag._children, x, z, dag._anc(z))
    return not reached & y


def d_separated(dag: Dag, x: NodeLike, y: NodeLike, z: NodeLike = ()) -> bool:
    """True iff every path between ``x`` and ``y`` is blocked given ``z``."""
    x, y, z = as_nodeset(x), as_nodeset(y), as_nodeset(z)
    if not x or not y:
        raise InputError("x and y must be non-empty")
    m = _disjoint(dag, x=x, y=y, z=z)
    return _dsep_masks(dag, m["x"], m["y"], m["z"])


def _roles_for(dag: Dag, path: Sequence[int]) -> tuple:
    roles = [ENDPOINT]
    for k in range(1, len(path) - 1):
        u, v, w = path[k - 1], path[k], path[k + 1]
        collider = dag._parents[v] >> u & 1 and dag._parents[v] >> w & 1
        roles.append(COLLIDER if collider else NON_COLLIDER)
    if len(path) > 1:
        roles.append(ENDPOINT)
    return tuple(roles)


def find_open_path(dag: Dag, x: NodeLike, y: NodeLike, z: NodeLike = ()) -> Optional[PathWitness]:
    """Return a shortest path between ``x`` and ``y`` that is open given ``z``, if any.

    Breadth-first over simple paths; ties are broken by canonical node order.
    Meant for diagnostics and small graphs.
    """
    x, y, z = as_nodeset(x), as_nodeset(y), as_nodeset(z)
    if not x or not y:
        raise InputError("x and y must be non-empty")
    m = _disjoint(dag, x=x, y=y, z=z)
    if _dsep_masks(dag, m["x"], m["y"], m["z"]):
        return None
    cond, ymask = m["z"], m["y"]
    anc = dag._anc(cond)
    queue = deque((s,) for s in iter_bits(m["x"]))
    while queue:
        path = queue.popleft()
        v = path[-1]
        nbrs = dag._parents[v] | dag._children[v]
        for w in iter_bits(nbrs):
            if w in path:
                continue
            if len(path) > 1:
                u = path[-2]
                collider = dag._parents[v] >> u & 1 and dag._parents[v] >> w & 1
                if collider and not anc >> v & 1:
                    continue
                if not collider and cond >> v & 1:
                    continue
            new = path + (w,)
            if ymask >> w & 1:
                return PathWitness(tuple(dag.nodes[i] for i in new), _roles_for(dag, new))
            queue.append(new)
    raise AssertionError("reachability and path search disagree")  # pragma: no cover


# -- adjustment criteria -------------------------------------------------------


def _causal_nodes(dag: Dag, x: int, y: int) -> int:
    """Non-treatment nodes on proper causal paths from ``x`` to ``y``."""
    reach = 0
    for i in iter_bits(x):
        reach |= dag._children[i]
    from_x = dag._closure(reach & ~x, dag._children, avoid=x)
    to_y = dag._closure(y & ~x, dag._parents, avoid=x)
    return from_x & to_y


def _check_adjustment_inputs(dag: Dag, x, y, z, allow_latent: bool) -> dict:
    x, y, z = as_nodeset(x), as_nodeset(y), as_nodeset(z)
    if not x or not y:
        raise InputError("x and y must be non-empty")
    m = _disjoint(dag, x=x, y=y, z=z)
    if not allow_latent and m["z"] & ~dag._observed_mask:
        raise InputError(f"adjustment set contains latent node(s) {sorted(dag.names(m['z'] & ~dag._observed_mask))}")
    return m


def _is_adjustment_masks(dag: Dag, x: int, y: int, z: int) -> bool:
    cn = _causal_nodes(dag, x, y)
    if z & dag._desc(cn):
        return False
    # proper back-door graph: drop the first edge of every proper causal path
    children = list(dag._children)
    parents = list(dag._parents)
    for i in iter_bits(x):
        cut = children[i] & cn
        if cut:
            children[i] &= ~cut
            for j in iter_bits(cut):
                parents[j] &= ~(1 << i)
    anc = dag._closure(z, parents)
    return not _connected(parents, children, x, z, anc) & y


def is_adjustment_set(dag: Dag, x: NodeLike, y: NodeLike, z: NodeLike = (), allow_latent: bool = False) -> bool:
    """Graphical adjustment criterion for DAGs.

    ``z`` is valid relative to ``(x, y)`` iff it contains no descendant of a
    non-treatment node on a proper causal path from ``x`` to ``y`` and it
    blocks every proper non-causal path from ``x`` to ``y``.  The second
    condition is checked as d-separation in the proper back-door graph.
    """
    m = _check_adjustment_inputs(dag, x, y, z, allow_latent)
    return _is_adjustment_masks(dag, m["x"], m["y"], m["z"])


def is_backdoor_adjustment_set(dag: Dag, x: NodeLike, y: NodeLike, z: NodeLike = (), allow_latent: bool = False) -> bool:
    """Generalised back-door criterion: ``z`` has no descendant of ``x`` and,
    for every treatment, ``z`` plus the other treatments blocks every path
    into that treatment."""
    m = _check_adjustment_inputs(dag, x, y, z, allow_latent)
    xm, ym, zm = m["x"], m["y"], m["z"]
    if zm & dag._desc(xm):
        return False
    for i in iter_bits(xm):
        bit = 1 << i
        cond = zm | (xm & ~bit)
        reached = _connected(dag._parents, dag._children, bit, cond, dag._anc(cond), into_only=True)
        if reached & ym:
            return False
    return True


def enumerate_adjustment_sets(
    dag: Dag, x: NodeLike, y: NodeLike, pool: Optional[NodeLike] = None, cap: int = DEFAULT_ENUMERATION_CAP
) -> list:
    """Every subset of ``pool`` that is an adjustment set, in canonical order.

    ``pool`` defaults to the observed nodes outside ``x`` and ``y``.
    """
    x, y = as_nodeset(x), as_nodeset(y)
    m = _disjoint(dag, x=x, y=y)
    if pool is None:
        pool = dag.observed - x - y
    pool = as_nodeset(pool)
    pm = dag.mask(pool)
    if pm & (m["x"] | m["y"]):
        raise InputError("pool must not contain treatments or outcomes")
    if pm & ~dag._observed_mask:
        raise InputError(f"pool contains latent node(s) {sorted(dag.names(pm & ~dag._observed_mask))}")
    if len(pool) > cap:
        raise ResourceError(f"pool of {len(pool)} nodes exceeds enumeration cap {cap}")
    found = []
    for subset in canonical_subsets([dag.index(n) for n in dag.ordered(pool)]):
        zm = 0
        for i in subset:
            zm |= 1 << i
        if _is_adjustment_masks(dag, m["x"], m["y"], zm):
            found.append(dag.names(zm))
    return found


def consistent_with_tiers(dag: Dag, tiers: TierKnowledge) -> bool:
    """True iff no node is an ancestor of a node in an earlier tier."""
    earlier = 0
    for tier in tiers.tiers:
        tm = dag.mask(tier)
        if earlier and dag._anc(earlier) & tm:
            return False
        earlier |= tm
    return True
