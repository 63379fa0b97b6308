"""Combinatorial core: parent sets, networks and rooted trees of networks.

Vertices are 0-based integer indices ``0 .. P-1``. An edge ``(k, l)`` means
``k`` is a parent of ``l`` (lag-1 dependence of ``l`` on ``k``).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np


@dataclass(frozen=True, order=True)
class ParentSet:
    """Canonical (sorted, distinct) parent set of a single target vertex."""

    target: int
    members: tuple[int, ...] = ()

    def __post_init__(self):
        members = tuple(int(m) for m in self.members)
        if len(set(members)) != len(members):
            raise ValueError(f"duplicate parents in {members}")
        object.__setattr__(self, "members", tuple(sorted(members)))

    def __len__(self):
        return len(self.members)

    def __contains__(self, k):
        return k in self.members

    def issubset(self, other: "ParentSet") -> bool:
        return set(self.members) <= set(other.members)

    @property
    def mask(self) -> int:
        return sum(1 << m for m in self.members)


def enumerate_parent_sets(target: int, P: int, d_max: int,
                          allowed: Optional[Iterable[int]] = None) -> list[ParentSet]:
    """All subsets of ``allowed`` with at most ``d_max`` members.

    Ordered by size, then lexicographically, so the empty set is always
    first. This ordering indexes every message and evidence vector.
    """
    if d_max < 0:
        raise ValueError("d_max must be non-negative")
    if allowed is None:
        allowed = range(P)
    pool = sorted(set(int(a) for a in allowed))
    for a in pool:
        if not 0 <= a < P:
            raise ValueError(f"vertex {a} outside 0..{P - 1}")
    out = []
    for size in range(min(d_max, len(pool)) + 1):
        for combo in itertools.combinations(pool, size):
            out.append(ParentSet(target, combo))
    return out


@dataclass(frozen=True)
class Network:
    """A network over ``P`` vertices stored as one parent tuple per target."""

    parents: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        P = len(self.parents)
        canon = []
        for l, pa in enumerate(self.parents):
            pa = tuple(sorted(int(k) for k in pa))
            if len(set(pa)) != len(pa):
                raise ValueError(f"duplicate parent for vertex {l}")
            for k in pa:
                if not 0 <= k < P:
                    raise ValueError(f"parent {k} of vertex {l} outside 0..{P - 1}")
            canon.append(pa)
        object.__setattr__(self, "parents", tuple(canon))

    @property
    def P(self) -> int:
        return len(self.parents)

    @classmethod
    def empty(cls, P: int) -> "Network":
        return cls(tuple(() for _ in range(P)))

    @classmethod
    def complete(cls, P: int, self_edges: bool = True) -> "Network":
        return cls(tuple(tuple(k for k in range(P) if self_edges or k != l)
                         for l in range(P)))

    @classmethod
    def from_edges(cls, P: int, edges: Iterable[tuple[int, int]]) -> "Network":
        parents = [set() for _ in range(P)]
        for k, l in edges:
            if not (0 <= k < P and 0 <= l < P):
                raise ValueError(f"edge {(k, l)} outside 0..{P - 1}")
            parents[l].add(k)
        return cls(tuple(tuple(sorted(pa)) for pa in parents))

    @classmethod
    def from_adjacency(cls, A) -> "Network":
        A = np.asarray(A)
        ks, ls = np.nonzero(A)
        return cls.from_edges(A.shape[0], zip(ks.tolist(), ls.tolist()))

    def parent_set(self, target: int) -> ParentSet:
        return ParentSet(target, self.parents[target])

    def in_degree(self, target: int) -> int:
        return len(self.parents[target])

    def max_in_degree(self) -> int:
        return max((len(pa) for pa in self.parents), default=0)

    def edges(self) -> list[tuple[int, int]]:
        return network_edges(self)

    def edge_set(self) -> frozenset:
        return frozenset(self.edges())

    def n_edges(self) -> int:
        return sum(len(pa) for pa in self.parents)

    def adjacency(self) -> np.ndarray:
        """Binary P x P matrix, row = parent, column = child."""
        A = np.zeros((self.P, self.P), dtype=int)
        for l, pa in enumerate(self.parents):
            A[list(pa), l] = 1
        return A

    def issubset(self, other: "Network") -> bool:
        return self.edge_set() <= other.edge_set()


def network_edges(g: Network) -> list[tuple[int, int]]:
    """Edge list ``(k, l)`` with ``k in pa(l)``, sorted lexicographically."""
    return sorted((k, l) for l, pa in enumerate(g.parents) for k in pa)


class TopologyError(ValueError):
    """Invalid tree specification; ``node`` names the offending node."""

    def __init__(self, kind: str, node, message: str):
        self.kind = kind
        self.node = node
        super().__init__(f"{kind}: {message} (node {node!r})")


@dataclass(frozen=True)
class SltTopology:
    """A rooted tree of network nodes.

    ``parent_of`` maps each non-root node to its parent. ``data`` maps the
    observed nodes to a dataset handle (a path, a key, or the dataset itself);
    nodes absent from ``data`` are latent.
    """

    nodes: tuple[str, ...]
    parent_of: Mapping[str, str]
    data: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(str(n) for n in self.nodes))
        object.__setattr__(self, "parent_of",
                           {str(k): str(v) for k, v in dict(self.parent_of).items()})
        object.__setattr__(self, "data", {str(k): v for k, v in dict(self.data).items()})
        validate_topology(self)

    def __hash__(self):
        return hash((self.nodes, tuple(sorted(self.parent_of.items()))))

    @property
    def root(self) -> str:
        return next(n for n in self.nodes if n not in self.parent_of)

    @property
    def observed(self) -> tuple[str, ...]:
        return tuple(n for n in self.nodes if n in self.data)

    def children(self, node: str) -> list[str]:
        return [n for n in self.nodes if self.parent_of.get(n) == node]

    def edges(self) -> list[tuple[str, str]]:
        return [(self.parent_of[n], n) for n in self.nodes if n in self.parent_of]

    def preorder(self) -> list[str]:
        kids = {n: [] for n in self.nodes}
        for n in self.nodes:
            if n in self.parent_of:
                kids[self.parent_of[n]].append(n)
        order, stack = [], [self.root]
        while stack:
            n = stack.pop()
            order.append(n)
            stack.extend(reversed(kids[n]))
        return order

    def descendants(self, node: str) -> list[str]:
        out, stack = [], list(self.children(node))
        while stack:
            n = stack.pop()
            out.append(n)
            stack.extend(self.children(n))
        return out

    def with_data(self, data: Mapping[str, object]) -> "SltTopology":
        return SltTopology(self.nodes, self.parent_of, data)

    @classmethod
    def from_edges(cls, edges: Sequence[tuple[str, str]], data=None,
                   root: Optional[str] = None) -> "SltTopology":
        nodes = []
        for a, b in edges:
            for n in (a, b):
                if n not in nodes:
                    nodes.append(n)
        if root is not None and root not in nodes:
            nodes.insert(0, root)
        return cls(tuple(nodes), {b: a for a, b in edges}, data or {})

    @classmethod
    def star(cls, centre: str, leaves: Sequence[str], data=None) -> "SltTopology":
        return cls((centre, *leaves), {leaf: centre for leaf in leaves}, data or {})


def validate_topology(t: SltTopology) -> None:
    """Raise :class:`TopologyError` unless the parent links form one rooted tree."""
    seen = set()
    for n in t.nodes:
        if n in seen:
            raise TopologyError("duplicate", n, "node listed twice")
        seen.add(n)
    if not t.nodes:
        raise TopologyError("empty", None, "tree has no nodes")
    for child, parent in t.parent_of.items():
        if child not in seen:
            raise TopologyError("dangling", child, "parent link from unknown node")
        if parent not in seen:
            raise TopologyError("dangling", child, f"parent {parent!r} does not exist")
        if parent == child:
            raise TopologyError("cycle", child, "node is its own parent")
    for n in t.data:
        if n not in seen:
            raise TopologyError("dangling", n, "dataset attached to unknown node")

    # cycles first: a cycle leaves a component with no root
    for start in t.nodes:
        path, n = [start], start
        while n in t.parent_of:
            n = t.parent_of[n]
            if n == start:
                raise TopologyError("cycle", start, "parent links form a cycle")
            if n in path:
                break
            path.append(n)

    roots = [n for n in t.nodes if n not in t.parent_of]
    if len(roots) > 1:
        raise TopologyError("multiple-roots", roots[1],
                            f"nodes {roots} have no parent")
    if not roots:
        raise TopologyError("cycle", t.nodes[0], "no root")
    root = roots[0]
    for n in t.nodes:
        m, steps = n, 0
        while m in t.parent_of:
            m = t.parent_of[m]
            steps += 1
            if steps > len(t.nodes):
                raise TopologyError("disconnected", n, "node not reachable from root")
        if m != root:
            raise TopologyError("disconnected", n, "node not reachable from root")
