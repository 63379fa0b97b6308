"""Synthetic tree-structured network populations and VAR(1) data.

The generating tree has a root, ``n_children`` internal networks and
``n_leaves`` leaf networks spread over the children. Only the leaves carry
data. Five regimes control how child and leaf edge sets relate to their
parents.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import networkx as nx
import numpy as np

from .likelihood import TimeSeriesDataset
from .netcore import Network, SltTopology

REGIMES = ("disjoint", "weak", "full", "misspecified_tree", "subset_violation")
ROOT = "1"
MAX_IN_DEGREE = 2
OUTSIDE_FRACTION = 0.2
MAX_ATTEMPTS = 1000


def _round(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class RegimeConfig:
    regime: str = "disjoint"
    P: int = 10
    n: int = 60
    rho: float = 0.5
    sigma: float = 1.0
    n_children: int = 2
    n_leaves: int = 10
    series_length: int = 10
    seed: int = 0
    self_edges: bool = True

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ValueError(f"unknown regime {self.regime!r}; choose from {REGIMES}")
        if self.P < 3:
            raise ValueError("P must be at least 3")
        if self.series_length < 2 or self.n % self.series_length:
            raise ValueError("n must be a multiple of series_length >= 2")
        if not 0 <= _round(self.rho * self.P) <= self.P:
            raise ValueError(f"round(rho*P) = {_round(self.rho * self.P)} must lie in 0..P")
        if self.n_children < 1 or self.n_leaves < self.n_children:
            raise ValueError("need at least one child and one leaf per child")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")

    @property
    def leaf_edges(self) -> int:
        return _round(self.rho * self.P)


@dataclass
class GroundTruth:
    topology: SltTopology
    networks: dict[str, Network]
    datasets: dict[str, TimeSeriesDataset]
    inference_topology: Optional[SltTopology] = None
    coefficients: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def leaves(self) -> list[str]:
        return list(self.datasets)


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def _candidates(P: int, self_edges: bool) -> list[tuple[int, int]]:
    return [(k, l) for k in range(P) for l in range(P) if self_edges or k != l]


def _pick(rng, edges, k) -> list[tuple[int, int]]:
    edges = sorted(edges)
    idx = rng.choice(len(edges), size=k, replace=False)
    return [edges[i] for i in sorted(idx)]


def generate_root(P: int, seed=None, self_edges: bool = True) -> Network:
    """Every vertex receives exactly two parents drawn uniformly without replacement."""
    rng = _rng(seed)
    parents = []
    for l in range(P):
        pool = [k for k in range(P) if self_edges or k != l]
        parents.append(tuple(sorted(rng.choice(pool, size=MAX_IN_DEGREE, replace=False).tolist())))
    return Network(tuple(parents))


def _with_outside(rng, inside_pool, P, k, self_edges) -> Network:
    """``k`` edges: ``k - round(0.2k)`` from ``inside_pool`` plus outside edges, in-degree <= 2."""
    n_out = _round(OUTSIDE_FRACTION * k)
    inside = set(inside_pool)
    outside_pool = [e for e in _candidates(P, self_edges) if e not in inside]
    for _ in range(MAX_ATTEMPTS):
        chosen = _pick(rng, inside_pool, k - n_out) + _pick(rng, outside_pool, n_out)
        g = Network.from_edges(P, chosen)
        if g.max_in_degree() <= MAX_IN_DEGREE:
            return g
    raise ValueError(f"could not place {n_out} outside edges within the in-degree cap "
                       f"after {MAX_ATTEMPTS} attempts")


def generate_children(root: Network, regime: str, seed=None, n_children: int = 2,
                      self_edges: bool = True) -> list[Network]:
    """Child networks of ``P`` edges each, related to the root per regime."""
    rng = _rng(seed)
    P = root.P
    edges = root.edges()
    if len(edges) < P:
        raise ValueError("root has fewer than P edges")
    if regime == "disjoint":
        if n_children * P > len(edges):
            raise ValueError("not enough root edges for disjoint children")
        perm = rng.permutation(len(edges))
        return [Network.from_edges(P, [edges[i] for i in perm[c * P:(c + 1) * P]])
                for c in range(n_children)]
    if regime == "full":
        shared = Network.from_edges(P, _pick(rng, edges, P))
        return [shared] * n_children
    if regime == "subset_violation":
        return [_with_outside(rng, edges, P, P, self_edges) for _ in range(n_children)]
    return [Network.from_edges(P, _pick(rng, edges, P)) for _ in range(n_children)]


def generate_leaves(children: list[Network], regime: str, rho: float, n_leaves: int = 10,
                    seed=None, self_edges: bool = True) -> list[list[Network]]:
    """Leaf networks grouped by child; leaves are split as evenly as possible."""
    rng = _rng(seed)
    P = children[0].P
    k = _round(rho * P)
    counts = [n_leaves // len(children) + (c < n_leaves % len(children))
              for c in range(len(children))]
    out = []
    for child, count in zip(children, counts):
        group = []
        for _ in range(count):
            pool = child.edges()
            if regime == "subset_violation":
                group.append(_with_outside(rng, pool, P, k, self_edges))
            else:
                if k > len(pool):
                    raise ValueError(f"cannot draw {k} edges from a parent with {len(pool)}")
                group.append(Network.from_edges(P, _pick(rng, pool, k)))
        out.append(group)
    return out


def _node_ids(n_children: int, counts: list[int]):
    sep = "" if n_children < 10 and max(counts) < 10 else "."
    children = [f"{ROOT}{sep}{c + 1}" for c in range(n_children)]
    leaves = [[f"{children[c]}{sep}{j + 1}" for j in range(counts[c])] for c in range(n_children)]
    return children, leaves


def simulate_var1(g: Network, cfg: RegimeConfig, seed=None) -> tuple[TimeSeriesDataset, np.ndarray]:
    """Linear VAR(1) with +-1 edge weights and one perfect intervention per series.

    Returns the dataset and the ``P x P`` coefficient matrix
    (``B[k, l]`` = effect of ``k`` at t-1 on ``l`` at t).
    """
    rng = _rng(seed)
    P = g.P
    B = np.zeros((P, P))
    for k, l in g.edges():
        B[k, l] = rng.choice([-1.0, 1.0])
    n_series = cfg.n // cfg.series_length
    series, interventions = [], []
    for s in range(n_series):
        target = int(rng.integers(P))
        Y = np.empty((cfg.series_length, P))
        Y[0] = rng.normal(0.0, cfg.sigma, P)
        Y[0, target] = 0.0
        for t in range(1, cfg.series_length):
            Y[t] = Y[t - 1] @ B + rng.normal(0.0, cfg.sigma, P)
            Y[t, target] = 0.0
        series.append(Y)
        interventions.append((str(s + 1), target))
    return TimeSeriesDataset.from_series(series, interventions), B


def random_tree(nodes: list[str], root: str, seed=None) -> SltTopology:
    """Uniform labelled tree over ``nodes`` (Pruefer code), oriented away from ``root``."""
    rng = _rng(seed)
    N = len(nodes)
    if N == 1:
        return SltTopology((root,), {})
    if N == 2:
        other = [n for n in nodes if n != root][0]
        return SltTopology((root, other), {other: root})
    code = rng.integers(N, size=N - 2).tolist()
    t = nx.from_prufer_sequence(code)
    bfs = nx.bfs_predecessors(t, nodes.index(root))
    parent_of = {nodes[c]: nodes[p] for c, p in bfs}
    return SltTopology(tuple(nodes), parent_of)


def inference_topology(truth: GroundTruth, regime: str, seed=None) -> SltTopology:
    data = {n: n for n in truth.datasets}
    if regime != "misspecified_tree":
        return truth.topology.with_data(data)
    return random_tree(list(truth.topology.nodes), truth.topology.root, seed).with_data(data)


def generate_experiment(cfg: RegimeConfig) -> GroundTruth:
    """Root, children, leaves, data and inference tree, all determined by ``cfg.seed``."""
    ss = np.random.SeedSequence(cfg.seed)
    s_root, s_children, s_leaves, s_data, s_tree = ss.spawn(5)
    root = generate_root(cfg.P, np.random.default_rng(s_root), cfg.self_edges)
    children = generate_children(root, cfg.regime, np.random.default_rng(s_children),
                                 cfg.n_children, cfg.self_edges)
    leaves = generate_leaves(children, cfg.regime, cfg.rho, cfg.n_leaves,
                             np.random.default_rng(s_leaves), cfg.self_edges)
    child_ids, leaf_ids = _node_ids(cfg.n_children, [len(g) for g in leaves])

    networks = {ROOT: root}
    parent_of = {}
    for c, cid in enumerate(child_ids):
        networks[cid] = children[c]
        parent_of[cid] = ROOT
        for lid, g in zip(leaf_ids[c], leaves[c]):
            networks[lid] = g
            parent_of[lid] = cid
    nodes = [ROOT, *child_ids, *[l for group in leaf_ids for l in group]]
    all_leaves = [l for group in leaf_ids for l in group]

    data_rngs = [np.random.default_rng(s) for s in s_data.spawn(len(all_leaves))]
    datasets, coefs = {}, {}
    for lid, rng in zip(all_leaves, data_rngs):
        datasets[lid], coefs[lid] = simulate_var1(networks[lid], cfg, rng)

    topo = SltTopology(tuple(nodes), parent_of, {l: l for l in all_leaves})
    truth = GroundTruth(topo, networks, datasets, coefficients=coefs)
    truth.inference_topology = inference_topology(truth, cfg.regime, np.random.default_rng(s_tree))
    return truth
