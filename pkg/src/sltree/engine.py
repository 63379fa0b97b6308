"""Exact inference on structure learning trees.

After integrating out regression parameters the model is a discrete Bayesian
network over the tree, one parent-set variable per node and target. Since
parent sets of different targets are a priori and a posteriori independent,
each target gets its own sum-product pass over the tree.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .likelihood import (DegenerateDataError, EvidenceTable, TimeSeriesDataset, build_evidence_table,
                         evidence_cache)
from .netcore import Network, ParentSet, SltTopology, enumerate_parent_sets
from .prior import (StructuralPriorConfig, conditional_prior, root_prior, root_vector,
                    transition_matrix)

log = logging.getLogger(__name__)

BRUTE_FORCE_LIMIT = 2 * 10 ** 7  # covers 11 states on 7 nodes


class InferenceError(ArithmeticError):
    """Every configuration has zero posterior mass."""


@dataclass(frozen=True, eq=False)
class BeliefVector:
    node: str
    target: int
    states: tuple[ParentSet, ...]
    probs: np.ndarray

    def prob(self, state: ParentSet) -> float:
        return float(self.probs[self.states.index(state)])


@dataclass(frozen=True, eq=False)
class InclusionMatrix:
    """``probs[k, l]``: posterior probability that ``k`` is a parent of ``l``."""

    node: str
    probs: np.ndarray

    @property
    def P(self) -> int:
        return self.probs.shape[0]


def target_states(cfg: StructuralPriorConfig, target: int, restrict: bool = True) -> list[ParentSet]:
    allowed = cfg.allowed_parents(target) if restrict else range(cfg.P)
    return enumerate_parent_sets(target, cfg.P, cfg.d_max, allowed)


def _likelihood_vector(table: Optional[EvidenceTable], n_states: int) -> np.ndarray:
    if table is None:
        return np.ones(n_states)
    le = table.log_evidence
    return np.exp(le - le.max())


def run_bp(topology: SltTopology, evidence: Mapping[str, EvidenceTable],
           cfg: StructuralPriorConfig, target: int,
           states: Optional[Sequence[ParentSet]] = None) -> dict[str, BeliefVector]:
    """Sum-product on the tree for one target.

    ``evidence`` maps each observed node to its table; all tables share the
    same state list. One leaf-to-root pass then one root-to-leaf pass.
    """
    extra = set(evidence) - set(topology.nodes)
    if extra:
        raise KeyError(f"evidence for nodes not in the tree: {sorted(extra)}")
    if states is None:
        first = next(iter(evidence.values()), None)
        states = first.states if first is not None else target_states(cfg, target)
    states = tuple(states)
    for node, table in evidence.items():
        if table.states != states or table.target != target:
            raise ValueError(f"evidence table of node {node!r} does not match the state list")
    S = len(states)
    K = transition_matrix(states, cfg)
    L = {n: _likelihood_vector(evidence.get(n), S) for n in topology.nodes}

    order = topology.preorder()
    kids = {n: topology.children(n) for n in order}

    up = {}  # up[c]: message from c into its parent, indexed by parent state
    for n in reversed(order):
        local = L[n].copy()
        for c in kids[n]:
            local *= up[c]
        if n != topology.root:
            up[n] = _normalise_msg(K @ local, n)

    down = {topology.root: root_vector(states, cfg)}
    beliefs = {}
    for n in order:
        cs = kids[n]
        base = down[n] * L[n]
        msgs = [up[c] for c in cs]
        # products of all-but-one child message, no division
        prefix = [np.ones(S)]
        for m in msgs:
            prefix.append(prefix[-1] * m)
        suffix = [np.ones(S)]
        for m in reversed(msgs):
            suffix.append(suffix[-1] * m)
        suffix.reverse()
        for idx, c in enumerate(cs):
            m_to_child = base * prefix[idx] * suffix[idx + 1]
            down[c] = _normalise_msg(K.T @ m_to_child, c)
        b = base * prefix[-1]
        total = b.sum()
        if not total > 0:
            raise InferenceError(
                f"target {target}, node {n!r}: all configurations have zero probability; "
                "check the prior network against the data")
        beliefs[n] = BeliefVector(n, target, states, b / total)
    return beliefs


def _normalise_msg(v: np.ndarray, node) -> np.ndarray:
    s = v.sum()
    if not s > 0:
        raise InferenceError(f"message at node {node!r} vanished")
    return v / s


def brute_force_posterior(topology: SltTopology, evidence: Mapping[str, EvidenceTable],
                          cfg: StructuralPriorConfig, target: int,
                          states: Optional[Sequence[ParentSet]] = None) -> dict[str, BeliefVector]:
    """Marginals by enumerating every joint assignment of states to tree nodes.

    Prior factors come from the scalar :func:`conditional_prior` and
    :func:`root_prior`, not from the vectorised kernel used by :func:`run_bp`.
    """
    if states is None:
        first = next(iter(evidence.values()), None)
        states = first.states if first is not None else target_states(cfg, target)
    states = tuple(states)
    S, nodes = len(states), list(topology.nodes)
    N = len(nodes)
    if S ** N > BRUTE_FORCE_LIMIT:
        raise ValueError(f"instance too large for enumeration: {S}^{N} assignments")
    axis = {n: a for a, n in enumerate(nodes)}

    def shaped(vec, *ax):
        shape = [1] * N
        for a, size in zip(ax, vec.shape):
            shape[a] = size
        return vec.reshape(shape)

    with np.errstate(divide="ignore"):
        root = np.log([root_prior(s, cfg) for s in states])
        logw = shaped(root, axis[topology.root])
        for i, j in topology.edges():
            K = np.array([[conditional_prior(b, a, cfg) for b in states] for a in states])
            logw = logw + shaped(np.log(K), axis[i], axis[j])
    for n, table in evidence.items():
        logw = logw + shaped(np.asarray(table.log_evidence), axis[n])
    logw = np.broadcast_to(logw, (S,) * N)
    top = logw.max()
    if top == -np.inf:
        raise InferenceError("all joint assignments are impossible")
    w = np.exp(logw - top)
    Z = w.sum()
    out = {}
    for n in nodes:
        others = tuple(a for a in range(N) if a != axis[n])
        out[n] = BeliefVector(n, target, states, w.sum(axis=others) / Z)
    return out


def edge_inclusion(beliefs: Mapping[int, Mapping[str, BeliefVector]], P: int) -> dict[str, InclusionMatrix]:
    """Model averaging: entry (k, l) sums the belief of target l over states containing k.

    ``beliefs`` maps target -> node -> belief.
    """
    nodes = None
    mats = {}
    for l in range(P):
        if l not in beliefs:
            raise KeyError(f"no beliefs for target {l}")
        per_node = beliefs[l]
        if nodes is None:
            nodes = list(per_node)
            mats = {n: np.zeros((P, P)) for n in nodes}
        for n in nodes:
            b = per_node[n]
            for s, p in zip(b.states, b.probs):
                for k in s.members:
                    mats[n][k, l] += p
    return {n: InclusionMatrix(n, np.clip(m, 0.0, 1.0)) for n, m in mats.items()}


def threshold_estimate(m: InclusionMatrix, tau: float = 0.5) -> Network:
    if not 0.0 <= tau <= 1.0:
        raise ValueError("threshold must lie in [0, 1]")
    return Network.from_adjacency(m.probs > tau)


def top_k_estimate(m: InclusionMatrix, k: int, candidates: Optional[Sequence[tuple[int, int]]] = None) -> Network:
    """The ``k`` most probable edges; ties go to the lexicographically smaller edge."""
    P = m.P
    if candidates is None:
        candidates = [(a, b) for a in range(P) for b in range(P)]
    if not 0 <= k <= len(candidates):
        raise ValueError(f"k={k} outside 0..{len(candidates)}")
    ranked = sorted(candidates, key=lambda e: (-m.probs[e], e))
    return Network.from_edges(P, ranked[:k])


@dataclass
class InferenceResult:
    inclusion: dict[str, InclusionMatrix]
    beliefs: dict[int, dict[str, BeliefVector]]


def compute_evidence(datasets: Mapping[str, TimeSeriesDataset], cfg: StructuralPriorConfig,
                     restrict: bool = True) -> dict[tuple[str, int], EvidenceTable]:
    """Evidence tables for every (observed node, target)."""
    out = {}
    for node, d in datasets.items():
        if d.P != cfg.P:
            raise ValueError(f"dataset of node {node!r} has {d.P} variables, expected {cfg.P}")
        cache = evidence_cache(d)
        for p in range(cfg.P):
            states = target_states(cfg, p, restrict)
            try:
                out[node, p] = build_evidence_table(d, p, states, cache)
            except DegenerateDataError as exc:
                if not _held_fixed(d, p):
                    raise DegenerateDataError(f"node {node!r}, variable {d.names[p]}: {exc}") from exc
                # inhibited in every series: the data say nothing about its parents
                log.warning("node %r, variable %s is intervened in every series; using a flat likelihood",
                            node, d.names[p])
                out[node, p] = EvidenceTable(p, tuple(states), np.zeros(len(states)))
            except ArithmeticError as exc:
                raise type(exc)(f"node {node!r}, variable {d.names[p]}: {exc}") from exc
    return out


def _held_fixed(d: TimeSeriesDataset, p: int) -> bool:
    return all((s, p) in d.interventions for s in d.series_labels)


def infer_all(topology: SltTopology, datasets: Mapping[str, TimeSeriesDataset],
              cfg: StructuralPriorConfig, evidence=None, threads: int = 1,
              restrict: bool = True) -> InferenceResult:
    """Posterior inclusion matrices for every tree node.

    ``datasets`` maps observed nodes to data; nodes without data are latent.
    Precomputed ``evidence`` (from :func:`compute_evidence`) may be passed to
    share likelihood work between estimators on the same data.
    """
    missing = set(datasets) - set(topology.nodes)
    if missing:
        raise KeyError(f"datasets for nodes not in the tree: {sorted(missing)}")
    if evidence is None:
        evidence = compute_evidence(datasets, cfg, restrict)

    def one(p):
        tables = {n: evidence[n, p] for n in datasets}
        states = target_states(cfg, p, restrict)
        try:
            return run_bp(topology, tables, cfg, p, states)
        except InferenceError as exc:
            raise InferenceError(f"variable {p}: {exc}") from exc

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(one, range(cfg.P)))
    else:
        results = [one(p) for p in range(cfg.P)]
    beliefs = dict(enumerate(results))
    return InferenceResult(edge_inclusion(beliefs, cfg.P), beliefs)


def infer_independent(datasets: Mapping[str, TimeSeriesDataset], cfg: StructuralPriorConfig,
                      evidence=None) -> dict[str, InclusionMatrix]:
    """Per-dataset inference with no information sharing (one single-node tree each)."""
    out = {}
    for node, d in datasets.items():
        ev = None if evidence is None else {(node, p): evidence[node, p] for p in range(cfg.P)}
        res = infer_all(SltTopology((node,), {}), {node: d}, cfg, ev)
        out[node] = res.inclusion[node]
    return out


def infer_star(datasets: Mapping[str, TimeSeriesDataset], cfg: StructuralPriorConfig,
               evidence=None, centre: str = "__star__") -> dict[str, InclusionMatrix]:
    """Exchangeable joint inference: a latent centre with every dataset as a leaf."""
    topo = SltTopology.star(centre, list(datasets))
    res = infer_all(topo, datasets, cfg, evidence)
    return {n: m for n, m in res.inclusion.items() if n != centre}
