"""Structural prior: binomial multiplicity correction and the subset prior.

Everything is expressed per target variable. The full-network prior is the
product over targets, which is what lets inference split into one
independent tree problem per variable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping, Optional

import numpy as np

from .netcore import Network, ParentSet, SltTopology

IMPOSSIBLE = -math.inf


@dataclass(frozen=True)
class StructuralPriorConfig:
    """Prior configuration.

    ``g0`` is the prior network; edges absent from it are excluded from
    every network in the tree. ``None`` means the complete network.
    ``root_multiplicity=False`` makes the root prior uniform over subsets
    of the prior network's parent sets.
    """

    P: int
    d_max: int = 2
    g0: Optional[Network] = None
    self_edges: bool = True
    root_multiplicity: bool = True

    def __post_init__(self):
        if self.d_max < 0:
            raise ValueError("d_max must be non-negative")
        if self.g0 is None:
            object.__setattr__(self, "g0", Network.complete(self.P, self.self_edges))
        if self.g0.P != self.P:
            raise ValueError(f"prior network has {self.g0.P} vertices, expected {self.P}")

    def allowed_parents(self, target: int) -> tuple[int, ...]:
        return self.g0.parents[target]


def multiplicity_weight(s: ParentSet, P: int, d_max: int) -> float:
    if len(s) > d_max:
        return 0.0
    return 1.0 / math.comb(P, len(s))


@lru_cache(maxsize=4096)
def _normaliser(parent_size: int, P: int, d_max: int) -> float:
    # sum over S subset of parent with |S| <= d_max of 1/C(P,|S|)
    return sum(math.comb(parent_size, d) / math.comb(P, d)
               for d in range(min(parent_size, d_max) + 1))


def conditional_prior(child: ParentSet, parent: ParentSet, cfg: StructuralPriorConfig) -> float:
    """p(child | parent): subset indicator times multiplicity weight, normalised."""
    if child.target != parent.target:
        raise ValueError("child and parent states belong to different targets")
    if not child.issubset(parent):
        return 0.0
    w = multiplicity_weight(child, cfg.P, cfg.d_max)
    return w / _normaliser(len(parent), cfg.P, cfg.d_max)


def root_prior(s: ParentSet, cfg: StructuralPriorConfig) -> float:
    """p(root state | G0): the subset prior with the prior network as parent."""
    g0_state = cfg.g0.parent_set(s.target)
    if not cfg.root_multiplicity:
        if not s.issubset(g0_state) or len(s) > cfg.d_max:
            return 0.0
        m = len(g0_state)
        count = sum(math.comb(m, d) for d in range(min(m, cfg.d_max) + 1))
        return 1.0 / count
    return conditional_prior(s, g0_state, cfg)


def _log(x: float) -> float:
    return math.log(x) if x > 0 else IMPOSSIBLE


def joint_log_prior(assignment: Mapping[str, ParentSet], topology: SltTopology,
                    cfg: StructuralPriorConfig) -> float:
    """Log prior of one state per tree node; ``-inf`` marks an impossible assignment."""
    targets = {s.target for s in assignment.values()}
    if len(targets) != 1:
        raise ValueError("all states must share one target")
    total = _log(root_prior(assignment[topology.root], cfg))
    for i, j in topology.edges():
        if total == IMPOSSIBLE:
            break
        total += _log(conditional_prior(assignment[j], assignment[i], cfg))
    return total


def transition_matrix(states, cfg: StructuralPriorConfig) -> np.ndarray:
    """``K[a, b] = p(states[b] | states[a])`` for one target, vectorised on bitmasks."""
    # python ints beyond 62 vertices
    masks = np.array([s.mask for s in states], dtype=np.int64 if cfg.P < 63 else object)
    sizes = np.array([len(s) for s in states])
    subset = (masks[None, :] & ~masks[:, None]) == 0
    weights = np.array([1.0 / math.comb(cfg.P, int(k)) if k <= cfg.d_max else 0.0
                        for k in sizes])
    K = subset * weights[None, :]
    Z = np.array([_normaliser(int(k), cfg.P, cfg.d_max) for k in sizes])
    return K / Z[:, None]


def root_vector(states, cfg: StructuralPriorConfig) -> np.ndarray:
    return np.array([root_prior(s, cfg) for s in states])
