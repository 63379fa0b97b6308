"""Closed-form evidence for feed-forward dynamic Bayesian networks.

Each target variable is regressed on the lag-1 values of its parents::

    y_p = X0 @ alpha + Xpa @ beta + X1 @ gamma + eps,   eps ~ N(0, sigma^2 I)

with a Jeffreys prior on ``(alpha, sigma)`` and a unit-information g-prior on
the joint block ``(beta, gamma)``. The evidence, up to a constant shared by
every parent set of a target, is::

    log p(y_p | pa) = -(b/2) log(n + 1) - ((n - a)/2) log Q
    Q = y' (I - P0 - n/(n+1) P_W) y

where ``W`` is the block design, ``b = rank(W)`` and ``a = 2``.
Projections are applied through thin orthonormal bases; no ``n x n`` matrix
is ever formed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .netcore import Network, ParentSet

RANK_RTOL = 1e-10
DEGENERATE_RTOL = 1e-12


class DegenerateDataError(ArithmeticError):
    """The residual sum of squares vanished or the evidence is not finite."""


@dataclass(frozen=True, eq=False)
class TimeSeriesDataset:
    """Concatenated multi-series observations.

    ``values`` is ``n x P``; ``series_id`` labels each row; rows of one series
    are contiguous and time-ordered. ``interventions`` holds
    ``(series_label, vertex)`` pairs meaning the vertex is inhibited for the
    whole series.
    """

    values: np.ndarray
    series_id: np.ndarray
    interventions: frozenset = frozenset()
    names: Optional[tuple[str, ...]] = None
    is_initial: np.ndarray = field(init=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise ValueError("values must be a 2-D array")
        series_id = np.asarray(self.series_id).astype(str)
        if series_id.shape != (values.shape[0],):
            raise ValueError("series_id length must match the number of rows")
        if not np.all(np.isfinite(values)):
            raise ValueError("dataset contains non-finite values")
        change = np.ones(len(series_id), dtype=bool)
        change[1:] = series_id[1:] != series_id[:-1]
        starts = series_id[change]
        if len(set(starts.tolist())) != len(starts):
            raise ValueError("rows of each series must be contiguous")
        interventions = frozenset((str(s), int(v)) for s, v in self.interventions)
        labels = set(starts.tolist())
        for s, v in interventions:
            if s not in labels:
                raise ValueError(f"intervention on unknown series {s!r}")
            if not 0 <= v < values.shape[1]:
                raise ValueError(f"intervention on unknown vertex {v}")
        names = self.names
        if names is None:
            names = tuple(f"V{j + 1}" for j in range(values.shape[1]))
        if len(names) != values.shape[1]:
            raise ValueError("one name per column required")
        values.setflags(write=False)
        change.setflags(write=False)
        series_id.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "series_id", series_id)
        object.__setattr__(self, "interventions", interventions)
        object.__setattr__(self, "names", tuple(names))
        object.__setattr__(self, "is_initial", change)

    @classmethod
    def from_series(cls, series: Sequence, interventions=(), names=None,
                    labels=None) -> "TimeSeriesDataset":
        """Stack a list of ``T_s x P`` arrays into one dataset."""
        arrays = [np.atleast_2d(np.asarray(s, dtype=float)) for s in series]
        if labels is None:
            labels = [str(i + 1) for i in range(len(arrays))]
        sid = np.concatenate([[str(lab)] * len(a) for lab, a in zip(labels, arrays)])
        return cls(np.vstack(arrays), sid, frozenset(interventions), names)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def P(self) -> int:
        return self.values.shape[1]

    @property
    def series_labels(self) -> list[str]:
        return self.series_id[self.is_initial].tolist()

    def series_lengths(self) -> list[int]:
        starts = np.flatnonzero(self.is_initial)
        return np.diff(np.append(starts, self.n)).tolist()

    def intervened_vertices(self) -> list[int]:
        return sorted({v for _, v in self.interventions})

    def intervention_mask(self, vertex: int) -> np.ndarray:
        """Boolean row mask: rows whose series has ``vertex`` inhibited."""
        hit = [s for s, v in self.interventions if v == vertex]
        return np.isin(self.series_id, hit)

    def __eq__(self, other):
        if not isinstance(other, TimeSeriesDataset):
            return NotImplemented
        return (np.array_equal(self.values, other.values)
                and np.array_equal(self.series_id, other.series_id)
                and self.interventions == other.interventions
                and self.names == other.names)

    __hash__ = None


@dataclass(frozen=True)
class DesignMatrices:
    X0: np.ndarray
    Xpa: np.ndarray
    X1: np.ndarray
    raw_norm: float = 0.0

    @property
    def a(self) -> int:
        return self.X0.shape[1]

    @property
    def W(self) -> np.ndarray:
        """g-prior block; the intervention indicators are centred per X0 group here."""
        return np.hstack([self.Xpa, _residualize(self.X1, self.X0)])

    @property
    def b_eff(self) -> int:
        return _orthonormal_basis(self.W, self.raw_norm).shape[1]


def _residualize(X: np.ndarray, X0: np.ndarray) -> np.ndarray:
    """Apply ``I - P0``; X0 holds disjoint indicators, so this is group centring."""
    if X.shape[1] == 0:
        return X.copy()
    out = X.astype(float).copy()
    for j in range(X0.shape[1]):
        rows = X0[:, j] > 0
        if rows.any():
            out[rows] -= out[rows].mean(axis=0)
    return out


def _orthonormal_basis(W: np.ndarray, ref: float = 0.0) -> np.ndarray:
    """Orthonormal basis of col(W); ``ref`` is the norm of W before centring."""
    if W.shape[1] == 0:
        return W[:, :0]
    U, s, _ = np.linalg.svd(W, full_matrices=False)
    tol = RANK_RTOL * max(s[0], ref)
    if s[0] <= tol:
        return W[:, :0]
    return U[:, s > tol]


def _lagged(d: TimeSeriesDataset) -> np.ndarray:
    """Lag-1 predictor for every vertex: zero on initial rows and under perfect-out."""
    L = np.zeros_like(d.values)
    L[1:] = d.values[:-1]
    L[d.is_initial] = 0.0
    for v in d.intervened_vertices():
        L[d.intervention_mask(v), v] = 0.0
    return L


def _x0(d: TimeSeriesDataset) -> np.ndarray:
    return np.column_stack([d.is_initial, ~d.is_initial]).astype(float)


def _x1(d: TimeSeriesDataset) -> np.ndarray:
    cols = [d.intervention_mask(v) for v in d.intervened_vertices()]
    if not cols:
        return np.zeros((d.n, 0))
    return np.column_stack(cols).astype(float)


def _check(d: TimeSeriesDataset, target: int, members=()):
    if not 0 <= target < d.P:
        raise IndexError(f"target {target} outside 0..{d.P - 1}")
    for k in members:
        if not 0 <= k < d.P:
            raise IndexError(f"parent {k} outside 0..{d.P - 1}")
    if min(d.series_lengths()) < 2:
        raise ValueError("every series needs at least two time points")


def build_design(d: TimeSeriesDataset, target: int, pa: ParentSet) -> DesignMatrices:
    if pa.target != target:
        raise ValueError("parent set belongs to a different target")
    _check(d, target, pa.members)
    X0 = _x0(d)
    raw = _lagged(d)[:, list(pa.members)]
    X1 = _x1(d)
    return DesignMatrices(X0, _residualize(raw, X0), X1,
                          float(np.sqrt(np.sum(raw ** 2) + np.sum(X1 ** 2))))


class _EvidenceCache:
    """Per-dataset quantities shared by every (target, parent set) query."""

    def __init__(self, d: TimeSeriesDataset):
        self.n = d.n
        self.X0 = _x0(d)
        lagged = _lagged(d)
        x1 = _x1(d)
        self.Z = _residualize(lagged, self.X0)
        self.X1 = _residualize(x1, self.X0)
        self.z_sq = np.sum(lagged ** 2, axis=0)
        self.x1_sq = float(np.sum(x1 ** 2))
        self.Y = _residualize(d.values, self.X0)
        self.rss0 = np.einsum("ij,ij->j", self.Y, self.Y)
        self.scale = np.einsum("ij,ij->j", d.values, d.values)

    def log_evidence(self, target: int, members: Sequence[int]) -> float:
        W = np.hstack([self.Z[:, list(members)], self.X1])
        U = _orthonormal_basis(W, np.sqrt(self.z_sq[list(members)].sum() + self.x1_sq))
        y = self.Y[:, target]
        proj = U.T @ y
        n = self.n
        Q = self.rss0[target] - n / (n + 1.0) * float(proj @ proj)
        return _finish(Q, U.shape[1], n, self.scale[target], target, members)

    def log_evidence_batch(self, target: int, states: Sequence[ParentSet]) -> np.ndarray:
        """Vectorised over states of equal size via stacked SVDs."""
        out = np.empty(len(states))
        by_size: dict[int, list[int]] = {}
        for j, s in enumerate(states):
            by_size.setdefault(len(s.members), []).append(j)
        y = self.Y[:, target]
        n = self.n
        for size, idx in by_size.items():
            cols = np.array([states[j].members for j in idx], dtype=int).reshape(len(idx), size)
            W = self.Z[:, cols].transpose(1, 0, 2)  # (m, n, size)
            if self.X1.shape[1]:
                W = np.concatenate([W, np.broadcast_to(self.X1, (len(idx),) + self.X1.shape)], axis=2)
            if W.shape[2] == 0:
                Q = np.full(len(idx), self.rss0[target])
                rank = np.zeros(len(idx), dtype=int)
            else:
                U, s, _ = np.linalg.svd(W, full_matrices=False)
                ref = np.sqrt(self.z_sq[cols].sum(axis=1) + self.x1_sq)
                tol = RANK_RTOL * np.maximum(s[:, 0], ref)
                keep = (s > tol[:, None]) & (s[:, :1] > tol[:, None])
                proj = np.einsum("mnk,n->mk", U, y) * keep
                Q = self.rss0[target] - n / (n + 1.0) * np.einsum("mk,mk->m", proj, proj)
                rank = keep.sum(axis=1)
            for q, r, j in zip(Q, rank, idx):
                out[j] = _finish(q, int(r), n, self.scale[target], target, states[j].members)
        return out


def _finish(Q, b, n, scale, target, members) -> float:
    a = 2
    if n <= a + b:
        raise DegenerateDataError(
            f"target {target}, parents {tuple(members)}: n={n} too small for a={a}, b={b}")
    if not Q > DEGENERATE_RTOL * scale:
        raise DegenerateDataError(
            f"target {target}, parents {tuple(members)}: residual sum of squares {Q:.3g} "
            "is degenerate (data lie in the span of the design)")
    val = -0.5 * b * np.log(n + 1.0) - 0.5 * (n - a) * np.log(Q)
    if not np.isfinite(val):
        raise DegenerateDataError(f"target {target}, parents {tuple(members)}: non-finite evidence")
    return float(val)


def log_marginal_likelihood(d: TimeSeriesDataset, target: int, pa: ParentSet) -> float:
    """Log evidence for ``pa`` as parents of ``target``, up to a per-target constant."""
    design = build_design(d, target, pa)
    U = _orthonormal_basis(design.W, design.raw_norm)
    y = _residualize(d.values[:, [target]], design.X0)[:, 0]
    proj = U.T @ y
    n = d.n
    Q = float(y @ y) - n / (n + 1.0) * float(proj @ proj)
    scale = float(d.values[:, target] @ d.values[:, target])
    return _finish(Q, U.shape[1], n, scale, target, pa.members)


@dataclass(frozen=True, eq=False)
class EvidenceTable:
    target: int
    states: tuple[ParentSet, ...]
    log_evidence: np.ndarray

    def __post_init__(self):
        le = np.asarray(self.log_evidence, dtype=float)
        if le.shape != (len(self.states),):
            raise ValueError("one log-evidence value per state required")
        if not np.all(np.isfinite(le)):
            raise ValueError("evidence table has non-finite entries")
        le.setflags(write=False)
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "log_evidence", le)

    def __getitem__(self, state: ParentSet) -> float:
        try:
            return float(self.log_evidence[self.states.index(state)])
        except ValueError:
            raise KeyError(f"state {state} not in the evidence table of target {self.target}") from None


def build_evidence_table(d: TimeSeriesDataset, target: int,
                         states: Sequence[ParentSet], cache=None) -> EvidenceTable:
    if not states:
        raise ValueError("states must be non-empty")
    _check(d, target, {m for s in states for m in s.members})
    cache = cache or _EvidenceCache(d)
    try:
        values = cache.log_evidence_batch(target, states)
    except DegenerateDataError:
        for s in states:  # re-run scalar path to attach the offending state
            cache.log_evidence(target, s.members)
        raise
    return EvidenceTable(target, tuple(states), values)


def evidence_cache(d: TimeSeriesDataset) -> _EvidenceCache:
    return _EvidenceCache(d)


def total_log_evidence(tables: Sequence[EvidenceTable], g: Network) -> float:
    by_target = {t.target: t for t in tables}
    total = 0.0
    for p in range(g.P):
        if p not in by_target:
            raise KeyError(f"no evidence table for target {p}")
        total += by_target[p][g.parent_set(p)]
    return total
