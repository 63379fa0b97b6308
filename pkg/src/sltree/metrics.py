"""Performance measures for weighted and thresholded network estimates.

Scores and labels are compared over a universe of candidate edges: all
``P*P`` ordered pairs, or the off-diagonal ``P*(P-1)`` when self-edges are
disabled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .netcore import Network


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def candidate_mask(P: int, self_edges: bool = True) -> np.ndarray:
    mask = np.ones((P, P), dtype=bool)
    if not self_edges:
        np.fill_diagonal(mask, False)
    return mask


def _as_matrix(x) -> np.ndarray:
    if isinstance(x, Network):
        return x.adjacency().astype(float)
    probs = getattr(x, "probs", x)
    return np.asarray(probs, dtype=float)


def _flat(scores, truth, self_edges):
    s, t = _as_matrix(scores), _as_matrix(truth)
    if s.shape != t.shape:
        raise ValueError(f"dimension mismatch: {s.shape} vs {t.shape}")
    if s.ndim == 1:  # already a flat candidate list
        return s, t > 0
    mask = candidate_mask(t.shape[0], self_edges)
    return s[mask], t[mask] > 0


def confusion(est, truth, self_edges: bool = True) -> ConfusionCounts:
    e, t = _flat(est, truth, self_edges)
    e = e > 0
    return ConfusionCounts(tp=int(np.sum(e & t)), fp=int(np.sum(e & ~t)),
                           tn=int(np.sum(~e & ~t)), fn=int(np.sum(~e & t)))


def mcc(c: ConfusionCounts) -> float:
    denom = (c.tp + c.fp) * (c.tp + c.fn) * (c.tn + c.fp) * (c.tn + c.fn)
    if denom == 0:
        return 0.0
    return (c.tp * c.tn - c.fp * c.fn) / math.sqrt(denom)


def misclassification(c: ConfusionCounts, P: int, self_edges: bool = True) -> float:
    return (c.fp + c.fn) / (P * P if self_edges else P * (P - 1))


def precision(c: ConfusionCounts) -> float:
    if c.tp + c.fp == 0:
        return 1.0
    return c.tp / (c.tp + c.fp)


def l1_error(m, truth, self_edges: bool = True) -> float:
    s, t = _flat(m, truth, self_edges)
    return float(np.sum(np.abs(s - t)))


def relative_density(m, truth, self_edges: bool = True) -> float:
    s, t = _flat(m, truth, self_edges)
    if not t.any():
        raise ValueError("relative density undefined for an empty truth network")
    return float(np.sum(np.abs(s)) / np.sum(t))


def _sweep(scores: np.ndarray, labels: np.ndarray):
    """Cumulative TP/FP counts at each distinct score, highest first (ties grouped)."""
    order = np.argsort(-scores, kind="mergesort")
    s, y = scores[order], labels[order]
    last = np.r_[s[1:] != s[:-1], True]
    tp = np.cumsum(y)[last]
    fp = np.cumsum(~y)[last]
    return tp, fp


def auroc(m, truth, self_edges: bool = True) -> float:
    """Trapezoidal area under the ROC curve over distinct thresholds."""
    s, t = _flat(m, truth, self_edges)
    pos, neg = int(t.sum()), int((~t).sum())
    if pos == 0 or neg == 0:
        raise ValueError("AUROC needs at least one positive and one negative candidate")
    tp, fp = _sweep(s, t)
    tpr = np.r_[0.0, tp / pos]
    fpr = np.r_[0.0, fp / neg]
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2))


def aupr(m, truth, self_edges: bool = True) -> float:
    """Step-wise area under the precision-recall curve over distinct thresholds."""
    s, t = _flat(m, truth, self_edges)
    pos = int(t.sum())
    if pos == 0:
        raise ValueError("AUPR needs at least one positive candidate")
    tp, fp = _sweep(s, t)
    recall = np.r_[0.0, tp / pos]
    prec = tp / (tp + fp)
    return float(np.sum(np.diff(recall) * prec))


def top_k_misclassification(m, truth, self_edges: bool = True) -> float:
    """Misclassification of the estimate holding the ``k`` most probable edges, ``k`` = true edge count."""
    from .engine import InclusionMatrix, top_k_estimate

    t = _as_matrix(truth)
    P = t.shape[0]
    mask = candidate_mask(P, self_edges)
    k = int(np.sum(t[mask] > 0))
    cands = [(a, b) for a in range(P) for b in range(P) if mask[a, b]]
    est = top_k_estimate(InclusionMatrix("", _as_matrix(m)), k, cands)
    return misclassification(confusion(est, truth, self_edges), P, self_edges)


METRIC_NAMES = ("l1", "density", "auroc", "aupr", "mcc", "misclass", "misclass_topk", "precision")


def all_metrics(m, truth: Network, tau: float = 0.5, self_edges: bool = True) -> dict[str, float]:
    """Every measure for one weighted estimate against one true network."""
    probs = _as_matrix(m)
    P = probs.shape[0]
    c = confusion(probs > tau, truth, self_edges)
    t = _as_matrix(truth)[candidate_mask(P, self_edges)]
    has_pos, has_neg = bool((t > 0).any()), bool((t == 0).any())
    return {
        "l1": l1_error(probs, truth, self_edges),
        "density": relative_density(probs, truth, self_edges) if has_pos else math.nan,
        "auroc": auroc(probs, truth, self_edges) if has_pos and has_neg else math.nan,
        "aupr": aupr(probs, truth, self_edges) if has_pos else math.nan,
        "mcc": mcc(c),
        "misclass": misclassification(c, P, self_edges),
        "misclass_topk": top_k_misclassification(probs, truth, self_edges),
        "precision": precision(c),
    }


@dataclass(frozen=True)
class Summary:
    mean: float
    se: float
    count: int


def aggregate(values_by_replicate: Sequence[Sequence[float]]) -> Summary:
    """Mean over all instances; standard error from the spread of per-replicate means."""
    groups = [np.asarray(v, dtype=float) for v in values_by_replicate if len(v)]
    if not groups:
        raise ValueError("nothing to aggregate")
    flat = np.concatenate(groups)
    means = np.array([g.mean() for g in groups])
    se = float(np.std(means, ddof=1) / math.sqrt(len(means))) if len(means) > 1 else 0.0
    return Summary(float(flat.mean()), se, len(flat))


def aggregate_rows(rows: Iterable[Mapping], keys: Sequence[str],
                   metrics: Sequence[str] = METRIC_NAMES) -> list[dict]:
    """Group instance rows by ``keys`` and summarise every metric per group.

    Each row carries a ``replicate`` field; standard errors are over replicate means.
    """
    groups: dict[tuple, dict] = {}
    for r in rows:
        key = tuple(r[k] for k in keys)
        groups.setdefault(key, {}).setdefault(r["replicate"], []).append(r)
    out = []
    for key in sorted(groups):
        reps = groups[key]
        row = dict(zip(keys, key))
        for name in metrics:
            per_rep = [[x[name] for x in reps[r] if not math.isnan(x[name])] for r in sorted(reps)]
            if any(per_rep):
                s = aggregate(per_rep)
                row[f"{name}_mean"], row[f"{name}_se"] = s.mean, s.se
            else:
                row[f"{name}_mean"], row[f"{name}_se"] = math.nan, math.nan
        row["instances"] = sum(len(v) for v in reps.values())
        out.append(row)
    return out
