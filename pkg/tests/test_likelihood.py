import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import quadrature_evidence_ratio
from sltree.likelihood import (DegenerateDataError, TimeSeriesDataset, build_design,
                               build_evidence_table, log_marginal_likelihood, total_log_evidence)
from sltree.netcore import Network, ParentSet, enumerate_parent_sets


def single(y, x=None):
    cols = [y] if x is None else [x, y]
    return TimeSeriesDataset.from_series([np.column_stack(cols)])


def random_dataset(rng, P=3, lengths=(5, 5, 5), interventions=()):
    return TimeSeriesDataset.from_series([rng.normal(size=(T, P)) for T in lengths], interventions)


def dense_log_evidence(d, target, members):
    """Reference through explicit n x n projectors."""
    n = d.n
    y = d.values[:, target]
    X0 = np.column_stack([d.is_initial, ~d.is_initial]).astype(float)
    P0 = X0 @ np.linalg.pinv(X0)
    lag = np.zeros((n, d.P))
    lag[1:] = d.values[:-1]
    lag[d.is_initial] = 0.0
    Xpa = lag[:, list(members)]
    for j, k in enumerate(members):
        Xpa[d.intervention_mask(k), j] = 0.0
    Xpa = (np.eye(n) - P0) @ Xpa
    X1 = np.column_stack([d.intervention_mask(v) for v in d.intervened_vertices()] or [np.zeros((n, 0))])
    W = np.hstack([Xpa, (np.eye(n) - P0) @ X1.astype(float)])
    if W.shape[1]:
        U, s, _ = np.linalg.svd(W, full_matrices=False)
        raw = max(np.linalg.norm(lag[:, list(members)]), np.linalg.norm(X1)) if len(members) or X1.size else 0
        r = int(np.sum(s > 1e-10 * max(s[0], raw)))
        PW = U[:, :r] @ U[:, :r].T
    else:
        r, PW = 0, np.zeros((n, n))
    Q = y @ (np.eye(n) - P0 - n / (n + 1) * PW) @ y
    return -r / 2 * math.log(n + 1) - (n - 2) / 2 * math.log(Q)


class TestDataset:
    def test_initial_flags(self):
        d = TimeSeriesDataset.from_series([np.zeros((3, 2)), np.zeros((2, 2))])
        assert d.is_initial.tolist() == [True, False, False, True, False]
        assert d.series_lengths() == [3, 2]

    def test_non_contiguous(self):
        with pytest.raises(ValueError):
            TimeSeriesDataset(np.zeros((3, 1)), ["a", "b", "a"])

    def test_non_finite(self):
        with pytest.raises(ValueError):
            TimeSeriesDataset(np.array([[1.0], [np.nan]]), ["a", "a"])

    def test_unknown_intervention(self):
        with pytest.raises(ValueError):
            TimeSeriesDataset.from_series([np.zeros((3, 2))], [("9", 0)])

    def test_read_only(self):
        d = TimeSeriesDataset.from_series([np.zeros((3, 2))])
        with pytest.raises(ValueError):
            d.values[0, 0] = 1.0


class TestDesign:
    def test_constant_parent_projects_to_zero(self):
        d = single([1, 2, 1, 3], [1, 1, 1, 1])
        m = build_design(d, 1, ParentSet(1, (0,)))
        np.testing.assert_allclose(m.Xpa, 0.0, atol=1e-15)
        assert m.b_eff == 0

    def test_empty(self):
        d = single([1, 2, 1, 3])
        m = build_design(d, 0, ParentSet(0, ()))
        assert m.Xpa.shape == (4, 0)
        assert m.X1.shape[1] == 0
        assert m.a == 2

    def test_perfect_out(self):
        rng = np.random.default_rng(3)
        d = TimeSeriesDataset.from_series([rng.normal(size=(4, 2)), rng.normal(size=(4, 2))], [("2", 0)])
        m = build_design(d, 1, ParentSet(1, (0,)))
        raw = np.zeros(8)
        raw[1:4] = d.values[0:3, 0]
        assert m.X1[:, 0].tolist() == [0, 0, 0, 0, 1, 1, 1, 1]
        # series 2 contributes nothing before centring
        later = ~d.is_initial
        raw[later] -= raw[later].mean()
        np.testing.assert_allclose(m.Xpa[:, 0], raw, atol=1e-12)

    def test_orthogonal_to_x0(self):
        rng = np.random.default_rng(0)
        d = random_dataset(rng)
        m = build_design(d, 0, ParentSet(0, (1, 2)))
        assert np.abs(m.X0.T @ m.Xpa).max() <= 1e-10 * max(1.0, np.linalg.norm(m.Xpa))

    def test_unknown_parent(self):
        d = single([1, 2, 1, 3])
        with pytest.raises(IndexError):
            build_design(d, 0, ParentSet(0, (4,)))

    def test_short_series(self):
        d = TimeSeriesDataset.from_series([np.zeros((1, 2)) + 1, np.ones((3, 2))])
        with pytest.raises(ValueError):
            build_design(d, 0, ParentSet(0, ()))


class TestEvidence:
    def test_hand_value(self):
        d = single([1, 2, 1, 3])
        assert log_marginal_likelihood(d, 0, ParentSet(0, ())) == pytest.approx(-math.log(2), abs=1e-12)

    def test_rank_deficient_parent_equals_empty(self):
        d = single([1, 2, 1, 3], [1, 1, 1, 1])
        a = log_marginal_likelihood(d, 1, ParentSet(1, (0,)))
        b = log_marginal_likelihood(d, 1, ParentSet(1, ()))
        assert a == pytest.approx(b, abs=1e-12)

    def test_degenerate(self):
        d = single([5, 5, 5, 5])
        with pytest.raises(DegenerateDataError):
            log_marginal_likelihood(d, 0, ParentSet(0, ()))

    def test_scaling(self):
        rng = np.random.default_rng(1)
        d = random_dataset(rng)
        v = d.values.copy()
        v[:, 0] *= 3.0
        d2 = TimeSeriesDataset(v, d.series_id)
        states = enumerate_parent_sets(0, 3, 2, {1, 2})
        t1 = build_evidence_table(d, 0, states).log_evidence
        t2 = build_evidence_table(d2, 0, states).log_evidence
        np.testing.assert_allclose(t2 - t1, -(d.n - 2) * math.log(3.0), atol=1e-9)

    @pytest.mark.parametrize("seed", range(8))
    def test_matches_dense_reference(self, seed):
        rng = np.random.default_rng(seed)
        d = random_dataset(rng, P=3, lengths=(4, 6, 5), interventions=[("2", 1), ("3", 0)])
        for p in range(3):
            states = enumerate_parent_sets(p, 3, 2)
            table = build_evidence_table(d, p, states)
            for s, v in zip(states, table.log_evidence):
                assert v == pytest.approx(dense_log_evidence(d, p, s.members), rel=1e-10, abs=1e-10)
                assert v == pytest.approx(log_marginal_likelihood(d, p, s), rel=1e-10, abs=1e-10)

    def test_table_shape_and_lookup(self):
        rng = np.random.default_rng(2)
        d = random_dataset(rng)
        states = enumerate_parent_sets(0, 3, 2)
        t = build_evidence_table(d, 0, states)
        assert len(t.log_evidence) == 7
        assert t[states[3]] == t.log_evidence[3]
        with pytest.raises(KeyError):
            t[ParentSet(0, (0, 1, 2))]

    def test_single_state_table(self):
        d = single([1, 2, 1, 3])
        t = build_evidence_table(d, 0, [ParentSet(0, ())])
        assert t.log_evidence.tolist() == pytest.approx([-math.log(2)])

    def test_series_permutation_invariance(self):
        rng = np.random.default_rng(4)
        blocks = [rng.normal(size=(T, 3)) for T in (4, 5, 6)]
        d1 = TimeSeriesDataset.from_series(blocks)
        d2 = TimeSeriesDataset.from_series(blocks[::-1], labels=["3", "2", "1"])
        for p in range(3):
            states = enumerate_parent_sets(p, 3, 2)
            np.testing.assert_allclose(build_evidence_table(d1, p, states).log_evidence,
                                       build_evidence_table(d2, p, states).log_evidence, rtol=1e-12)

    def test_total_log_evidence(self):
        rng = np.random.default_rng(5)
        d = random_dataset(rng)
        tables = [build_evidence_table(d, p, enumerate_parent_sets(p, 3, 2)) for p in range(3)]
        g = Network(((1,), (), (0, 2)))
        expected = sum(log_marginal_likelihood(d, p, g.parent_set(p)) for p in range(3))
        assert total_log_evidence(tables, g) == pytest.approx(expected, rel=1e-12)
        empty = sum(t.log_evidence[0] for t in tables)
        assert total_log_evidence(tables, Network.empty(3)) == pytest.approx(empty)
        with pytest.raises(KeyError):
            total_log_evidence(tables, Network(((0, 1, 2), (), ())))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10 ** 6), st.lists(st.integers(3, 7), min_size=1, max_size=3),
       st.floats(-50, 50), st.booleans())
def test_q_nonnegative_and_rank_monotone(seed, lengths, offset, intervene):
    rng = np.random.default_rng(seed)
    ivs = [("1", int(rng.integers(3)))] if intervene else []
    d = TimeSeriesDataset.from_series([rng.normal(size=(T, 3)) + offset for T in lengths], ivs)
    if d.n <= 5:
        return
    for small, big in [((), (1,)), ((1,), (1, 2)), ((), (2,))]:
        ms = build_design(d, 0, ParentSet(0, small))
        mb = build_design(d, 0, ParentSet(0, big))
        assert mb.b_eff >= ms.b_eff
        try:
            ls = log_marginal_likelihood(d, 0, ParentSet(0, small))
            lb = log_marginal_likelihood(d, 0, ParentSet(0, big))
        except DegenerateDataError:
            continue
        # Q never increases when a parent is added
        n = d.n
        qs = math.exp(-(2 * ls + ms.b_eff * math.log(n + 1)) / (n - 2))
        qb = math.exp(-(2 * lb + mb.b_eff * math.log(n + 1)) / (n - 2))
        assert qb <= qs * (1 + 1e-9)


def test_affine_difference_invariance():
    rng = np.random.default_rng(7)
    d = random_dataset(rng, lengths=(6, 6, 6))
    v = d.values.copy()
    v[:, 1] = -2.5 * v[:, 1] + 40.0
    d2 = TimeSeriesDataset(v, d.series_id)
    for p in range(3):
        states = enumerate_parent_sets(p, 3, 2)
        a = build_evidence_table(d, p, states).log_evidence
        b = build_evidence_table(d2, p, states).log_evidence
        np.testing.assert_allclose((b - b[0]) - (a - a[0]), 0.0, atol=1e-8)


def test_quadrature_oracle():
    ratio, formula = quadrature_evidence_ratio()
    assert abs(ratio / formula - 1) < 0.02
