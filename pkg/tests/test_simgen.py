import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sltree.netcore import Network
from sltree.simgen import (REGIMES, RegimeConfig, generate_children, generate_experiment,
                           generate_leaves, generate_root, random_tree, simulate_var1)


class TestRoot:
    def test_in_degree_two(self):
        g = generate_root(10, 0)
        assert g.n_edges() == 20
        assert all(g.in_degree(p) == 2 for p in range(10))

    def test_deterministic(self):
        assert generate_root(10, 5) == generate_root(10, 5)

    def test_small(self):
        g = generate_root(3, 1)
        assert all(len(pa) == 2 for pa in g.parents)

    def test_no_self_edges(self):
        g = generate_root(4, 2, self_edges=False)
        assert all(p not in g.parents[p] for p in range(4))


class TestChildren:
    root = generate_root(10, 3)

    def test_disjoint_partition(self):
        a, b = generate_children(self.root, "disjoint", 1)
        assert not set(a.edges()) & set(b.edges())
        assert set(a.edges()) | set(b.edges()) == set(self.root.edges())

    def test_full_identical(self):
        a, b = generate_children(self.root, "full", 1)
        assert a == b and a.n_edges() == 10

    def test_weak_subsets(self):
        for g in generate_children(self.root, "weak", 1):
            assert g.issubset(self.root) and g.n_edges() == 10

    def test_violation_outside_edges(self):
        for g in generate_children(self.root, "subset_violation", 1):
            outside = set(g.edges()) - set(self.root.edges())
            assert len(outside) == 2 and g.n_edges() == 10
            assert g.max_in_degree() <= 2


class TestLeaves:
    def test_counts_and_subsets(self):
        root = generate_root(10, 0)
        children = generate_children(root, "weak", 0)
        groups = generate_leaves(children, "weak", 0.5, 10, 0)
        assert [len(g) for g in groups] == [5, 5]
        for child, group in zip(children, groups):
            for leaf in group:
                assert leaf.n_edges() == 5 and leaf.issubset(child)

    def test_uneven_split(self):
        root = generate_root(10, 0)
        groups = generate_leaves(generate_children(root, "weak", 0), "weak", 0.5, 7, 0)
        assert [len(g) for g in groups] == [4, 3]

    def test_violation_split(self):
        root = generate_root(10, 0)
        children = generate_children(root, "subset_violation", 0)
        for child, group in zip(children, generate_leaves(children, "subset_violation", 0.5, 10, 0)):
            for leaf in group:
                assert len(set(leaf.edges()) - set(child.edges())) == 1
                assert leaf.n_edges() == 5 and leaf.max_in_degree() <= 2

    def test_too_many_edges(self):
        child = Network.from_edges(3, [(0, 1)])
        with pytest.raises(ValueError):
            generate_leaves([child], "weak", 1.0, 1, 0)


class TestVar1:
    cfg = RegimeConfig(P=4, n=60, series_length=10)

    def test_shape_and_interventions(self):
        d, B = simulate_var1(generate_root(4, 0), self.cfg, 0)
        assert d.values.shape == (60, 4)
        assert len(d.series_labels) == 6 and len(d.interventions) == 6
        for label, v in d.interventions:
            assert np.all(d.values[d.series_id == label, v] == 0.0)

    def test_coefficients(self):
        g = generate_root(4, 1)
        _, B = simulate_var1(g, self.cfg, 1)
        assert set(np.unique(B[g.adjacency().astype(bool)])) <= {-1.0, 1.0}
        assert np.all(B[~g.adjacency().astype(bool)] == 0.0)

    def test_empty_network_is_noise(self):
        cfg = RegimeConfig(P=4, n=6000, series_length=10)
        d, _ = simulate_var1(Network.empty(4), cfg, 2)
        clamped = np.zeros(d.values.shape, dtype=bool)
        for label, v in d.interventions:
            clamped[d.series_id == label, v] = True
        free = d.values[~clamped]
        assert abs(free.mean()) < 0.05 and abs(free.std() - 1.0) < 0.05

    def test_dynamics(self):
        # a single +-1 edge: y_t - b x_{t-1} is pure noise
        g = Network.from_edges(3, [(0, 1)])
        cfg = RegimeConfig(P=3, n=3000, series_length=10)
        d, B = simulate_var1(g, cfg, 4)
        lag = np.vstack([np.zeros((1, 3)), d.values[:-1]])
        ok = ~d.is_initial & ~d.intervention_mask(1) & ~d.intervention_mask(0)
        resid = d.values[ok, 1] - B[0, 1] * lag[ok, 0]
        assert abs(resid.std() - 1.0) < 0.06


class TestConfig:
    def test_bad_regime(self):
        with pytest.raises(ValueError):
            RegimeConfig(regime="nope")

    def test_rho_rounding(self):
        assert RegimeConfig(P=10, rho=0.55).leaf_edges == 6
        assert RegimeConfig(P=17, rho=0.5).leaf_edges == 9
        with pytest.raises(ValueError):
            RegimeConfig(P=10, rho=1.2)

    def test_divisibility(self):
        with pytest.raises(ValueError):
            RegimeConfig(n=55, series_length=10)


class TestExperiment:
    def test_composition(self):
        t = generate_experiment(RegimeConfig(seed=7))
        assert len(t.networks) == 13 and len(t.datasets) == 10
        assert all(d.values.shape == (60, 10) for d in t.datasets.values())
        assert set(t.inference_topology.observed) == set(t.datasets)
        assert t.topology.root == "1" and set(t.topology.children("1")) == {"11", "12"}

    def test_bit_identical(self):
        cfg = RegimeConfig(regime="misspecified_tree", seed=3)
        a, b = generate_experiment(cfg), generate_experiment(cfg)
        assert a.topology == b.topology and a.inference_topology == b.inference_topology
        assert a.networks == b.networks
        assert all(a.datasets[k] == b.datasets[k] for k in a.datasets)
        assert all(np.array_equal(a.coefficients[k], b.coefficients[k]) for k in a.coefficients)

    def test_full_leaves_under_shared_child(self):
        t = generate_experiment(RegimeConfig(regime="full", seed=2))
        shared = t.networks["11"]
        assert t.networks["12"] == shared
        assert all(t.networks[leaf].issubset(shared) for leaf in t.leaves)

    def test_misspecified_trees_differ(self):
        differ = sum(generate_experiment(RegimeConfig(regime="misspecified_tree", seed=s)).inference_topology
                     != generate_experiment(RegimeConfig(regime="misspecified_tree", seed=s)).topology
                     for s in range(20))
        assert differ >= 19

    def test_many_leaves_ids(self):
        t = generate_experiment(RegimeConfig(n_leaves=20, n_children=2, n=20, seed=1))
        assert "1.1.10" in t.networks


@settings(max_examples=15, deadline=None)
@given(st.sampled_from(REGIMES), st.integers(0, 10 ** 6), st.sampled_from([0.2, 0.5]))
def test_structural_invariants(regime, seed, rho):
    t = generate_experiment(RegimeConfig(regime=regime, seed=seed, rho=rho, n=20))
    for g in t.networks.values():
        assert g.max_in_degree() <= 2
    if regime != "subset_violation":
        for parent, child in t.topology.edges():
            assert t.networks[child].issubset(t.networks[parent])
    if regime == "disjoint":
        assert not set(t.networks["11"].edges()) & set(t.networks["12"].edges())


def test_random_tree_uniform_small():
    # 3 labelled nodes have 3 trees; rooted at a fixed node each appears about a third of the time
    seen = {}
    for s in range(600):
        t = random_tree(["a", "b", "c"], "a", s)
        key = tuple(sorted(t.edges()))
        seen[key] = seen.get(key, 0) + 1
    assert len(seen) == 3
    assert all(150 < v < 250 for v in seen.values())
