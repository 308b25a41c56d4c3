import itertools
import math

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from persreg import regularizers, topology
from persreg.topology import DissimilarityMatrix, NeuronId


K4 = np.array([
    [0.0, 0.2, 0.9, 0.8],
    [0.2, 0.0, 0.4, 0.7],
    [0.9, 0.4, 0.0, 0.3],
    [0.8, 0.7, 0.3, 0.0],
])


def test_sample_correlation_examples():
    assert topology.sample_correlation([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0, abs=1e-15)
    assert topology.sample_correlation([1, 2, 3], [6, 4, 2]) == pytest.approx(-1.0, abs=1e-15)
    assert topology.sample_correlation([1, 0, -1], [1, -2, 1]) == 0.0
    assert math.isnan(topology.sample_correlation([1, 1, 1], [1, 2, 3]))
    with pytest.raises(ValueError):
        topology.sample_correlation([1, 2], [1, 2, 3])
    with pytest.raises(ValueError):
        topology.sample_correlation([1], [1])


def test_dissimilarity_examples():
    gen = np.random.default_rng(0)
    x = gen.standard_normal(20)
    noise = gen.standard_normal(20)
    noise -= noise.mean()
    xc = x - x.mean()
    orth = noise - xc * (noise @ xc) / (xc @ xc)  # centred and orthogonal to x
    acts = np.vstack([x, 3 * x + 1, orth])
    corr, d = topology.dissimilarity_matrix(acts)
    assert d.values[0, 1] == pytest.approx(0.0, abs=1e-15)
    assert d.values[0, 2] == pytest.approx(1.0, abs=1e-12)
    assert np.all(np.diag(d.values) == 0)
    np.testing.assert_array_equal(d.values, d.values.T)

    # a pair with correlation -0.25
    u = np.array([1.0, -1.0, 0.0, 0.0])
    v = np.array([0.0, 0.0, 1.0, -1.0])
    y = -0.25 * u + math.sqrt(1 - 0.0625) * v
    corr, d = topology.dissimilarity_matrix(np.vstack([u, y]))
    assert corr.values[0, 1] == pytest.approx(-0.25, abs=1e-15)
    assert d.values[0, 1] == pytest.approx(0.75, abs=1e-15)


def test_dead_neuron_guard():
    acts = np.array([[1.0, 2.0, 3.0, 4.0], [0.0, 0.0, 0.0, 0.0], [4.0, 1.0, 3.0, 2.0]])
    corr, d = topology.dissimilarity_matrix(acts)
    assert not corr.valid[1].any()
    assert d.values[1, 0] == 1.0 and d.values[1, 2] == 1.0 and d.values[1, 1] == 0.0
    assert np.isfinite(corr.values).all()
    g = topology.correlation_adjoint(np.ones((3, 3)), acts)
    assert np.all(g[1] == 0)
    with pytest.raises(ValueError):
        topology.dissimilarity_matrix(acts[:1])


def test_mst_examples():
    tri = np.array([[0, 0.1, 0.5], [0.1, 0, 0.3], [0.5, 0.3, 0]])
    np.testing.assert_array_equal(topology.mst_diagram(tri).weights, [0.1, 0.3])
    dg = topology.mst_diagram(K4)
    np.testing.assert_array_equal(dg.weights, [0.2, 0.3, 0.4])
    assert [tuple(e) for e in dg.edges] == [(0, 1), (2, 3), (1, 2)]
    np.testing.assert_array_equal(topology.diagram_brute_force(K4).weights, [0.2, 0.3, 0.4])
    pair = np.array([[0, 0.6], [0.6, 0]])
    np.testing.assert_array_equal(topology.diagram_brute_force(pair).weights, [0.6])
    assert len(topology.mst_diagram(DissimilarityMatrix(K4))) == 3


def test_k4_has_sixteen_spanning_trees():
    ii, _ = topology._all_spanning_trees(4)
    assert len(ii) == 16
    # independent count: enumerate all 3-edge subsets that form trees
    edges = list(itertools.combinations(range(4), 2))
    trees = [s for s in itertools.combinations(edges, 3) if nx.is_tree(nx.Graph(list(s)))]
    assert len(trees) == 16
    assert min(sum(K4[i, j] for i, j in t) for t in trees) == pytest.approx(0.9)


def test_brute_force_limit():
    with pytest.raises(ValueError):
        topology.diagram_brute_force(np.ones((9, 9)) - np.eye(9))


def test_tie_break_lexicographic():
    d = np.ones((3, 3)) - np.eye(3)
    dg = topology.mst_diagram(d)
    assert [tuple(e) for e in dg.edges] == [(0, 1), (0, 2)]


def _random_d(gen, c):
    u = np.triu(gen.uniform(size=(c, c)), 1)
    return u + u.T


def test_oracle_equivalence_many():
    gen = np.random.default_rng(42)
    for _ in range(200):
        d = _random_d(gen, int(gen.integers(3, 8)))
        np.testing.assert_array_equal(np.sort(topology.mst_diagram(d).weights),
                                      np.sort(topology.diagram_brute_force(d).weights))


def test_networkx_oracle_larger():
    gen = np.random.default_rng(5)
    for _ in range(20):
        c = int(gen.integers(10, 40))
        d = _random_d(gen, c)
        g = nx.from_numpy_array(d)
        t = nx.minimum_spanning_tree(g)
        ref = np.sort([w for _, _, w in t.edges(data="weight")])
        np.testing.assert_allclose(topology.mst_diagram(d).weights, ref, rtol=0, atol=1e-15)


def _random_tree(gen, c):
    seq = gen.integers(0, c, c - 2)
    return topology._prufer_decode(list(seq), c)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 25), st.integers(0, 2**31 - 1))
def test_diagram_structure(c, seed):
    gen = np.random.default_rng(seed)
    d = _random_d(gen, c)
    dg = topology.mst_diagram(d)
    assert len(dg) == c - 1
    assert np.all(np.diff(dg.weights) >= 0)
    assert np.all(dg.edges[:, 0] < dg.edges[:, 1])
    g = nx.Graph([tuple(e) for e in dg.edges])
    g.add_nodes_from(range(c))
    assert nx.is_tree(g)
    assert dg.weights.min() == d[np.triu_indices(c, 1)].min()
    if c > 2:
        total = dg.weights.sum()
        for _ in range(100):
            t = _random_tree(gen, c)
            assert total <= sum(d[i, j] for i, j in t) + 1e-12


@settings(max_examples=60, deadline=None)
@given(st.integers(3, 12), st.integers(4, 30), st.integers(0, 2**31 - 1))
def test_correlation_properties(c, n, seed):
    gen = np.random.default_rng(seed)
    acts = gen.standard_normal((c, n))
    corr, d = topology.dissimilarity_matrix(acts)
    np.testing.assert_array_equal(corr.values, corr.values.T)
    assert np.all(np.abs(corr.values) <= 1.0)
    np.testing.assert_array_equal(np.diag(corr.values), 1.0)
    assert np.all((d.values >= 0) & (d.values <= 1))
    # cut property
    off = ~np.eye(c, dtype=bool)
    assert topology.mst_diagram(d).weights.min() == 1.0 - np.abs(corr.values[off]).max()
    # affine invariance
    a = gen.uniform(0.1, 5.0) * gen.choice([-1.0, 1.0])
    b = gen.normal()
    k = int(gen.integers(c))
    moved = acts.copy()
    moved[k] = a * moved[k] + b
    _, d2 = topology.dissimilarity_matrix(moved)
    np.testing.assert_allclose(d2.values, d.values, atol=1e-12, rtol=0)
    # permutation equivariance
    perm = gen.permutation(c)
    _, d3 = topology.dissimilarity_matrix(acts[perm])
    np.testing.assert_allclose(d3.values, d.values[np.ix_(perm, perm)], atol=1e-15, rtol=0)
    np.testing.assert_allclose(np.sort(topology.mst_diagram(d3).weights),
                               np.sort(topology.mst_diagram(d).weights), atol=1e-15, rtol=0)


def test_correlation_matches_numpy():
    acts = np.random.default_rng(1).standard_normal((7, 15))
    np.testing.assert_allclose(topology.correlation_matrix(acts).values, np.corrcoef(acts), atol=1e-14)


def test_scale_invariance_gives_identical_diagram():
    acts = np.random.default_rng(2).standard_normal((5, 16))
    scaled = acts.copy()
    scaled[2] *= 3.7
    a = topology.mst_diagram(topology.dissimilarity_matrix(acts)[1])
    b = topology.mst_diagram(topology.dissimilarity_matrix(scaled)[1])
    np.testing.assert_array_equal(a.edges, b.edges)
    np.testing.assert_allclose(a.weights, b.weights, atol=1e-15)


def test_diagram_adjoint():
    dg = topology.mst_diagram(K4)
    assert not topology.diagram_adjoint(dg, np.zeros(3)).any()
    adj = topology.diagram_adjoint(dg, np.ones(3))
    assert np.count_nonzero(adj) == 6
    np.testing.assert_array_equal(adj, adj.T)
    assert adj.sum() == 3.0
    with pytest.raises(ValueError):
        topology.diagram_adjoint(dg, np.ones(2))


def test_non_mst_edge_perturbation():
    base = regularizers.t1(topology.mst_diagram(K4))
    for i, j in [(0, 2), (0, 3), (1, 3)]:
        for h in (1e-6, -1e-6):
            d = K4.copy()
            d[i, j] += h
            d[j, i] += h
            assert regularizers.t1(topology.mst_diagram(d)) == base


def test_correlation_adjoint_zero_upstream():
    acts = np.random.default_rng(3).standard_normal((5, 16))
    assert not topology.correlation_adjoint(np.zeros((5, 5)), acts).any()


def _t1_of_acts(acts):
    return regularizers.t1(topology.mst_diagram(topology.dissimilarity_matrix(acts)[1]))


def test_correlation_adjoint_finite_differences():
    gen = np.random.default_rng(4)
    for _ in range(10):
        acts = gen.standard_normal((5, 16))
        corr, d = topology.dissimilarity_matrix(acts)
        dg = topology.mst_diagram(d)
        d_adj = topology.diagram_adjoint(dg, regularizers.t1_weight_adjoint(dg))
        analytic = topology.correlation_adjoint(d_adj, acts, corr)
        assert analytic.shape == acts.shape
        numeric = np.zeros_like(acts)
        h = 1e-6
        for idx in np.ndindex(acts.shape):
            up, dn = acts.copy(), acts.copy()
            up[idx] += h
            dn[idx] -= h
            numeric[idx] = (_t1_of_acts(up) - _t1_of_acts(dn)) / (2 * h)
        tol = np.maximum(1e-8, 1e-5 * np.maximum(np.abs(analytic), np.abs(numeric)))
        assert np.all(np.abs(analytic - numeric) <= tol)


def test_locality_of_gradient():
    # neuron 3 joins the MST only through an edge whose adjoint we zero out
    acts = np.random.default_rng(6).standard_normal((4, 12))
    corr, d = topology.dissimilarity_matrix(acts)
    dg = topology.mst_diagram(d)
    w_adj = np.array([-1.0 if 3 not in e else 0.0 for e in dg.edges])
    g = topology.correlation_adjoint(topology.diagram_adjoint(dg, w_adj), acts, corr)
    assert not g[3].any()


def test_gather():
    vals = [np.arange(6.0).reshape(3, 2), np.arange(4.0).reshape(2, 2) + 10]
    out = topology.gather(vals, [NeuronId(1, 0), NeuronId(0, 2)])
    np.testing.assert_array_equal(out, [[10, 11], [4, 5]])


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (4, 6), elements=st.floats(-10, 10, allow_nan=False, width=64)))
def test_no_nans_on_arbitrary_inputs(acts):
    corr, d = topology.dissimilarity_matrix(acts)
    assert np.isfinite(d.values).all()
    dg = topology.mst_diagram(d)
    g = topology.correlation_adjoint(topology.diagram_adjoint(dg, -np.ones(3)), acts, corr)
    assert np.isfinite(g).all()
