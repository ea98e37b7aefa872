from __future__ import annotations

import itertools
import warnings

import numpy as np
import pytest
from conftest import rand_graphon
from hypothesis import given
from hypothesis import strategies as st

from gse_lab.core import WeightedGraph
from gse_lab.cut import cut_distance_graphs, cut_distance_step, cut_norm_step
from gse_lab.graphon import (
    StepGraphon,
    constant_graphon,
    coupled_difference,
    graphon_from_graph,
    refine_graphon,
)

# K2 against the edgeless pair.  The second graph is zero, so every coupled
# difference is a refinement of K2's graphon and the distance equals K2's
# cut norm: S = T = both blocks gives 2 * (1/2)^2 = 1/2.
K2_VS_EMPTY = 0.5


def grid_cut_norm(W, steps=10):
    """Cut norm with block inclusion weights on a 1/steps grid."""
    M = np.asarray(W.mass_matrix)
    grid = np.linspace(0, 1, steps + 1)
    best = 0.0
    for f in itertools.product(grid, repeat=W.k):
        row = np.asarray(f) @ M
        # for fixed f the best g is 0/1: take the positive or the negative part
        best = max(best, row[row > 0].sum(), -row[row < 0].sum())
    return best


class TestCutNorm:
    @pytest.mark.parametrize("c", [1.0, -0.3, 2.5])
    def test_constant(self, c):
        res = cut_norm_step(constant_graphon(c))
        assert res.value == pytest.approx(abs(c))
        assert res.S == (0,) and res.T == (0,)

    def test_two_block_signed(self):
        res = cut_norm_step(StepGraphon([0.5, 0.5], [[1, -1], [-1, 1]]))
        assert res.value == pytest.approx(0.25)
        assert len(res.S) == 1 and res.S == res.T

    def test_self_difference(self, rng):
        W = rand_graphon(rng, 3)
        D = coupled_difference(W, W, np.diag(W.lam))
        assert cut_norm_step(D).value == 0

    def test_certificate_attains_value(self, rng):
        W = rand_graphon(rng, 4, -1, 1)
        res = cut_norm_step(W)
        M = np.asarray(W.mass_matrix)
        assert abs(M[np.ix_(res.S, res.T)].sum()) == pytest.approx(res.value)

    @given(st.integers(1, 3), st.integers(0, 10**6))
    def test_vertex_attainment(self, k, seed):
        rng = np.random.default_rng(seed)
        W = rand_graphon(rng, k, -1, 1)
        assert cut_norm_step(W).value == pytest.approx(grid_cut_norm(W), abs=1e-12)

    def test_large_falls_back_with_flag(self, rng):
        W = rand_graphon(rng, 22, -1, 1)
        with pytest.warns(RuntimeWarning, match="lower bound"):
            res = cut_norm_step(W)
        assert not res.exact
        # a lower bound: the reported sets realize the value
        M = np.asarray(W.mass_matrix)
        assert abs(M[np.ix_(res.S, res.T)].sum()) == pytest.approx(res.value)


class TestCutDistance:
    def test_identity_every_mode(self, rng):
        W = rand_graphon(rng, 3)
        for mode in ("alternating", "exact"):
            res = cut_distance_step(W, W, mode=mode)
            assert res.value == 0
            assert np.array_equal(res.coupling, np.diag(W.lam))

    def test_block_permutation(self):
        W = StepGraphon([0.2, 0.8], [[1, 0.3], [0.3, 0.5]])
        U = StepGraphon([0.8, 0.2], [[0.5, 0.3], [0.3, 1]])
        assert cut_distance_step(U, W).value == 0

    def test_one_vs_zero(self):
        assert cut_distance_step(constant_graphon(1), constant_graphon(0), mode="exact").value == pytest.approx(1)

    def test_refinement(self):
        W = StepGraphon([0.25, 0.75], [[1, 2], [2, 3]])
        R = refine_graphon(W, [[1], [1, 2]])
        assert cut_distance_step(W, R).value == pytest.approx(0, abs=1e-9)

    def test_k2_vs_edgeless(self):
        K2, E2 = WeightedGraph.complete(2), WeightedGraph.empty(2)
        res = cut_distance_graphs(K2, E2, mode="exact")
        assert res.value == pytest.approx(K2_VS_EMPTY, abs=1e-12)
        assert cut_norm_step(graphon_from_graph(K2)).value == pytest.approx(K2_VS_EMPTY)

    def test_relabeled_graph(self, rng):
        A = np.triu(rng.random((5, 5)) < 0.5, 1).astype(float)
        G = WeightedGraph(A + A.T)
        p = rng.permutation(5)
        H = WeightedGraph(G.edge_weights[np.ix_(p, p)])
        assert cut_distance_graphs(G, H).value == 0

    def test_exact_mode_degrades(self, rng):
        U, W = rand_graphon(rng, 5), rand_graphon(rng, 4)
        with pytest.warns(RuntimeWarning, match="alternating"):
            res = cut_distance_step(U, W, mode="exact")
        assert res.mode == "alternating"

    def test_coupling_is_feasible(self, rng):
        U, W = rand_graphon(rng, 3), rand_graphon(rng, 2)
        X = cut_distance_step(U, W, seed=3).coupling
        assert np.allclose(X.sum(axis=1), U.lam, atol=1e-9)
        assert np.allclose(X.sum(axis=0), W.lam, atol=1e-9)
        assert X.min() >= 0

    @given(st.integers(1, 3), st.integers(1, 3), st.integers(0, 10**6))
    def test_symmetry(self, ku, kw, seed):
        rng = np.random.default_rng(seed)
        U, W = rand_graphon(rng, ku), rand_graphon(rng, kw)
        a = cut_distance_step(U, W, seed=seed)
        b = cut_distance_step(W, U, seed=seed)
        assert a.value == b.value
        assert np.array_equal(a.coupling, b.coupling.T)

    @given(st.integers(1, 2), st.integers(1, 3), st.integers(0, 10**6))
    def test_alternating_bounds_exact(self, ku, kw, seed):
        rng = np.random.default_rng(seed)
        U, W = rand_graphon(rng, ku), rand_graphon(rng, kw)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            exact = cut_distance_step(U, W, mode="exact", seed=seed).value
        alt = cut_distance_step(U, W, seed=seed).value
        assert alt >= exact - 1e-9

    @given(st.integers(1, 3), st.integers(1, 3), st.integers(0, 10**6))
    def test_bound_is_a_coupled_cut_norm(self, ku, kw, seed):
        # the reported value is realized by the returned coupling
        rng = np.random.default_rng(seed)
        U, W = rand_graphon(rng, ku), rand_graphon(rng, kw)
        res = cut_distance_step(U, W, seed=seed)
        direct = cut_norm_step(_diff(U, W, res.coupling)).value
        assert res.value == pytest.approx(direct, abs=1e-9)


def _diff(U, W, X):
    """Coupled difference built entrywise, independent of the library helper."""
    cells = [(s, t) for s in range(U.k) for t in range(W.k) if X[s, t] > 0]
    lam = np.array([X[s, t] for s, t in cells])
    B = np.array([[U.B[s, s2] - W.B[t, t2] for s2, t2 in cells] for s, t in cells])
    return StepGraphon(lam / lam.sum(), B)
