from __future__ import annotations

import numpy as np
import pytest
from conftest import rand_graphon
from hypothesis import given
from hypothesis import strategies as st

from gse_lab.core import WeightedGraph
from gse_lab.errors import CouplingError, DomainError, ParseError, ValidationError
from gse_lab.graphon import (
    StepGraphon,
    block_diagonal,
    constant_graphon,
    coupled_difference,
    graphon_from_graph,
    independent_coupling,
    parse_graphon,
    quantile_coupling,
    refine_graphon,
    serialize_graphon,
)


class TestEmbedding:
    def test_triangle(self):
        W = graphon_from_graph(WeightedGraph.complete(3))
        assert W.k == 3
        assert np.allclose(W.lam, 1 / 3)
        assert np.array_equal(W.B, np.ones((3, 3)) - np.eye(3))

    def test_single_node(self):
        W = graphon_from_graph(WeightedGraph.empty(1))
        assert W.k == 1 and W.lam.tolist() == [1.0] and W.B.tolist() == [[0.0]]

    def test_node_weights(self):
        G = WeightedGraph(np.array([[0, 2.0], [2.0, 0]]), [1, 3])
        W = graphon_from_graph(G)
        assert W.lam.tolist() == [0.25, 0.75]
        assert W.B.tolist() == [[0, 2], [2, 0]]

    @given(st.integers(1, 6), st.integers(0, 10**6))
    def test_sup_norm_preserved(self, n, seed):
        rng = np.random.default_rng(seed)
        A = np.triu(rng.normal(size=(n, n)), 1)
        G = WeightedGraph(A + A.T, rng.uniform(0.1, 2, n))
        W = graphon_from_graph(G)
        assert W.inf_norm == G.beta_max


class TestFamilies:
    def test_block_diagonal(self):
        W = block_diagonal(0.5, 2, 2)
        assert W.lam.tolist() == [0.5, 0.5]
        assert W.B.tolist() == [[2, 0], [0, 2]]

    def test_hierarchy_member(self):
        W = block_diagonal(0.5, 1 / 0.25, 0)
        assert W.B.tolist() == [[4, 0], [0, 0]]

    def test_one_parameter_member(self):
        a = 0.25
        W = block_diagonal(a, 1 / a, 1 / (1 - a))
        assert W.lam.tolist() == [0.25, 0.75]
        assert W.B[0, 0] == 4 and W.B[1, 1] == pytest.approx(4 / 3)

    def test_alpha_one_is_constant(self):
        assert block_diagonal(1, 3.5, 7) == constant_graphon(3.5)

    @pytest.mark.parametrize("alpha", [0, -0.1, 1.2])
    def test_alpha_domain(self, alpha):
        with pytest.raises(DomainError):
            block_diagonal(alpha, 1, 1)

    @pytest.mark.parametrize("c", [1, 0, -2])
    def test_constant(self, c):
        W = constant_graphon(c)
        assert W.k == 1 and W.B[0, 0] == c


class TestStepGraphon:
    def test_zero_blocks_dropped(self):
        W = StepGraphon([0.5, 0.0, 0.5], [[1, 9, 2], [9, 9, 9], [2, 9, 3]])
        assert W.k == 2
        assert W.B.tolist() == [[1, 2], [2, 3]]

    def test_validation(self):
        with pytest.raises(ValidationError):
            StepGraphon([0.5, 0.6], np.zeros((2, 2)))
        with pytest.raises(ValidationError):
            StepGraphon([0.5, 0.5], [[0, 1], [2, 0]])

    def test_json_round_trip(self):
        W = StepGraphon([0.3, 0.7], [[0.1, -2], [-2, 1 / 3]])
        assert parse_graphon(serialize_graphon(W)) == W

    def test_bad_json(self):
        with pytest.raises(ParseError):
            parse_graphon('{"lambda": [1.0]}')
        with pytest.raises(ParseError):
            parse_graphon("{not json")


class TestCoupling:
    def test_same_constant(self):
        D = coupled_difference(constant_graphon(1), constant_graphon(1), [[1.0]])
        assert D.k == 1 and D.B[0, 0] == 0

    def test_one_minus_zero(self):
        D = coupled_difference(constant_graphon(1), constant_graphon(0), [[1.0]])
        assert D == constant_graphon(1)

    def test_independent_entrywise(self):
        U = StepGraphon([0.4, 0.6], [[1, 2], [2, 3]])
        W = StepGraphon([0.5, 0.5], [[-1, 0], [0, 5]])
        X = independent_coupling(U, W)
        D = coupled_difference(U, W, X)
        assert D.k == 4
        cells = [(s, t) for s in range(2) for t in range(2)]
        for i, (s, t) in enumerate(cells):
            assert D.lam[i] == pytest.approx(U.lam[s] * W.lam[t])
            for j, (s2, t2) in enumerate(cells):
                assert D.B[i, j] == U.B[s, s2] - W.B[t, t2]

    def test_marginal_mismatch(self):
        U = StepGraphon([0.4, 0.6], np.eye(2))
        with pytest.raises(CouplingError):
            coupled_difference(U, U, [[0.5, 0.0], [0.0, 0.5]])

    @given(st.integers(1, 4), st.integers(1, 4), st.integers(0, 10**6))
    def test_quantile_marginals(self, ku, kw, seed):
        rng = np.random.default_rng(seed)
        U, W = rand_graphon(rng, ku), rand_graphon(rng, kw)
        X = quantile_coupling(U.lam, W.lam)
        assert np.allclose(X.sum(axis=1), U.lam, atol=1e-10)
        assert np.allclose(X.sum(axis=0), W.lam, atol=1e-10)
        assert np.all(X >= 0)


def test_refinement_keeps_values():
    W = StepGraphon([0.25, 0.75], [[1, 2], [2, 3]])
    R = refine_graphon(W, [[1], [1, 2]])
    assert np.allclose(R.lam, [0.25, 0.25, 0.5])
    assert R.B.tolist() == [[1, 2, 2], [2, 3, 3], [2, 3, 3]]
    with pytest.raises(ValidationError):
        refine_graphon(W, [[1, 0], [1]])
