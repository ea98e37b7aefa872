from __future__ import annotations

import csv
import io
import json

import numpy as np
import pytest
from conftest import rand_simple_graph

from gse_lab.core import InteractionMatrix, ThresholdSpec, WeightedGraph, dumps
from gse_lab.errors import DomainError, ValidationError
from gse_lab.experiments import (
    CSV_HEADER,
    ParameterSpec,
    blockdiag_report,
    cauchy_gaps,
    complete_graph_maxcut,
    hierarchy_experiment,
    richardson,
    sample_induced,
    sample_nodes,
    testability_experiment as run_testability,
)
from gse_lab.graph_energy import gse_exhaustive

MAXCUT = ParameterSpec(InteractionMatrix.maxcut(2), J_id="maxcut2")

# Mincut with 5 states on W(0.7, 1/0.49, 0) at per-class threshold 0.08.  The
# energy is 1 - sum_i r_1i^2 over the first block's row; the second block
# (mass 0.3) covers at most 0.3 of the required 0.4, so the first block must
# hand 0.02 / 0.7 = 1/35 to the other classes.  Best split: (34/35, 1/35).
HIERARCHY_Q5 = 1 - (34 / 35) ** 2 - (1 / 35) ** 2  # = 68/1225

# Seeded half-density graph on 200 nodes (rng 200), k = 20, 40, 60, m = 10,
# epsilon = 0.1: median deviations from the experiment run.
QUASIRANDOM_MEDIANS = {"20": 0.05015, "40": 0.030775, "60": 0.020427777777777}


def star(n):
    A = np.zeros((n, n))
    A[0, 1:] = A[1:, 0] = 1
    return WeightedGraph(A)


def half_density_graph():
    return rand_simple_graph(np.random.default_rng(200), 200)


class TestSampling:
    def test_complete_is_hereditary(self):
        for s in range(20):
            assert sample_induced(WeightedGraph.complete(5), 3, seed=s) == WeightedGraph.complete(3)

    def test_star_edge_frequency(self):
        # center in a uniform 2-subset of 5 nodes with probability 4/10
        hits = sum(0 in sample_nodes(5, 2, seed=s) for s in range(10**5))
        assert abs(hits / 10**5 - 0.4) <= 0.01
        H = sample_induced(star(5), 2, seed=1)
        assert H.edge_weights[0, 1] == (1.0 if 0 in sample_nodes(5, 2, seed=1) else 0.0)

    def test_seeded(self, rng):
        G = rand_simple_graph(rng, 30)
        assert sample_induced(G, 10, seed=9) == sample_induced(G, 10, seed=9)

    def test_uniform_subsets(self):
        counts = {}
        for s in range(6000):
            key = tuple(sample_nodes(4, 2, seed=s))
            counts[key] = counts.get(key, 0) + 1
        assert len(counts) == 6
        assert all(abs(c / 6000 - 1 / 6) < 0.02 for c in counts.values())

    def test_errors(self):
        with pytest.raises(DomainError):
            sample_induced(WeightedGraph.complete(3), 4)
        with pytest.raises(ValidationError):
            sample_induced(WeightedGraph(np.array([[0, 2.0], [2.0, 0]])), 1)


class TestTestability:
    def test_complete_graph_closed_form(self):
        # values must agree bit for bit, not just approximately
        rep = run_testability(WeightedGraph.complete(60), MAXCUT, [20], 10, 0.1, seed=3)
        want = abs(complete_graph_maxcut(20) - complete_graph_maxcut(60))
        assert rep.summary["f_G"] == complete_graph_maxcut(60)
        assert len(rep.items) == 10
        for it in rep.items:
            assert it["value"] == complete_graph_maxcut(20)
            assert it["deviation"] == want

    @pytest.mark.parametrize("k", [2, 3, 7, 10])
    def test_closed_form_small(self, k):
        assert gse_exhaustive(WeightedGraph.complete(k), InteractionMatrix.maxcut(2)).value == pytest.approx(
            complete_graph_maxcut(k), abs=1e-15
        )

    def test_no_samples(self):
        rep = run_testability(WeightedGraph.complete(10), MAXCUT, [5], 0, 0.1)
        assert rep.items == []
        assert rep.summary["per_k"] == {"5": {"samples": 0}}

    def test_quasirandom_snapshot(self):
        rep = run_testability(half_density_graph(), MAXCUT, [20, 40, 60], 10, 0.1, seed=0)
        per_k = rep.summary["per_k"]
        freqs = [per_k[k]["exceedance"] for k in ("20", "40", "60")]
        assert all(b <= a for a, b in zip(freqs, freqs[1:]))
        for k, med in QUASIRANDOM_MEDIANS.items():
            assert per_k[k]["quantiles"]["0.5"] == pytest.approx(med, abs=1e-12)
        assert rep.summary["label"] == "empirical evidence"

    def test_reproducible(self, rng):
        G = rand_simple_graph(rng, 40)
        a = run_testability(G, MAXCUT, [10], 5, 0.1, seed=4).to_dict()
        b = run_testability(G, MAXCUT, [10], 5, 0.1, seed=4).to_dict()
        a.pop("runtime"), b.pop("runtime")
        assert dumps(a) == dumps(b)

    def test_budget_gives_partial_report(self):
        spec = ParameterSpec(InteractionMatrix.maxcut(2), mode="exhaustive", budget=2**10)
        rep = run_testability(WeightedGraph.complete(30), spec, [8, 12], 3, 0.1)
        assert rep.partial and "error" in rep.summary

    def test_csv(self):
        rep = run_testability(WeightedGraph.complete(12), MAXCUT, [4], 3, 0.1, seed=1)
        rows = list(csv.reader(io.StringIO(rep.to_csv())))
        assert tuple(rows[0]) == CSV_HEADER
        assert len(rows) == 4
        assert float(rows[1][4]) == complete_graph_maxcut(4)

    def test_schema(self):
        d = run_testability(WeightedGraph.complete(6), MAXCUT, [3], 1, 0.1).to_dict()
        assert d["schema"] == "gse-lab/1"
        json.dumps(d)


@pytest.fixture(scope="module")
def half():
    return blockdiag_report(0.5, 1, 1, 0.2, 2, [8, 16, 32, 64], n_list=(2,), restarts=16)


@pytest.fixture(scope="module")
def hierarchy_run():
    return hierarchy_experiment([0.5, 0.7] * 3, 0.2, 0.4, q_menu=(2, 3, 4, 5), restarts=32, oracle_m=40)


class TestBlockDiagonal:
    def test_single_entry(self, half):
        s = half.summary["single_entry"]
        assert s["valid"] and s["closed_form"] == pytest.approx(0.005)
        assert s["value"] == pytest.approx(0.005, abs=1e-5)

    def test_maxcut(self):
        rep = blockdiag_report(0.5, 2, 2, 0.2, 2, [8, 16], n_list=(), restarts=16)
        assert rep.summary["maxcut"]["closed_form"] == pytest.approx(-0.5)
        assert rep.summary["maxcut"]["value"] == pytest.approx(-0.5, abs=1e-5)

    def test_penalized_limit(self, half):
        p = half.summary["penalized_limit"]
        assert p["closed_form"] == pytest.approx(0.75)
        assert abs(p["extrapolated"] - 0.75) / 0.75 <= 0.02

    @pytest.mark.parametrize("alpha", [0.3, 0.5])
    def test_one_parameter_family(self, alpha):
        rep = blockdiag_report(alpha, 1 / alpha, 1 / (1 - alpha), 0.2, 2, [16, 32, 64, 128], n_list=(), restarts=16)
        s = rep.summary
        assert s["maxcut"]["value"] == pytest.approx(-0.5, abs=1e-5)
        assert s["single_entry"]["inverse_beta_sum"] == pytest.approx(1)
        p = s["penalized_limit"]
        assert p["closed_form"] == pytest.approx(1 + max(alpha, 1 - alpha))
        assert abs(p["extrapolated"] - p["closed_form"]) / p["closed_form"] <= 0.02

    def test_divergence_flag(self):
        # a threshold of 0.2 on a class that only the 0.05 block can reach alone
        rep = blockdiag_report(0.05, 1, 1, 0.2, 2, [8, 16, 32, 64], n_list=(2,), restarts=8)
        g = rep.summary["general_thresholds"]["2"]
        assert g["x"]["x"] == pytest.approx([0.1, 0.1])
        assert g["x"]["diverges"] and g["x"]["limit"] is None

    def test_no_divergence_when_blocks_are_large(self, half):
        g = half.summary["general_thresholds"]["2"]
        assert not g["x"]["diverges"] and g["max_limit"] is not None

    def test_domain(self):
        with pytest.raises(DomainError):
            blockdiag_report(1.0, 1, 1, 0.2, 2, [8, 16])
        with pytest.raises(DomainError):
            blockdiag_report(0.5, -1, 1, 0.2, 2, [8, 16])

    def test_json(self, half):
        json.loads(dumps(half.to_dict()))


def test_richardson_exact_on_one_over_k():
    ks = [8, 16, 32]
    L, resid = richardson(ks, [2 + 3 / k for k in ks])
    assert L == pytest.approx(2) and resid == pytest.approx(0, abs=1e-12)


def test_cauchy_gaps():
    assert cauchy_gaps([1, 3, 2, 2]) == [2, 1, 0, 0]


class TestHierarchy:
    def test_h1_sequences_constant(self, hierarchy_run):
        assert hierarchy_run.summary["h1_all_constant"]
        for s in hierarchy_run.summary["sequences"].values():
            assert max(abs(v) for v in s["h1"]["values"]) < 1e-9

    def test_q5_flagged(self, hierarchy_run):
        assert "mincut5" in hierarchy_run.summary["flagged"]
        vals = hierarchy_run.summary["sequences"]["mincut5"]["h2"]["values"]
        assert vals[1] == pytest.approx(HIERARCHY_Q5, abs=1e-7)
        assert vals[0] == pytest.approx(0, abs=1e-9)

    def test_certificate_bracket(self, hierarchy_run):
        c = hierarchy_run.summary["certificates"]["mincut5"]
        assert c["alpha"] == 0.7
        assert c["oracle_relaxed"] - 0.02 <= c["value"] <= c["oracle_feasible"] + 1e-9

    def test_small_q_not_flagged(self, hierarchy_run):
        # (q-1) h2/q <= 0.3 leaves room for every class outside the big block
        assert "mincut2" not in hierarchy_run.summary["flagged"] and "mincut3" not in hierarchy_run.summary["flagged"]

    def test_constant_schedule(self):
        rep = hierarchy_experiment([0.6] * 4, 0.2, 0.4, q_menu=(2, 5), restarts=16)
        assert rep.summary["flagged"] == []
        for s in rep.summary["sequences"].values():
            assert s["h2"]["tail_gap"] == 0 and s["h1"]["tail_gap"] == 0

    def test_gap_monotone_in_h2(self):
        gaps = []
        for h2 in (0.3, 0.4, 0.5):
            rep = hierarchy_experiment([0.5, 0.7, 0.5, 0.7], 0.2, h2, q_menu=(3, 5), restarts=16)
            gaps.append({j: s["h2"]["tail_gap"] for j, s in rep.summary["sequences"].items()})
        for a, b in zip(gaps, gaps[1:]):
            assert all(b[j] >= a[j] - 1e-9 for j in a)

    def test_domain(self):
        with pytest.raises(DomainError):
            hierarchy_experiment([0.5, 1.0], 0.2, 0.4)
        with pytest.raises(DomainError):
            hierarchy_experiment([0.5], 0.4, 0.2)

    def test_custom_menu(self):
        menu = {"mc3": InteractionMatrix.mincut(3)}
        rep = hierarchy_experiment([0.5, 0.5], 0.1, 0.2, J_menu=menu, restarts=8)
        assert set(rep.summary["sequences"]) == {"mc3"}
        assert all(it["J-id"] == "mc3" for it in rep.items)


def test_parameter_spec_validation():
    with pytest.raises(ValidationError):
        ParameterSpec(InteractionMatrix.maxcut(2), ThresholdSpec.lower(3, 0.1))
    with pytest.raises(ValidationError):
        ParameterSpec(InteractionMatrix.maxcut(2), mode="annealing")
