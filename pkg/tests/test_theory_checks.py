import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from profweight.errors import InvalidArgumentError
from profweight.theory_checks import (DiscreteDistribution, bayes_error_discrete, bayes_tv_suite,
                                      lemma_grid_verify, ratio_sum, render, run_all, simplex_grid,
                                      weight_constraint_check, weight_constraint_suite, tv_distance, weight_constraint)

simplex = st.integers(2, 8).flatmap(
    lambda n: st.lists(st.floats(0.01, 1.0), min_size=n, max_size=n)).map(lambda v: np.array(v) / sum(v))


class TestRatioSum:
    def test_hand_example(self):
        assert ratio_sum([0.5, 0.5], [0.25, 0.75], [0.5, 0.5]) == pytest.approx(4 / 3, abs=1e-15)

    @given(simplex, st.integers(0, 2**31))
    @settings(max_examples=50)
    def test_cancellations(self, p, seed):
        r = DiscreteDistribution.random(p.size, np.random.default_rng(seed)).masses
        assert ratio_sum(p, p, r) == pytest.approx(1.0, abs=1e-12)
        assert ratio_sum(p, r, r) == pytest.approx(1.0, abs=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            ratio_sum([0.5, 0.5], [1 / 3] * 3, [0.5, 0.5])


class TestDistances:
    def test_tv_examples(self):
        assert tv_distance([0.5, 0.5], [0.5, 0.5]) == 0.0
        assert tv_distance([0.5, 0.5], [0.25, 0.75]) == pytest.approx(0.25)
        eps = 1e-9
        assert tv_distance([eps, 1 - eps], [1 - eps, eps]) > 1 - 1e-8

    def test_bayes_examples(self):
        assert bayes_error_discrete([0.2, 0.8], [0.2, 0.8]) == pytest.approx(0.5)
        eps = 1e-12
        assert bayes_error_discrete([1 - eps, eps], [eps, 1 - eps]) < 1e-11

    @given(simplex, st.integers(0, 2**31))
    @settings(max_examples=100)
    def test_identity(self, p, seed):
        q = DiscreteDistribution.random(p.size, np.random.default_rng(seed)).masses
        assert abs(bayes_error_discrete(p, q) - (0.5 - 0.5 * tv_distance(p, q))) < 1e-12

    def test_suite(self):
        res = bayes_tv_suite(200, 10, seed=1)
        assert res["ok"] and res["max_abs_gap"] < 1e-12


class TestDistribution:
    def test_rejects_non_simplex(self):
        with pytest.raises(InvalidArgumentError):
            DiscreteDistribution(np.array([0.5, 0.6]))
        with pytest.raises(InvalidArgumentError):
            DiscreteDistribution(np.array([1.0, 0.0]))

    def test_grid_is_interior(self):
        Q = simplex_grid(3, 100)
        assert np.all(Q > 0) and np.allclose(Q.sum(axis=1), 1.0)
        assert Q.shape[0] == 99 * 98 // 2


class TestLemmaGrid:
    def test_two_atom_example(self):
        rep = lemma_grid_verify([0.3, 0.7], [0.6, 0.4], 10_000)
        assert rep.ok and rep.violations == []
        # every solution found (grid hit or refined root) sits at q = p or q = r
        found = sorted({round(q[0], 9) for q in rep.near_solutions + rep.roots})
        assert found == pytest.approx([0.3, 0.6], abs=1e-9)

    def test_equal_distributions(self):
        rep = lemma_grid_verify([0.4, 0.6], [0.4, 0.6], 10_000)
        assert rep.ok

    def test_three_atoms_random(self):
        rng = np.random.default_rng(0)
        for _ in range(3):
            p, r = DiscreteDistribution.random(3, rng), DiscreteDistribution.random(3, rng)
            assert lemma_grid_verify(p, r, 200).ok

    def test_solution_set_is_a_curve_for_three_atoms(self):
        # at q proportional to sqrt(p r) the sum drops below 1, while it exceeds 1 near the
        # simplex boundary, so equality holds on a whole closed curve through p and r
        p, r = np.array([0.2, 0.3, 0.5]), np.array([0.5, 0.3, 0.2])
        mid = np.sqrt(p * r) / np.sqrt(p * r).sum()
        assert ratio_sum(p, mid, r) < 1.0
        assert ratio_sum(p, np.array([0.98, 0.01, 0.01]), r) > 1.0
        assert lemma_grid_verify(p, r, 200).crossings_outside > 0

    def test_unsupported_dimension(self):
        with pytest.raises(InvalidArgumentError):
            lemma_grid_verify([0.25] * 4, [0.25] * 4, 100)


class TestWeightConstraint:
    def test_two_neighborhoods(self):
        rep = weight_constraint_check([0.3, 0.7], [0.6, 0.4], 10_000)
        assert rep.ok and len(rep.neighborhoods) == 2
        families = sorted(f for n in rep.neighborhoods for f in n["families"])
        assert families == ["importance_ratio", "unit_weights"]

    def test_coinciding_families(self):
        rep = weight_constraint_check([0.5, 0.5], [0.5, 0.5], 10_000)
        assert len(rep.neighborhoods) == 1
        assert sorted(rep.neighborhoods[0]["families"]) == ["importance_ratio", "unit_weights"]

    def test_far_candidate(self):
        assert abs(weight_constraint([0.3, 0.7], [0.6, 0.4], [0.9, 0.1]) - 1.0) > 1e-3

    def test_suite(self):
        assert weight_constraint_suite()["ok"]


def test_quick_run_all_and_render():
    results = run_all(seed=0, quick=True)
    assert all(r["ok"] for r in results)
    text = render(results)
    assert text.count("[PASS]") == len(results)
