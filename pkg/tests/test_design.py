import math

import numpy as np
import pytest

from _oracles import bernoulli_kl, logistic, saddle_grid_oracle
from seqrank.design import (
    SelectionDistribution,
    d_value,
    inner_min,
    mirror_descent,
    t_c,
)
from seqrank.errors import IndistinguishableError, ValidationError
from seqrank.model import ModelParams, all_pairs, pair_kl
from seqrank.support import SupportSpec, rank_of, sample_uniform

SPEC2 = SupportSpec(n_items=2, kappa=2.0, delta=0.4)
SPEC3 = SupportSpec(n_items=3, kappa=2.0, delta=0.4)


def params(*free):
    return ModelParams.from_free(np.array(free, dtype=float))


class TestSelectionDistribution:
    def test_valid(self):
        SelectionDistribution(np.array([0.25, 0.75]))

    def test_negative_rejected(self):
        with pytest.raises(ValidationError):
            SelectionDistribution(np.array([1.2, -0.2]))

    def test_sum_enforced(self):
        with pytest.raises(ValidationError):
            SelectionDistribution(np.array([0.5, 0.4]))

    def test_uniform(self):
        u = SelectionDistribution.uniform(3)
        assert np.allclose(u.weights, 1 / 3)


class TestInnerMin:
    def test_two_item_boundary_minimizer(self):
        # grid oracle: min over theta2 in [0.4, 2] of KL(0.7 || q(theta2))
        theta = params(math.log(3.0 / 7.0))
        arg, val = inner_min(theta, SelectionDistribution(np.array([1.0])), SPEC2)
        grid = np.arange(0.4, 2.0 + 1e-9, 1e-4)
        kl = bernoulli_kl(0.7, logistic(-grid))
        assert val == pytest.approx(kl.min(), abs=1e-8)
        assert val == pytest.approx(0.18215095034505913, abs=1e-7)
        assert arg.free[0] == pytest.approx(0.4, abs=1e-6)

    def test_unsupported_pair_makes_adjacent_region_free(self):
        # weight only on the pair whose order is unchanged by the swap: the
        # minimizer replicates theta's probability there at zero cost
        theta = params(1.0, -1.0)  # ranks 2 > 1 > 3
        lam = SelectionDistribution(np.array([1.0, 0.0, 0.0]))  # pair (1,2)
        arg, val = inner_min(theta, lam, SPEC3)
        assert val == pytest.approx(0.0, abs=1e-9)
        assert rank_of(arg).one_based() != (2, 1, 3)

    def test_value_below_any_feasible_evaluation(self):
        rng = np.random.default_rng(61)
        pairs = all_pairs(3)
        for _ in range(20):
            theta = sample_uniform(SPEC3, rng)
            w = rng.dirichlet(np.ones(3))
            lam = SelectionDistribution(w)
            _, val = inner_min(theta, lam, SPEC3)
            for _ in range(10):
                cand = sample_uniform(SPEC3, rng)
                if rank_of(cand).order == rank_of(theta).order:
                    continue
                ref = sum(w[a] * pair_kl(theta, cand, pairs[a]) for a in range(3))
                assert val <= ref + 1e-9

    def test_theta_outside_support_rejected(self):
        with pytest.raises(ValidationError):
            inner_min(params(3.0), SelectionDistribution(np.array([1.0])), SPEC2)


class TestMirrorDescent:
    def test_closed_form_update_hand_example(self):
        # one update, two pairs: lam0 = (1/2, 1/2), g = (0, -ln 2), eta = 1
        lam0 = np.array([0.5, 0.5])
        g = np.array([0.0, -math.log(2.0)])
        w = lam0 * np.exp(-1.0 * g)
        w /= w.sum()
        assert np.allclose(w, [1 / 3, 2 / 3], atol=1e-15)

    def test_first_iterate_matches_closed_form(self):
        # lam-hat after a single iteration equals the multiplicative update
        # of the uniform start with the KL vector at its inner minimizer
        theta = params(1.0, -1.0)
        lam0 = SelectionDistribution.uniform(3)
        arg, _ = inner_min(theta, lam0, SPEC3)
        klvec = np.array([pair_kl(theta, arg, p) for p in all_pairs(3)])
        want = lam0.weights * np.exp(1.0 * klvec)
        want /= want.sum()
        sol = mirror_descent(theta, SPEC3, iters=1, c0=1.0)
        assert np.allclose(sol.selection.weights, want, atol=1e-6)

    def test_single_pair_degenerate_simplex(self):
        theta = params(-0.9)
        sol = mirror_descent(theta, SPEC2, iters=50)
        assert sol.selection.weights[0] == pytest.approx(1.0, abs=1e-12)
        _, val = inner_min(theta, sol.selection, SPEC2)
        assert sol.value == pytest.approx(val, abs=1e-9)

    def test_matches_brute_force_saddle(self):
        theta = params(1.0, -1.0)
        sol = mirror_descent(theta, SPEC3, iters=2000, c0=1.0)
        want = saddle_grid_oracle(theta.free, 2.0, 0.4)
        assert sol.value == pytest.approx(want, rel=0.02)

    def test_simplex_preserved_across_instances(self):
        rng = np.random.default_rng(67)
        for _ in range(100):
            theta = sample_uniform(SPEC3, rng)
            sol = mirror_descent(theta, SPEC3, iters=40)
            w = sol.selection.weights
            assert np.all(w >= 0.0)
            assert abs(w.sum() - 1.0) < 1e-9
            assert sol.value >= 0.0
            assert sol.gap >= 0.0

    def test_supergradient_inequality(self):
        # the negated KL vector at the inner minimizer supports the concave
        # inner-value function from above
        rng = np.random.default_rng(71)
        pairs = all_pairs(3)
        for _ in range(200):
            theta = sample_uniform(SPEC3, rng)
            w1 = rng.dirichlet(np.ones(3))
            w2 = rng.dirichlet(np.ones(3))
            lam1, lam2 = SelectionDistribution(w1), SelectionDistribution(w2)
            arg1, v1 = inner_min(theta, lam1, SPEC3)
            _, v2 = inner_min(theta, lam2, SPEC3)
            klvec = np.array([pair_kl(theta, arg1, p) for p in pairs])
            assert v2 <= v1 + klvec @ (w2 - w1) + 1e-6

    def test_gap_shrinks_with_iterations(self):
        rng = np.random.default_rng(73)
        for _ in range(3):
            theta = sample_uniform(SPEC3, rng)
            g500 = mirror_descent(theta, SPEC3, iters=500).gap
            g2000 = mirror_descent(theta, SPEC3, iters=2000).gap
            assert g2000 <= 2.0 * g500 / math.sqrt(4.0) + 1e-3

    def test_value_sandwich_between_grid_bounds(self):
        # Lower bound: best grid lambda's grid inner-min, minus the slack a
        # 0.02 grid can overestimate the true inner minimum by (the weighted
        # KL is sqrt(2)-Lipschitz and a feasible grid point sits within
        # sqrt(2)*step of the minimizer).  Upper bound: max over the whole
        # simplex of the grid inner-min, an LP since that function is a
        # pointwise min of linear functions.
        from scipy.optimize import linprog
        from _oracles import kl_matrix, pair_list, rank_key, simplex_grid, support_grid

        rng = np.random.default_rng(79)
        step = 0.02
        slack = math.sqrt(2.0) * math.sqrt(2.0) * step
        grid = support_grid(2.0, 0.4, step, 2)
        pairs = pair_list(3)
        lams = simplex_grid(3, 0.05)
        for _ in range(10):
            theta = sample_uniform(SPEC3, rng)
            own = rank_key(theta.scores)
            wrong = np.array([rank_key(np.concatenate([[0.0], g])) != own
                              for g in grid])
            klm = kl_matrix(theta.free, grid[wrong], pairs)
            inner = klm @ lams.T
            lb = float(inner.min(axis=0).max()) - slack
            # max t subject to t <= klm @ lam, lam in the simplex
            a_ub = np.concatenate([np.ones((klm.shape[0], 1)), -klm], axis=1)
            res = linprog(
                c=[-1.0, 0.0, 0.0, 0.0],
                A_ub=a_ub, b_ub=np.zeros(klm.shape[0]),
                A_eq=[[0.0, 1.0, 1.0, 1.0]], b_eq=[1.0],
                bounds=[(None, None)] + [(0.0, 1.0)] * 3,
                method="highs")
            assert res.status == 0
            ub = -res.fun
            value = mirror_descent(theta, SPEC3, iters=2000).value
            assert lb - 1e-9 <= value <= ub + 1e-9, (theta.free, lb, value, ub)

    def test_warm_start_agrees_with_cold(self):
        # both runs land within their certified gaps of the optimum, so the
        # values can differ by at most the summed gaps
        theta = params(0.8, -0.7)
        cold = mirror_descent(theta, SPEC3, iters=2000)
        warm = mirror_descent(theta, SPEC3, iters=2000, warm_start=cold.selection)
        assert abs(warm.value - cold.value) <= cold.gap + warm.gap + 1e-9


class TestDValue:
    def test_two_item_value(self):
        assert d_value(params(math.log(3.0 / 7.0)), SPEC2) == pytest.approx(
            0.18215095034505913, abs=1e-6)

    def test_tied_scores_give_zero_with_boxonly_support(self):
        spec = SupportSpec(n_items=3, kappa=2.0, delta=0.0)
        theta = params(0.0, -1.0)  # tie with item 1 on the region boundary
        assert d_value(theta, spec, iters=200) == pytest.approx(0.0, abs=1e-6)

    def test_relabeling_invariance_for_interior_instances(self):
        # relabel items and re-pin item 1; gaps are preserved so D matches
        # when the box stays slack
        theta = params(0.9, -0.8)
        base = d_value(theta, SPEC3)
        relabeled = params(-0.9, -1.7)  # old item 2 becomes the pinned item
        assert d_value(relabeled, SPEC3) == pytest.approx(base, rel=1e-3)


class TestTc:
    def test_arithmetic(self):
        theta = params(math.log(3.0 / 7.0))
        got = t_c(theta, 2.0 ** -15, SPEC2)
        assert got == pytest.approx(abs(math.log(2.0 ** -15)) / 0.18215095034505913,
                                    rel=1e-5)

    def test_monotone_in_cost(self):
        theta = params(math.log(3.0 / 7.0))
        values = [t_c(theta, c, SPEC2, iters=400) for c in (2.0 ** -5, 2.0 ** -10, 2.0 ** -15)]
        assert values[0] < values[1] < values[2]

    def test_indistinguishable_raises(self):
        spec = SupportSpec(n_items=3, kappa=2.0, delta=0.0)
        with pytest.raises(IndistinguishableError):
            t_c(params(0.0, -1.0), 2.0 ** -10, spec, iters=200)

    def test_cost_domain(self):
        with pytest.raises(ValidationError):
            t_c(params(-0.9), 1.5, SPEC2)
