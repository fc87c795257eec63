import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bayescs.betting import (
    PredictiveDistribution,
    beta_bin_moments,
    beta_quadrature,
    expected_loggrowth,
    expected_score,
    mixture,
    solve_lambda,
    solve_lambda_grid,
)
from bayescs.core import betting_interval, candidate_grid

SYM = PredictiveDistribution.from_atoms([(0.2, 0.5), (0.8, 0.5)])
COIN = PredictiveDistribution.from_atoms([(1.0, 0.5), (0.0, 0.5)])


class TestPredictiveDistribution:
    def test_weights_must_sum_to_one(self):
        with pytest.raises(ValueError):
            PredictiveDistribution.from_atoms([(0.2, 0.5), (0.8, 0.4)])

    def test_atoms_in_unit_interval(self):
        with pytest.raises(ValueError):
            PredictiveDistribution.from_atoms([(1.2, 1.0)])

    def test_mean(self):
        pred = PredictiveDistribution(atom_x=[0.5], atom_w=[0.5], beta_a=[2.0], beta_b=[6.0], beta_w=[0.5])
        assert pred.mean() == pytest.approx(0.5 * 0.5 + 0.5 * 0.25)

    @pytest.mark.parametrize("comps", [[(10, 30, 1.0)], [(0.5, 0.5, 1.0)], [(5, 15, 0.25), (15, 5, 0.75)]])
    def test_discretized_bets_lose_little_growth(self, comps):
        # betting with the binned predictive gives up a small fraction of the optimal growth
        pred = PredictiveDistribution.from_betas(comps)
        mus = candidate_grid(99)
        x, w = pred.discretized(200)
        for mu, lam in zip(mus, solve_lambda_grid(x, w, mus, 0.95)):
            best = expected_loggrowth(pred, solve_lambda(pred, mu, 0.95).lam, mu)
            assert best - expected_loggrowth(pred, lam, mu) <= 2e-4 * best

    def test_discretized_keeps_mean_and_cell_mass(self):
        pred = PredictiveDistribution.from_betas([(2.0, 5.0, 0.3), (0.5, 0.5, 0.7)])
        x, w = pred.discretized(50)
        assert w.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.dot(w, x) == pytest.approx(pred.mean(), abs=1e-12)
        edges = np.linspace(0, 1, 51)
        cells = np.minimum(np.searchsorted(edges, x, side="right") - 1, 49)
        mass, _ = beta_bin_moments([2.0, 0.5], [5.0, 0.5], 50)
        expected = 0.3 * mass[0] + 0.7 * mass[1]
        assert np.allclose(np.bincount(cells, weights=w, minlength=50), expected, atol=1e-14)

    def test_mixture_unit_weight_is_identity(self):
        assert mixture([(1.0, SYM), (0.0, COIN)]) is SYM

    def test_mixture_weights(self):
        m = mixture([(0.25, SYM), (0.75, COIN)])
        assert m.total_weight == pytest.approx(1.0)
        assert m.mean() == pytest.approx(0.25 * 0.5 + 0.75 * 0.5)


class TestQuadrature:
    @pytest.mark.parametrize("a,b", [(2.0, 2.0), (0.5, 0.5), (10.0, 30.0), (250.0, 250.0)])
    def test_moments(self, a, b):
        x, w = beta_quadrature(a, b)
        m = a / (a + b)
        var = a * b / ((a + b) ** 2 * (a + b + 1))
        assert w.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.dot(w, x) == pytest.approx(m, abs=1e-12)
        assert np.dot(w, (x - m) ** 2) == pytest.approx(var, rel=1e-9)

    def test_score_matches_monte_carlo(self):
        rng = np.random.default_rng(11)
        pred = PredictiveDistribution.from_betas([(2.0, 2.0, 1.0)])
        lam, mu = 1.0, 0.3
        draws = rng.beta(2.0, 2.0, 1_000_000)
        vals = (draws - mu) / (1 + lam * (draws - mu))
        se = vals.std() / math.sqrt(vals.size)
        assert abs(expected_score(pred, lam, mu) - vals.mean()) < 3 * se


class TestExpectedScore:
    def test_symmetric_atoms(self):
        assert expected_score(SYM, 0.0, 0.5) == pytest.approx(0.0, abs=1e-15)

    def test_single_atom(self):
        assert expected_score(PredictiveDistribution.point_mass(1.0), 0.0, 0.25) == pytest.approx(0.75)

    def test_symmetric_beta(self):
        pred = PredictiveDistribution.from_betas([(2.0, 2.0, 1.0)])
        assert expected_score(pred, 0.0, 0.5) == pytest.approx(0.0, abs=1e-14)

    def test_infeasible(self):
        with pytest.raises(ValueError):
            expected_score(SYM, 10.0, 0.5)


class TestExpectedLoggrowth:
    def test_zero_bet(self):
        assert expected_loggrowth(SYM, 0.0, 0.3) == 0.0

    def test_coin(self):
        v = expected_loggrowth(COIN, 1.0, 0.5)
        assert v == pytest.approx(0.5 * math.log(1.5) + 0.5 * math.log(0.5))
        assert v == pytest.approx(-0.14384, abs=1e-5)

    def test_biased_coin(self):
        pred = PredictiveDistribution.from_atoms([(1.0, 0.1), (0.0, 0.9)])
        direct = 0.1 * math.log(1 - 1.6 * 0.5) + 0.9 * math.log(1 + 1.6 * 0.5)
        assert expected_loggrowth(pred, -1.6, 0.5) == pytest.approx(direct, abs=1e-14)
        # 0.1 log 0.2 + 0.9 log 1.8, evaluated at 30 digits with mpmath
        assert expected_loggrowth(pred, -1.6, 0.5) == pytest.approx(0.3680642071684971, abs=1e-15)


class TestSolveLambda:
    def test_mean_equals_mu(self):
        sol = solve_lambda(SYM, 0.5, 0.95)
        assert sol.lam == pytest.approx(0.0, abs=1e-12)

    def test_coin_closed_form(self):
        sol = solve_lambda(COIN, 0.25, 0.95)
        assert sol.lam == pytest.approx(4 / 3, abs=1e-9)
        assert not sol.at_boundary
        # independent check: fine grid search over the feasible interval
        lo, hi = betting_interval(0.25, 0.95)
        lam = np.linspace(lo, hi, 2_000_001)
        growth = 0.5 * np.log1p(lam * 0.75) + 0.5 * np.log1p(-lam * 0.25)
        assert abs(lam[np.argmax(growth)] - 4 / 3) < 1e-5

    def test_all_mass_at_one(self):
        sol = solve_lambda(PredictiveDistribution.point_mass(1.0), 0.5, 0.95)
        assert sol.lam == pytest.approx(1.9) and sol.at_boundary

    def test_degenerate_at_mu(self):
        assert solve_lambda(PredictiveDistribution.point_mass(0.3), 0.3, 0.95).lam == 0.0

    def test_sentinel(self):
        assert solve_lambda(PredictiveDistribution.sentinel(), 0.3, 0.95).lam == 0.0

    def test_empty(self):
        with pytest.raises(ValueError):
            solve_lambda(PredictiveDistribution(), 0.3, 0.95)


@st.composite
def _atom_preds(draw, max_atoms=10):
    k = draw(st.integers(1, max_atoms))
    xs = draw(st.lists(st.floats(0, 1), min_size=k, max_size=k))
    ws = np.array(draw(st.lists(st.floats(0.01, 1), min_size=k, max_size=k)))
    return PredictiveDistribution(atom_x=xs, atom_w=ws / ws.sum())


class TestSolverProperties:
    @settings(max_examples=150, deadline=None)
    @given(_atom_preds(), st.floats(0.02, 0.98), st.floats(0.1, 0.99))
    def test_optimal_on_grid(self, pred, mu, c):
        sol = solve_lambda(pred, mu, c)
        lo, hi = betting_interval(mu, c)
        assert lo <= sol.lam <= hi
        lam = np.linspace(lo, hi, 10_000)
        x, w = pred.atom_x, pred.atom_w
        grid_growth = (w[None, :] * np.log1p(lam[:, None] * (x[None, :] - mu))).sum(axis=1)
        assert expected_loggrowth(pred, sol.lam, mu) >= grid_growth.max() - 1e-8

    @settings(max_examples=150, deadline=None)
    @given(_atom_preds(), st.floats(0.02, 0.98))
    def test_sign(self, pred, mu):
        lam = solve_lambda(pred, mu, 0.95).lam
        assert lam == 0.0 or np.sign(lam) == np.sign(pred.mean() - mu)

    @settings(max_examples=100, deadline=None)
    @given(_atom_preds(), st.floats(0.02, 0.98), st.floats(-0.9, 0.9))
    def test_score_decreasing(self, pred, mu, frac):
        lo, hi = betting_interval(mu, 0.95)
        a = frac * (hi if frac > 0 else -lo)
        b = a + 0.05 * (hi - a)
        if np.all(pred.atom_x == mu):
            return
        assert expected_score(pred, b, mu) <= expected_score(pred, a, mu) + 1e-15

    @settings(max_examples=100, deadline=None)
    @given(_atom_preds(20), st.floats(0.2, 0.99))
    def test_grid_solver_agrees(self, pred, c):
        mus = candidate_grid(40)
        fast = solve_lambda_grid(pred.atom_x, pred.atom_w, mus, c)
        for mu, lam in zip(mus, fast):
            ref = solve_lambda(pred, mu, c)
            lo, hi = betting_interval(mu, c)
            # both are maximisers of a concave function; compare objective values
            assert lo <= lam <= hi
            assert expected_loggrowth(pred, lam, mu) >= expected_loggrowth(pred, ref.lam, mu) - 1e-12

    def test_grid_solver_warm_start_is_same_answer(self):
        rng = np.random.default_rng(3)
        x = rng.random(50)
        w = np.full(50, 1 / 50)
        mus = candidate_grid(100)
        cold = solve_lambda_grid(x, w, mus, 0.95)
        warm = solve_lambda_grid(x, w, mus, 0.95, init=cold + 0.01)
        assert np.allclose(cold, warm, atol=1e-7)

    def test_duplicate_atoms(self):
        merged = PredictiveDistribution.point_mass(0.5)
        split = PredictiveDistribution.from_atoms([(0.5, 1 / 3)] * 3)
        for mu in (0.25, 0.5, 0.75):
            assert solve_lambda(merged, mu, 0.95).lam == solve_lambda(split, mu, 0.95).lam
