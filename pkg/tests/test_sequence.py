import numpy as np
import pytest

from bayescs.betting import solve_lambda
from bayescs.core import BettingConfig, betting_interval
from bayescs.predictives import BetaPrior, EmpiricalPredictor, MdpPredictor, empirical_predictive
from bayescs.sequence import ConfidenceSequence

CFG = BettingConfig(grid_size=20)


class TestConfidenceSequence:
    def test_first_step_bets_nothing(self):
        seq = ConfidenceSequence(EmpiricalPredictor(), CFG, record_lambdas=True)
        seq.update(0.3)
        assert np.all(seq.lambda_history[0] == 0.0)
        assert np.all(seq.ledger.log_wealth == 0.0)

    def test_lambdas_use_past_only(self):
        xs = [0.2, 0.9, 0.4, 0.6]
        seq = ConfidenceSequence(EmpiricalPredictor(), CFG, record_lambdas=True)
        seq.run(xs)
        pred = empirical_predictive(xs[:3])
        ref = [solve_lambda(pred, mu, CFG.c).lam for mu in seq.grid]
        assert np.allclose(seq.lambda_history[3], ref, atol=1e-6)
        lo, hi = betting_interval(seq.grid, CFG.c)
        for lam in seq.lambda_history:
            assert np.all((lam >= lo) & (lam <= hi))

    def test_probes_track_extra_means(self):
        xs = np.random.default_rng(0).random(40)
        probe = 0.33
        a = ConfidenceSequence(MdpPredictor(BetaPrior(), k_rho=5, k_nu=4), CFG, probes=(probe,))
        a.run(xs)
        grid = np.sort(np.append(np.arange(1, 20) / 20, probe))
        b = ConfidenceSequence(MdpPredictor(BetaPrior(), k_rho=5, k_nu=4), CFG, candidates=grid)
        b.run(xs)
        k = int(np.flatnonzero(grid == probe)[0])
        assert a.probe_log_wealth[0] == pytest.approx(b.ledger.log_wealth[k], abs=1e-6)

    def test_rejects_out_of_range(self):
        seq = ConfidenceSequence(EmpiricalPredictor(), CFG)
        with pytest.raises(ValueError):
            seq.update(1.2)

    def test_record_fields(self):
        seq = ConfidenceSequence(EmpiricalPredictor(), CFG)
        recs = seq.run([0.5, 0.5, 0.5])
        assert [r.n for r in recs] == [1, 2, 3]
        assert recs[-1].interval == seq.interval
