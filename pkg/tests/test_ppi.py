import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bayescs.core import BettingConfig, ConfidenceInterval
from bayescs.predictives import BetaPrior, EmpiricalPredictor, MdpPredictor
from bayescs.ppi import (
    PpiConfig,
    PpiDataset,
    plugin_mean,
    ppi_cs_step,
    ppi_init,
    prior_concentration,
    read_labeled_csv,
    read_unlabeled_csv,
    rectifier_prior,
    rescale_residual,
    sequential_test_stop_time,
    to_theta,
)
from bayescs.sequence import ConfidenceSequence

CFG = BettingConfig(grid_size=100)


class TestPluginMean:
    @pytest.mark.parametrize("vals,want", [((0.5, 0.5), 0.5), ((0.0, 1.0), 0.5), ((0.2,), 0.2)])
    def test_values(self, vals, want):
        assert plugin_mean(PpiDataset(vals, ())) == want

    def test_empty(self):
        with pytest.raises(ValueError):
            plugin_mean(PpiDataset((), ()))


class TestRescale:
    def test_examples(self):
        assert rescale_residual(0.0, (-1, 1)) == 0.5
        assert rescale_residual(-2.0, (-2, 2)) == 0.0
        assert rescale_residual(1.0, (-2, 2)) == 0.75

    def test_out_of_bounds_names_row(self):
        with pytest.raises(ValueError, match="row 7"):
            rescale_residual(1.5, (-1, 1), row=7)

    def test_dataset_validate(self):
        ds = PpiDataset((0.5,), ((1.0, 0.5), (0.0, 1.0), (1.0, -0.5)))
        with pytest.raises(ValueError, match="row 2"):
            ds.validate()


class TestPriorConcentration:
    def test_values(self):
        assert prior_concentration(1000, (-1, 1)) == 499.5
        assert prior_concentration(500, (-2, 2)) == 999.5

    def test_unattainable(self):
        with pytest.raises(ValueError):
            prior_concentration(1, (-1, 1))

    @pytest.mark.parametrize("n0,bounds", [(1000, (-1, 1)), (500, (-2, 2)), (40, (-1, 1)), (7, (-3, 3))])
    def test_variance_roundtrip(self, n0, bounds):
        xi = prior_concentration(n0, bounds)
        var = 1.0 / (4.0 * (2.0 * xi + 1.0))
        assert abs(var * (bounds[1] - bounds[0]) ** 2 - 1.0 / n0) <= 1e-12

    def test_symmetric_prior(self):
        assert rectifier_prior(1000, (-1, 1)) == BetaPrior(499.5, 499.5, 7.5, 1.0)

    def test_asymmetric_prior(self):
        p = rectifier_prior(1000, (-0.5, 1.5))
        m = p.rho_a / (p.rho_a + p.rho_b)
        var = m * (1 - m) / (p.rho_a + p.rho_b + 1)
        assert m == pytest.approx(0.25)
        assert var * 4.0 == pytest.approx(1 / 1000, rel=1e-12)


class TestToTheta:
    def test_affine(self):
        assert to_theta(ConfidenceInterval(0, 1), 0.6, (-1, 1)) == ConfidenceInterval(-0.4, 1.6)

    def test_empty(self):
        assert to_theta(ConfidenceInterval.empty_interval(), 0.6, (-1, 1)).empty


class TestCsStep:
    def test_degenerate_residuals(self):
        f = np.random.default_rng(0).random(300)
        ds = PpiDataset(tuple(f), tuple(zip(f, f)))
        st_ = ppi_init(ds, PpiConfig(), EmpiricalPredictor(), CFG)
        for pair in ds.labeled_pairs:
            theta, _ = ppi_cs_step(st_, pair)
        z = st_.z_interval
        assert z.lower <= 0.5 <= z.upper and z.width < 0.1
        m = plugin_mean(ds)
        assert theta.lower <= m <= theta.upper
        assert abs(0.5 * (theta.lower + theta.upper) - m) < 0.05

    def test_classical_matches_plain(self):
        y = np.random.default_rng(1).random(60)
        ds = PpiDataset((), tuple((v, 0.0) for v in y), (0, 1))
        st_ = ppi_init(ds, PpiConfig(classical=True), EmpiricalPredictor(), CFG)
        seq = ConfidenceSequence(EmpiricalPredictor(), CFG)
        for v, pair in zip(y, ds.labeled_pairs):
            theta, _ = ppi_cs_step(st_, pair)
            assert theta == seq.update(v).interval

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 10_000), st.floats(0.05, 0.95), st.floats(0.2, 3.0))
    def test_affine_equivariance(self, seed, m_hat, half):
        rng = np.random.default_rng(seed)
        bounds = (-half, half)
        pairs = tuple((float(f + rng.uniform(-half, half) * 0.5), float(f)) for f in rng.random(15))
        ds = PpiDataset((m_hat,), pairs, bounds)
        st_ = ppi_init(ds, PpiConfig(), EmpiricalPredictor(), CFG)
        for p in pairs:
            theta, rec = ppi_cs_step(st_, p)
            z = rec.interval
            assert theta == ConfidenceInterval(m_hat - half + 2 * half * z.lower, m_hat - half + 2 * half * z.upper)

    def test_out_of_bounds(self):
        ds = PpiDataset((0.5,), ((1.0, -1.5),))
        st_ = ppi_init(ds, PpiConfig(), EmpiricalPredictor(), CFG)
        with pytest.raises(ValueError, match="row 0"):
            ppi_cs_step(st_, ds.labeled_pairs[0])


class TestStopTime:
    def test_immediate(self):
        ds = PpiDataset((5.0,), ((5.5, 5.0),))
        st_ = ppi_init(ds, PpiConfig(), EmpiricalPredictor(), CFG)
        assert sequential_test_stop_time(st_, ds.labeled_pairs) == 1

    def test_not_stopped(self):
        ds = PpiDataset((0.0,), ((0.0, 0.0),) * 5)
        st_ = ppi_init(ds, PpiConfig(), EmpiricalPredictor(), CFG)
        assert sequential_test_stop_time(st_, ds.labeled_pairs) is None

    def test_informative_prior_stops_earlier(self):
        # binary labels with calibrated scores: Delta* = 0 and theta* = m* = 0.1, so
        # the zero-centred rectifier prior is informative; H0: theta <= 0
        prior = rectifier_prior(1000, (-1, 1))
        mdp_times, emp_times = [], []
        for seed in range(100):
            rng = np.random.default_rng(seed)
            f_unl = rng.uniform(0.0, 0.2, 2000)
            f = rng.uniform(0.0, 0.2, 1000)
            pairs = tuple(zip((rng.random(1000) < f).astype(float), f))
            ds = PpiDataset(tuple(f_unl), pairs)
            for times, pred in ((mdp_times, MdpPredictor(prior, 50.0, k_rho=20, k_nu=10)),
                                (emp_times, EmpiricalPredictor())):
                st_ = ppi_init(ds, PpiConfig(), pred, CFG)
                n = sequential_test_stop_time(st_, pairs, null_threshold=0.0)
                times.append(len(pairs) + 1 if n is None else n)
        assert np.mean(mdp_times) <= np.mean(emp_times)


class TestCsvReaders:
    def test_roundtrip(self, tmp_path):
        lab = tmp_path / "lab.csv"
        lab.write_text("y,f_x\n1,0.5\n0,0.25\n")
        unl = tmp_path / "unl.csv"
        unl.write_text("f_x\n0.1\n0.3\n")
        assert read_labeled_csv(lab) == [(1.0, 0.5), (0.0, 0.25)]
        assert read_unlabeled_csv(unl) == [0.1, 0.3]

    def test_bad_row(self, tmp_path):
        lab = tmp_path / "lab.csv"
        lab.write_text("y,f_x\n1,0.5\nx,0.25\n")
        with pytest.raises(ValueError, match=":3"):
            read_labeled_csv(lab)

    def test_missing_column(self, tmp_path):
        lab = tmp_path / "lab.csv"
        lab.write_text("y\n1\n")
        with pytest.raises(ValueError, match="f_x"):
            read_labeled_csv(lab)
