import json
import math

import numpy as np
import pytest
from scipy import stats

from advloss.basis import FOURIER, CoefficientVector, enumerate_truncation, fourier
from advloss.bounds import parametric_constant
from advloss.density import make_density, nonneg_check, uniform
from advloss.estimator import series_estimate
from advloss.loss import KernelSpectrum, adversarial_loss, sobolev_ball
from advloss.montecarlo import (
    ConfigError,
    ExperimentConfig,
    LossSpec,
    RiskCurve,
    ZetaRule,
    bundled_config,
    estimate_risk,
    fit_rate,
    parametric_truth,
    positive_part_mass,
    rejection_sample,
    rejection_sample_stats,
    replicate_losses,
    replication_loss,
    run_risk_curve,
    sampling_equivalence_experiment,
    sobolev_truth,
)

ONE_MODE = make_density(1, FOURIER, CoefficientVector({fourier(1): 0.5}))


def one_mode_cdf(x):
    return x + 0.5 * math.sqrt(2) / (2 * math.pi) * np.sin(2 * math.pi * x)


class TestRejectionSampler:
    def test_uniform_accepts_everything(self):
        data, st = rejection_sample_stats(uniform(1), 500, 0)
        assert st.envelope == 1.0
        assert st.proposals == st.accepted == 500

    def test_deterministic(self):
        a = rejection_sample(ONE_MODE, 300, 7).points
        b = rejection_sample(ONE_MODE, 300, 7).points
        np.testing.assert_array_equal(a, b)

    def test_ks(self):
        passes = 0
        for seed in range(20):
            x = rejection_sample(ONE_MODE, 10_000, seed).points[:, 0]
            passes += stats.kstest(x, one_mode_cdf).pvalue > 0.01
        assert passes >= 18

    def test_acceptance_rate(self):
        _, st = rejection_sample_stats(ONE_MODE, 20_000, 3)
        rate = 1 / st.envelope
        se = math.sqrt(rate * (1 - rate) / st.proposals)
        assert abs(st.acceptance_rate - rate) <= 3 * se

    def test_refuses_uncertified(self):
        bad = make_density(1, FOURIER, CoefficientVector({fourier(1): 0.8}))
        with pytest.raises(ValueError, match="positive_part"):
            rejection_sample(bad, 10, 0)

    def test_positive_part(self):
        bad = make_density(1, FOURIER, CoefficientVector({fourier(1): 0.8}))
        data, st = rejection_sample_stats(bad, 20_000, 0, positive_part=True)
        mass = st.mass
        assert mass > 1.0  # clipping the negative lobe adds mass
        # exact CDF of max(p, 0) / mass by quadrature on a fine grid
        grid = np.linspace(0, 1, 20_001)
        dens = np.maximum(1 + 0.8 * math.sqrt(2) * np.cos(2 * math.pi * grid), 0)
        cdf = np.concatenate([[0], np.cumsum((dens[1:] + dens[:-1]) / 2 * np.diff(grid))])
        assert cdf[-1] == pytest.approx(mass, rel=1e-6)
        ks = stats.kstest(data.points[:, 0], lambda x: np.interp(x, grid, cdf / cdf[-1]))
        assert ks.pvalue > 1e-3
        assert positive_part_mass(bad) == pytest.approx(mass)


class TestRisk:
    def test_uniform_truth_zero(self):
        losses = replicate_losses(uniform(1), sobolev_ball(0.0), 100, ZetaRule("fixed", 0), 5)
        assert np.all(losses == 0.0)

    def test_inner_loss_is_dual_formula(self):
        truth = parametric_truth(2)
        D = sobolev_ball(0.5)
        rule = ZetaRule("fixed", 8)
        seq = np.random.SeedSequence(11, spawn_key=(1, 0, 3))
        val = replication_loss(truth, D, 256, rule, seq)
        data = rejection_sample_stats(truth, 256, np.random.SeedSequence(11, spawn_key=(1, 0, 3)), certified=True)[0]
        est = series_estimate(data, enumerate_truncation(FOURIER, 8, 1, zero_mean=True))
        assert val == adversarial_loss(truth.coeffs - est.coeffs, D)

    def test_partition_independent(self):
        truth = parametric_truth(5)
        a = replicate_losses(truth, sobolev_ball(0.0), 128, ZetaRule("fixed", 8), 12, seed=3, workers=1)
        b = replicate_losses(truth, sobolev_ball(0.0), 128, ZetaRule("fixed", 8), 12, seed=3, workers=3)
        np.testing.assert_array_equal(a, b)

    def test_decreases_with_n(self):
        truth = parametric_truth(1)
        small = estimate_risk(truth, sobolev_ball(0.0), 100, ZetaRule("fixed", 8), 20, 0)
        big = estimate_risk(truth, sobolev_ball(0.0), 100_000, ZetaRule("fixed", 8), 20, 0)
        assert big.mean + 3 * big.stderr < small.mean - 3 * small.stderr

    def test_mmd_parametric_bound(self):
        k = KernelSpectrum.geometric(2.0, 30)
        A = parametric_constant(k.weights, cap=30)
        truth = parametric_truth(9)
        for n in (128, 1024):
            mean, se = estimate_risk(truth, k.ball(1.0), n, ZetaRule("fixed", 8), 100, 0)
            assert mean <= A.bound(n) + 3 * se

    def test_adaptive_rule_runs(self):
        truth = parametric_truth(1)
        mean, se = estimate_risk(truth, sobolev_ball(0.0), 512, ZetaRule("adaptive", cap=20), 5, 0)
        assert mean > 0 and se >= 0

    def test_requires_certified_truth(self):
        bad = make_density(1, FOURIER, CoefficientVector({fourier(1): 0.8}))
        with pytest.raises(ValueError):
            estimate_risk(bad, sobolev_ball(0.0), 10, ZetaRule("fixed", 1), 2)


class TestTruths:
    def test_parametric_truth_certified(self):
        for seed in range(20):
            p = parametric_truth(seed)
            assert len(p.coeffs) == 6
            assert nonneg_check(p).ok
            mags = np.abs(p.coeffs.values)
            assert np.all((mags >= 0.05) & (mags <= 0.12))

    def test_sobolev_truth_nested_and_budgeted(self):
        small = sobolev_truth(5, 1.0, budget_cutoff=25, seed=2)
        big = sobolev_truth(25, 1.0, budget_cutoff=25, seed=2)
        for z in small.coeffs.indices:
            assert small.coeffs[z] == big.coeffs[z]
        assert big.spectral_l1 == pytest.approx(0.9)
        assert nonneg_check(small).verdict == "analytic"


class TestFitRate:
    def test_exact_power_law(self):
        fit = fit_rate([(10, 1), (100, 0.1), (1000, 0.01)])
        assert fit.slope == pytest.approx(-1.0, abs=1e-12)

    def test_flat(self):
        assert fit_rate([(10, 0.3), (100, 0.3)]).slope == pytest.approx(0.0, abs=1e-12)

    def test_injected_curve(self):
        n = np.array([2**k for k in range(7, 15)])
        fit = fit_rate(zip(n, 3 * n**-0.5))
        assert fit.slope == pytest.approx(-0.5, abs=1e-12)
        assert fit.intercept == pytest.approx(math.log(3), abs=1e-12)
        assert fit.residual_rms == pytest.approx(0.0, abs=1e-12)

    def test_jittered(self):
        rng = np.random.default_rng(0)
        n = np.geomspace(100, 1e5, 12)
        sigma = 0.05
        inside = 0
        for _ in range(200):
            y = 2 * n**-0.4 * np.exp(sigma * rng.standard_normal(n.size))
            fit = fit_rate(zip(n, y))
            x = np.log(n)
            se = sigma / math.sqrt(np.sum((x - x.mean()) ** 2))
            inside += abs(fit.slope + 0.4) <= 3 * se
        assert inside >= 195

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            fit_rate([(10, 0.1), (100, 0.0)])
        with pytest.raises(ValueError):
            fit_rate([(10, 0.1)])


class TestConfig:
    def test_bundled_roundtrip(self):
        for name in ("parametric", "nonparametric"):
            cfg = bundled_config(name)
            again = ExperimentConfig.from_json(json.loads(json.dumps(cfg.to_json())))
            assert again == cfg

    def test_rejects(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_json({"regime": "weird"})
        with pytest.raises(ConfigError):
            ExperimentConfig.from_json({"n_grid": [100, 50]})
        with pytest.raises(ConfigError):
            ExperimentConfig.from_json({"replications": 0})
        with pytest.raises(ConfigError):
            ExperimentConfig.from_json({"bogus": 1})
        with pytest.raises(ConfigError):
            ExperimentConfig.from_json({"schema_version": 2})
        with pytest.raises(ConfigError):
            ExperimentConfig.from_json({"regime": "custom"})

    def test_custom_truth(self):
        truth = parametric_truth(4)
        cfg = ExperimentConfig(regime="custom", truth=truth.to_json(), n_grid=(64, 128), replications=3)
        assert cfg.truth_at(64) == truth

    def test_theoretical_exponents(self):
        assert bundled_config("parametric").theoretical_exponent() == 0.5
        assert bundled_config("nonparametric").theoretical_exponent() == pytest.approx(1 / 3)
        assert LossSpec("mmd").build().p == 2


class TestRiskCurve:
    cfg = ExperimentConfig(n_grid=(64, 256, 1024), replications=8, seed=9)

    def test_deterministic(self):
        a, b = run_risk_curve(self.cfg), run_risk_curve(self.cfg)
        np.testing.assert_array_equal(a.mean, b.mean)
        assert a.fit == b.fit

    def test_workers_identical(self):
        a, b = run_risk_curve(self.cfg, 1), run_risk_curve(self.cfg, 2)
        np.testing.assert_array_equal(a.mean, b.mean)

    def test_outputs(self, tmp_path):
        curve = run_risk_curve(self.cfg)
        assert isinstance(curve, RiskCurve) and np.all(curve.mean >= 0)
        curve.write_csv(tmp_path / "c.csv")
        lines = (tmp_path / "c.csv").read_text().splitlines()
        assert lines[0] == "n,mean_risk,stderr,replications"
        assert len(lines) == 4
        curve.write_svg(tmp_path / "c.svg", 0.5)
        assert (tmp_path / "c.svg").read_text().lstrip().startswith("<?xml")
        summary = curve.summary(0.5)
        assert set(summary) >= {"slope", "intercept", "residual_rms", "schema_version"}


class TestEquivalence:
    def test_uniform_truth_zero_gap(self):
        rows = sampling_equivalence_experiment(uniform(1), sobolev_ball(0.0), 200, [100, 1000], zeta=0, R=5)
        for r in rows:
            assert r.gap == 0.0 and r.risk_estimate == 0.0 and r.mass_deficit == 0.0

    def test_gap_shrinks(self):
        truth = parametric_truth(0)
        rows = sampling_equivalence_experiment(truth, sobolev_ball(0.0), 1000, [100, 1000, 10_000], zeta=8, R=50, seed=1)
        for a, b in zip(rows, rows[1:]):
            assert b.gap + 3 * b.gap_stderr < a.gap + 3 * a.gap_stderr
            assert b.gap < a.gap
        # resampling cannot beat the estimate it was drawn from, on average
        for r in rows:
            assert r.risk_resampled >= r.risk_estimate - r.gap_stderr
