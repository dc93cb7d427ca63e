"""Exponential-decay fitting: recovery, noise behavior, edge cases.

Synthetic data with known parameters is the oracle throughout; noise checks
use fixed seeds and the fit's own standard errors.
"""
import numpy as np
import pytest

from pilotwave.errors import DomainError
from pilotwave.fitting import FitAggregate, RelaxationFit, aggregate, fit_arrays, fit_decay
from pilotwave.metrics import HSeries


def _curve(t, h0, tau, r):
    return (h0 - r) * np.exp(-t / tau) + r


class TestRecovery:
    def test_noiseless(self):
        t = np.linspace(0.0, 30.0, 40)
        y = _curve(t, 1.3, 4.2, 0.12)
        fit = fit_arrays(t, y)
        assert fit.converged
        assert fit.h0 == pytest.approx(1.3, abs=1e-7)
        assert fit.tau == pytest.approx(4.2, abs=1e-6)
        assert fit.r == pytest.approx(0.12, abs=1e-7)
        assert fit.rms_residual < 1e-8

    def test_noiseless_no_floor(self):
        t = np.linspace(0.0, 20.0, 30)
        y = _curve(t, 0.8, 2.5, 0.0)
        fit = fit_arrays(t, y)
        assert fit.h0 == pytest.approx(0.8, abs=1e-6)
        assert fit.tau == pytest.approx(2.5, abs=1e-5)
        assert abs(fit.r) < 1e-6

    def test_noisy_within_stated_errors(self):
        rng = np.random.default_rng(101)
        t = np.linspace(0.0, 40.0, 80)
        y = _curve(t, 1.5, 6.0, 0.2) + rng.normal(0.0, 0.01, t.size)
        fit = fit_arrays(t, y)
        assert fit.converged
        se_h0, se_tau, se_r = fit.stderr
        assert abs(fit.h0 - 1.5) < 3.0 * se_h0
        assert abs(fit.tau - 6.0) < 3.0 * se_tau
        assert abs(fit.r - 0.2) < 3.0 * se_r
        # residual scale should track the injected noise
        assert 0.005 < fit.rms_residual < 0.02

    def test_time_rescaling_scales_tau(self):
        t = np.linspace(0.0, 30.0, 40)
        y = _curve(t, 1.3, 4.2, 0.12)
        base = fit_arrays(t, y)
        doubled = fit_arrays(2.0 * t, y)
        assert doubled.tau == pytest.approx(2.0 * base.tau, rel=1e-6)
        assert doubled.h0 == pytest.approx(base.h0, rel=1e-6)

    def test_fit_decay_reads_series(self):
        t = np.linspace(0.0, 25.0, 26)
        y = _curve(t, 2.0, 5.0, 0.3)
        series = HSeries(times=t, values=y, method="ftm",
                         empty_cells=np.zeros(t.size, dtype=np.int64),
                         oob_frac=np.zeros(t.size))
        fit = fit_decay(series)
        assert fit.tau == pytest.approx(5.0, abs=1e-5)


class TestEdgeCases:
    def test_too_few_points(self):
        t = np.linspace(0.0, 1.0, 5)
        with pytest.raises(DomainError):
            fit_arrays(t, np.exp(-t))

    def test_flat_series_pins_tau(self):
        t = np.linspace(0.0, 10.0, 20)
        y = np.full(20, 0.7)
        with pytest.warns(UserWarning):
            fit = fit_arrays(t, y)
        assert fit.tau == pytest.approx(1e5)
        assert fit.h0 == pytest.approx(0.7, abs=1e-6)

    def test_nonfinite_rejected(self):
        t = np.linspace(0.0, 10.0, 12)
        y = np.exp(-t)
        y[3] = np.nan
        with pytest.raises(DomainError):
            fit_arrays(t, y)

    def test_mismatched_lengths(self):
        with pytest.raises(DomainError):
            fit_arrays(np.arange(8.0), np.arange(7.0))

    def test_rising_tail_still_converges(self):
        # late-time noise above the floor must not break convergence
        rng = np.random.default_rng(7)
        t = np.linspace(0.0, 60.0, 60)
        y = _curve(t, 1.0, 3.0, 0.05) + rng.normal(0.0, 0.005, 60)
        y = np.abs(y)
        fit = fit_arrays(t, y)
        assert fit.converged
        assert fit.tau == pytest.approx(3.0, rel=0.2)


class TestAggregate:
    def _fit(self, tau, h0=1.0, r=0.1):
        return RelaxationFit(h0=h0, tau=tau, r=r, rms_residual=0.01,
                             converged=True, stderr=(0.0, 0.0, 0.0), n_iter=5)

    def test_population_spread(self):
        fits = [self._fit(4.0), self._fit(6.0)]
        agg = aggregate(fits, [1.0, 1.0])
        assert isinstance(agg, FitAggregate)
        assert agg.mean_tau == pytest.approx(5.0)
        # population (not sample) standard deviation over the preset fits
        assert agg.std_tau == pytest.approx(1.0)
        assert agg.residue_fraction == pytest.approx(0.1)

    def test_residue_fraction_uses_means(self):
        fits = [self._fit(5.0, h0=2.0, r=0.4), self._fit(5.0, h0=1.0, r=0.2)]
        agg = aggregate(fits, [2.0, 1.0])
        assert agg.residue_fraction == pytest.approx(0.3 / 1.5)

    def test_needs_two(self):
        with pytest.raises(DomainError):
            aggregate([self._fit(4.0)], [1.0])
