"""Coarse-graining and H-function checks.

Reference values come from closed forms (point mass vs uniform, Gaussian
cell integrals via erf) and from the plain-loop entropy in _oracles; the
log-sum inequality supplies a parameter-free monotonicity check.
"""
import math

import numpy as np
import pytest

from pilotwave.dynamics import IntegratorConfig
from pilotwave.errors import DomainError, MetricError
from pilotwave.metrics import (
    BacktrackSample,
    CoarseGrid,
    backtrack_time,
    bootstrap_h_backtracking,
    bootstrap_h_ftm,
    cells_from_backtrack,
    coarse_psi2,
    coarse_rho,
    h_function,
    h_series_backtracking,
    h_series_ftm,
)
from pilotwave.ensemble import EnsembleSpec, evolve, evolve_points, sample_equilibrium
from pilotwave.wavefunction import ModeSet, OscillatorModel, WaveFunction, density_original

from ._oracles import gaussian_cell_means, relative_entropy_cells

# ln(area ratio) for all mass in one of 256 equal cells against uniform
POINT_MASS_H = 5.545177444479562


def _ground_state():
    return WaveFunction(OscillatorModel(), ModeSet(((0, 0),), (0.0,)))


def _stationary_excited():
    model = OscillatorModel(omega=1.0, coupling=0.5)
    return WaveFunction(model, ModeSet(((1, 2),), (0.81,)))


class TestCoarseGrid:
    def test_geometry(self):
        g = CoarseGrid(rows=4, cols=5, box=(-2.0, 2.0, -1.0, 1.5))
        assert g.cell_area == pytest.approx((4.0 / 4) * (2.5 / 5))
        ea, eb = g.edges()
        assert ea.shape == (5,) and eb.shape == (6,)
        assert ea[0] == -2.0 and ea[-1] == 2.0
        ma, mb = g.midpoints(2)
        assert ma.shape == (8,) and mb.shape == (10,)
        assert ma[0] == pytest.approx(-2.0 + 0.25)

    def test_validation(self):
        with pytest.raises(DomainError):
            CoarseGrid(rows=0)
        with pytest.raises(DomainError):
            CoarseGrid(box=(1.0, -1.0, 0.0, 1.0))
        with pytest.raises(DomainError):
            CoarseGrid(subsamples=0)


class TestCoarseRho:
    def test_single_cell_mass(self):
        g = CoarseGrid()
        pts = np.full((50, 2), 0.1)
        rho = coarse_rho(g, pts)
        assert rho.shape == (16, 16)
        assert float(rho.sum() * g.cell_area) == pytest.approx(1.0)
        assert (rho > 0).sum() == 1
        assert rho.max() == pytest.approx(1.0 / g.cell_area)

    def test_out_of_box_excluded(self):
        g = CoarseGrid()
        pts = np.array([[0.0, 0.0], [7.0, 0.0], [0.0, -9.0]])
        rho = coarse_rho(g, pts)
        # one in-box point carries all the normalized mass
        assert float(rho.sum() * g.cell_area) == pytest.approx(1.0)

    def test_no_points_inside(self):
        g = CoarseGrid()
        with pytest.raises(MetricError):
            coarse_rho(g, np.array([[9.0, 9.0]]))
        with pytest.raises(DomainError):
            coarse_rho(g, np.zeros((4, 3)))


class TestCoarsePsi2:
    def test_ground_state_matches_erf_integrals(self):
        g = CoarseGrid()
        ea, eb = g.edges()
        exact = gaussian_cell_means(ea, eb)
        exact = exact / (exact.sum() * g.cell_area)
        got = coarse_psi2(g, _ground_state(), 0.0, subsamples=64)
        # Far-tail cells see the largest relative midpoint error, roughly
        # 4 x^2 h^2 / 24 ~ 2e-4 at the box corner for this subsample width.
        np.testing.assert_allclose(got, exact, rtol=1e-3, atol=1e-12)
        assert float(got.sum() * g.cell_area) == pytest.approx(1.0, abs=1e-12)

    def test_small_box_fails_mass_floor(self):
        g = CoarseGrid(box=(-1.2, 1.2, -1.2, 1.2))
        with pytest.raises(MetricError):
            coarse_psi2(g, _ground_state(), 0.0)

    def test_marginal_box_warns(self):
        g = CoarseGrid(box=(-1.7, 1.7, -1.7, 1.7))
        with pytest.warns(UserWarning):
            coarse_psi2(g, _ground_state(), 0.0)


class TestHFunction:
    def test_point_mass_against_uniform(self):
        g = CoarseGrid()
        rho = np.zeros((16, 16))
        rho[3, 7] = 1.0 / g.cell_area
        psi2 = np.full((16, 16), 1.0 / 100.0)
        assert h_function(g, rho, psi2) == pytest.approx(POINT_MASS_H, abs=1e-12)
        assert math.log(256.0) == pytest.approx(POINT_MASS_H, abs=1e-12)

    def test_identical_densities_give_zero(self):
        g = CoarseGrid()
        rng = np.random.default_rng(0)
        rho = rng.random((16, 16)) + 0.01
        rho /= rho.sum() * g.cell_area
        assert h_function(g, rho, rho) == 0.0

    def test_matches_loop_oracle(self):
        g = CoarseGrid()
        rng = np.random.default_rng(42)
        for _ in range(20):
            rho = rng.random((16, 16))
            rho[rng.random((16, 16)) < 0.2] = 0.0  # exercise 0 ln 0
            rho /= rho.sum() * g.cell_area
            psi2 = rng.random((16, 16)) + 1e-6
            psi2 /= psi2.sum() * g.cell_area
            want = relative_entropy_cells(rho, psi2, g.cell_area)
            assert h_function(g, rho, psi2) == pytest.approx(want, abs=1e-13)

    def test_merge_monotonicity(self):
        # Averaging 2x2 blocks can only lose relative entropy (log-sum
        # inequality); checked over many random density pairs.
        fine = CoarseGrid(rows=16, cols=16)
        coarse = CoarseGrid(rows=8, cols=8)
        rng = np.random.default_rng(7)
        for _ in range(1000):
            rho = rng.random((16, 16))
            psi2 = rng.random((16, 16)) + 1e-9
            rho /= rho.sum() * fine.cell_area
            psi2 /= psi2.sum() * fine.cell_area
            h_fine = h_function(fine, rho, psi2)
            rho_m = rho.reshape(8, 2, 8, 2).mean(axis=(1, 3))
            psi2_m = psi2.reshape(8, 2, 8, 2).mean(axis=(1, 3))
            h_coarse = h_function(coarse, rho_m, psi2_m)
            assert h_coarse <= h_fine + 1e-12

    def test_validation(self):
        g = CoarseGrid()
        with pytest.raises(DomainError):
            h_function(g, np.zeros((4, 4)), np.zeros((16, 16)))
        bad = np.full((16, 16), np.nan)
        with pytest.raises(DomainError):
            h_function(g, bad, np.ones((16, 16)))


class TestForwardSeries:
    def test_equilibrium_ensemble_sits_near_zero(self):
        # Equilibrium start: H is pure histogram bias, about K/(2N) with
        # K occupied cells, far below any relaxation-scale value.
        wf = _stationary_excited()
        g = CoarseGrid()
        cfg = IntegratorConfig(record_times=(0.0, 0.5))
        starts = sample_equilibrium(wf, 20000, seed=31)
        snaps = evolve_points(wf, starts, cfg)
        series = h_series_ftm(snaps, wf, g)
        assert series.method == "ftm"
        assert series.values.shape == (2,)
        assert np.all(series.values >= 0.0)
        assert np.all(series.values < 0.05)
        assert np.all(series.oob_frac < 0.01)

    def test_displaced_ensemble_starts_high(self):
        wf = _ground_state()
        g = CoarseGrid()
        cfg = IntegratorConfig(record_times=(0.0,))
        spec = EnsembleSpec(n_traj=5000, mean_a=1.5, sigma_a=0.3, sigma_b=0.3, seed=12)
        snaps = evolve(spec, wf, cfg)
        series = h_series_ftm(snaps, wf, g)
        assert series.values[0] > 1.0


class TestBacktracking:
    CFG = IntegratorConfig(record_times=(0.0, 0.4))

    def test_t0_is_exact(self):
        wf = _stationary_excited()
        g = CoarseGrid(rows=8, cols=8)

        def rho0(xa, xb):
            return density_original(wf, xa, xb, 0.0)

        sample = backtrack_time(wf, rho0, 0.0, g, self.CFG, points_per_cell=4)
        assert sample.rejected == 0
        assert sample.oob_origin == 0
        ma, mb = g.midpoints(2)
        direct = density_original(wf, ma[:, None], mb[None, :], 0.0)
        regrouped = direct.reshape(8, 2, 8, 2).transpose(0, 2, 1, 3).reshape(8, 8, 4)
        np.testing.assert_array_equal(sample.values, regrouped)

    def test_stationary_state_transports_to_zero_h(self):
        # For a nodeless eigenstate the velocity field vanishes, so the
        # transported density is the density and H stays at zero.  The
        # lattice and the psi^2 quadrature must share the same midpoint rule
        # here, otherwise the mismatch between two quadratures of the same
        # density masquerades as a small H offset.
        wf = WaveFunction(OscillatorModel(omega=1.0, coupling=0.5), ModeSet(((0, 0),), (0.81,)))
        g = CoarseGrid(rows=8, cols=8)

        def rho0(xa, xb):
            return density_original(wf, xa, xb, 0.0)

        series = h_series_backtracking(
            wf, rho0, (0.0, 0.4), g, self.CFG, points_per_cell=4, subsamples=2,
        )
        assert series.method == "backtracking"
        assert np.all(series.values >= 0.0)
        assert np.all(series.values < 1e-10)
        assert np.all(series.empty_cells == 0)

    def test_nodal_lattice_points_dropped(self):
        # The (1, 2) state vanishes on x1 = 0; the side-2 midpoint mesh of an
        # 8x8 grid over a symmetric box has exactly 16 points with xa = -xb,
        # and f0 is undefined at all of them.  They must be counted rejected,
        # not propagated as zeros or NaNs.
        wf = _stationary_excited()
        g = CoarseGrid(rows=8, cols=8)

        def rho0(xa, xb):
            return density_original(wf, xa, xb, 0.0)

        sample = backtrack_time(wf, rho0, 0.4, g, self.CFG, points_per_cell=4)
        assert sample.rejected == 16
        assert np.isnan(sample.values).sum() == 16
        cells = cells_from_backtrack(sample, g)
        assert np.all(np.isfinite(cells))

    def test_cell_collapse_detected(self):
        g = CoarseGrid(rows=2, cols=2)
        vals = np.ones((2, 2, 4))
        vals[1, 1] = np.nan
        sample = BacktrackSample(t=1.0, values=vals, rejected=4, oob_origin=0)
        with pytest.raises(MetricError):
            cells_from_backtrack(sample, g)

    def test_partial_rejection_tolerated(self):
        g = CoarseGrid(rows=2, cols=2, box=(0.0, 2.0, 0.0, 2.0))
        vals = np.ones((2, 2, 4))
        vals[0, 0, :2] = np.nan
        vals[0, 0, 2:] = 3.0
        sample = BacktrackSample(t=1.0, values=vals, rejected=2, oob_origin=0)
        cells = cells_from_backtrack(sample, g)
        # surviving pair averages to 3.0 against 1.0 elsewhere: 3/6 after
        # box normalization with unit cell area
        assert cells[0, 0] == pytest.approx(0.5)
        assert float(cells.sum() * g.cell_area) == pytest.approx(1.0)

    def test_points_per_cell_must_be_square(self):
        wf = _stationary_excited()
        with pytest.raises(DomainError):
            backtrack_time(wf, lambda a, b: a * 0 + 1, 0.0, CoarseGrid(), self.CFG, points_per_cell=5)


class TestBootstrap:
    def test_ftm_replicates(self):
        wf = _ground_state()
        g = CoarseGrid()
        pts = sample_equilibrium(wf, 4000, seed=3)
        psi2 = coarse_psi2(g, wf, 0.0)
        a = bootstrap_h_ftm(pts, psi2, g, n_boot=50, seed=5)
        b = bootstrap_h_ftm(pts, psi2, g, n_boot=50, seed=5)
        assert np.array_equal(a, b)
        assert a.shape == (50,)
        assert np.all(a >= 0.0)
        assert a.std() > 0.0

    def test_series_carry_bands_when_asked(self):
        wf = _ground_state()
        g = CoarseGrid(rows=8, cols=8)
        cfg = IntegratorConfig(record_times=(0.0, 0.3))
        starts = sample_equilibrium(wf, 2000, seed=14)
        snaps = evolve_points(wf, starts, cfg)
        plain = h_series_ftm(snaps, wf, g)
        assert plain.boot_mean is None and plain.boot_std is None
        banded = h_series_ftm(snaps, wf, g, n_boot=30, boot_seed=7)
        again = h_series_ftm(snaps, wf, g, n_boot=30, boot_seed=7)
        assert np.array_equal(banded.boot_mean, again.boot_mean)
        assert np.array_equal(banded.boot_std, again.boot_std)
        assert np.all(banded.boot_std >= 0.0)
        # bands must not perturb the estimates themselves
        assert np.array_equal(plain.values, banded.values)

        def rho0(xa, xb):
            return density_original(wf, xa, xb, 0.0)

        bt = h_series_backtracking(wf, rho0, (0.0, 0.3), g, cfg,
                                   points_per_cell=4, n_boot=25, boot_seed=3)
        assert bt.boot_mean.shape == (2,)
        assert np.all(np.isfinite(bt.boot_std))

    def test_backtracking_replicates(self):
        rng = np.random.default_rng(9)
        vals = rng.random((4, 4, 9)) + 0.1
        vals[2, 2, :3] = np.nan
        sample = BacktrackSample(t=1.0, values=vals, rejected=3, oob_origin=0)
        g = CoarseGrid(rows=4, cols=4)
        psi2 = np.full((4, 4), 1.0 / 100.0)
        a = bootstrap_h_backtracking(sample, psi2, g, n_boot=40, seed=2)
        b = bootstrap_h_backtracking(sample, psi2, g, n_boot=40, seed=2)
        assert np.array_equal(a, b)
        assert np.all(a[np.isfinite(a)] >= 0.0)
