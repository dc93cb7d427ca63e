"""Ensemble sampling and batch evolution behavior.

Sampling checks are statistical with fixed seeds and generous tolerances;
evolution checks lean on stationary states where the exact answer is known.
"""
import math

import numpy as np
import pytest

from pilotwave.dynamics import IntegratorConfig
from pilotwave.ensemble import (
    EnsembleSpec,
    SnapshotSet,
    evolve,
    evolve_points,
    sample_equilibrium,
    sample_initial,
    support_box,
)
from pilotwave.errors import DomainError, EnsembleError
from pilotwave.wavefunction import ModeSet, OscillatorModel, WaveFunction, density_original

WIDE_BOX = (-40.0, 40.0, -40.0, 40.0)


def _ground_state(coupling=0.0):
    model = OscillatorModel(omega=1.0, coupling=coupling)
    return WaveFunction(model, ModeSet(((0, 0),), (0.0,)))


def _stationary_excited():
    model = OscillatorModel(omega=1.0, coupling=0.5)
    return WaveFunction(model, ModeSet(((2, 1),), (0.37,)))


def _two_mode():
    model = OscillatorModel(omega=1.0, coupling=0.5)
    return WaveFunction(model, ModeSet(((0, 0), (1, 0)), (0.0, 0.25)))


class TestSampleInitial:
    def test_deterministic_and_inside_box(self):
        spec = EnsembleSpec(n_traj=500, seed=11)
        a = sample_initial(spec)
        b = sample_initial(spec)
        assert np.array_equal(a, b)
        assert a.shape == (500, 2)
        xa0, xa1, xb0, xb1 = spec.box
        assert np.all((a[:, 0] >= xa0) & (a[:, 0] <= xa1))
        assert np.all((a[:, 1] >= xb0) & (a[:, 1] <= xb1))

    def test_moments_match_spec(self):
        # Wide box so truncation is negligible; 3 sigma of the sample mean
        # at N=40000 is about 0.02 for unit sigma.
        spec = EnsembleSpec(
            n_traj=40000, mean_a=0.4, mean_b=-0.7,
            sigma_a=1.3, sigma_b=0.8, correlation=0.6,
            box=WIDE_BOX, seed=5,
        )
        pts = sample_initial(spec)
        assert abs(pts[:, 0].mean() - 0.4) < 0.03
        assert abs(pts[:, 1].mean() + 0.7) < 0.03
        assert abs(pts[:, 0].std() - 1.3) < 0.03
        assert abs(pts[:, 1].std() - 0.8) < 0.03
        r = np.corrcoef(pts[:, 0], pts[:, 1])[0, 1]
        assert abs(r - 0.6) < 0.03

    def test_truncation_conditions_the_tails(self):
        box = (-0.8, 0.8, -0.8, 0.8)
        spec = EnsembleSpec(n_traj=2000, box=box, seed=3)
        pts = sample_initial(spec)
        assert pts.shape == (2000, 2)
        assert np.all(np.abs(pts) <= 0.8)

    def test_hopeless_box_rejected(self):
        spec = EnsembleSpec(n_traj=1000, box=(3.5, 3.6, 3.5, 3.6), seed=1)
        with pytest.raises(EnsembleError):
            sample_initial(spec)


class TestSampleEquilibrium:
    def test_ground_state_moments(self):
        # m = omega = 1 ground state: density exp(-(xa^2+xb^2))/pi, so each
        # coordinate has mean 0 and variance 1/2.
        wf = _ground_state()
        pts = sample_equilibrium(wf, 30000, seed=9)
        assert pts.shape == (30000, 2)
        assert abs(pts[:, 0].mean()) < 0.02
        assert abs(pts[:, 1].mean()) < 0.02
        assert abs(pts[:, 0].var() - 0.5) < 0.02
        assert abs(pts[:, 1].var() - 0.5) < 0.02
        r2 = pts[:, 0] ** 2 + pts[:, 1] ** 2
        assert abs(r2.mean() - 1.0) < 0.03

    def test_deterministic(self):
        wf = _two_mode()
        a = sample_equilibrium(wf, 400, seed=21)
        b = sample_equilibrium(wf, 400, seed=21)
        assert np.array_equal(a, b)
        c = sample_equilibrium(wf, 400, seed=22)
        assert not np.array_equal(a, c)

    def test_matches_density_histogram(self):
        # Chi-square style check on a 6x6 grid over the core of the state.
        wf = _two_mode()
        n = 20000
        pts = sample_equilibrium(wf, n, seed=4)
        edges = np.linspace(-3.0, 3.0, 7)
        counts, _, _ = np.histogram2d(pts[:, 0], pts[:, 1], bins=(edges, edges))
        xa = 0.5 * (edges[:-1] + edges[1:])
        dens = density_original(wf, xa[:, None], xa[None, :], 0.0)
        cell = (edges[1] - edges[0]) ** 2
        expected = dens * cell * n
        mask = expected > 50
        rel = np.abs(counts[mask] - expected[mask]) / np.sqrt(expected[mask])
        # Midpoint-rule binning bias dominates Poisson noise in curved cells.
        assert np.median(rel) < 4.0

    def test_bad_inputs(self):
        wf = _ground_state()
        with pytest.raises(DomainError):
            sample_equilibrium(wf, 0)
        with pytest.raises(EnsembleError):
            sample_equilibrium(wf, 10, box=(30.0, 31.0, 30.0, 31.0))


class TestSupportBox:
    def test_boundary_density_negligible(self):
        # The box must enclose the state: along its edges the density has to
        # be far below anything a 10^5-point ensemble could resolve.
        model = OscillatorModel(omega=1.0, coupling=0.5)
        wf = WaveFunction(model, ModeSet(((6, 6), (0, 0)), (0.0, 0.3)))
        xa0, xa1, xb0, xb1 = support_box(wf)
        line = np.linspace(xa0, xa1, 201)
        for t in (0.0, 2.0):
            for edge_a, edge_b in (
                (line, np.full_like(line, xb0)),
                (line, np.full_like(line, xb1)),
                (np.full_like(line, xa0), line),
                (np.full_like(line, xa1), line),
            ):
                assert density_original(wf, edge_a, edge_b, t).max() < 1e-10

    def test_contains_nearly_all_mass(self):
        wf = _two_mode()
        xa0, xa1, xb0, xb1 = support_box(wf)
        n = 800
        xa = xa0 + (np.arange(n) + 0.5) * (xa1 - xa0) / n
        xb = xb0 + (np.arange(n) + 0.5) * (xb1 - xb0) / n
        dens = density_original(wf, xa[:, None], xb[None, :], 0.0)
        cell = (xa1 - xa0) * (xb1 - xb0) / n**2
        assert float(dens.sum() * cell) > 1.0 - 1e-6

    def test_grows_with_mode_content(self):
        model = OscillatorModel(omega=1.0, coupling=0.5)
        low = support_box(WaveFunction(model, ModeSet(((0, 0),), (0.0,))))
        high = support_box(WaveFunction(model, ModeSet(((6, 6),), (0.0,))))
        assert high[1] > low[1]
        assert low[0] == -low[1] and high[0] == -high[1]


class TestEvolvePoints:
    CFG = IntegratorConfig(record_times=(0.0, 0.3))

    def test_stationary_state_stays_put(self):
        wf = _stationary_excited()
        spec = EnsembleSpec(n_traj=64, seed=2)
        starts = sample_initial(spec)
        snaps = evolve_points(wf, starts, self.CFG)
        assert isinstance(snaps, SnapshotSet)
        assert snaps.n_total == 64
        assert snaps.rejected_count == 0
        assert np.array_equal(snaps.ids, np.arange(64))
        assert np.array_equal(snaps.times, [0.0, 0.3])
        # t=0 positions pass through the normal-coordinate round trip, which
        # costs an ulp; they are not bit-equal to the inputs.
        np.testing.assert_allclose(snaps.positions[0], starts, rtol=1e-14, atol=0)
        np.testing.assert_allclose(snaps.positions[1], starts, rtol=0, atol=1e-10)

    def test_tol_counts_cover_accepted(self):
        wf = _two_mode()
        starts = sample_initial(EnsembleSpec(n_traj=48, seed=8))
        snaps = evolve_points(wf, starts, self.CFG)
        assert sum(snaps.tol_counts.values()) == snaps.n_total - snaps.rejected_count
        for tol in snaps.tol_counts:
            assert 1e-16 <= tol <= 1e-9

    def test_worker_and_chunk_invariance(self):
        wf = _two_mode()
        starts = sample_initial(EnsembleSpec(n_traj=32, seed=13))
        solo = evolve_points(wf, starts, self.CFG)
        split = evolve_points(wf, starts, self.CFG, workers=2, chunk_size=8)
        for a, b in zip(solo.positions, split.positions):
            assert np.array_equal(a, b)
        assert np.array_equal(solo.ids, split.ids)
        assert solo.tol_counts == split.tol_counts

    def test_rejection_ceiling_enforced(self):
        wf = _two_mode()
        starts = sample_initial(EnsembleSpec(n_traj=16, seed=6))
        # A two-step budget cannot reach t=0.3 at any ladder level.
        starving = IntegratorConfig(
            record_times=(0.0, 0.3), max_steps=2, steps_per_period=2,
        )
        with pytest.raises(EnsembleError):
            evolve_points(wf, starts, starving)
        snaps = evolve_points(wf, starts, starving, rejection_ceiling=1.0)
        assert snaps.rejected_count == 16
        assert snaps.ids.size == 0
        assert all(p.shape == (0, 2) for p in snaps.positions)

    def test_out_of_box_counted(self):
        wf = _stationary_excited()
        starts = sample_initial(EnsembleSpec(n_traj=40, seed=3))
        tight = (-0.5, 0.5, -0.5, 0.5)
        snaps = evolve_points(wf, starts, self.CFG, box=tight)
        inside = (np.abs(starts[:, 0]) <= 0.5) & (np.abs(starts[:, 1]) <= 0.5)
        assert snaps.out_of_box[0] == 40 - inside.sum()
        assert snaps.box == tight

    def test_input_validation(self):
        wf = _two_mode()
        with pytest.raises(DomainError):
            evolve_points(wf, np.zeros((3, 5)), self.CFG)
        bad = np.array([[0.1, 0.2], [np.nan, 0.0]])
        with pytest.raises(DomainError):
            evolve_points(wf, bad, self.CFG)

    def test_evolve_wrapper_matches_manual(self):
        wf = _two_mode()
        spec = EnsembleSpec(n_traj=24, seed=17)
        auto = evolve(spec, wf, self.CFG)
        manual = evolve_points(wf, sample_initial(spec), self.CFG, box=spec.box)
        for a, b in zip(auto.positions, manual.positions):
            assert np.array_equal(a, b)
