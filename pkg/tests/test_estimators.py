import math

import numpy as np
import pytest

from nmd.dynamics import PhasePoint, Trajectory, bo_trajectory, momentum_on_shell
from nmd.errors import EmptyEventsError, InsufficientDataError
from nmd.estimators import (
    PlaneMode,
    PoissonMode,
    default_ehrenfest_dt,
    ergodicity_scan,
    gap_statistics,
    gbo_time_average,
    generate_events,
    gmd_monte_carlo,
    hitting_time_histogram,
    loglog_slope,
    multipath_sampling_error,
    pe_md,
)
from nmd.model import ConicalCrossing2D, OneDCrossing

SQRT2 = math.sqrt(2.0)


def harmonic_2d():
    return ConicalCrossing2D(a=(0.0, 0.0), alpha=1.0, beta=0.0, eta=0.0)


def fig45_surface():
    return ConicalCrossing2D(a=(0.0, 0.0), alpha=SQRT2, beta=2.0, eta=0.0)


def line_trajectory():
    """X(t) = t - 1 on t in [0, 2]."""
    t = np.linspace(0.0, 2.0, 201)
    X = (t - 1.0)[:, None]
    P = np.ones_like(X)
    return Trajectory(t, X, P, np.zeros_like(t), 0.01, 1, "synthetic")


class TestGenerateEvents:
    def test_line_crosses_once(self):
        events = generate_events(line_trajectory(), PlaneMode((0.0,), (1.0,)))
        assert events.count == 2  # start record + one crossing
        assert events.t[1] == pytest.approx(1.0)
        assert events.X[1, 0] == pytest.approx(0.0, abs=1e-12)

    def test_circular_orbit_two_crossings_per_period(self):
        spec = harmonic_2d()
        dt = 2 * math.pi / 6300
        traj = bo_trajectory(spec, PhasePoint([1.0, 0.0], [0.0, 0.0]), dt,
                             3 * 2 * math.pi, stride=1)
        events = generate_events(traj, PlaneMode((0.0, 0.0), (1.0, 0.0)))
        assert events.count - 1 == 6

    def test_crossing_interpolation_is_subgrid(self):
        spec = harmonic_2d()
        traj = bo_trajectory(spec, PhasePoint([1.0, 0.0], [0.0, 0.0]), 0.01,
                             4.0, stride=1)
        events = generate_events(traj, PlaneMode((0.0, 0.0), (1.0, 0.0)))
        # first crossing of cos t at t = pi/2, located far below dt accuracy
        assert events.t[1] == pytest.approx(math.pi / 2, abs=1e-4)

    def test_no_events_raises(self):
        with pytest.raises(EmptyEventsError):
            generate_events(line_trajectory(), PlaneMode((5.0,), (1.0,)))

    def test_zero_normal_rejected(self):
        with pytest.raises(ValueError):
            generate_events(line_trajectory(), PlaneMode((0.0,), (0.0,)))

    def test_poisson_counts_have_the_right_mean(self):
        t = np.linspace(0.0, 50.0, 5001)
        traj = Trajectory(t, np.zeros((t.size, 1)), np.zeros((t.size, 1)),
                          np.zeros_like(t), 0.01, 1, "synthetic")
        rate, horizon, n_seeds = 2.0, 50.0, 200
        counts = []
        for seed in range(n_seeds):
            events = generate_events(traj, PoissonMode(rate, seed))
            counts.append(events.count - 1)
        mean = np.mean(counts)
        assert abs(mean - rate * horizon) <= 3.0 * math.sqrt(rate * horizon / n_seeds)

    def test_poisson_reproducible(self):
        t = np.linspace(0.0, 50.0, 5001)
        traj = Trajectory(t, np.zeros((t.size, 1)), np.zeros((t.size, 1)),
                          np.zeros_like(t), 0.01, 1, "synthetic")
        a = generate_events(traj, PoissonMode(1.5, 42))
        b = generate_events(traj, PoissonMode(1.5, 42))
        assert np.array_equal(a.t, b.t)

    def test_strictly_increasing_times(self):
        spec = fig45_surface()
        speed = momentum_on_shell(spec, 1.5, (0.0, 0.0))
        traj = bo_trajectory(spec, PhasePoint([0.0, 0.0],
                                              [speed * math.cos(1.2),
                                               speed * math.sin(1.2)]),
                             0.01, 50.0, stride=1)
        events = generate_events(traj, PlaneMode((0.0, 0.0), (1.0, 0.0)))
        assert np.all(np.diff(events.t) > 0)


class TestPeMd:
    def test_decoupled_potential_gives_zero(self):
        # diagonal potential with the path confined left of the crossing
        spec = OneDCrossing(delta=0.0, a_l=-2.0, a_r=2.0)
        init = PhasePoint([-1.0], [0.1])
        res = pe_md(spec, E=-0.9, init=init,
                    events_mode=PlaneMode((-1.0,), (1.0,)), M=50.0, dt=0.005,
                    T=20.0, ehrenfest_dt=5e-4)
        assert res.pe_hat <= 1e-10
        assert res.events.count > 2

    def test_stub_integrator_recovers_constant(self):
        # injected segment integrand |<psi, Psi_plus>| = 1/sqrt(2)
        spec = harmonic_2d()
        init = PhasePoint([1.0, 0.0], [0.0, 0.0])
        res = pe_md(spec, E=0.5, init=init,
                    events_mode=PlaneMode((0.0, 0.0), (1.0, 0.0)), M=10.0,
                    dt=0.01, T=20.0,
                    _segment_integrand=lambda t1, t2, X, P: (t2 - t1) / SQRT2)
        assert res.pe_hat == pytest.approx(1.0 / SQRT2, rel=1e-12)

    def test_segments_partition_the_horizon(self):
        spec = harmonic_2d()
        init = PhasePoint([1.0, 0.0], [0.0, 0.0])
        res = pe_md(spec, E=0.5, init=init,
                    events_mode=PlaneMode((0.0, 0.0), (1.0, 0.0)), M=10.0,
                    dt=0.01, T=20.0, ehrenfest_dt=2e-3)
        spans = res.segments[:, 1] - res.segments[:, 0]
        assert np.sum(spans) == pytest.approx(res.T)
        assert 0.0 <= res.pe_hat <= 1.0

    def test_bit_identical_reruns(self):
        spec = ConicalCrossing2D(a=(1.0, 0.0))
        E = 1.5
        speed = momentum_on_shell(spec, E, (-2.0, 0.5))
        init = PhasePoint([-2.0, 0.5], [speed, 0.0])
        kwargs = dict(events_mode=PoissonMode(1.0, 3), M=50.0, dt=0.01, T=30.0,
                      ehrenfest_dt=5e-3)
        a = pe_md(spec, E, init, **kwargs)
        b = pe_md(spec, E, init, **kwargs)
        assert a.pe_hat == b.pe_hat
        assert np.array_equal(a.segments, b.segments)

    def test_default_ehrenfest_dt_matches_reference_mass(self):
        assert default_ehrenfest_dt(20000.0) == pytest.approx(0.01)


class TestGmdMonteCarlo:
    def test_constant_is_exact(self):
        est = gmd_monte_carlo(harmonic_2d(), lambda X: np.ones(X.shape[0]),
                              1.5, 200_000, seed=0)
        assert est.value == 1.0
        assert est.standard_error == 0.0

    def test_disc_mean_radius_squared(self):
        # lambda_- = |X|^2/2 <= E is the disc of radius sqrt(2E); the mean of
        # |X|^2 over it is E
        E = 1.5
        est = gmd_monte_carlo(harmonic_2d(), lambda X: np.sum(X ** 2, axis=1),
                              E, 2_000_000, seed=1)
        assert est.value == pytest.approx(E, abs=5 * est.standard_error)
        assert est.standard_error <= 1e-3

    def test_reproducible_and_seed_sensitive(self):
        g = lambda X: np.sum(X ** 2, axis=1)
        a = gmd_monte_carlo(harmonic_2d(), g, 1.0, 100_000, seed=7)
        b = gmd_monte_carlo(harmonic_2d(), g, 1.0, 100_000, seed=7)
        c = gmd_monte_carlo(harmonic_2d(), g, 1.0, 100_000, seed=8)
        assert a.value == b.value
        assert a.value != c.value

    def test_error_scales_inverse_root_n(self):
        g = lambda X: np.sum(X ** 2, axis=1)
        ses = []
        for n in (100_000, 400_000):
            runs = [gmd_monte_carlo(harmonic_2d(), g, 1.0, n, seed=s).standard_error
                    for s in range(5)]
            ses.append(np.mean(runs))
        assert ses[0] / ses[1] == pytest.approx(2.0, rel=0.2)

    def test_empty_acceptance_rejected(self):
        with pytest.raises(ValueError):
            gmd_monte_carlo(harmonic_2d(), lambda X: np.ones(X.shape[0]),
                            -1.0, 10_000, seed=0)

    def test_boundary_warning_when_box_clips(self):
        est = gmd_monte_carlo(harmonic_2d(), lambda X: np.ones(X.shape[0]),
                              1.5, 50_000, seed=0,
                              bounding_box=((-1.0, 1.0), (-1.0, 1.0)))
        assert est.boundary_warning


class TestGboTimeAverage:
    def test_constant(self):
        traj = line_trajectory()
        assert gbo_time_average(traj, lambda X: np.full(X.shape[0], 3.25)) == 3.25

    def test_harmonic_mean_square_is_energy(self):
        spec = harmonic_2d()
        E = 0.5  # start at (1, 0) at rest
        dt = 2 * math.pi / 6300
        traj = bo_trajectory(spec, PhasePoint([1.0, 0.0], [0.0, 0.0]), dt,
                             5 * 2 * math.pi, stride=1)
        avg = gbo_time_average(traj, lambda X: np.sum(X ** 2, axis=1))
        assert avg == pytest.approx(E, abs=1e-4)

    def test_tail_half_window(self):
        t = np.linspace(0.0, 10.0, 1001)
        X = np.where(t < 5.0, 0.0, 2.0)[:, None]
        traj = Trajectory(t, X, np.zeros_like(X), np.zeros_like(t), 0.01, 1,
                          "synthetic")
        val = gbo_time_average(traj, lambda Y: Y[:, 0], window="tail_half")
        assert val == pytest.approx(2.0, abs=1e-2)

    def test_unknown_window(self):
        with pytest.raises(ValueError):
            gbo_time_average(line_trajectory(), lambda X: X[:, 0], window="head")


class TestErgodicityScan:
    def test_single_entry_has_no_slope(self):
        spec = fig45_surface()
        speed = momentum_on_shell(spec, 1.5, (0.0, 0.0))
        init = PhasePoint([0.0, 0.0], [speed * math.cos(1.2),
                                       speed * math.sin(1.2)])
        scan = ergodicity_scan(spec, lambda X: np.sin(X[:, 0] * X[:, 1]), 1.5,
                               init, 0.01, [25.0], g_md_ref=-0.4388)
        assert scan.slope is None
        assert scan.T.shape == (1,)

    def test_integrable_harmonic_decays_linearly(self):
        # exact remainder: g_bo(T) - E = A^2 sin(2T)/(4T); pick horizons with
        # |sin 2T| = 1 so the oracle slope is exactly -1
        spec = harmonic_2d()
        init = PhasePoint([1.0, 0.0], [0.0, 0.0])
        T_list = [(4 * j + 1) * math.pi / 4 for j in (3, 7, 14, 28, 57, 114)]
        scan = ergodicity_scan(spec, lambda X: np.sum(X ** 2, axis=1), 0.5,
                               init, 0.001, T_list, g_md_ref=0.5)
        oracle = np.abs(0.25 * np.sin(2 * np.asarray(T_list)) / np.asarray(T_list))
        assert scan.error == pytest.approx(oracle, rel=0.05)
        assert scan.slope <= -0.9


class TestMultipath:
    def test_single_path_reduces_to_tail_average(self):
        spec = fig45_surface()
        E, dt, T = 1.5, 0.01, 30.0
        g = lambda X: np.sin(X[:, 0] * X[:, 1])
        table = multipath_sampling_error(spec, g, E, [1], delta_v=1e-6,
                                         base_angle=1.2, dt=dt, T=T,
                                         g_md_ref=-0.43)
        speed = momentum_on_shell(spec, E, (0.0, 0.0))
        ang = 1.2 + 1e-6
        traj = bo_trajectory(spec, PhasePoint([0.0, 0.0],
                                              [speed * math.cos(ang),
                                               speed * math.sin(ang)]),
                             dt, T, stride=1)
        direct = gbo_time_average(traj, g, window="tail_half")
        assert table[0, 1] == pytest.approx(direct - (-0.43), abs=1e-12)

    def test_requires_2d(self):
        with pytest.raises(ValueError):
            multipath_sampling_error(OneDCrossing(delta=0.1),
                                     lambda X: X[:, 0], 1.0, [1], 1e-6, 1.2,
                                     0.01, 1.0, 0.0)


class TestHittingTimes:
    def test_synthetic_poisson_stream(self):
        rng = np.random.default_rng(0)
        rate = 2.0
        times = np.cumsum(rng.exponential(1.0 / rate, size=2000))
        stats = gap_statistics(times, n_bins=40)
        assert stats.rate == pytest.approx(rate, rel=0.05)
        assert stats.ks_distance <= 1.36 / math.sqrt(stats.n_gaps)

    def test_periodic_crossings_are_degenerate(self):
        times = np.arange(100) * 0.5
        stats = gap_statistics(times, n_bins=10)
        # all gaps equal: maximal disagreement with the exponential law
        assert stats.ks_distance >= 0.3

    def test_too_few_crossings(self):
        with pytest.raises(InsufficientDataError):
            gap_statistics(np.arange(10), n_bins=5)

    def test_chaotic_trajectory_rarely_has_long_gaps(self):
        spec = fig45_surface()
        speed = momentum_on_shell(spec, 1.5, (0.0, 0.0))
        traj = bo_trajectory(spec, PhasePoint([0.0, 0.0],
                                              [speed * math.cos(1.2),
                                               speed * math.sin(1.2)]),
                             0.01, 300.0, stride=1)
        stats = hitting_time_histogram(traj, PlaneMode((0.0, 0.0), (1.0, 0.0)),
                                       n_bins=20)
        assert stats.n_gaps >= 50
        # exponential-like tail: gaps beyond 3 mean gaps are rare
        long_gap_mass = np.sum(stats.counts[stats.bin_edges[:-1] > 3.0 / stats.rate])
        assert long_gap_mass <= 0.1 * stats.n_gaps


class TestLogLogSlope:
    def test_pure_power_law(self):
        xs = np.array([1.0, 2.0, 4.0, 8.0])
        assert loglog_slope(xs, xs ** -0.5) == pytest.approx(-0.5)

    def test_insufficient_points(self):
        assert loglog_slope([1.0], [0.5]) is None
