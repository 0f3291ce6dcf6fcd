import math

import numpy as np
import pytest
from scipy import stats

from gaussmart import (
    DomainError,
    FamilyError,
    RandomStream,
    StreamBundle,
    conditional_moments,
    first_jump_times,
    path_bundle,
    simulate_event,
    simulate_event_terminals,
    simulate_grid,
    simulate_grid_ensemble,
    transition_pairs,
)
from gaussmart.pathsim import write_event_csv, write_grid_csv
from gaussmart.sampler import sample_subordinator_increment


def recursion_step(family, s, t, x, bundle):
    """Independent one-step oracle: draw (U, xi) and apply the identity."""
    sigma = math.sqrt(t / s)
    u = sample_subordinator_increment(family, sigma, bundle)
    xi = bundle.normals()
    return sigma * (np.exp(-0.5 * u) * x + math.sqrt(s) * np.sqrt(-np.expm1(-u)) * xi)


class TestGrid:
    def test_first_step_exactly_gaussian(self, poisson_fam):
        vals = simulate_grid_ensemble(poisson_fam, [0.0, 1.0], 3, 100_000)
        assert stats.kstest(vals[:, 1], "norm").pvalue > 0.001

    def test_marginal_at_one_over_twenty_steps(self, poisson_fam):
        vals = simulate_grid_ensemble(
            poisson_fam, np.linspace(0, 1, 21), 4, 200_000
        )
        final = vals[:, -1]
        assert stats.kstest(final, "norm").pvalue > 0.001
        assert abs(final.var() - 1.0) < 3.0 * math.sqrt(2.0 / final.size)

    def test_degenerate_family_gives_brownian_increments(self, brownian_fam):
        times = np.array([0.0, 0.3, 1.0, 2.5])
        vals = simulate_grid_ensemble(brownian_fam, times, 5, 50_000)
        incs = np.diff(vals, axis=1)
        for j in range(1, incs.shape[1]):
            scaled = incs[:, j] / math.sqrt(times[j + 1] - times[j])
            assert stats.kstest(scaled, "norm").pvalue > 0.001
        # increments independent of the past: correlation with X_s vanishes
        rho = np.corrcoef(vals[:, 1], incs[:, 1])[0, 1]
        assert abs(rho) < 4.0 / math.sqrt(vals.shape[0])

    def test_scalar_path_equals_ensemble_lane(self, gamma_fam):
        times = np.linspace(0.0, 2.0, 9)
        path = simulate_grid(gamma_fam, times, RandomStream(9, 3))
        vals = simulate_grid_ensemble(gamma_fam, times, 9, 5, stream_base=0)
        assert np.array_equal(path.values, vals[3])

    def test_threading_does_not_change_values(self, poisson_fam):
        times = np.linspace(0.0, 1.0, 11)
        a = simulate_grid_ensemble(poisson_fam, times, 7, 20_000, threads=1)
        b = simulate_grid_ensemble(poisson_fam, times, 7, 20_000, threads=4)
        assert np.array_equal(a, b)

    def test_refinement_leaves_marginal_unchanged(self, poisson_fam):
        coarse = simulate_grid_ensemble(
            poisson_fam, np.linspace(0, 1, 6), 11, 50_000
        )[:, -1]
        fine = simulate_grid_ensemble(
            poisson_fam, np.linspace(0, 1, 41), 12, 50_000
        )[:, -1]
        assert stats.ks_2samp(coarse, fine).pvalue > 0.001

    def test_bad_grids_rejected(self, poisson_fam):
        stream = RandomStream(0, 0)
        with pytest.raises(DomainError):
            simulate_grid(poisson_fam, [0.0, 1.0, 1.0], stream)
        with pytest.raises(DomainError):
            simulate_grid(poisson_fam, [0.5, 1.0], stream)
        with pytest.raises(DomainError):
            simulate_grid(poisson_fam, [0.0, -1.0], stream)


class TestConditionalMoments:
    def test_identity_at_equal_times(self, poisson_fam):
        mean, second = conditional_moments(poisson_fam, 1.3, 1.3, 0.7)
        assert mean == 0.7 and second == pytest.approx(0.49, rel=1e-14)

    def test_brownian_case(self, brownian_fam):
        mean, second = conditional_moments(brownian_fam, 0.5, 2.0, 1.1)
        assert mean == 1.1
        assert second == pytest.approx(1.5 + 1.1**2, rel=1e-12)

    def test_poisson_value_frozen(self, poisson_fam):
        # 30-digit evaluation of t(1-(s/t)^d) + (t/s)^{1-d} x^2 at (0.5, 2, 1)
        _, second = conditional_moments(poisson_fam, 0.5, 2.0, 1.0)
        assert second == pytest.approx(2.6567741909868684, rel=1e-13)

    def test_against_monte_carlo_recursion(self, poisson_fam):
        s, t, x = 0.5, 2.0, 1.0
        draws = recursion_step(poisson_fam, s, t, x, path_bundle(13, 1_000_000))
        _, second = conditional_moments(poisson_fam, s, t, x)
        se = np.std(draws**2) / math.sqrt(draws.size)
        assert abs(np.mean(draws**2) - second) < 4.0 * se
        assert abs(draws.mean() - x) < 4.0 * draws.std() / math.sqrt(draws.size)

    def test_gamma_against_monte_carlo(self, gamma_fam):
        s, t, x = 1.0, 3.0, -0.8
        draws = recursion_step(gamma_fam, s, t, x, path_bundle(14, 1_000_000))
        _, second = conditional_moments(gamma_fam, s, t, x)
        se = np.std(draws**2) / math.sqrt(draws.size)
        assert abs(np.mean(draws**2) - second) < 4.0 * se

    def test_domain(self, poisson_fam):
        with pytest.raises(DomainError):
            conditional_moments(poisson_fam, 0.0, 1.0, 0.0)
        with pytest.raises(DomainError):
            conditional_moments(poisson_fam, 2.0, 1.0, 0.0)


class TestContinuityInProbability:
    def test_chebyshev_bound(self, poisson_fam):
        s, t = 1.0, 1.25
        xs, xt = transition_pairs(poisson_fam, s, t, 15, 100_000)
        for c in (0.4, 0.8, 1.6):
            p_hat = np.mean(np.abs(xt - xs) > c)
            se = math.sqrt(max(p_hat * (1 - p_hat), 1e-5) / xs.size)
            assert p_hat <= (t - s) / c**2 + 4.0 * se


class TestEventMode:
    def test_jump_times_strictly_after_start(self, poisson_fam):
        t = first_jump_times(poisson_fam, 2.0, path_bundle(16, 100_000))
        assert np.all(t > 2.0)

    def test_first_jump_median(self, poisson_fam):
        t = first_jump_times(poisson_fam, 1.0, path_bundle(17, 100_000))
        target = 2.0 ** (2.0 / poisson_fam.c)  # = 1.7254093517858221
        assert abs(np.median(t) - target) < 0.01 * target

    def test_survival_probability(self, poisson_fam):
        t = first_jump_times(poisson_fam, 1.0, path_bundle(18, 100_000))
        target = 2.0 ** (-0.5 * poisson_fam.c)  # = 0.4144451136983333
        se = math.sqrt(target * (1 - target) / t.size)
        assert abs(np.mean(t > 2.0) - target) < 4.0 * se

    def test_path_structure_and_flow(self, poisson_fam):
        path = simulate_event(poisson_fam, 1.0, 0.4, 6.0, RandomStream(19, 0))
        path.validate()
        assert path.start_time == 1.0 and path.horizon == 6.0
        if len(path.jumps):
            times = path.jump_times
            assert np.all((times > 1.0) & (times <= 6.0))

    def test_drift_identity_between_jumps(self, poisson_fam):
        # value(u2-)/value(u1+) == sqrt(u2/u1) exactly along each segment
        for k in range(20):
            path = simulate_event(poisson_fam, 1.0, 1.0, 8.0, RandomStream(20, k))
            t_prev, x_prev = path.start_time, path.start_value
            for t, pre, post in path.jumps:
                if x_prev != 0.0:
                    assert pre / x_prev == pytest.approx(
                        math.sqrt(t / t_prev), rel=1e-12
                    )
                t_prev, x_prev = t, post

    def test_scalar_matches_vector_lanes(self, poisson_fam):
        terms = simulate_event_terminals(
            poisson_fam, 1.0, 0.5, 2.0, StreamBundle(21, np.arange(50))
        )
        for k in range(50):
            p = simulate_event(poisson_fam, 1.0, 0.5, 2.0, RandomStream(21, k))
            assert p.terminal_value == terms[k]

    def test_post_jump_value_moments_from_zero_start(self, poisson_fam):
        # starting at x0 = 0: first-jump post value has mean 0 and variance
        # E[T] (1 - e^{-1}) restricted to jumps inside the horizon
        horizon = 50.0
        bundle = StreamBundle(22, np.arange(200_000))
        terms = []
        jumps_t, jumps_v = [], []
        for k in range(2000):
            p = simulate_event(poisson_fam, 1.0, 0.0, horizon, RandomStream(22, k))
            if len(p.jumps):
                t0, _, post0 = p.jumps[0]
                jumps_t.append(t0)
                jumps_v.append(post0)
        jumps_t = np.array(jumps_t)
        jumps_v = np.array(jumps_v)
        assert abs(jumps_v.mean()) < 4.0 * jumps_v.std() / math.sqrt(jumps_v.size)
        # conditional variance given T: T (1 - e^{-1})
        ratio = jumps_v**2 / (jumps_t * -math.expm1(-1.0))
        se = ratio.std() / math.sqrt(ratio.size)
        assert abs(ratio.mean() - 1.0) < 4.0 * se

    def test_non_poisson_rejected(self, gamma_fam, brownian_fam):
        with pytest.raises(FamilyError):
            simulate_event(gamma_fam, 1.0, 0.0, 2.0, RandomStream(0, 0))
        with pytest.raises(FamilyError):
            first_jump_times(brownian_fam, 1.0, path_bundle(0, 10))

    def test_domain(self, poisson_fam):
        with pytest.raises(DomainError):
            simulate_event(poisson_fam, -1.0, 0.0, 2.0, RandomStream(0, 0))
        with pytest.raises(DomainError):
            simulate_event(poisson_fam, 1.0, 0.0, 0.5, RandomStream(0, 0))


class TestMartingaleStep:
    @pytest.mark.parametrize("kind", ["poisson", "gamma", "compound"])
    def test_single_step_mean(self, kind, poisson_fam, gamma_fam, compound_fam):
        fam = {"poisson": poisson_fam, "gamma": gamma_fam, "compound": compound_fam}[kind]
        s, t, x = 1.0, 2.5, 0.8
        draws = recursion_step(fam, s, t, x, path_bundle(23, 1_000_000))
        se = draws.std() / math.sqrt(draws.size)
        assert abs(draws.mean() - x) < 4.0 * se


class TestCsv:
    def test_grid_format(self, tmp_path, poisson_fam):
        times = np.linspace(0.0, 1.0, 5)
        vals = simulate_grid_ensemble(poisson_fam, times, 1, 3)
        out = tmp_path / "grid.csv"
        write_grid_csv(out, times, vals)
        lines = out.read_text().splitlines()
        assert lines[0] == "path_id,time,value"
        assert len(lines) == 1 + 3 * 5
        pid, t, v = lines[1].split(",")
        assert pid == "0" and float(t) == 0.0 and float(v) == 0.0
        # values round-trip exactly through repr
        assert float(lines[2].split(",")[2]) == vals[0, 1]

    def test_event_format(self, tmp_path, poisson_fam):
        paths = [
            simulate_event(poisson_fam, 1.0, 0.0, 4.0, RandomStream(2, k))
            for k in range(5)
        ]
        out = tmp_path / "events.csv"
        write_event_csv(out, paths)
        lines = out.read_text().splitlines()
        assert lines[0] == "path_id,event_index,time,pre_value,post_value"
        n_jumps = sum(len(p.jumps) for p in paths)
        assert len(lines) == 1 + n_jumps
