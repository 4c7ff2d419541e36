import numpy as np
import pytest

from stokserver.errors import ResourceBudgetError, ValidationError
from stokserver.metric import Configuration, build_general_metric, build_line_metric
from stokserver.planner import DistributionSequence, expected_plan_cost, solve_nonadaptive
from stokserver.oracles import (
    best_nonadaptive_bruteforce,
    enumerate_configs,
    offline_opt,
    optimal_online_dp,
    policy_expected_cost,
    realized_policy_cost,
    simulate_policy,
)


def uniform_two_point():
    return build_line_metric([0.0, 1.0]), DistributionSequence([{0: 0.5, 1: 0.5}])


def random_line_instance(rng, nmax=5, kmax=2, tmax=3):
    n = int(rng.integers(2, nmax + 1))
    k = int(rng.integers(1, kmax + 1))
    t = int(rng.integers(1, tmax + 1))
    m = build_line_metric(np.sort(rng.uniform(0, 20, n)) + np.arange(n) * 1e-3)
    d = DistributionSequence(
        [{i: float(p) for i, p in enumerate(rng.dirichlet(np.ones(n)))} for _ in range(t)]
    )
    return m, d, k


class TestConfigEnumeration:
    def test_counts(self):
        assert len(enumerate_configs(3, 2)) == 6  # C(4,2)
        assert len(enumerate_configs(2, 1)) == 2

    def test_sorted_multisets(self):
        for c in enumerate_configs(3, 2):
            assert c.positions == tuple(sorted(c.positions))


class TestOptimalOnlineDp:
    def test_deterministic_free_placement_is_free(self):
        m = build_line_metric([0.0, 9.0])
        d = DistributionSequence([{1: 1.0}])
        value, _ = optimal_online_dp(m, d, 1)
        assert value == pytest.approx(0.0, abs=1e-12)

    def test_uniform_two_point_half(self):
        m, d = uniform_two_point()
        value, _ = optimal_online_dp(m, d, 1)
        assert value == pytest.approx(0.5, abs=1e-12)

    def test_dp_below_rounded_plan(self):
        from stokserver.rounding import derandomize_offset, round_plan_line

        rng = np.random.default_rng(23)
        for _ in range(8):
            m, d, k = random_line_instance(rng)
            value, _ = optimal_online_dp(m, d, k)
            plan, _ = solve_nonadaptive(m, d, k)
            rounded = round_plan_line(plan, m, derandomize_offset(m, plan, d))
            assert value <= expected_plan_cost(m, rounded, d) + 1e-9

    def test_cover_equals_via_reading(self):
        rng = np.random.default_rng(29)
        for _ in range(10):
            m, d, k = random_line_instance(rng, nmax=4)
            vc, _ = optimal_online_dp(m, d, k, mode="cover")
            vv, _ = optimal_online_dp(m, d, k, mode="via")
            assert vc == pytest.approx(vv, abs=1e-8)

    def test_policy_expectation_matches_value(self):
        rng = np.random.default_rng(31)
        for mode in ("cover", "serve-return"):
            for _ in range(5):
                m, d, k = random_line_instance(rng, nmax=4)
                value, policy = optimal_online_dp(m, d, k, mode=mode)
                assert policy_expected_cost(m, policy, d) == pytest.approx(value, abs=1e-9)

    def test_budget_error(self):
        m = build_line_metric(np.arange(30.0))
        d = DistributionSequence([{0: 1.0}] * 50)
        with pytest.raises(ResourceBudgetError):
            optimal_online_dp(m, d, 6)

    def test_unknown_mode(self):
        m, d = uniform_two_point()
        with pytest.raises(ValidationError):
            optimal_online_dp(m, d, 1, mode="bogus")


class TestOfflineOpt:
    def test_all_requests_one_point(self):
        m = build_line_metric([0.0, 5.0])
        assert offline_opt(m, [1, 1, 1], 1) == 0.0

    def test_forced_zig_zag(self):
        m = build_line_metric([0.0, 10.0])
        assert offline_opt(m, [0, 1, 0], 1) == pytest.approx(20.0)

    def test_two_servers_park(self):
        m = build_line_metric([0.0, 10.0])
        assert offline_opt(m, [0, 1, 0], 2) == 0.0

    def test_fixed_initial(self):
        m = build_line_metric([0.0, 10.0])
        assert offline_opt(m, [1], 1, initial=Configuration([0])) == pytest.approx(10.0)

    def test_below_any_policy_realization(self):
        rng = np.random.default_rng(37)
        for _ in range(10):
            m, d, k = random_line_instance(rng, nmax=4)
            value, policy = optimal_online_dp(m, d, k)
            rho = d.sample(np.random.default_rng(1))
            realized = realized_policy_cost(m, policy, rho)
            assert offline_opt(m, rho, k) <= realized + 1e-9


class TestBestNonadaptive:
    def test_uniform_two_point_one(self):
        m, d = uniform_two_point()
        value, plan = best_nonadaptive_bruteforce(m, d, 1)
        assert value == pytest.approx(1.0, abs=1e-9)
        assert expected_plan_cost(m, plan, d) == pytest.approx(value, abs=1e-9)

    def test_deterministic_matches_offline_serve_return(self):
        rng = np.random.default_rng(41)
        for _ in range(10):
            n, k, t = 3, int(rng.integers(1, 3)), int(rng.integers(1, 4))
            m = build_line_metric(np.sort(rng.uniform(0, 10, n)) + np.arange(n) * 1e-3)
            rho = [int(r) for r in rng.integers(0, n, t)]
            d = DistributionSequence([{r: 1.0} for r in rho])
            value, _ = best_nonadaptive_bruteforce(m, d, k)
            assert value == pytest.approx(
                offline_opt(m, rho, k, mode="serve-return"), abs=1e-9
            )

    def test_lp_is_a_relaxation(self):
        rng = np.random.default_rng(43)
        for _ in range(10):
            m, d, k = random_line_instance(rng, nmax=4)
            value, _ = best_nonadaptive_bruteforce(m, d, k)
            _, lp_value = solve_nonadaptive(m, d, k)
            assert lp_value <= value + 1e-7

    def test_budget_error(self):
        m = build_line_metric(np.arange(10.0))
        d = DistributionSequence([{0: 1.0}] * 20)
        with pytest.raises(ResourceBudgetError):
            best_nonadaptive_bruteforce(m, d, 4)


class TestStructuralFactorThree:
    def test_nonadaptive_within_three_of_dp(self):
        rng = np.random.default_rng(47)
        for _ in range(15):
            m, d, k = random_line_instance(rng, nmax=4)
            dp_value, _ = optimal_online_dp(m, d, k)
            na_value, _ = best_nonadaptive_bruteforce(m, d, k)
            assert dp_value <= na_value + 1e-9
            assert na_value <= 3.0 * dp_value + 1e-9

    def test_general_metric_too(self):
        m = build_general_metric([[0, 2, 3], [2, 0, 4], [3, 4, 0]])
        d = DistributionSequence([{0: 0.3, 1: 0.3, 2: 0.4}, {1: 0.5, 2: 0.5}])
        dp_value, _ = optimal_online_dp(m, d, 2)
        na_value, _ = best_nonadaptive_bruteforce(m, d, 2)
        assert na_value <= 3.0 * dp_value + 1e-9


class TestSimulation:
    def test_mean_converges_to_value(self):
        m, d = uniform_two_point()
        value, policy = optimal_online_dp(m, d, 1)
        for seed in (1, 2, 3):
            stats = simulate_policy(m, policy, d, 3000, seed)
            assert abs(stats.mean - value) <= 3 * stats.stderr + 1e-9

    def test_deterministic_instance_zero_variance(self):
        m = build_line_metric([0.0, 5.0])
        d = DistributionSequence([{1: 1.0}, {0: 1.0}])
        _, policy = optimal_online_dp(m, d, 1)
        stats = simulate_policy(m, policy, d, 50, 9)
        assert stats.stderr == 0.0

    def test_reproducible(self):
        m, d = uniform_two_point()
        _, policy = optimal_online_dp(m, d, 1)
        a = simulate_policy(m, policy, d, 64, 5)
        b = simulate_policy(m, policy, d, 64, 5)
        assert a.costs == b.costs
