import numpy as np
import pytest

from stokserver.errors import ResourceBudgetError, ValidationError
from stokserver.metric import Configuration, build_general_metric, build_line_metric
from stokserver.planner import DistributionSequence, IntegralPlan, expected_plan_cost
from stokserver.oracles import best_nonadaptive_bruteforce, offline_opt, optimal_online_dp
from stokserver.uber import (
    DemandDistributionSequence,
    UberDemand,
    expected_uber_cost,
    uber_execute,
    uber_opt_bruteforce,
    uber_reduce,
)


def random_uber_instance(rng):
    n = int(rng.integers(2, 5))
    k = int(rng.integers(1, 3))
    t = int(rng.integers(1, 4))
    m = build_line_metric(np.sort(rng.uniform(0, 20, n)) + np.arange(n) * 1e-3)
    demands = [
        UberDemand(int(rng.integers(0, n)), int(rng.integers(0, n))) for _ in range(t)
    ]
    return m, demands, k


class TestReduce:
    def test_sources_only(self):
        demands = [UberDemand(3, 1), UberDemand(0, 2)]
        assert uber_reduce(demands) == [3, 0]

    def test_empty(self):
        assert uber_reduce([]) == []


class TestExecute:
    def test_precomputed_cost_plus_detours(self):
        m = build_line_metric([0.0, 2.0, 5.0])
        demands = [UberDemand(0, 1), UberDemand(2, 0)]
        # 2*(d(0,1) + d(2,0)) = 2*(2+5) = 14 detour on top of the wrapped cost
        assert uber_execute(m, 0.0, demands) == pytest.approx(14.0)
        assert uber_execute(m, 3.5, demands) == pytest.approx(17.5)

    def test_plan_wrapped(self):
        m = build_line_metric([0.0, 2.0, 5.0])
        demands = [UberDemand(1, 0)]
        plan = IntegralPlan([Configuration([0]), Configuration([1])])
        # plan movement 2, serve at source free, detour 2*d(1,0)=4 -> wrapped
        # cost also counts the serve term of the plan cost model
        got = uber_execute(m, plan, demands)
        from stokserver.planner import plan_cost_integral

        assert got == pytest.approx(plan_cost_integral(m, plan, [1]) + 4.0)

    def test_policy_wrapped(self):
        m = build_line_metric([0.0, 4.0])
        d = DistributionSequence([{0: 0.5, 1: 0.5}])
        _, policy = optimal_online_dp(m, d, 1)
        demands = [UberDemand(1, 0)]
        got = uber_execute(m, policy, demands)
        assert got >= 2 * m.d(1, 0) - 1e-12

    def test_empty_demands_free(self):
        m = build_line_metric([0.0, 1.0])
        assert uber_execute(m, 123.0, []) == 0.0

    def test_invalid_point(self):
        m = build_line_metric([0.0, 1.0])
        with pytest.raises(ValidationError):
            uber_execute(m, 0.0, [UberDemand(0, 5)])


class TestOptBruteforce:
    def test_single_demand_is_its_length(self):
        m = build_line_metric([0.0, 7.0])
        # free initial placement: start at the source, drive to the target
        assert uber_opt_bruteforce(m, [UberDemand(0, 1)], 1) == pytest.approx(7.0)

    def test_fixed_initial_adds_approach(self):
        m = build_line_metric([0.0, 3.0, 10.0])
        got = uber_opt_bruteforce(
            m, [UberDemand(1, 2)], 1, initial=Configuration([0])
        )
        assert got == pytest.approx(3.0 + 7.0)

    def test_server_may_stay_at_destination(self):
        m = build_line_metric([0.0, 5.0])
        demands = [UberDemand(0, 1), UberDemand(1, 0)]
        # one server: 0 -> 1 -> 0; no return trips needed
        assert uber_opt_bruteforce(m, demands, 1) == pytest.approx(10.0)

    def test_empty(self):
        m = build_line_metric([0.0, 1.0])
        assert uber_opt_bruteforce(m, [], 2) == 0.0

    def test_budget(self):
        m = build_line_metric(np.arange(12.0))
        demands = [UberDemand(0, 1)] * 30
        with pytest.raises(ResourceBudgetError):
            uber_opt_bruteforce(m, demands, 5, budget=1000)

    def test_lower_bounds_hold_randomized(self):
        rng = np.random.default_rng(53)
        for _ in range(30):
            m, demands, k = random_uber_instance(rng)
            opt = uber_opt_bruteforce(m, demands, k)
            sources = uber_reduce(demands)
            assert opt >= offline_opt(m, sources, k) - 1e-9
            assert opt >= sum(m.d(dm.source, dm.destination) for dm in demands) - 1e-9

    def test_general_metric(self):
        m = build_general_metric([[0, 2, 3], [2, 0, 4], [3, 4, 0]])
        demands = [UberDemand(0, 2), UberDemand(1, 0)]
        opt = uber_opt_bruteforce(m, demands, 1)
        # start at 0, ride to 2, fetch rider at 1, ride to 0
        assert opt == pytest.approx(3.0 + 4.0 + 2.0)


class TestWrapperApproximation:
    def test_offline_oracle_within_three(self):
        # wrapped algorithm = exact k-server optimum on the sources
        # (an alpha=1 oracle), so the wrapper is a 3-approximation
        rng = np.random.default_rng(59)
        for _ in range(30):
            m, demands, k = random_uber_instance(rng)
            sources = uber_reduce(demands)
            wrapped = offline_opt(m, sources, k)
            got = uber_execute(m, wrapped, demands)
            opt = uber_opt_bruteforce(m, demands, k)
            assert got <= 3.0 * opt + 1e-7
            assert got >= opt - 1e-9


class TestStochastic:
    def demand_dists(self):
        return DemandDistributionSequence(
            [
                {(0, 1): 0.5, (2, 0): 0.5},
                {(1, 1): 1.0},
            ]
        )

    def test_source_marginals(self):
        dd = self.demand_dists()
        marg = dd.source_marginals()
        assert marg.t == 2
        assert marg.prob(1, 0) == pytest.approx(0.5)
        assert marg.prob(1, 2) == pytest.approx(0.5)
        assert marg.prob(2, 1) == pytest.approx(1.0)

    def test_expected_detour(self):
        m = build_line_metric([0.0, 2.0, 5.0])
        dd = self.demand_dists()
        # 2*(0.5*d(0,1) + 0.5*d(2,0)) + 2*0 = 2 + 5
        assert dd.expected_detour(m) == pytest.approx(7.0)

    def test_validation(self):
        with pytest.raises(ValidationError):
            DemandDistributionSequence([{(0, 1): 0.5}])
        with pytest.raises(ValidationError):
            DemandDistributionSequence([{}])

    def test_sample_reproducible(self):
        dd = self.demand_dists()
        a = dd.sample(np.random.default_rng(5))
        b = dd.sample(np.random.default_rng(5))
        assert a == b
        assert len(a) == 2 and a[1] == UberDemand(1, 1)

    def test_expected_cost_identity(self):
        m = build_line_metric([0.0, 2.0, 5.0])
        dd = self.demand_dists()
        _, plan = best_nonadaptive_bruteforce(m, dd.source_marginals(), 1)
        got = expected_uber_cost(m, plan, dd)
        expect = expected_plan_cost(m, plan, dd.source_marginals()) + dd.expected_detour(m)
        assert got == pytest.approx(expect, abs=1e-12)

    def test_expected_cost_matches_enumeration(self):
        m = build_line_metric([0.0, 2.0, 5.0])
        dd = self.demand_dists()
        _, plan = best_nonadaptive_bruteforce(m, dd.source_marginals(), 1)
        # enumerate all demand realizations by hand
        total = 0.0
        for d1, p1 in [((0, 1), 0.5), ((2, 0), 0.5)]:
            demands = [UberDemand(*d1), UberDemand(1, 1)]
            total += p1 * uber_execute(m, plan, demands)
        assert expected_uber_cost(m, plan, dd) == pytest.approx(total, abs=1e-9)
