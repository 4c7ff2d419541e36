import numpy as np
import pytest

from stokserver.errors import ResourceBudgetError, ValidationError
from stokserver.lp import solve
from stokserver.metric import Configuration, build_line_metric
from stokserver.correlated import (
    ScenarioSet,
    audit_correlated_solution,
    best_online_bruteforce_correlated,
    build_correlated_lp,
    build_trie,
    execute_correlated,
    fractional_trace,
)
from stokserver.oracles import offline_opt
from stokserver.rounding import RoundingOffset


def plus_minus_five():
    # coordinates -5, 0, 5; one server starting at the middle
    m = build_line_metric([-5.0, 0.0, 5.0])
    ss = ScenarioSet([(2,), (0,)], [0.5, 0.5])
    trie = build_trie(ss, 1, Configuration([1]))
    return m, ss, trie


class TestScenarioSet:
    def test_duplicates_merged(self):
        ss = ScenarioSet([(0, 1), (0, 1), (1, 0)], [0.25, 0.25, 0.5])
        assert ss.m == 2
        assert dict(zip(ss.scenarios, ss.probs))[(0, 1)] == pytest.approx(0.5)

    def test_validation(self):
        with pytest.raises(ValidationError):
            ScenarioSet([(0,), (0, 1)], [0.5, 0.5])
        with pytest.raises(ValidationError):
            ScenarioSet([(0,)], [0.9])
        with pytest.raises(ValidationError):
            ScenarioSet([], [])
        with pytest.raises(ValidationError):
            ScenarioSet([()], [1.0])


class TestTrie:
    def test_single_scenario_path(self):
        ss = ScenarioSet([(0, 1)], [1.0])
        trie = build_trie(ss, 2, Configuration([1, 2]))
        # 2 request nodes + 2 initial-chain nodes
        assert len(trie.nodes) == 4
        assert len(trie.initial_nodes) == 2
        assert [u.point for u in trie.initial_nodes] == [1, 2]

    def test_shared_prefix(self):
        ss = ScenarioSet([(0, 1), (0, 2)], [0.3, 0.7])
        trie = build_trie(ss, 1, Configuration([0]))
        req = trie.request_nodes()
        assert len(req) == 3  # one shared first step + two branches
        shared = [v for v in req if v.step == 1][0]
        assert shared.prob == pytest.approx(1.0)
        branches = sorted(v.prob for v in req if v.step == 2)
        assert branches == pytest.approx([0.3, 0.7])

    def test_initial_k_mismatch(self):
        ss = ScenarioSet([(0,)], [1.0])
        with pytest.raises(ValidationError):
            build_trie(ss, 2, Configuration([0]))


class TestLp:
    def test_single_scenario_single_var(self):
        m = build_line_metric([-5.0, 0.0, 5.0])
        trie = build_trie(ScenarioSet([(2,)], [1.0]), 1, Configuration([0]))
        lp, shape = build_correlated_lp(trie, m)
        assert lp.objective.shape == (1,)
        sol = solve(lp)
        assert sol.objective_value == pytest.approx(10.0)  # d(-5, 5)

    def test_plus_minus_five_value(self):
        m, _, trie = plus_minus_five()
        lp, shape = build_correlated_lp(trie, m)
        sol = solve(lp)
        assert sol.objective_value == pytest.approx(5.0, abs=1e-9)
        audit_correlated_solution(trie, shape, sol)

    def test_bounds_are_unit_box(self):
        m, _, trie = plus_minus_five()
        lp, _ = build_correlated_lp(trie, m)
        assert all(lo == 0.0 and hi == 1.0 for lo, hi in lp.bounds)


class TestExecution:
    def test_plus_minus_five_realizations(self):
        m, ss, trie = plus_minus_five()
        lp, shape = build_correlated_lp(trie, m)
        sol = solve(lp)
        for rho in [(2,), (0,)]:
            cost = execute_correlated(trie, m, sol, shape, rho)
            assert cost == pytest.approx(5.0, abs=1e-9)

    def test_single_scenario_exact(self):
        rng = np.random.default_rng(3)
        for _ in range(6):
            n, k, t = 4, int(rng.integers(1, 3)), int(rng.integers(1, 4))
            m = build_line_metric(np.sort(rng.uniform(0, 20, n)) + np.arange(n) * 1e-3)
            seq = tuple(int(x) for x in rng.integers(0, n, t))
            init = Configuration(rng.integers(0, n, k))
            trie = build_trie(ScenarioSet([seq], [1.0]), k, init)
            lp, shape = build_correlated_lp(trie, m)
            sol = solve(lp)
            expect = offline_opt(m, list(seq), k, initial=init)
            assert sol.objective_value == pytest.approx(expect, abs=1e-7)
            cost = execute_correlated(trie, m, sol, shape, seq)
            assert cost <= sol.objective_value + 1e-7

    def test_unknown_scenario_rejected(self):
        m, _, trie = plus_minus_five()
        lp, shape = build_correlated_lp(trie, m)
        sol = solve(lp)
        with pytest.raises(ValidationError):
            execute_correlated(trie, m, sol, shape, (1,))
        with pytest.raises(ValidationError):
            execute_correlated(trie, m, sol, shape, (2, 2))

    def test_trace_masses_sum_to_k(self):
        m, ss, trie = plus_minus_five()
        lp, shape = build_correlated_lp(trie, m)
        sol = solve(lp)
        trace = fractional_trace(trie, m, shape, sol, (2,))
        for cfg in trace.configs:
            assert cfg.total == pytest.approx(1.0, abs=1e-7)

    def test_rounded_execution_covers_requests(self):
        rng = np.random.default_rng(11)
        m = build_line_metric([0.0, 3.0, 8.0, 12.0])
        ss = ScenarioSet([(0, 2), (0, 3), (1, 1)], [0.4, 0.4, 0.2])
        trie = build_trie(ss, 2, Configuration([1, 2]))
        lp, shape = build_correlated_lp(trie, m)
        sol = solve(lp)
        for s in ss.scenarios:
            for r in rng.uniform(0, 1, 3):
                # raises internally if a request is ever uncovered
                execute_correlated(trie, m, sol, shape, s, RoundingOffset(float(r)))


class TestBruteforce:
    def test_plus_minus_five(self):
        m, _, trie = plus_minus_five()
        assert best_online_bruteforce_correlated(trie, m) == pytest.approx(5.0)

    def test_single_scenario_equals_offline(self):
        m = build_line_metric([0.0, 4.0, 9.0])
        init = Configuration([0])
        trie = build_trie(ScenarioSet([(2, 0, 1)], [1.0]), 1, init)
        expect = offline_opt(m, [2, 0, 1], 1, initial=init)
        assert best_online_bruteforce_correlated(trie, m) == pytest.approx(expect)

    def test_lp_never_above_bruteforce(self):
        rng = np.random.default_rng(7)
        for _ in range(15):
            n = int(rng.integers(2, 5))
            k = int(rng.integers(1, 3))
            t = int(rng.integers(1, 3))
            m = build_line_metric(np.sort(rng.uniform(0, 20, n)) + np.arange(n) * 1e-3)
            nsc = int(rng.integers(1, 4))
            scen = [tuple(int(x) for x in rng.integers(0, n, t)) for _ in range(nsc)]
            p = rng.dirichlet(np.ones(nsc))
            trie = build_trie(ScenarioSet(scen, p), k, Configuration(rng.integers(0, n, k)))
            lp, shape = build_correlated_lp(trie, m)
            sol = solve(lp)
            bf = best_online_bruteforce_correlated(trie, m)
            assert sol.objective_value <= bf + 1e-7

    def test_budget_error(self):
        m = build_line_metric(np.arange(20.0))
        scen = [tuple(int(x) for x in np.random.default_rng(0).integers(0, 20, 3)) for _ in range(4)]
        trie = build_trie(ScenarioSet(scen, [0.25] * 4), 4, Configuration([0, 1, 2, 3]))
        with pytest.raises(ResourceBudgetError):
            best_online_bruteforce_correlated(trie, m)
