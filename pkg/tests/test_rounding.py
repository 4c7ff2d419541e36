import numpy as np
import pytest

from stokserver.errors import ValidationError
from stokserver.metric import (
    Configuration,
    FractionalConfiguration,
    build_circle_metric,
    build_line_metric,
    config_distance,
    fractional_distance,
)
from stokserver.planner import (
    DistributionSequence,
    FractionalPlan,
    expected_plan_cost,
    solve_nonadaptive,
)
from stokserver.rounding import (
    RoundingOffset,
    average_over_offsets,
    derandomize_offset,
    mass_function,
    offset_breakpoints,
    round_line,
    round_plan_line,
)


def line_0_1_5():
    # points at coordinates 0, 1, 5 with masses 0.5, 0.5, 1
    m = build_line_metric([0.0, 1.0, 5.0])
    a = FractionalConfiguration({0: 0.5, 1: 0.5, 2: 1.0})
    return m, a


class TestMassFunction:
    def test_integral_masses(self):
        m = build_line_metric([0.0, 3.0])
        a = FractionalConfiguration({0: 1.0, 1: 1.0})
        assert mass_function(m, a, 0.5) == 0
        assert mass_function(m, a, 1.5) == 1

    def test_half_masses(self):
        m, a = line_0_1_5()
        assert mass_function(m, a, 0.75) == 1

    def test_boundary_is_left_continuous(self):
        m, a = line_0_1_5()
        assert mass_function(m, a, 0.5) == 0

    def test_domain_errors(self):
        m, a = line_0_1_5()
        with pytest.raises(ValidationError):
            mass_function(m, a, 0.0)
        with pytest.raises(ValidationError):
            mass_function(m, a, 2.5)


class TestRoundLine:
    def test_integral_fixed_point(self):
        m = build_line_metric([0.0, 3.0, 8.0])
        a = Configuration([0, 2]).to_fractional(3)
        for r in np.linspace(0.0, 0.99, 12):
            assert round_line(m, a, RoundingOffset(float(r))) == Configuration([0, 2])

    def test_worked_offsets(self):
        m, a = line_0_1_5()
        assert round_line(m, a, RoundingOffset(0.25)) == Configuration([0, 2])
        assert round_line(m, a, RoundingOffset(0.75)) == Configuration([1, 2])

    def test_server_presence_for_unit_mass(self):
        m = build_line_metric([0.0, 2.0, 7.0])
        a = FractionalConfiguration({0: 0.4, 1: 1.2, 2: 0.4})
        for r in np.arange(0.0, 1.0, 0.1):
            assert 1 in round_line(m, a, RoundingOffset(float(r)))

    def test_server_presence_randomized(self):
        rng = np.random.default_rng(8)
        for _ in range(200):
            n = int(rng.integers(2, 6))
            k = int(rng.integers(1, 4))
            m = build_line_metric(np.sort(rng.uniform(0, 30, n)) + np.arange(n) * 1e-3)
            vec = rng.dirichlet(np.ones(n)) * (k - 1.0)
            lucky = int(rng.integers(0, n))
            vec[lucky] += 1.0  # one point carries a full server
            a = FractionalConfiguration(vec)
            for r in rng.uniform(0, 1, 4):
                cfg = round_line(m, a, RoundingOffset(float(r)))
                assert lucky in cfg
                assert cfg.k == k


class TestBreakpoints:
    def test_worked_breakpoint_set(self):
        m, a = line_0_1_5()
        assert offset_breakpoints([a], m) == [0.0, 0.5]

    def test_movement_average_equals_fractional(self):
        rng = np.random.default_rng(12)
        for _ in range(60):
            n = int(rng.integers(2, 6))
            k = int(rng.integers(1, 4))
            m = build_line_metric(np.sort(rng.uniform(0, 15, n)) + np.arange(n) * 1e-3)
            x = FractionalConfiguration(rng.dirichlet(np.ones(n)) * k)
            y = FractionalConfiguration(rng.dirichlet(np.ones(n)) * k)
            bps = offset_breakpoints([x, y], m)
            avg = average_over_offsets(
                bps,
                lambda r: config_distance(m, round_line(m, x, r, k), round_line(m, y, r, k)),
            )
            assert avg == pytest.approx(fractional_distance(m, x, y), abs=1e-7)

    def test_movement_average_on_circle(self):
        rng = np.random.default_rng(14)
        for _ in range(40):
            n = int(rng.integers(2, 6))
            k = int(rng.integers(1, 3))
            coords = np.sort(rng.uniform(0, 9.5, n))
            coords += np.arange(n) * 1e-3
            m = build_circle_metric(coords, 10.0)
            x = FractionalConfiguration(rng.dirichlet(np.ones(n)) * k)
            y = FractionalConfiguration(rng.dirichlet(np.ones(n)) * k)
            bps = offset_breakpoints([x, y], m)
            avg = average_over_offsets(
                bps,
                lambda r: config_distance(m, round_line(m, x, r, k), round_line(m, y, r, k)),
            )
            # averaged rounded movement never beats the optimal transport
            assert avg >= fractional_distance(m, x, y) - 1e-7


class TestPlanRounding:
    def test_constant_plan_never_moves(self):
        m, a = line_0_1_5()
        plan = FractionalPlan(configs=(a, a, a), flows=(), serves=())
        rounded = round_plan_line(plan, m, RoundingOffset(0.3))
        assert rounded.configs[0] == rounded.configs[1] == rounded.configs[2]

    def test_unit_masses_move_deterministically(self):
        m = build_line_metric([0.0, 4.0])
        plan = FractionalPlan(
            configs=(FractionalConfiguration({0: 1.0}), FractionalConfiguration({1: 1.0})),
            flows=(),
            serves=(),
        )
        for r in np.arange(0.0, 1.0, 0.17):
            rounded = round_plan_line(plan, m, RoundingOffset(float(r)))
            assert config_distance(m, rounded.configs[0], rounded.configs[1]) == 4.0


class TestDerandomize:
    def test_rounded_cost_never_exceeds_lp(self):
        rng = np.random.default_rng(19)
        for _ in range(10):
            n = int(rng.integers(2, 5))
            k = int(rng.integers(1, 3))
            t = int(rng.integers(1, 4))
            m = build_line_metric(np.sort(rng.uniform(0, 12, n)) + np.arange(n) * 1e-3)
            d = DistributionSequence(
                [{i: float(p) for i, p in enumerate(rng.dirichlet(np.ones(n)))} for _ in range(t)]
            )
            plan, lp_value = solve_nonadaptive(m, d, k)
            offset = derandomize_offset(m, plan, d)
            rounded = round_plan_line(plan, m, offset)
            assert expected_plan_cost(m, rounded, d) <= lp_value + 1e-7

    def test_uniform_two_point(self):
        m = build_line_metric([0.0, 1.0])
        d = DistributionSequence([{0: 0.5, 1: 0.5}])
        plan, lp_value = solve_nonadaptive(m, d, 1)
        offset = derandomize_offset(m, plan, d)
        rounded = round_plan_line(plan, m, offset)
        assert expected_plan_cost(m, rounded, d) <= lp_value + 1e-9


def test_offset_validation():
    with pytest.raises(ValidationError):
        RoundingOffset(1.0)
    with pytest.raises(ValidationError):
        RoundingOffset(-0.1)
