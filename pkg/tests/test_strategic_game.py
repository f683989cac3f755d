from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from miningeq.errors import (
    ConfigError,
    DegenerateDeviationError,
    DimensionError,
    DomainError,
    InfeasibleError,
)
from miningeq.strategic_game import (
    AllocationVector,
    DeviationGrid,
    MiningGame,
    breakeven_analysis,
    c_star,
    cost_variance_bound,
    expenditure_report,
    griefing_factor_closed,
    griefing_factor_direct,
    is_individually_griefable,
    nash_allocation,
    nash_allocation_exact,
    network_loss,
    non_griefable_allocation,
    utilities,
    utility,
)

G11 = MiningGame([1.0, 1.0])
G3 = MiningGame([1.0, 1.0, 1.5])


def payoff(c, v, x, i):
    # independent hand-written utility
    X = sum(x)
    return (v * x[i] / X if X else 0.0) - c[i] * x[i]


@st.composite
def feasible_costs(draw, min_n=2, max_n=8):
    n = draw(st.integers(min_n, max_n))
    c = draw(st.lists(st.floats(0.2, 2.0), min_size=n, max_size=n))
    c = np.array(c)
    # shrink the spread until every miner participates
    while np.any(c >= c.sum() / (n - 1)):
        c = 0.5 * (c + c.mean())
    return c


class TestBasics:
    def test_utility_examples(self):
        assert utility(G11, AllocationVector([0.25, 0.25]), 0) == pytest.approx(0.25, abs=1e-15)
        assert utility(G11, AllocationVector([0.0, 0.0]), 0) == 0.0
        assert utility(MiningGame([2.0, 1.0]), AllocationVector([0.0, 0.5]), 0) == 0.0

    def test_utility_matches_hand_expression(self, rng):
        for _ in range(20):
            c = rng.uniform(0.1, 2, 4)
            x = rng.uniform(0, 1, 4)
            g = MiningGame(c, 3.0)
            for i in range(4):
                assert utility(g, AllocationVector(x), i) == pytest.approx(payoff(c, 3.0, x, i), rel=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            utility(G11, AllocationVector([0.1, 0.1, 0.1]), 0)

    def test_game_validation(self):
        with pytest.raises(ValueError):
            MiningGame([1.0])
        with pytest.raises(ValueError):
            MiningGame([1.0, -1.0])
        with pytest.raises(ValueError):
            MiningGame([1.0, 1.0], reward=0.0)

    def test_c_star(self):
        assert c_star(G11) == 2.0
        assert c_star(G3) == 1.75
        assert c_star(MiningGame([0.7] * 5)) == pytest.approx(5 * 0.7 / 4)


class TestNash:
    def test_examples(self):
        np.testing.assert_allclose(nash_allocation(G11).x, [0.25, 0.25], atol=1e-15)
        np.testing.assert_allclose(nash_allocation(MiningGame([1, 1, 1])).x, [2 / 9] * 3, atol=1e-15)
        x = nash_allocation(G3)
        np.testing.assert_allclose(x.x, [0.244898, 0.244898, 0.081633], atol=1e-6)
        assert x.total == pytest.approx(0.571429, abs=1e-6)

    def test_homogeneous_formula(self):
        for n in range(2, 12):
            x = nash_allocation(MiningGame([0.8] * n))
            np.testing.assert_allclose(x.x, (n - 1) / (n**2 * 0.8), rtol=1e-13)

    def test_strict_names_violators(self):
        with pytest.raises(InfeasibleError) as exc:
            nash_allocation(MiningGame([1.0, 1.0, 3.0]))
        assert exc.value.violators == (2,)

    def test_auto_drop(self):
        x = nash_allocation(MiningGame([1.0, 1.0, 3.0]), "auto_drop")
        np.testing.assert_allclose(x.x, [0.25, 0.25, 0.0], atol=1e-15)
        with pytest.raises(ConfigError):
            nash_allocation(G11, "bogus")

    @given(feasible_costs())
    def test_first_order_conditions(self, c):
        g = MiningGame(c)
        x = nash_allocation(g).x
        h = 1e-6
        for i in range(g.n):
            up, dn = x.copy(), x.copy()
            up[i] += h
            dn[i] -= h
            grad = (payoff(c, 1.0, up, i) - payoff(c, 1.0, dn, i)) / (2 * h)
            assert abs(grad) < 1e-8

    @given(feasible_costs(), st.floats(0.1, 50.0))
    def test_scale_covariance(self, c, s):
        g = MiningGame(c)
        gs = g.with_reward(s)
        x, xs = nash_allocation(g), nash_allocation(gs)
        np.testing.assert_allclose(xs.x, s * x.x, rtol=1e-12, atol=1e-14 * xs.total)
        np.testing.assert_allclose(utilities(gs, xs), s * utilities(g, x), rtol=1e-9, atol=1e-15)
        d = 0.3 * x.x.min()
        assert griefing_factor_closed(gs, s * d) == pytest.approx(griefing_factor_closed(g, d), rel=1e-12)

    def test_best_response_fixed_point(self, rng):
        for _ in range(50):
            n = int(rng.integers(2, 9))
            c = rng.uniform(0.95, 1.05, n)
            g = MiningGame(c)
            x = nash_allocation(g).x
            others = x.sum() - x
            br = np.maximum(0, np.sqrt(others / c) - others)
            assert np.max(np.abs(br - x)) < 1e-9


class TestGriefing:
    def test_direct_examples(self):
        x = nash_allocation(G11)
        rep = griefing_factor_direct(G11, x, 0, x[0] + 0.1)
        assert rep.gf_total == pytest.approx(5.0, rel=1e-12)
        x3 = nash_allocation(G3)
        rep = griefing_factor_direct(G3, x3, 0, x3[0] + 0.2)
        assert rep.gf_total == pytest.approx(2 / (0.2 * 3.5), rel=1e-10)
        assert rep.gf_total == pytest.approx(2.857143, abs=1e-6)

    def test_zero_deviation_is_degenerate(self):
        x = nash_allocation(G11)
        with pytest.raises(DegenerateDeviationError):
            griefing_factor_direct(G11, x, 0, x[0])

    def test_negative_target_rejected(self):
        with pytest.raises(DomainError):
            griefing_factor_direct(G11, nash_allocation(G11), 0, -0.1)

    def test_closed_examples(self):
        assert griefing_factor_closed(G11, 0.25) == 2.0
        assert griefing_factor_closed(G11, 0.1) == 5.0
        assert griefing_factor_closed(G3, 0.2) == pytest.approx(2.857143, abs=1e-6)
        assert griefing_factor_closed(G11, 1 / c_star(G11)) == 1.0
        with pytest.raises(DomainError):
            griefing_factor_closed(G11, 0.0)

    @given(feasible_costs(), st.floats(1e-3, 5.0))
    def test_decomposition(self, c, frac):
        g = MiningGame(c)
        x = nash_allocation(g)
        rep = griefing_factor_direct(g, x, 0, x[0] + frac * x.total)
        assert rep.gf_total == pytest.approx(np.sum(rep.gf_individual), rel=1e-12)
        assert rep.individual(1) == rep.gf_individual[0]

    def test_griefability_examples(self):
        res = is_individually_griefable(G11, nash_allocation(G11))
        assert res.griefable and res.witness.gf > 1
        assert res.witness.new_x - 0.25 < 0.25
        assert not is_individually_griefable(G11, non_griefable_allocation(G11)).griefable

    def test_empty_grid(self):
        with pytest.raises(ConfigError):
            is_individually_griefable(G11, nash_allocation(G11), DeviationGrid(points=0))

    def test_scaled_allocation_two_miners_and_homogeneous(self, rng):
        games = [MiningGame(rng.uniform(0.5, 2.0, 2)) for _ in range(20)]
        games += [MiningGame([1.3] * n) for n in (3, 5, 9)]
        for g in games:
            assert not is_individually_griefable(g, non_griefable_allocation(g)).griefable

    @pytest.mark.parametrize("costs", [[1.0, 1.0, 1.5], [0.7, 1.1, 1.3, 0.9]])
    def test_scaled_allocation_small_deviation_limit(self, costs):
        # at y the pair factor tends to (sum c - (n-1) c_j) / c_i as delta -> 0,
        # which exceeds 1 for some pair once n >= 3 and costs differ
        g = MiningGame(costs)
        n, total = g.n, sum(costs)
        y = [v * Fraction(n, n - 1) for v in nash_allocation_exact(g)]
        worst = 0.0
        for i in range(n):
            rep = griefing_factor_direct(g, y, i, y[i] + Fraction(1e-7))
            limit = [(total - (n - 1) * costs[j]) / costs[i] for j in rep.victims]
            np.testing.assert_allclose(rep.gf_individual, limit, rtol=1e-5)
            worst = max(worst, max(limit))
        assert worst > 1.0
        assert is_individually_griefable(g, non_griefable_allocation(g)).griefable

    def test_exact_nash_matches_float(self, rng):
        for _ in range(20):
            g = MiningGame(rng.uniform(0.9, 1.1, int(rng.integers(2, 7))), reward=float(rng.uniform(0.5, 3)))
            exact = np.array([float(v) for v in nash_allocation_exact(g)])
            np.testing.assert_allclose(exact, nash_allocation(g).x, rtol=1e-12)

    def test_non_griefable_examples(self):
        np.testing.assert_allclose(non_griefable_allocation(G11).x, [0.5, 0.5], atol=1e-15)
        np.testing.assert_allclose(
            non_griefable_allocation(G3).x, [0.367347, 0.367347, 0.122449], atol=1e-6
        )
        big = MiningGame([1.0] * 200)
        ratio = non_griefable_allocation(big).x / nash_allocation(big).x
        assert ratio[0] == pytest.approx(200 / 199)


class TestDeviationAndExpenditure:
    def test_breakeven_examples(self):
        lim = breakeven_analysis(G11, 0)
        assert lim.breakeven_delta == pytest.approx(0.5)
        assert lim.max_network_loss == pytest.approx(0.25)
        assert breakeven_analysis(G3, 2).breakeven_delta == pytest.approx(1 / 1.5 - 1 / 1.75, abs=1e-12)
        assert breakeven_analysis(G3, 2).breakeven_delta == pytest.approx(0.095238, abs=1e-6)

    def test_breakeven_zeroes_utility(self):
        x = nash_allocation(G3)
        for i in range(3):
            d = breakeven_analysis(G3, i).breakeven_delta
            assert utility(G3, x.replace(i, x[i] + d), i) == pytest.approx(0.0, abs=1e-12)

    def test_marginal_miner_cannot_grieve(self):
        g = MiningGame([1.0, 1.0, 1.999])
        assert breakeven_analysis(g, 2).breakeven_delta < 1e-3

    def test_network_loss_matches_direct_and_increases(self):
        x = nash_allocation(G3)
        for i in range(3):
            top = breakeven_analysis(G3, i).breakeven_delta
            grid = np.linspace(top / 50, top, 50)
            losses = [network_loss(G3, i, d) for d in grid]
            assert np.all(np.diff(losses) > 0)
            rep = griefing_factor_direct(G3, x, i, x[i] + grid[10])
            assert losses[10] == pytest.approx(np.sum(rep.victim_losses), rel=1e-10)

    def test_expenditure_examples(self):
        r = expenditure_report(G11)
        assert r.e_nongriefable == pytest.approx(1.0) and r.e_nash == pytest.approx(0.5)
        assert r.homogeneous
        r3 = expenditure_report(G3)
        assert r3.e_nongriefable == pytest.approx(0.918367, abs=1e-6)
        y = non_griefable_allocation(G3).x
        assert r3.e_nongriefable == pytest.approx(float(np.dot(G3.costs, y)), rel=1e-12)
        for n in (2, 5, 9):
            assert expenditure_report(MiningGame([2.0] * n)).ratio == pytest.approx((n - 1) / n)

    def test_variance_examples(self):
        vb = cost_variance_bound(G11)
        assert vb.variance == 0 and vb.bound == pytest.approx(1.0) and vb.satisfied
        vb = cost_variance_bound(MiningGame([0.1, 0.1, 0.15]))
        assert vb.variance == pytest.approx(0.000833, abs=1e-6)
        assert vb.bound == pytest.approx(0.2025)
        assert vb.satisfied

    def test_variance_bound_random(self, rng):
        done = 0
        while done < 1000:
            n = int(rng.integers(2, 10))
            c = rng.uniform(0.01, 0.99, n)
            if np.any(c >= c.sum() / (n - 1)):
                continue
            assert cost_variance_bound(MiningGame(c)).satisfied
            done += 1
