import numpy as np
import pytest
from hypothesis import given, strategies as st

from miningeq.errors import DomainError
from miningeq.market import ENDOGENOUS, EXOGENOUS, Economy, SpendingMatrix, solve_equilibrium
from miningeq.oracles import (
    bregman_gap,
    kl_divergence,
    md_rate_check,
    random_economy,
    random_interior,
    scaled_kl,
    shmyrev_gradient,
    shmyrev_objective,
)


def refine(rng, d, parts=3):
    """Split every entry of ``d`` into ``parts`` positive pieces."""
    w = rng.uniform(0.05, 1.0, (d.size, parts))
    return (d[:, None] * w / w.sum(axis=1, keepdims=True)).ravel()


class TestKL:
    def test_identity_and_sign(self, rng):
        b = rng.uniform(0.1, 2, 5)
        assert kl_divergence(b, b) == 0.0
        for _ in range(100):
            assert kl_divergence(rng.uniform(0, 2, 5), b) >= -1e-15

    def test_zero_entries_allowed_in_argument(self):
        assert kl_divergence([0.0, 1.0], [1.0, 1.0]) == pytest.approx(1.0)

    def test_domain(self):
        with pytest.raises(DomainError):
            kl_divergence([1.0], [0.0])
        with pytest.raises(DomainError):
            kl_divergence([1.0, 2.0], [1.0])

    @given(st.integers(0, 2**31))
    def test_refinement(self, seed):
        r = np.random.default_rng(seed)
        d = r.uniform(0.01, 3, 4)
        d2 = r.uniform(0.0, 3, 4)
        assert kl_divergence(d2, d) <= kl_divergence(refine(r, d2), refine(r, d)) + 1e-12


class TestObjective:
    def test_symmetric_point_is_lower(self):
        e = Economy([1.0, 1.0], [[1.0, 1.0]], [1.0], [0.5])
        mid = SpendingMatrix(np.array([[0.5, 0.5]]), e.capacities)
        off = SpendingMatrix(np.array([[0.6, 0.4]]), e.capacities)
        assert shmyrev_objective(e, mid) < shmyrev_objective(e, off)

    def test_domain_errors_name_term(self):
        e = Economy([1.0, 1.0], [[1.0, 1.0]], [1.0], [0.5])
        with pytest.raises(DomainError, match=r"b\[0,1\]"):
            shmyrev_objective(e, SpendingMatrix(np.array([[0.5, 0.0]]), e.capacities))

    @pytest.mark.parametrize("mode", [ENDOGENOUS, EXOGENOUS])
    def test_gradient_matches_finite_differences(self, rng, mode):
        for _ in range(10):
            e = random_economy(rng, 3, 3)
            e = Economy(e.revenues, e.unit_costs, e.capacities, e.rho, network_totals=rng.uniform(1, 3, 3))
            z = random_interior(rng, e)
            g = shmyrev_gradient(e, z, mode).reduced
            h = 1e-6
            for i in range(3):
                for k in range(3):
                    up, dn = z.b.copy(), z.b.copy()
                    up[i, k] += h
                    dn[i, k] -= h
                    fd = (
                        shmyrev_objective(e, SpendingMatrix(up, e.capacities), mode)
                        - shmyrev_objective(e, SpendingMatrix(dn, e.capacities), mode)
                    ) / (2 * h)
                    assert fd == pytest.approx(g[i, k], rel=1e-5, abs=1e-7)

    def test_descent_along_trajectory(self, rng):
        for _ in range(10):
            e = random_economy(rng, 3, 4)
            _, cert = solve_equilibrium(e)
            assert np.max(np.diff(cert.trace)) <= 1e-10


class TestBregman:
    @pytest.mark.parametrize("mode", [ENDOGENOUS, EXOGENOUS])
    def test_sandwich(self, rng, mode):
        for _ in range(200):
            e = random_economy(rng, int(rng.integers(1, 5)), int(rng.integers(1, 5)), rho=[0.3, 0.5, 0.75, 1.0])
            e = Economy(e.revenues, e.unit_costs, e.capacities, e.rho, network_totals=rng.uniform(1, 3, e.m))
            z0, z1 = random_interior(rng, e), random_interior(rng, e)
            gap = bregman_gap(e, z1, z0, mode)
            assert -1e-10 <= gap <= scaled_kl(e, z1, z0) + 1e-10

    def test_zero_at_same_point(self, rng):
        e = random_economy(rng, 2, 2)
        z = random_interior(rng, e)
        assert bregman_gap(e, z, z) == pytest.approx(0.0, abs=1e-12)


class TestRate:
    def test_examples(self, rng):
        e = random_economy(rng, 3, 3)
        b0 = SpendingMatrix.uniform(e)
        ref, _ = solve_equilibrium(e)
        r10 = md_rate_check(e, b0, 10, reference=ref)
        r20 = md_rate_check(e, b0, 20, reference=ref)
        assert r10.holds and r20.holds
        assert r20.bound == pytest.approx(r10.bound / 2, rel=1e-12)
        assert r20.gap <= r10.gap + 1e-12

    def test_start_at_optimum(self, rng):
        e = random_economy(rng, 2, 3)
        ref, _ = solve_equilibrium(e)
        r = md_rate_check(e, ref, 10, reference=ref)
        assert abs(r.gap) < 1e-9 and r.holds

    def test_default_reference(self, rng):
        e = random_economy(rng, 2, 2)
        assert md_rate_check(e, SpendingMatrix.uniform(e), 5).holds

    def test_bad_T(self, rng):
        e = random_economy(rng, 2, 2)
        with pytest.raises(DomainError):
            md_rate_check(e, SpendingMatrix.uniform(e), 0)
