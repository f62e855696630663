import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from privauction import (
    DegenerateAllOnes,
    EmptyInstance,
    InstanceTooLarge,
    NotCanonical,
    brute_force_opt,
    canonicalize,
    fair_inner_product,
    filter_assumption1,
    fractional_optimum,
    kkt_certificate,
    opt_bounds_check,
)
from privauction.verify import hardness_instance

from conftest import UNIT, make_instance


def prepared(weights, costs, budget):
    inst = make_instance(weights, costs, budget)
    filtered, _ = filter_assumption1(inst)
    canonical, _ = canonicalize(filtered)
    return canonical


def reference_feasible(inst, x):
    """Independent feasibility oracle: tight payments within budget."""
    spent = sum(
        inst.unit_costs[i] * inst.abs_weights[i] for i in range(inst.n) if x[i]
    )
    residual = sum(inst.abs_weights[i] for i in range(inst.n) if not x[i])
    return spent <= inst.budget * residual


class TestFractionalOptimum:
    def test_worked_example(self):
        inst = make_instance([1, 1, 1, 1], [1, 2, 2, 2], 1.5)
        sol = fractional_optimum(inst)
        # crossover scan by hand: q - B p = -6, -3.5, 0, 3.5, 7
        assert sol.ell == 2
        assert sol.x_star == (1, 1, 0.0, 0)
        assert sol.objective == 2.0
        assert sol.payments == (0.5, 1.0, 0.0, 0.0)
        assert sum(sol.payments) == pytest.approx(inst.budget)

    def test_zero_budget_buys_nothing(self):
        inst = make_instance([1, 1], [1, 2], 0)
        sol = fractional_optimum(inst)
        assert sol.ell == 0
        assert sol.x_star[0] == 0.0
        assert sol.objective == 0.0

    def test_zero_budget_free_individuals(self):
        inst = make_instance([1, 1, 1], [0, 0, 1], 0)
        sol = fractional_optimum(inst)
        assert sol.ell == 2
        assert sol.objective == 2.0
        assert sum(sol.payments) == 0.0

    def test_monotone_in_budget(self):
        inst_base = make_instance([2, 1, 3, 1], [0.5, 1, 1.5, 2], 1)
        previous = -1.0
        for budget in np.linspace(0.0, 20.0, 40):
            sol = fractional_optimum(
                make_instance([2, 1, 3, 1], [0.5, 1, 1.5, 2], float(budget))
            )
            assert sol.objective >= previous - 1e-12
            previous = sol.objective
        assert previous <= inst_base.total_weight

    def test_budget_identity_tight(self):
        rng = np.random.default_rng(4)
        for _ in range(200):
            n = int(rng.integers(2, 12))
            inst = make_instance(
                rng.lognormal(0, 1, n) * rng.choice([-1.0, 1.0], n),
                np.sort(rng.uniform(0.01, 2, n)),
                float(rng.uniform(0.1, 5)),
            )
            sol = fractional_optimum(inst)
            spent = sum(
                inst.unit_costs[i] * inst.abs_weights[i] * sol.x_star[i]
                for i in range(n)
            )
            reserved = inst.budget * sum(
                inst.abs_weights[i] * (1 - sol.x_star[i]) for i in range(n)
            )
            assert spent == pytest.approx(reserved, rel=1e-9, abs=1e-12)
            assert all(0 <= x <= 1 for x in sol.x_star)

    def test_requires_canonical(self):
        with pytest.raises(NotCanonical):
            fractional_optimum(make_instance([1, 1], [2, 1], 1))

    def test_all_zero_costs_degenerate(self):
        with pytest.raises(DegenerateAllOnes):
            fractional_optimum(make_instance([1, 1], [0, 0], 1))

    def test_exact_arithmetic(self):
        inst = make_instance([1, 1, 1, 1], [1, 2, 2, 2], 1.5).to_rational()
        sol = fractional_optimum(inst)
        assert sol.ell == 2
        assert sum(sol.payments) == inst.budget  # exact equality


class TestKktCertificate:
    def test_worked_example(self):
        inst = make_instance([1, 1, 1, 1], [1, 2, 2, 2], 1.5)
        sol = fractional_optimum(inst)
        cert = kkt_certificate(inst, sol)
        assert cert.lagrange_budget == pytest.approx(1 / 3.5)
        assert cert.satisfied(1e-9)

    @given(seed=st.integers(0, 50_000))
    @settings(max_examples=150, deadline=None)
    def test_random_instances(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 12))
        inst = make_instance(
            rng.lognormal(0, 1, n) * rng.choice([-1.0, 1.0], n),
            np.sort(rng.uniform(0.01, 2, n)),
            float(rng.uniform(0.05, 5)),
        )
        sol = fractional_optimum(inst)
        cert = kkt_certificate(inst, sol)
        assert cert.lagrange_budget >= 0
        assert all(m >= 0 for m in cert.upper_multipliers)
        assert all(m >= 0 for m in cert.lower_multipliers)
        assert cert.satisfied(1e-9)


class TestBruteForceOpt:
    def test_hardness_value(self, hardness):
        sol = brute_force_opt(hardness)
        assert sol.objective == 2.0
        assert sum(sol.x) == 2
        assert sol.x[0] == 1  # cheapest individual always selected

    def test_zero_budget(self):
        inst = make_instance([1, 2], [1, 1], 0)
        sol = brute_force_opt(inst)
        assert sol.objective == 0.0
        assert sol.x == (0, 0)

    def test_matches_fractional_when_integral(self):
        inst = make_instance([1, 1, 1, 1], [1, 2, 2, 2], 1.5)
        oracle = brute_force_opt(inst)
        fractional = fractional_optimum(inst)
        assert oracle.objective == fractional.objective == 2.0

    def test_all_zero_costs_full_participation(self):
        inst = make_instance([1, 2], [0, 0], 1)
        sol = brute_force_opt(inst)
        assert sol.x == (1, 1)
        assert sol.objective == 3.0
        assert sol.payments == (0.0, 0.0)

    def test_lexicographic_ties(self, hardness):
        # optima {0,1}, {0,2}, {0,3} tie; (1,0,0,1) is lexicographically least
        sol = brute_force_opt(hardness)
        assert sol.x == (1, 0, 0, 1)

    def test_size_limit(self):
        inst = make_instance([1] * 21, [1] * 21, 1)
        with pytest.raises(InstanceTooLarge):
            brute_force_opt(inst)

    def test_feasibility_of_returned_solution(self):
        rng = np.random.default_rng(21)
        for _ in range(100):
            n = int(rng.integers(2, 10))
            inst = make_instance(
                rng.lognormal(0, 1, n) * rng.choice([-1.0, 1.0], n),
                np.sort(rng.uniform(0, 2, n)),
                float(rng.uniform(0.1, 4)),
            )
            sol = brute_force_opt(inst)
            assert reference_feasible(inst, sol.x)
            assert sum(sol.payments) <= inst.budget * (1 + 1e-9)

    def test_matches_pure_python_enumeration(self):
        rng = np.random.default_rng(22)
        for _ in range(50):
            n = int(rng.integers(2, 8))
            inst = make_instance(
                rng.lognormal(0, 1, n) * rng.choice([-1.0, 1.0], n),
                np.sort(rng.uniform(0, 2, n)),
                float(rng.uniform(0.1, 4)),
            )
            sol = brute_force_opt(inst)
            best = 0.0
            for x in itertools.product((0, 1), repeat=n):
                if all(x) or not reference_feasible(inst, x):
                    continue
                best = max(best, sum(inst.abs_weights[i] for i in range(n) if x[i]))
            assert sol.objective == pytest.approx(best, rel=1e-12)

    def test_exact_rational_path(self):
        inst = make_instance([1, 1, 1, 1], [1, 2, 2, 2], 1.5).to_rational()
        sol = brute_force_opt(inst)
        assert sol.objective == Fraction(2)
        assert sol.x == (1, 0, 0, 1)


class TestOptBoundsCheck:
    def test_hardness_composition(self, hardness):
        report = opt_bounds_check(hardness)
        assert report.opt == 2.0
        assert report.mechanism_objective == 1.0
        assert report.ratio == 2.0
        assert report.uniform_weights
        assert report.ok, report.checks

    def test_prefix_bound_and_crossover(self, hardness):
        report = opt_bounds_check(hardness)
        assert report.ell >= report.k
        assert report.checks["prefix_weight_bound"]

    @given(seed=st.integers(0, 100_000))
    @settings(max_examples=250, deadline=None)
    def test_random_sweep_no_violations(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 12))
        weights = rng.lognormal(0, 1, n) * rng.choice([-1.0, 1.0], n)
        costs = rng.uniform(0, 2, n)
        inst = make_instance(weights, costs, float(rng.uniform(0.2, 6)))
        try:
            filtered, _ = filter_assumption1(inst)
        except EmptyInstance:
            return
        if filtered.n < 2:
            return
        canonical, _ = canonicalize(filtered)
        report = opt_bounds_check(canonical)
        assert report.ok, (canonical, report.to_json())
        assert report.ratio <= 5 * (1 + 1e-9)

    def test_uniform_two_approximation(self):
        rng = np.random.default_rng(33)
        for _ in range(150):
            n = int(rng.integers(2, 10))
            mag = float(rng.lognormal(0, 1))
            inst = make_instance(
                [mag] * n, rng.uniform(0, 2, n), float(rng.uniform(0.3, 4))
            )
            try:
                filtered, _ = filter_assumption1(inst)
            except EmptyInstance:
                continue
            if filtered.n < 2:
                continue
            canonical, _ = canonicalize(filtered)
            report = opt_bounds_check(canonical)
            assert report.checks["ratio_le_2_uniform"], report.to_json()

    def test_degenerate_zero_costs(self):
        inst = prepared([1, 2, 3], [0, 0, 0], 1)
        report = opt_bounds_check(inst)
        assert report.degenerate_zero_costs
        assert report.ok, report.checks
