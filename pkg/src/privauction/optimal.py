"""Benchmarks for the auction: continuous closed-form optimum and integer oracle.

The continuous benchmark fills the cheapest individuals completely, one
individual fractionally, and nothing beyond, with the crossover chosen so the
tight individually-rational payments exhaust the budget exactly. The integer
oracle enumerates every binary participation vector (desk scale only) and is
the ground truth the mechanism's approximation guarantees are measured
against.
"""

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property

import numpy as np

from .errors import DegenerateAllOnes, InstanceTooLarge, NotCanonical
from .instances import AuctionInstance
from .mechanism import MechanismOutcome, fair_inner_product

__all__ = [
    "FractionalSolution",
    "KktCertificate",
    "OracleSolution",
    "OptBoundsReport",
    "fractional_optimum",
    "kkt_certificate",
    "brute_force_opt",
    "opt_bounds_check",
    "ORACLE_LIMIT",
]

ORACLE_LIMIT = 20


def _require_canonical(instance: AuctionInstance) -> None:
    v = instance.unit_costs
    for i in range(instance.n - 1):
        if v[i] > v[i + 1]:
            raise NotCanonical("unit costs must be sorted; canonicalize the instance first")


@dataclass(frozen=True)
class FractionalSolution:
    """Continuous relaxation optimum: full prefix, one fractional, tight budget."""

    x_star: tuple
    payments: tuple
    ell: int
    objective: float

    @property
    def n(self) -> int:
        return len(self.x_star)

    def to_json(self) -> dict:
        return {
            "x_star": [float(x) for x in self.x_star],
            "payments": [float(p) for p in self.payments],
            "ell": self.ell,
            "objective": float(self.objective),
        }


def fractional_optimum(instance: AuctionInstance) -> FractionalSolution:
    """Closed-form optimum of the continuous participation relaxation.

    With ``p(t)`` the weight beyond position ``t`` and ``q(t)`` the
    cost-weight of the first ``t`` positions, the crossover ``ell`` is the last
    ``t`` where ``q(t) - B p(t) <= 0``; the fractional coordinate solves the
    tight-budget identity exactly. The solution never clamps: the crossover
    choice itself keeps the fraction inside [0, 1], which is asserted.
    """
    _require_canonical(instance)
    n = instance.n
    wabs = instance.abs_weights
    costs = instance.unit_costs
    budget = instance.budget
    zero = wabs[0] * 0

    beyond = [zero] * (n + 1)  # p(t): weight strictly after position t
    for t in range(n - 1, -1, -1):
        beyond[t] = beyond[t + 1] + wabs[t]
    cost_weight = [zero] * (n + 1)  # q(t): sum of v_i |w_i| up to position t
    for t in range(1, n + 1):
        cost_weight[t] = cost_weight[t - 1] + costs[t - 1] * wabs[t - 1]

    ell = 0
    for t in range(n + 1):
        if cost_weight[t] - budget * beyond[t] <= 0:
            ell = t
    if ell == n:
        raise DegenerateAllOnes(
            "relaxation admits full participation (every cost-weight term is zero)"
        )

    numerator = budget * beyond[ell] - cost_weight[ell]
    denominator = (costs[ell] + budget) * wabs[ell]
    frac = numerator / denominator
    assert -1e-12 <= frac <= 1 + 1e-12, "fractional coordinate escaped [0, 1]"

    x = [1] * ell + [frac] + [0] * (n - ell - 1)
    residual = beyond[ell + 1] + wabs[ell] * (1 - frac)
    if residual == 0:
        raise DegenerateAllOnes("residual weight vanished at the crossover")
    payments = tuple(costs[i] * wabs[i] * x[i] / residual for i in range(n))
    objective = sum(wabs[i] * x[i] for i in range(n))
    return FractionalSolution(tuple(x), payments, ell, objective)


@dataclass(frozen=True)
class KktCertificate:
    """Multipliers recomputed from the crossover; a checkable optimality proof.

    ``stationarity`` holds the per-coordinate Lagrangian gradients (zero at an
    optimum), ``budget_gap`` the tight-budget slack, both scaled by the
    instance's natural magnitudes so tolerances are dimensionless.
    """

    lagrange_budget: float
    upper_multipliers: tuple
    lower_multipliers: tuple
    stationarity: tuple
    budget_gap: float
    complementary_slackness: tuple

    @cached_property
    def max_violation(self) -> float:
        worst = 0.0
        if self.lagrange_budget < 0:
            worst = max(worst, -float(self.lagrange_budget))
        for m in self.upper_multipliers + self.lower_multipliers:
            if m < 0:
                worst = max(worst, -float(m))
        for g in self.stationarity:
            worst = max(worst, abs(float(g)))
        worst = max(worst, abs(float(self.budget_gap)))
        for c in self.complementary_slackness:
            worst = max(worst, abs(float(c)))
        return worst

    def satisfied(self, tol: float = 1e-9) -> bool:
        return self.max_violation <= tol


def kkt_certificate(instance: AuctionInstance, solution: FractionalSolution) -> KktCertificate:
    """Rebuild the optimality multipliers for a fractional solution and score them."""
    n = instance.n
    wabs = instance.abs_weights
    costs = instance.unit_costs
    budget = instance.budget
    ell = solution.ell
    x = solution.x_star

    lam = 1 / (costs[ell] + budget)
    upper = tuple(
        (costs[ell] - costs[i]) * wabs[i] * lam if i < ell else wabs[i] * 0 for i in range(n)
    )
    lower = tuple(
        (costs[i] - costs[ell]) * wabs[i] * lam if i > ell else wabs[i] * 0 for i in range(n)
    )
    scale = max(1.0, max(float(w) for w in wabs))
    stationarity = tuple(
        (-wabs[i] + lam * (costs[i] + budget) * wabs[i] + upper[i] - lower[i]) / scale
        for i in range(n)
    )
    spent = sum(costs[i] * wabs[i] * x[i] for i in range(n))
    reserved = budget * sum(wabs[i] * (1 - x[i]) for i in range(n))
    budget_scale = max(1.0, abs(float(spent)), abs(float(reserved)))
    budget_gap = (spent - reserved) / budget_scale
    slackness = tuple(
        v
        for i in range(n)
        for v in ((upper[i] * (x[i] - 1)) / scale, (lower[i] * x[i]) / scale)
    )
    return KktCertificate(lam, upper, lower, stationarity, budget_gap, slackness)


@dataclass(frozen=True)
class OracleSolution:
    """Exact integer optimum with tight individually-rational payments."""

    x: tuple[int, ...]
    objective: float
    payments: tuple

    def to_json(self) -> dict:
        return {
            "x": list(self.x),
            "objective": float(self.objective),
            "payments": [float(p) for p in self.payments],
        }


_BITS_CACHE: dict[int, np.ndarray] = {}
_BITS_CACHE_LIMIT = 14  # larger matrices are built transiently, not pinned


def _bit_matrix(n: int) -> np.ndarray:
    """All binary vectors of length n; row order equals lexicographic x order."""
    cached = _BITS_CACHE.get(n)
    if cached is None:
        masks = np.arange(1 << n, dtype=np.int64)
        cached = ((masks[:, None] >> (n - 1 - np.arange(n))) & 1).astype(np.float64)
        if n <= _BITS_CACHE_LIMIT:
            _BITS_CACHE[n] = cached
    return cached


def brute_force_opt(instance: AuctionInstance) -> OracleSolution:
    """Enumerate every participation vector and return the exact optimum.

    Feasibility uses tight payments: selected cost-weight must not exceed the
    budget times the residual weight. Full participation is excluded (its
    noise scale is zero), except in the all-costs-zero corner where it is free
    and optimal by inspection. Ties resolve to the lexicographically smallest
    vector.
    """
    n = instance.n
    if n > ORACLE_LIMIT:
        raise InstanceTooLarge(f"exhaustive oracle limited to n <= {ORACLE_LIMIT}")
    wabs = instance.abs_weights
    costs = instance.unit_costs
    budget = instance.budget

    if all(v == 0 for v in costs):
        return OracleSolution(
            (1,) * n, instance.total_weight, tuple(wabs[0] * 0 for _ in range(n))
        )

    if any(isinstance(v, Fraction) for v in (*wabs, *costs, budget)):
        return _brute_force_exact(instance)

    bits = _bit_matrix(n)
    w = np.asarray(wabs, dtype=np.float64)
    cw = np.asarray([costs[i] * wabs[i] for i in range(n)], dtype=np.float64)
    objective = bits @ w
    spent = bits @ cw
    residual = float(instance.total_weight) - objective
    feasible = spent <= float(budget) * residual
    feasible[-1] = False  # full participation
    best = objective[feasible].max()
    winners = feasible & (objective == best)
    m = int(np.argmax(winners))  # first winner = lexicographically smallest x
    x = tuple(int(b) for b in bits[m])
    resid = instance.total_weight - instance.weight_of(i for i in range(n) if x[i])
    payments = tuple(costs[i] * wabs[i] * x[i] / resid for i in range(n))
    return OracleSolution(x, float(best), payments)


def _brute_force_exact(instance: AuctionInstance) -> OracleSolution:
    """Pure-python enumeration preserving exact arithmetic (rational mode)."""
    n = instance.n
    wabs = instance.abs_weights
    costs = instance.unit_costs
    budget = instance.budget
    total = instance.total_weight
    best_obj = None
    best_x = None
    for mask in range(1 << n):
        if mask == (1 << n) - 1:
            continue
        x = [(mask >> (n - 1 - i)) & 1 for i in range(n)]
        obj = sum(wabs[i] for i in range(n) if x[i])
        spent = sum(costs[i] * wabs[i] for i in range(n) if x[i])
        if spent <= budget * (total - obj) and (best_obj is None or obj > best_obj):
            best_obj = obj
            best_x = tuple(x)
    resid = total - best_obj
    payments = tuple(costs[i] * wabs[i] * best_x[i] / resid for i in range(n))
    return OracleSolution(best_x, best_obj, payments)


@dataclass(frozen=True)
class OptBoundsReport:
    """Joint consistency report for oracle, relaxation, and mechanism."""

    opt: float
    fractional_objective: float
    mechanism_objective: float
    ratio: float
    uniform_weights: bool
    degenerate_zero_costs: bool
    ell: int
    k: int
    checks: dict[str, bool]

    @property
    def ok(self) -> bool:
        return all(self.checks.values())

    def to_json(self) -> dict:
        return {
            "opt": self.opt,
            "fractional_objective": self.fractional_objective,
            "mechanism_objective": self.mechanism_objective,
            "ratio": self.ratio,
            "uniform_weights": self.uniform_weights,
            "degenerate_zero_costs": self.degenerate_zero_costs,
            "ell": self.ell,
            "k": self.k,
            "checks": dict(self.checks),
        }


def opt_bounds_check(
    instance: AuctionInstance,
    outcome: MechanismOutcome | None = None,
    kkt_tol: float = 1e-9,
) -> OptBoundsReport:
    """Cross-check every benchmark relation on one canonical filtered instance.

    Asserted relations: the relaxation dominates the integer optimum, the
    mechanism is within a factor 5 (factor 2 under uniform weights), the
    relaxation crossover is at least the mechanism prefix, the prefix-plus-one
    weight strictly exceeds the relaxation mass past the prefix, and the
    recomputed multiplier certificate plus tight-budget identity hold.
    Violations are reported as failed checks, never raised.
    """
    _require_canonical(instance)
    if outcome is None:
        outcome = fair_inner_product(instance)
    oracle = brute_force_opt(instance)
    n = instance.n
    wabs = instance.abs_weights

    degenerate = all(v == 0 for v in instance.unit_costs)
    if degenerate:
        fractional_objective = float(instance.total_weight)
        ell = n
        kkt_ok = True
        budget_identity_ok = True
        tail_mass = 0.0
    else:
        fractional = fractional_optimum(instance)
        fractional_objective = float(fractional.objective)
        ell = fractional.ell
        cert = kkt_certificate(instance, fractional)
        kkt_ok = cert.satisfied(kkt_tol)
        spent = sum(
            instance.unit_costs[i] * wabs[i] * fractional.x_star[i] for i in range(n)
        )
        reserved = instance.budget * sum(
            wabs[i] * (1 - fractional.x_star[i]) for i in range(n)
        )
        budget_identity_ok = abs(float(spent) - float(reserved)) <= 1e-9 * max(
            1.0, abs(float(spent)), abs(float(reserved))
        )
        k = outcome.k
        tail_mass = float(
            sum(wabs[i] * fractional.x_star[i] for i in range(k, min(ell + 1, n)))
        )

    k = outcome.k
    opt = float(oracle.objective)
    mech = float(outcome.objective)
    ratio = opt / mech if mech > 0 else math.inf
    rel = 1 + 1e-9

    checks = {
        "fractional_dominates": opt <= fractional_objective * rel,
        "ratio_le_5": opt <= 5 * mech * rel,
        "ell_ge_k": ell >= k,
        "prefix_weight_bound": degenerate
        or float(sum(wabs[i] for i in range(min(k + 1, n)))) > tail_mass,
        "kkt_certificate": kkt_ok,
        "budget_identity": budget_identity_ok,
    }
    uniform = instance.has_uniform_weights
    if uniform:
        checks["ratio_le_2_uniform"] = opt <= 2 * mech * rel
    return OptBoundsReport(
        opt, fractional_objective, mech, ratio, uniform, degenerate, ell, k, checks
    )
