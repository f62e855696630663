"""Auction data model: value intervals, instances, canonical ordering, filtering, JSON I/O.

Instances are immutable after construction and safe to share across tasks.
Arithmetic is double precision by default; `AuctionInstance.to_rational` gives
an exact `fractions.Fraction` view for the verification harness.
"""

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from pathlib import Path
from typing import Any, Sequence

from .errors import EmptyInstance, ParseError, ValidationError

__all__ = [
    "ValueInterval",
    "AuctionInstance",
    "Database",
    "Permutation",
    "canonicalize",
    "filter_assumption1",
    "parse_instance",
    "parse_database",
    "load_instance",
    "load_database",
    "save_instance",
]

Number = float | int | Fraction


def _is_number(value: Any) -> bool:
    if isinstance(value, bool):
        return False
    return isinstance(value, (int, float, Fraction))


def _check_finite(value: Any, what: str) -> None:
    if not _is_number(value):
        raise ValidationError(f"{what} is not a number: {value!r}")
    if isinstance(value, float) and not math.isfinite(value):
        raise ValidationError(f"{what} is not finite: {value!r}")


@dataclass(frozen=True)
class ValueInterval:
    """Closed real interval that bounds every private data entry."""

    r_min: Number
    r_max: Number

    def __post_init__(self) -> None:
        _check_finite(self.r_min, "interval minimum")
        _check_finite(self.r_max, "interval maximum")
        if not self.r_min < self.r_max:
            raise ValidationError("degenerate interval: min must be strictly below max")

    def delta(self) -> Number:
        """Interval length."""
        return self.r_max - self.r_min

    def midpoint(self) -> Number:
        return (self.r_min + self.r_max) / 2

    def contains(self, value: Number) -> bool:
        return self.r_min <= value <= self.r_max

    def to_json(self) -> dict:
        return {"min": _json_number(self.r_min), "max": _json_number(self.r_max)}


@dataclass(frozen=True)
class Permutation:
    """Records the reordering applied when an instance is canonicalized.

    ``to_original[j]`` is the original position of the individual that sits at
    position ``j`` after sorting.
    """

    to_original: tuple[int, ...]

    def __post_init__(self) -> None:
        n = len(self.to_original)
        if sorted(self.to_original) != list(range(n)):
            raise ValidationError("permutation is not a bijection on [n]")

    @classmethod
    def identity(cls, n: int) -> "Permutation":
        return cls(tuple(range(n)))

    @property
    def n(self) -> int:
        return len(self.to_original)

    @cached_property
    def to_sorted(self) -> tuple[int, ...]:
        """Inverse map: original position -> sorted position."""
        out = [0] * self.n
        for j, orig in enumerate(self.to_original):
            out[orig] = j
        return tuple(out)

    @property
    def is_identity(self) -> bool:
        return all(j == orig for j, orig in enumerate(self.to_original))

    def apply(self, values: Sequence) -> tuple:
        """Reorder a sequence given in original order into sorted order."""
        if len(values) != self.n:
            raise ValidationError("sequence length does not match permutation size")
        return tuple(values[orig] for orig in self.to_original)

    def restore(self, values: Sequence) -> tuple:
        """Map a sequence given in sorted order back to original order."""
        if len(values) != self.n:
            raise ValidationError("sequence length does not match permutation size")
        out = [None] * self.n
        for j, orig in enumerate(self.to_original):
            out[orig] = values[j]
        return tuple(out)


@dataclass(frozen=True)
class AuctionInstance:
    """Complete auction input: weights, unit costs, budget, and data interval.

    Weights must be nonzero (zero-weight entries contribute nothing to the
    predictor and are dropped upstream). The budget must be nonnegative; file
    ingestion additionally requires it to be strictly positive, while a zero
    budget remains constructible for benchmark limit cases.
    """

    weights: tuple
    unit_costs: tuple
    budget: Number
    interval: ValueInterval

    def __post_init__(self) -> None:
        object.__setattr__(self, "weights", tuple(self.weights))
        object.__setattr__(self, "unit_costs", tuple(self.unit_costs))
        n = len(self.weights)
        if n < 1:
            raise EmptyInstance("instance has no individuals")
        if len(self.unit_costs) != n:
            raise ValidationError(
                f"length mismatch: {n} weights vs {len(self.unit_costs)} unit costs"
            )
        for i, w in enumerate(self.weights):
            _check_finite(w, f"weight at index {i}")
            if w == 0:
                raise ValidationError(f"weight zero at index {i}")
        for i, v in enumerate(self.unit_costs):
            _check_finite(v, f"unit cost at index {i}")
            if v < 0:
                raise ValidationError(f"negative unit cost at index {i}")
        _check_finite(self.budget, "budget")
        if self.budget < 0:
            raise ValidationError("negative budget")
        if not isinstance(self.interval, ValueInterval):
            raise ValidationError("interval must be a ValueInterval")

    @property
    def n(self) -> int:
        return len(self.weights)

    @cached_property
    def abs_weights(self) -> tuple:
        return tuple(abs(w) for w in self.weights)

    @cached_property
    def total_weight(self) -> Number:
        return sum(self.abs_weights)

    def weight_of(self, indices) -> Number:
        """Total absolute weight of an index subset."""
        wabs = self.abs_weights
        return sum(wabs[i] for i in indices)

    @property
    def is_canonical(self) -> bool:
        v = self.unit_costs
        return all(v[i] <= v[i + 1] for i in range(self.n - 1))

    @property
    def has_uniform_weights(self) -> bool:
        first = self.abs_weights[0]
        return all(w == first for w in self.abs_weights)

    def with_unit_costs(self, unit_costs: Sequence) -> "AuctionInstance":
        """Same instance with a replaced cost vector (misreport plumbing)."""
        return AuctionInstance(self.weights, tuple(unit_costs), self.budget, self.interval)

    def subset(self, indices: Sequence[int]) -> "AuctionInstance":
        """Instance restricted to the given individuals, order preserved."""
        idx = list(indices)
        return AuctionInstance(
            tuple(self.weights[i] for i in idx),
            tuple(self.unit_costs[i] for i in idx),
            self.budget,
            self.interval,
        )

    def to_rational(self) -> "AuctionInstance":
        """Exact view: every numeric field converted to `Fraction`."""
        return AuctionInstance(
            tuple(Fraction(w) for w in self.weights),
            tuple(Fraction(v) for v in self.unit_costs),
            Fraction(self.budget),
            ValueInterval(Fraction(self.interval.r_min), Fraction(self.interval.r_max)),
        )

    def to_float(self) -> "AuctionInstance":
        return AuctionInstance(
            tuple(float(w) for w in self.weights),
            tuple(float(v) for v in self.unit_costs),
            float(self.budget),
            ValueInterval(float(self.interval.r_min), float(self.interval.r_max)),
        )

    def to_json(self) -> dict:
        return {
            "weights": [_json_number(w) for w in self.weights],
            "unit_costs": [_json_number(v) for v in self.unit_costs],
            "budget": _json_number(self.budget),
            "interval": self.interval.to_json(),
        }


@dataclass(frozen=True)
class Database:
    """Private data entries, one per individual, each inside the interval."""

    entries: tuple

    def __post_init__(self) -> None:
        object.__setattr__(self, "entries", tuple(self.entries))

    @classmethod
    def from_values(cls, values: Sequence, interval: ValueInterval) -> "Database":
        for i, d in enumerate(values):
            _check_finite(d, f"database entry at index {i}")
            if not interval.contains(d):
                raise ValidationError(f"database entry at index {i} lies outside the interval")
        return cls(tuple(values))

    @property
    def n(self) -> int:
        return len(self.entries)

    def subset(self, indices: Sequence[int]) -> "Database":
        return Database(tuple(self.entries[i] for i in indices))


def canonicalize(instance: AuctionInstance) -> tuple[AuctionInstance, Permutation]:
    """Sort individuals by non-decreasing unit cost, ties by original index.

    Returns the sorted instance and the permutation mapping sorted positions
    back to original ones. Idempotent: a canonical instance maps to itself
    under the identity permutation.
    """
    order = sorted(range(instance.n), key=lambda i: (instance.unit_costs[i], i))
    perm = Permutation(tuple(order))
    if perm.is_identity:
        return instance, perm
    sorted_instance = AuctionInstance(
        perm.apply(instance.weights),
        perm.apply(instance.unit_costs),
        instance.budget,
        instance.interval,
    )
    return sorted_instance, perm


def filter_assumption1(
    instance: AuctionInstance, mode: str = "fixed_point"
) -> tuple[AuctionInstance, list[int]]:
    """Remove individuals whose tight payment can never fit the budget.

    An individual is removable when ``|w_i| * v_i > B * (W' - |w_i|)`` over the
    current survivor total ``W'``, or when it is the sole survivor (the noise
    scale would vanish and its privacy loss would be unbounded). ``fixed_point``
    re-evaluates after each simultaneous removal round until stable, so every
    survivor is payable against the survivor total; ``static`` evaluates once
    against the original total.

    Raises EmptyInstance when nobody survives. The removal set is independent
    of the input order within a round.
    """
    if mode not in ("fixed_point", "static"):
        raise ValidationError(f"unknown filter mode: {mode!r}")
    budget = instance.budget
    wabs = instance.abs_weights
    costs = instance.unit_costs
    alive = list(range(instance.n))
    removed: list[int] = []
    while alive:
        total = sum(wabs[i] for i in alive)
        violators = [
            i
            for i in alive
            if total - wabs[i] <= 0 or wabs[i] * costs[i] > budget * (total - wabs[i])
        ]
        if not violators:
            break
        removed.extend(violators)
        gone = set(violators)
        alive = [i for i in alive if i not in gone]
        if mode == "static":
            break
    if not alive:
        raise EmptyInstance("every individual violates the affordability condition")
    removed.sort()
    return instance.subset(alive), removed


# --- JSON I/O -------------------------------------------------------------

def _json_number(value: Number) -> float | int:
    if isinstance(value, Fraction):
        return float(value)
    return value


def _require(data: dict, key: str, kind: str) -> Any:
    if key not in data:
        raise ParseError(f"missing field {key!r}")
    return data[key]


def _number_list(raw: Any, field: str) -> tuple:
    if not isinstance(raw, list):
        raise ParseError(f"field {field!r} must be a list of numbers")
    for i, x in enumerate(raw):
        if not _is_number(x):
            raise ParseError(f"field {field!r} has a non-numeric entry at index {i}")
    return tuple(float(x) for x in raw)


def parse_instance(data: dict) -> AuctionInstance:
    """Build an instance from a decoded JSON object, validating the schema.

    Unknown keys are ignored so that enriched outputs (for example the
    ``weights`` command's instance emission) stay loadable.
    """
    if not isinstance(data, dict):
        raise ParseError("instance document must be a JSON object")
    weights = _number_list(_require(data, "weights", "list"), "weights")
    unit_costs = _number_list(_require(data, "unit_costs", "list"), "unit_costs")
    raw_budget = _require(data, "budget", "number")
    if not _is_number(raw_budget):
        raise ParseError("field 'budget' must be a number")
    if float(raw_budget) <= 0:
        raise ValidationError("budget must be positive")
    raw_interval = _require(data, "interval", "object")
    if not isinstance(raw_interval, dict):
        raise ParseError("field 'interval' must be an object with 'min' and 'max'")
    lo = _require(raw_interval, "min", "number")
    hi = _require(raw_interval, "max", "number")
    if not (_is_number(lo) and _is_number(hi)):
        raise ParseError("interval bounds must be numbers")
    interval = ValueInterval(float(lo), float(hi))
    return AuctionInstance(weights, unit_costs, float(raw_budget), interval)


def parse_database(data: dict, instance: AuctionInstance) -> Database | None:
    """Extract the optional database block; None when absent."""
    raw = data.get("database")
    if raw is None:
        return None
    entries = _number_list(raw, "database")
    if len(entries) != instance.n:
        raise ValidationError(
            f"database length {len(entries)} does not match instance size {instance.n}"
        )
    return Database.from_values(entries, instance.interval)


def _load_json(source) -> dict:
    if isinstance(source, (str, Path)):
        try:
            text = Path(source).read_text()
        except OSError as exc:
            raise ParseError(f"cannot read {source}: {exc}") from exc
    else:
        text = source.read()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc


def load_instance(source) -> AuctionInstance:
    """Load an instance from a path or file object."""
    return parse_instance(_load_json(source))


def load_database(source, instance: AuctionInstance) -> Database | None:
    return parse_database(_load_json(source), instance)


def save_instance(instance: AuctionInstance, target, database: Database | None = None) -> None:
    """Write instance JSON; exact round trip for finite double values."""
    data = instance.to_json()
    if database is not None:
        data["database"] = [_json_number(d) for d in database.entries]
    text = json.dumps(data, sort_keys=True, indent=2) + "\n"
    if isinstance(target, (str, Path)):
        Path(target).write_text(text)
    else:
        target.write(text)
