"""Centralized rough set operators and the QuickReduct greedy search.

Everything here works on immutable :class:`DecisionTable` values and returns
fresh objects, so the functions are safe to call from several threads.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import total_ordering
from typing import Callable, Iterable, Sequence


class InvalidAttributeError(ValueError):
    """An attribute index or name does not exist in the table."""


class TableError(ValueError):
    """A decision table violates its structural invariants."""


class EvaluationError(RuntimeError):
    """A subset evaluator failed during QuickReduct."""

    def __init__(self, round_no: int, subset: "AttributeSet", cause: BaseException):
        self.round_no = round_no
        self.subset = subset
        super().__init__(f"evaluation of {list(subset)} failed in round {round_no}: {cause}")


@dataclass(frozen=True)
class DecisionTable:
    """Categorical decision table.

    ``codes[i][a]`` is the interned id of object ``i`` on attribute ``a``;
    ``symbols[a][code]`` recovers the original string. ``decision[i]`` indexes
    into ``classes``.
    """

    object_ids: tuple[str, ...]
    attributes: tuple[str, ...]
    codes: tuple[tuple[int, ...], ...]
    symbols: tuple[tuple[str, ...], ...]
    decision: tuple[int, ...]
    classes: tuple[str, ...]
    decision_name: str = "class"

    def __post_init__(self):
        n, m = len(self.object_ids), len(self.attributes)
        if len(set(self.object_ids)) != n:
            raise TableError("object ids are not unique")
        if len(set(self.attributes)) != m:
            raise TableError("attribute names are not unique")
        if m == 0:
            raise TableError("table needs at least one conditional attribute")
        if len(self.codes) != n or len(self.decision) != n:
            raise TableError("row count does not match object ids")
        if len(self.symbols) != m:
            raise TableError("symbol tables do not match attributes")
        for i, row in enumerate(self.codes):
            if len(row) != m:
                raise TableError(f"row {i} has {len(row)} cells, expected {m}")
            for a, c in enumerate(row):
                if not 0 <= c < len(self.symbols[a]):
                    raise TableError(f"row {i} attribute {a}: code {c} out of range")
        for i, d in enumerate(self.decision):
            if not 0 <= d < len(self.classes):
                raise TableError(f"row {i}: decision code {d} out of range")

    @classmethod
    def from_rows(
        cls,
        attributes: Sequence[str],
        rows: Sequence[Sequence[str]],
        decision: Sequence[str],
        object_ids: Sequence[str] | None = None,
        decision_name: str = "class",
    ) -> "DecisionTable":
        """Build a table from string cells, interning values per attribute.

        Symbols are ordered by first appearance so that identical inputs
        always produce identical codes.
        """
        if object_ids is None:
            object_ids = [f"x{i + 1}" for i in range(len(rows))]
        m = len(attributes)
        tables: list[dict[str, int]] = [{} for _ in range(m)]
        codes = []
        for i, row in enumerate(rows):
            if len(row) != m:
                raise TableError(f"row {i} has {len(row)} cells, expected {m}")
            codes.append(tuple(tables[a].setdefault(str(v), len(tables[a])) for a, v in enumerate(row)))
        class_table: dict[str, int] = {}
        dec = tuple(class_table.setdefault(str(d), len(class_table)) for d in decision)
        return cls(
            object_ids=tuple(str(o) for o in object_ids),
            attributes=tuple(attributes),
            codes=tuple(codes),
            symbols=tuple(tuple(t) for t in tables),
            decision=dec,
            classes=tuple(class_table),
            decision_name=decision_name,
        )

    @property
    def size(self) -> int:
        return len(self.object_ids)

    @property
    def universe(self) -> frozenset[str]:
        return frozenset(self.object_ids)

    def value(self, row: int, attribute: int) -> str:
        return self.symbols[attribute][self.codes[row][attribute]]

    def class_of(self, row: int) -> str:
        return self.classes[self.decision[row]]

    def row_index(self) -> dict[str, int]:
        return {o: i for i, o in enumerate(self.object_ids)}

    def attribute_index(self, name_or_index: str | int) -> int:
        if isinstance(name_or_index, int):
            if not 0 <= name_or_index < len(self.attributes):
                raise InvalidAttributeError(f"attribute index {name_or_index} out of range")
            return name_or_index
        try:
            return self.attributes.index(name_or_index)
        except ValueError:
            raise InvalidAttributeError(f"unknown attribute {name_or_index!r}") from None

    def select_rows(self, rows: Sequence[int]) -> "DecisionTable":
        """Fragment holding ``rows``; symbol tables are shared with the parent."""
        return DecisionTable(
            object_ids=tuple(self.object_ids[i] for i in rows),
            attributes=self.attributes,
            codes=tuple(self.codes[i] for i in rows),
            symbols=self.symbols,
            decision=tuple(self.decision[i] for i in rows),
            classes=self.classes,
            decision_name=self.decision_name,
        )

    def select_attributes(self, attributes: Sequence[int]) -> "DecisionTable":
        return DecisionTable(
            object_ids=self.object_ids,
            attributes=tuple(self.attributes[a] for a in attributes),
            codes=tuple(tuple(row[a] for a in attributes) for row in self.codes),
            symbols=tuple(self.symbols[a] for a in attributes),
            decision=self.decision,
            classes=self.classes,
            decision_name=self.decision_name,
        )

    def rows_as_strings(self) -> list[list[str]]:
        return [[self.value(i, a) for a in range(len(self.attributes))] for i in range(self.size)]


@dataclass(frozen=True)
class AttributeSet:
    """Strictly increasing tuple of conditional-attribute indices."""

    indices: tuple[int, ...] = ()

    def __post_init__(self):
        idx = tuple(self.indices)
        if any(i < 0 for i in idx) or any(a >= b for a, b in zip(idx, idx[1:])):
            raise InvalidAttributeError(f"attribute indices must be strictly increasing and >= 0: {idx}")
        object.__setattr__(self, "indices", idx)

    @classmethod
    def of(cls, indices: Iterable[int] = ()) -> "AttributeSet":
        return cls(tuple(sorted(set(indices))))

    def __iter__(self):
        return iter(self.indices)

    def __len__(self):
        return len(self.indices)

    def __contains__(self, item):
        return item in self.indices

    def __or__(self, other: "AttributeSet | Iterable[int]") -> "AttributeSet":
        return AttributeSet.of((*self.indices, *other))

    def add(self, index: int) -> "AttributeSet":
        return AttributeSet.of((*self.indices, index))

    def issubset(self, other: "AttributeSet") -> bool:
        return set(self.indices) <= set(other.indices)

    def validate(self, table: DecisionTable) -> "AttributeSet":
        m = len(table.attributes)
        for i in self.indices:
            if i >= m:
                raise InvalidAttributeError(f"attribute index {i} out of range for {m} attributes")
        return self

    def names(self, table: DecisionTable) -> list[str]:
        return [table.attributes[i] for i in self.indices]


@total_ordering
@dataclass(frozen=True, eq=False)
class DependencyDegree:
    """Exact ratio ``numerator / denominator``, kept unreduced.

    Equality and ordering cross-multiply so ``2/4 == 1/2``.
    """

    numerator: int
    denominator: int

    def __post_init__(self):
        if self.denominator <= 0:
            raise ValueError("denominator must be positive")
        if not 0 <= self.numerator <= self.denominator:
            raise ValueError(f"numerator {self.numerator} outside [0, {self.denominator}]")

    def __eq__(self, other):
        if not isinstance(other, DependencyDegree):
            return NotImplemented
        return self.numerator * other.denominator == other.numerator * self.denominator

    def __lt__(self, other):
        if not isinstance(other, DependencyDegree):
            return NotImplemented
        return self.numerator * other.denominator < other.numerator * self.denominator

    def __hash__(self):
        return hash(self.as_fraction())

    def as_fraction(self) -> Fraction:
        return Fraction(self.numerator, self.denominator)

    def __str__(self):
        f = self.as_fraction()
        return f"{f.numerator}/{f.denominator}"

    def __repr__(self):
        return f"DependencyDegree({self.numerator}/{self.denominator})"


@dataclass(frozen=True)
class EquivalenceClasses:
    blocks: tuple[frozenset[str], ...]
    block_of: dict[str, int] = field(compare=False)
    purity: tuple[bool, ...]

    def pure_objects(self) -> frozenset[str]:
        return frozenset().union(*(b for b, pure in zip(self.blocks, self.purity) if pure))

    def impure_blocks(self) -> list[frozenset[str]]:
        return [b for b, pure in zip(self.blocks, self.purity) if not pure]


def group_rows(table: DecisionTable, p: AttributeSet) -> dict[tuple, list[int]]:
    """Row indices keyed by their value tuple on ``p``, in first-seen order."""
    groups: dict[tuple, list[int]] = {}
    for i, row in enumerate(table.codes):
        groups.setdefault(tuple(row[a] for a in p), []).append(i)
    return groups


def partition_by(table: DecisionTable, p: AttributeSet) -> EquivalenceClasses:
    p.validate(table)
    blocks, purity, block_of = [], [], {}
    for rows in group_rows(table, p).values():
        members = frozenset(table.object_ids[i] for i in rows)
        for o in members:
            block_of[o] = len(blocks)
        blocks.append(members)
        purity.append(len({table.decision[i] for i in rows}) == 1)
    return EquivalenceClasses(tuple(blocks), block_of, tuple(purity))


def decision_classes(table: DecisionTable) -> list[frozenset[str]]:
    by_class: dict[int, set[str]] = {}
    for o, d in zip(table.object_ids, table.decision):
        by_class.setdefault(d, set()).add(o)
    return [frozenset(v) for v in by_class.values()]


def lower_approximation(table: DecisionTable, p: AttributeSet, x: Iterable[str]) -> frozenset[str]:
    x = frozenset(x)
    return frozenset().union(*(b for b in partition_by(table, p).blocks if b <= x))


def upper_approximation(table: DecisionTable, p: AttributeSet, x: Iterable[str]) -> frozenset[str]:
    x = frozenset(x)
    return frozenset().union(*(b for b in partition_by(table, p).blocks if b & x))


def positive_region(table: DecisionTable, p: AttributeSet) -> frozenset[str]:
    return partition_by(table, p).pure_objects()


def negative_region(table: DecisionTable, p: AttributeSet) -> frozenset[str]:
    covered = frozenset().union(*(upper_approximation(table, p, x) for x in decision_classes(table)))
    return table.universe - covered


def boundary_region(table: DecisionTable, p: AttributeSet) -> frozenset[str]:
    classes = decision_classes(table)
    upper = frozenset().union(*(upper_approximation(table, p, x) for x in classes))
    lower = frozenset().union(*(lower_approximation(table, p, x) for x in classes))
    return upper - lower


def dependency_degree(table: DecisionTable, p: AttributeSet) -> DependencyDegree:
    return DependencyDegree(len(positive_region(table, p)), table.size)


Evaluator = Callable[[AttributeSet], DependencyDegree]


@dataclass
class ReductResult:
    """Outcome of QuickReduct.

    ``gamma_trace`` holds one ``(attribute, gamma)`` pair per selected
    attribute. ``rounds`` keeps every candidate evaluated in each round, and
    ``evaluated`` maps every subset the evaluator was asked about to its
    answer (including the empty set used for the uniform-decision check).
    """

    reduct: AttributeSet
    gamma_trace: list[tuple[int, DependencyDegree]]
    evaluations: int
    rounds: list[list[tuple[int, DependencyDegree]]] = field(default_factory=list)
    evaluated: dict[AttributeSet, DependencyDegree] = field(default_factory=dict)
    note: str | None = None

    @property
    def gamma(self) -> DependencyDegree | None:
        return self.gamma_trace[-1][1] if self.gamma_trace else None

    def same_selection(self, other: "ReductResult") -> bool:
        return (
            self.reduct == other.reduct
            and [a for a, _ in self.gamma_trace] == [a for a, _ in other.gamma_trace]
            and all(g == h for (_, g), (_, h) in zip(self.gamma_trace, other.gamma_trace))
        )


UNIFORM_DECISION = "uniform decision"
NO_IMPROVEMENT = "no attribute increases dependency"


def quick_reduct(table: DecisionTable, evaluator: Evaluator | None = None) -> ReductResult:
    """Greedy forward selection by dependency degree.

    Each round every unselected attribute ``x`` is scored by
    ``evaluator(R | {x})``; the first strictly best candidate wins, so ties go
    to the lowest attribute index. The search stops once no candidate beats
    the current degree. If the evaluator has an ``on_select`` attribute it is
    called with the new reduct after every selection.

    The empty set is evaluated first: a degree of 1 means the decision is
    uniform and the empty reduct is returned.
    """
    if evaluator is None:
        evaluator = lambda p: dependency_degree(table, p)  # noqa: E731
    on_select = getattr(evaluator, "on_select", None)
    m = len(table.attributes)
    evaluated: dict[AttributeSet, DependencyDegree] = {}

    def evaluate(p: AttributeSet, round_no: int) -> DependencyDegree:
        try:
            g = evaluator(p)
        except EvaluationError:
            raise
        except Exception as exc:
            raise EvaluationError(round_no, p, exc) from exc
        evaluated[p] = g
        return g

    reduct = AttributeSet()
    current = evaluate(reduct, 0)
    result = ReductResult(reduct, [], 1, evaluated=evaluated)
    if current.numerator == current.denominator:
        result.note = UNIFORM_DECISION
        return result

    round_no = 0
    while len(reduct) < m:
        round_no += 1
        best_attr, best = None, current
        scored = []
        for x in range(m):
            if x in reduct:
                continue
            g = evaluate(reduct.add(x), round_no)
            result.evaluations += 1
            scored.append((x, g))
            if g > best:
                best_attr, best = x, g
        result.rounds.append(scored)
        if best_attr is None:
            break
        reduct = reduct.add(best_attr)
        current = best
        result.gamma_trace.append((best_attr, best))
        if on_select is not None:
            on_select(reduct)
    result.reduct = reduct
    if not reduct:
        result.note = NO_IMPROVEMENT
    return result


def walk_table() -> DecisionTable:
    """The seven-patient Age/LEMS/Walk example table."""
    rows = [
        ("16-30", "50", "Yes"),
        ("16-30", "0", "No"),
        ("31-45", "1-25", "No"),
        ("31-45", "1-25", "Yes"),
        ("46-60", "26-49", "No"),
        ("16-30", "26-49", "Yes"),
        ("46-60", "26-49", "No"),
    ]
    return DecisionTable.from_rows(
        ["Age", "LEMS"], [r[:2] for r in rows], [r[2] for r in rows], decision_name="Walk"
    )

