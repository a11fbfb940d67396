"""CSV ingestion and horizontal/vertical partitioning of decision tables."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation
from enum import Enum
from typing import IO, Sequence

from .rough import AttributeSet, DecisionTable, InvalidAttributeError, TableError


class IngestionError(ValueError):
    pass


class PartitionError(ValueError):
    pass


class Mode(str, Enum):
    HORIZONTAL = "horizontal"
    VERTICAL = "vertical"


def _as_decimal(text: str) -> Decimal | None:
    try:
        d = Decimal(text.strip())
    except InvalidOperation:
        return None
    return d if d.is_finite() else None


def is_continuous(values: Sequence[str]) -> bool:
    """All cells numeric and at least one with a fractional part."""
    nums = [_as_decimal(v) for v in values]
    return bool(nums) and all(n is not None for n in nums) and any(n != n.to_integral_value() for n in nums)


def equal_width_bins(values: Sequence[str], bins: int) -> list[str]:
    nums = [float(v) for v in values]
    lo, hi = min(nums), max(nums)
    width = (hi - lo) / bins if hi > lo else 1.0
    out = []
    for x in nums:
        k = min(int((x - lo) / width), bins - 1)
        out.append(f"bin{k}")
    return out


def read_rows(source: IO[str] | IO[bytes] | str) -> tuple[list[str], list[list[str]]]:
    if isinstance(source, str):
        text = source
    else:
        data = source.read()
        text = data.decode("utf-8-sig") if isinstance(data, bytes) else data
    rows = [r for r in csv.reader(io.StringIO(text)) if r]
    if not rows:
        raise IngestionError("empty file")
    header, body = [h.strip() for h in rows[0]], rows[1:]
    if len(set(header)) != len(header):
        dup = sorted({h for h in header if header.count(h) > 1})
        raise IngestionError(f"duplicate header(s): {', '.join(dup)}")
    for n, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise IngestionError(f"row {n}: expected {len(header)} fields, got {len(row)}")
        for col, cell in zip(header, row):
            if cell.strip() == "":
                raise IngestionError(f"row {n}: empty cell in column {col!r}")
    if not body:
        raise IngestionError("no data rows")
    return header, [[c.strip() for c in r] for r in body]


def resolve_column(header: Sequence[str], selector: str | int | None) -> int:
    if selector is None:
        return len(header) - 1
    if isinstance(selector, int) or (isinstance(selector, str) and selector.lstrip("-").isdigit() and selector not in header):
        idx = int(selector)
        if not -len(header) <= idx < len(header):
            raise IngestionError(f"class column index {idx} out of range")
        return idx % len(header)
    if selector not in header:
        raise IngestionError(f"class column {selector!r} not found")
    return header.index(selector)


def load_csv(
    source,
    class_column: str | int | None = None,
    bins: int | None = None,
    allow_continuous: bool = False,
    id_column: str | None = None,
) -> DecisionTable:
    """Read a CSV with a header row into a :class:`DecisionTable`.

    The class column defaults to the last one. Columns that look continuous
    (numeric with fractional values) are rejected unless ``bins`` is given,
    in which case they are cut into that many equal-width bins, or
    ``allow_continuous`` is set.
    """
    header, body = read_rows(source)
    ci = resolve_column(header, class_column)
    ids = None
    skip = {ci}
    if id_column is not None:
        if id_column not in header:
            raise IngestionError(f"id column {id_column!r} not found")
        ii = header.index(id_column)
        skip.add(ii)
        ids = [r[ii] for r in body]
    cols = [j for j in range(len(header)) if j not in skip]
    if not cols:
        raise IngestionError("no conditional attributes besides the class column")
    columns = {j: [r[j] for r in body] for j in cols}
    for j in cols:
        if is_continuous(columns[j]):
            if bins:
                columns[j] = equal_width_bins(columns[j], bins)
            elif not allow_continuous:
                raise IngestionError(f"column {header[j]!r} is continuous; discretize it or pass a bin count")
    rows = [[columns[j][i] for j in cols] for i in range(len(body))]
    try:
        return DecisionTable.from_rows(
            [header[j] for j in cols], rows, [r[ci] for r in body], object_ids=ids, decision_name=header[ci]
        )
    except TableError as exc:
        raise IngestionError(str(exc)) from exc


def table_to_csv(table: DecisionTable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([*table.attributes, table.decision_name])
    for i in range(table.size):
        w.writerow([*(table.value(i, a) for a in range(len(table.attributes))), table.class_of(i)])
    return buf.getvalue()


@dataclass(frozen=True)
class PartyView:
    """One party's fragment.

    ``attribute_map`` gives, for each local column, its index in the global
    schema. ``global_universe_size`` is only known up front in vertical mode.
    """

    party: int
    local_table: DecisionTable
    attribute_map: tuple[int, ...]
    global_universe_size: int | None = None

    def local_subset(self, p: AttributeSet) -> AttributeSet:
        """Translate global indices ``p`` (all held here) into local ones."""
        where = {g: i for i, g in enumerate(self.attribute_map)}
        try:
            return AttributeSet.of(where[g] for g in p)
        except KeyError as exc:
            raise PartitionError(f"party {self.party} does not hold attribute {exc.args[0]}") from None


@dataclass(frozen=True)
class Partition:
    mode: Mode
    assignments: tuple[tuple, ...]
    attributes: tuple[str, ...]
    classes: tuple[str, ...]

    @property
    def party_count(self) -> int:
        return len(self.assignments)

    def owner_of(self, attribute: int) -> int:
        if self.mode is not Mode.VERTICAL:
            raise PartitionError("attribute ownership only applies to vertical partitions")
        for party, group in enumerate(self.assignments):
            if attribute in group:
                return party
        raise InvalidAttributeError(f"attribute {attribute} is not assigned")

    def describe(self) -> dict:
        if self.mode is Mode.HORIZONTAL:
            parts = [{"party": i, "objects": len(a)} for i, a in enumerate(self.assignments)]
        else:
            parts = [{"party": i, "attributes": [self.attributes[g] for g in a]} for i, a in enumerate(self.assignments)]
        return {"mode": self.mode.value, "parties": parts}


def split_horizontal(table: DecisionTable, cut_points: Sequence[int]) -> tuple[Partition, list[PartyView]]:
    """Contiguous row ranges of the given sizes, one per party."""
    sizes = list(cut_points)
    if len(sizes) < 2:
        raise PartitionError("party_count must be >= 2")
    if any(s < 0 for s in sizes) or sum(sizes) != table.size:
        raise PartitionError(f"row counts {sizes} must be non-negative and sum to {table.size}")
    start, groups = 0, []
    for s in sizes:
        groups.append(list(range(start, start + s)))
        start += s
    return assign_rows(table, groups)


def assign_rows(table: DecisionTable, groups: Sequence[Sequence[int]]) -> tuple[Partition, list[PartyView]]:
    """Arbitrary disjoint row assignment; each group keeps its given order."""
    if len(groups) < 2:
        raise PartitionError("party_count must be >= 2")
    flat = [i for g in groups for i in g]
    if sorted(flat) != list(range(table.size)):
        raise PartitionError("row groups must be disjoint and cover every object")
    identity = tuple(range(len(table.attributes)))
    views = [PartyView(p, table.select_rows(g), identity) for p, g in enumerate(groups)]
    partition = Partition(
        Mode.HORIZONTAL,
        tuple(tuple(table.object_ids[i] for i in g) for g in groups),
        table.attributes,
        table.classes,
    )
    return partition, views


def split_vertical(table: DecisionTable, attribute_groups: Sequence[AttributeSet | Sequence[int]]) -> tuple[Partition, list[PartyView]]:
    """Disjoint attribute groups covering every conditional attribute.

    Every fragment keeps all objects in the original order and a copy of the
    decision column.
    """
    groups = [tuple(g) for g in attribute_groups]
    if len(groups) < 2:
        raise PartitionError("party_count must be >= 2")
    flat = [a for g in groups for a in g]
    if len(flat) != len(set(flat)):
        raise PartitionError("attribute groups overlap: disjointness violated")
    if sorted(flat) != list(range(len(table.attributes))):
        raise PartitionError("attribute groups must cover every conditional attribute exactly once")
    views = [
        PartyView(p, _vertical_fragment(table, g), tuple(g), table.size) for p, g in enumerate(groups)
    ]
    return Partition(Mode.VERTICAL, tuple(groups), table.attributes, table.classes), views


def _vertical_fragment(table: DecisionTable, group: Sequence[int]) -> DecisionTable:
    if group:
        return table.select_attributes(group)
    # A party without conditional attributes still holds objects and decision.
    return DecisionTable(
        table.object_ids, ("__none__",), tuple((0,) for _ in table.object_ids), (("",),),
        table.decision, table.classes, table.decision_name,
    )


def merge(partition: Partition, views: Sequence[PartyView]) -> DecisionTable:
    """Reassemble the global table from fragments."""
    if partition.mode is Mode.HORIZONTAL:
        rows, dec, ids = [], [], []
        for v in sorted(views, key=lambda v: v.party):
            t = v.local_table
            rows += t.rows_as_strings()
            dec += [t.class_of(i) for i in range(t.size)]
            ids += list(t.object_ids)
        first = views[0].local_table
        return DecisionTable.from_rows(first.attributes, rows, dec, ids, first.decision_name)
    ref = views[0].local_table
    columns: dict[int, list[str]] = {}
    for v in views:
        t = v.local_table
        if t.object_ids != ref.object_ids:
            raise PartitionError("vertical fragments disagree on object order")
        for local, g in enumerate(v.attribute_map):
            columns[g] = [t.value(i, local) for i in range(t.size)]
    m = len(partition.attributes)
    rows = [[columns[g][i] for g in range(m)] for i in range(ref.size)]
    dec = [ref.class_of(i) for i in range(ref.size)]
    return DecisionTable.from_rows(partition.attributes, rows, dec, ref.object_ids, ref.decision_name)


def parse_cuts(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise PartitionError(f"bad --cuts value {text!r}") from None


def even_cuts(n: int, parties: int) -> list[int]:
    base, extra = divmod(n, parties)
    return [base + (1 if i < extra else 0) for i in range(parties)]


def parse_groups(table: DecisionTable, text: str) -> list[AttributeSet]:
    """``"a1,a2|a3"`` -> one attribute set per party; names or indices."""
    groups = []
    for chunk in text.split("|"):
        names = [x.strip() for x in chunk.split(",") if x.strip()]
        idx = []
        for name in names:
            if name in table.attributes:
                idx.append(table.attributes.index(name))
            elif name.isdigit():
                idx.append(table.attribute_index(int(name)))
            else:
                raise PartitionError(f"unknown attribute {name!r} in --groups")
        groups.append(AttributeSet.of(idx))
    return groups


def even_groups(m: int, parties: int) -> list[AttributeSet]:
    out, start = [], 0
    for size in even_cuts(m, parties):
        out.append(AttributeSet(tuple(range(start, start + size))))
        start += size
    return out


def load_assignment(path: str) -> list[list[int]]:
    """Row assignment file: a JSON list of row-index lists, one per party."""
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, list) or not all(isinstance(g, list) for g in data):
        raise PartitionError("assignment file must hold a list of row-index lists")
    return [[int(i) for i in g] for g in data]
