"""Set-semantics relations: values, schemas, relations, databases and deltas.

Values are plain Python objects: ``None`` (null), ``int`` or ``str``. Every
container here is immutable after construction and validates its invariants
eagerly, so downstream code never has to re-check key uniqueness, arity or
typing. Iteration order everywhere is the total value ordering
null < int < str, which makes all reporting deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Optional, Sequence

from .errors import (
    AmbiguousAttribute,
    KeyViolation,
    MalformedDelta,
    MissingDeleteTarget,
    NullabilityViolation,
    SchemaMismatch,
    TypeMismatch,
    UnknownAttribute,
    UnknownTable,
)

Value = Optional[object]  # None | int | str
Row = tuple  # tuple of Value

INT = "int"
TEXT = "text"
# Internal type of an all-null constant column whose real type is decided
# by the first union partner or declared schema it meets. Never read from
# or written to schema files.
UNKNOWN = "unknown"


def value_type(v: Value) -> str:
    if v is None:
        return UNKNOWN
    if isinstance(v, bool):
        raise TypeMismatch(f"boolean value {v!r} is not a relation value")
    if isinstance(v, int):
        return INT
    if isinstance(v, str):
        return TEXT
    raise TypeMismatch(f"unsupported value {v!r}")


def value_sort_key(v: Value) -> tuple:
    """Total order: null < any int < any text."""
    if v is None:
        return (0, 0)
    if isinstance(v, int):
        return (1, v)
    return (2, v)


def row_sort_key(row: Row) -> tuple:
    return tuple(value_sort_key(v) for v in row)


def values_compare(a: Value, op: str, b: Value) -> bool:
    """Comparison predicate semantics: null satisfies nothing (not even =)."""
    if a is None or b is None:
        return False
    if isinstance(a, int) != isinstance(b, int):
        raise TypeMismatch(f"cannot compare {a!r} with {b!r}")
    if op == "=":
        return a == b
    if op == "<":
        return a < b
    if op == "<=":
        return a <= b
    if op == ">":
        return a > b
    if op == ">=":
        return a >= b
    raise ValueError(f"unknown comparison operator {op!r}")


@dataclass(frozen=True)
class Column:
    name: str
    type: str = TEXT
    nullable: bool = False

    def __post_init__(self):
        if self.type not in (INT, TEXT, UNKNOWN):
            raise SchemaMismatch(f"unknown column type {self.type!r}")
        if self.type == UNKNOWN and not self.nullable:
            raise SchemaMismatch("untyped columns must be nullable")


@dataclass(frozen=True)
class Schema:
    """A named table shape: ordered columns plus a nonempty key.

    Key columns must be non-nullable, except in the degenerate case where the
    key spans every attribute: that key states no constraint beyond row
    identity, which is what widened operator results fall back to.
    """

    name: str
    columns: tuple[Column, ...]
    key: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "columns", tuple(self.columns))
        object.__setattr__(self, "key", tuple(self.key))
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise SchemaMismatch(f"duplicate attributes in {self.name}: {names}")
        if not self.key:
            raise SchemaMismatch(f"table {self.name} has an empty key")
        degenerate = set(self.key) == set(names)
        for k in self.key:
            if k not in names:
                raise SchemaMismatch(f"key attribute {k!r} not in {self.name}")
            if self.column(k).nullable and not degenerate:
                raise SchemaMismatch(f"key attribute {k!r} of {self.name} is nullable")

    @property
    def attrs(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.columns)

    def has(self, attr: str) -> bool:
        return any(c.name == attr for c in self.columns)

    def index(self, attr: str) -> int:
        for i, c in enumerate(self.columns):
            if c.name == attr:
                return i
        raise UnknownAttribute(f"attribute {attr!r} not in {self.name}({', '.join(self.attrs)})")

    def column(self, attr: str) -> Column:
        return self.columns[self.index(attr)]

    def key_indexes(self) -> tuple[int, ...]:
        return tuple(self.index(k) for k in self.key)

    def check_row(self, row: Row) -> None:
        if len(row) != len(self.columns):
            raise SchemaMismatch(
                f"row arity {len(row)} does not match {self.name}({len(self.columns)})"
            )
        for v, col in zip(row, self.columns):
            if v is None:
                if not col.nullable:
                    raise NullabilityViolation(f"null in non-nullable {self.name}.{col.name}")
                continue
            vt = value_type(v)
            if col.type != UNKNOWN and vt != col.type:
                raise TypeMismatch(f"{self.name}.{col.name} expects {col.type}, got {v!r}")


@dataclass(frozen=True)
class Relation:
    """A schema plus a key-unique set of rows."""

    schema: Schema
    rows: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "rows", frozenset(tuple(r) for r in self.rows))
        key_idx = self.schema.key_indexes()
        seen: dict[tuple, Row] = {}
        for row in self.rows:
            self.schema.check_row(row)
            k = tuple(row[i] for i in key_idx)
            other = seen.get(k)
            if other is not None and other != row:
                raise KeyViolation(
                    f"rows {other!r} and {row!r} of {self.schema.name} share key {k!r}"
                )
            seen[k] = row

    def sorted_rows(self) -> list[Row]:
        return sorted(self.rows, key=row_sort_key)

    def key_of(self, row: Row) -> tuple:
        return tuple(row[i] for i in self.schema.key_indexes())

    def by_key(self) -> dict[tuple, Row]:
        idx = self.schema.key_indexes()
        return {tuple(r[i] for i in idx): r for r in self.rows}

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self) -> Iterator[Row]:
        return iter(self.sorted_rows())


@dataclass(frozen=True)
class Database:
    """Immutable name -> Relation map; the map key always equals the schema name."""

    tables: Mapping[str, Relation]

    def __post_init__(self):
        object.__setattr__(self, "tables", dict(self.tables))
        for name, rel in self.tables.items():
            if rel.schema.name != name:
                raise SchemaMismatch(f"table {name!r} holds schema {rel.schema.name!r}")

    def __getitem__(self, name: str) -> Relation:
        try:
            return self.tables[name]
        except KeyError:
            raise UnknownTable(f"no table named {name!r}") from None

    def __contains__(self, name: str) -> bool:
        return name in self.tables

    def names(self) -> list[str]:
        return sorted(self.tables)

    def with_table(self, rel: Relation) -> "Database":
        new = dict(self.tables)
        new[rel.schema.name] = rel
        return Database(new)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Database):
            return NotImplemented
        return dict(self.tables) == dict(other.tables)

    def __hash__(self):
        return hash(frozenset(self.tables.items()))


@dataclass(frozen=True)
class Delta:
    """Tuple inserts and deletes against one relation; an update is delete+insert."""

    inserts: frozenset = field(default_factory=frozenset)
    deletes: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "inserts", frozenset(tuple(r) for r in self.inserts))
        object.__setattr__(self, "deletes", frozenset(tuple(r) for r in self.deletes))
        overlap = self.inserts & self.deletes
        if overlap:
            raise MalformedDelta(f"rows both inserted and deleted: {sorted(overlap, key=row_sort_key)}")

    def is_empty(self) -> bool:
        return not self.inserts and not self.deletes

    @staticmethod
    def empty() -> "Delta":
        return Delta()

    @staticmethod
    def normalized(inserts: Iterable[Row], deletes: Iterable[Row]) -> "Delta":
        """Build a minimal delta, cancelling rows that appear on both sides."""
        ins = {tuple(r) for r in inserts}
        dels = {tuple(r) for r in deletes}
        both = ins & dels
        return Delta(frozenset(ins - both), frozenset(dels - both))


# ---------------------------------------------------------------------------
# Primitive operators
# ---------------------------------------------------------------------------


def project_rename(
    r: Relation,
    pairs: Sequence[tuple[str, str]],
    *,
    name: str | None = None,
    key: Sequence[str] | None = None,
) -> Relation:
    """Project onto ``pairs`` source attributes, renaming each to its target.

    The result key is the renamed image of r's key when the pairs retain every
    key attribute; otherwise it widens to all result attributes. Callers that
    know better may override with ``key``.
    """
    dsts = [d for _, d in pairs]
    if len(set(dsts)) != len(dsts):
        raise SchemaMismatch(f"duplicate target attributes {dsts}")
    idx = [r.schema.index(s) for s, _ in pairs]
    rename = {s: d for s, d in pairs}
    columns = tuple(
        Column(d, r.schema.columns[i].type, r.schema.columns[i].nullable)
        for i, (_, d) in zip(idx, pairs)
    )
    if key is not None:
        new_key = tuple(key)
    elif all(k in rename for k in r.schema.key):
        new_key = tuple(rename[k] for k in r.schema.key)
    else:
        new_key = tuple(dsts)
    schema = Schema(name if name is not None else r.schema.name, columns, new_key)
    rows = frozenset(tuple(row[i] for i in idx) for row in r.rows)
    return Relation(schema, rows)


def join_layout(
    left_attrs: Sequence[str], right_attrs: Sequence[str], conds: Sequence[tuple[str, str]]
) -> tuple[list[str], list[int], list[int], list[int]]:
    """Column plan shared by equi_join and the counting propagator.

    Returns (output attrs, kept right indexes, left cond indexes, right cond
    indexes). A right attribute joined against a same-named left attribute is
    dropped so shared join attributes appear once.
    """
    left_attrs = list(left_attrs)
    right_attrs = list(right_attrs)
    for a, b in conds:
        if a not in left_attrs:
            raise UnknownAttribute(f"join attribute {a!r} not on the left side")
        if b not in right_attrs:
            raise UnknownAttribute(f"join attribute {b!r} not on the right side")
    dropped = {b for a, b in conds if a == b}
    out = list(left_attrs)
    keep: list[int] = []
    for j, attr in enumerate(right_attrs):
        if attr in dropped:
            continue
        if attr in out:
            raise AmbiguousAttribute(f"attribute {attr!r} appears on both join sides")
        out.append(attr)
        keep.append(j)
    l_idx = [left_attrs.index(a) for a, _ in conds]
    r_idx = [right_attrs.index(b) for _, b in conds]
    return out, keep, l_idx, r_idx


def equi_join(
    r1: Relation,
    r2: Relation,
    conds: Sequence[tuple[str, str]],
    *,
    name: str | None = None,
    key: Sequence[str] | None = None,
) -> Relation:
    """Equi-join; null never matches null in a join condition.

    With no conditions this is the cartesian product. The result key is the
    left key when the conditions cover the right key (each left row meets at
    most one right row), symmetrically the right key, else all attributes.
    """
    out_attrs, keep, l_idx, r_idx = join_layout(r1.schema.attrs, r2.schema.attrs, conds)
    cols: dict[str, Column] = {c.name: c for c in r1.schema.columns}
    for j in keep:
        cols[r2.schema.columns[j].name] = r2.schema.columns[j]
    # A join condition can tighten the type of an untyped constant column.
    for (a, b) in conds:
        ca, cb = cols.get(a), r2.schema.column(b)
        if ca is not None and ca.type == UNKNOWN and cb.type != UNKNOWN:
            cols[a] = Column(a, cb.type, ca.nullable)

    if key is not None:
        new_key = tuple(key)
    elif set(r2.schema.key) <= {b for _, b in conds} and all(k in out_attrs for k in r1.schema.key):
        new_key = r1.schema.key
    elif set(r1.schema.key) <= {a for a, _ in conds} and all(k in out_attrs for k in r2.schema.key):
        new_key = r2.schema.key
    else:
        new_key = tuple(out_attrs)
    schema = Schema(
        name if name is not None else r1.schema.name,
        tuple(cols[a] for a in out_attrs),
        new_key,
    )

    index: dict[tuple, list[Row]] = {}
    for row in r2.rows:
        k = tuple(row[j] for j in r_idx)
        if any(v is None for v in k):
            continue
        index.setdefault(k, []).append(row)
    out_rows = set()
    for lrow in r1.rows:
        k = tuple(lrow[i] for i in l_idx)
        if any(v is None for v in k):
            continue
        for rrow in index.get(k, ()):
            out_rows.add(tuple(lrow) + tuple(rrow[j] for j in keep))
    if not conds:
        out_rows = {
            tuple(lrow) + tuple(rrow[j] for j in keep) for lrow in r1.rows for rrow in r2.rows
        }
    return Relation(schema, frozenset(out_rows))


def _unify_columns(c1: Column, c2: Column, table: str) -> Column:
    if c1.name != c2.name:
        raise SchemaMismatch(f"attribute lists differ: {c1.name!r} vs {c2.name!r}")
    t1, t2 = c1.type, c2.type
    if t1 == UNKNOWN:
        t = t2
    elif t2 == UNKNOWN or t1 == t2:
        t = t1
    else:
        raise SchemaMismatch(f"{table}.{c1.name}: type {t1} vs {t2}")
    nullable = c1.nullable or c2.nullable
    if t == UNKNOWN and not nullable:
        nullable = True
    return Column(c1.name, t, nullable)


def union(
    r1: Relation,
    r2: Relation,
    *,
    name: str | None = None,
    key: Sequence[str] | None = None,
) -> Relation:
    """Set union of two relations with identical attribute lists.

    Without an explicit key the result key widens to all attributes: key
    uniqueness of the operands says nothing about their union.
    """
    if r1.schema.attrs != r2.schema.attrs:
        raise SchemaMismatch(
            f"union attribute lists differ: {r1.schema.attrs} vs {r2.schema.attrs}"
        )
    table = name if name is not None else r1.schema.name
    columns = tuple(
        _unify_columns(c1, c2, table) for c1, c2 in zip(r1.schema.columns, r2.schema.columns)
    )
    new_key = tuple(key) if key is not None else tuple(c.name for c in columns)
    schema = Schema(table, columns, new_key)
    return Relation(schema, r1.rows | r2.rows)


def select_rows(r: Relation, pred) -> Relation:
    """Keep the rows satisfying ``pred`` (a predicate AST from putview.syntax)."""
    evaluate = pred.compile(r.schema)
    return Relation(r.schema, frozenset(row for row in r.rows if evaluate(row)))


def const_extend(r: Relation, attr: str, literal: Value, *, name: str | None = None) -> Relation:
    """Append a constant column. A null constant yields an untyped nullable column."""
    if r.schema.has(attr):
        raise SchemaMismatch(f"attribute {attr!r} already present in {r.schema.name}")
    col = Column(attr, value_type(literal), literal is None)
    schema = Schema(
        name if name is not None else r.schema.name,
        r.schema.columns + (col,),
        r.schema.key,
    )
    return Relation(schema, frozenset(row + (literal,) for row in r.rows))


def apply_delta(r: Relation, d: Delta) -> Relation:
    """Apply deletes then inserts; every delete target must exist."""
    missing = d.deletes - r.rows
    if missing:
        raise MissingDeleteTarget(
            f"deletes not present in {r.schema.name}: {sorted(missing, key=row_sort_key)}"
        )
    return Relation(r.schema, (r.rows - d.deletes) | d.inserts)


def diff(before: Relation, after: Relation) -> Delta:
    """Minimal delta d with apply_delta(before, d) == after."""
    if before.schema.attrs != after.schema.attrs:
        raise SchemaMismatch(
            f"diff over different schemas: {before.schema.attrs} vs {after.schema.attrs}"
        )
    return Delta(after.rows - before.rows, before.rows - after.rows)


def rows_match(r1: Relation, r2: Relation) -> bool:
    """Set equality of rows after aligning columns by attribute name."""
    if set(r1.schema.attrs) != set(r2.schema.attrs):
        return False
    if r1.schema.attrs == r2.schema.attrs:
        return r1.rows == r2.rows
    perm = [r2.schema.index(a) for a in r1.schema.attrs]
    return r1.rows == {tuple(row[i] for i in perm) for row in r2.rows}


def realign(r: Relation, schema: Schema) -> Relation:
    """Reorder a relation's columns to a declared schema and adopt its key."""
    if set(r.schema.attrs) != set(schema.attrs):
        raise SchemaMismatch(
            f"cannot realign {r.schema.attrs} to {schema.name}({schema.attrs})"
        )
    idx = [r.schema.index(a) for a in schema.attrs]
    return Relation(schema, frozenset(tuple(row[i] for i in idx) for row in r.rows))
