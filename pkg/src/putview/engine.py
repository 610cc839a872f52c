"""Execution of update strategies: put(program, sources, view).

put is the sole definition of view semantics. It either returns fully
updated sources or rejects the whole view atomically; the inputs are
immutable so a rejection trivially leaves everything untouched.

UPDATE statements insert and delete as well as overwrite: a view row whose
key image matches a source row overwrites the named attributes and keeps the
rest; an unmatched view row inserts a fresh row with nulls elsewhere; a
source row whose key image no longer appears in the view is deleted. This is
the minimal behaviour that keeps the round-trip laws intact for the derived
projection query.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional

from .errors import KeyViolation, NullabilityViolation, PutviewError, ValidationFailed
from .query import ReadCounter, eval_query
from .relation import (
    Database,
    Relation,
    Row,
    Schema,
    equi_join,
    project_rename,
    realign,
    rows_match,
)
from .syntax import (
    Check,
    HSplit,
    Program,
    Statement,
    Update,
    VSplit,
    statement_label,
)
from .derive import derive_query
from .validation import hsplit_piece_schema, validate

CHECK_FAILED = "CheckFailed"
VIEW_NOT_JOIN_CONSISTENT = "ViewNotJoinConsistent"
ROW_NOT_COVERED = "RowNotCovered"
NOT_NULL_VIOLATION = "NotNullViolation"
CONFLICTING_WRITES = "ConflictingWrites"
KEY_VIOLATION = "KeyViolation"


@dataclass(frozen=True)
class PutOutcome:
    sources: Optional[Database]
    reason: Optional[str] = None
    path: tuple = ()

    @property
    def accepted(self) -> bool:
        return self.sources is not None

    @staticmethod
    def updated(db: Database) -> "PutOutcome":
        return PutOutcome(db)

    @staticmethod
    def rejected(reason: str, path: tuple) -> "PutOutcome":
        return PutOutcome(None, reason, tuple(path))


class Reject(Exception):
    """Internal control flow; surfaces as PutOutcome.rejected."""

    def __init__(self, reason: str, path: tuple, message: str = ""):
        super().__init__(message or reason)
        self.reason = reason
        self.path = tuple(path)


@dataclass
class TableUpdate:
    """One branch's claim over a source table.

    ``cells`` maps a key image to the attribute values written for it; the
    image set is also the complete set of keys the table must end up with,
    so anything else gets deleted. ``covered_key`` lists the key attributes
    the image spans (all of them for validated programs).
    """

    covered_key: tuple
    cells: dict


def _merge(
    target: dict[str, TableUpdate], extra: Mapping[str, TableUpdate], path: tuple
) -> None:
    for table, tu in extra.items():
        mine = target.get(table)
        if mine is None:
            target[table] = TableUpdate(tu.covered_key, {k: dict(w) for k, w in tu.cells.items()})
            continue
        if mine.covered_key != tu.covered_key:
            raise Reject(CONFLICTING_WRITES, path, f"branches key {table} differently")
        if set(mine.cells) != set(tu.cells):
            diff = set(mine.cells) ^ set(tu.cells)
            raise Reject(
                CONFLICTING_WRITES,
                path,
                f"branches disagree on which rows of {table} exist: {sorted(diff)[:3]}",
            )
        for image, writes in tu.cells.items():
            merged = mine.cells[image]
            for attr, value in writes.items():
                if attr in merged and merged[attr] != value:
                    raise Reject(
                        CONFLICTING_WRITES,
                        path,
                        f"{table}{image!r}.{attr}: {merged[attr]!r} vs {value!r}",
                    )
                merged[attr] = value


def route_update(
    stmt: Update, piece: Relation, source_key: tuple, path: tuple
) -> dict[str, TableUpdate]:
    """Turn view rows into per-key cell writes for the statement's source table.

    ``covered`` is the part of the source key the statement actually writes;
    validation guarantees full coverage, but runtime tolerates less so that
    deliberately invalid strategies can still be executed by the law checker.
    """
    view_pos = {attr: piece.schema.index(attr) for attr in stmt.view_attrs}
    pair_of = dict(zip(stmt.src_attrs, stmt.view_attrs))
    covered = tuple(k for k in source_key if k in pair_of)
    cells: dict[tuple, dict] = {}
    for row in piece.sorted_rows():
        image = tuple(row[view_pos[pair_of[k]]] for k in covered)
        writes = {s: row[view_pos[v]] for s, v in zip(stmt.src_attrs, stmt.view_attrs)}
        existing = cells.get(image)
        if existing is not None and existing != writes:
            raise Reject(
                KEY_VIOLATION, path, f"view rows collide on mapped key {image!r} of {stmt.src_table}"
            )
        cells[image] = writes
    return {stmt.src_table: TableUpdate(covered, cells)}


class _Executor:
    def __init__(self, sources: Database, counter: ReadCounter | None):
        self.sources = sources
        self.counter = counter

    def run(self, stmt: Statement, piece: Relation, path: tuple) -> dict[str, TableUpdate]:
        path = path + (statement_label(stmt),)
        if isinstance(stmt, Update):
            return self._update(stmt, piece, path)
        if isinstance(stmt, Check):
            return self._check(stmt, piece, path)
        if isinstance(stmt, VSplit):
            return self._vsplit(stmt, piece, path)
        if isinstance(stmt, HSplit):
            return self._hsplit(stmt, piece, path)
        raise TypeError(f"not a statement: {stmt!r}")

    def _update(self, stmt: Update, piece: Relation, path: tuple) -> dict[str, TableUpdate]:
        source = self.sources[stmt.src_table]
        return route_update(stmt, piece, source.schema.key, path)

    def _check(self, stmt: Check, piece: Relation, path: tuple) -> dict[str, TableUpdate]:
        result = eval_query(stmt.query, self.sources, counter=self.counter)
        if not rows_match(result, piece):
            raise Reject(CHECK_FAILED, path, "view slice differs from the checked query")
        return {}

    def _vsplit(self, stmt: VSplit, piece: Relation, path: tuple) -> dict[str, TableUpdate]:
        pieces = [
            project_rename(piece, [(a, a) for a in attrs], name=piece.schema.name)
            for attrs, _ in stmt.branches
        ]
        joined = pieces[0]
        for sub in pieces[1:]:
            shared = [(a, a) for a in joined.schema.attrs if sub.schema.has(a)]
            joined = equi_join(joined, sub, shared, name=piece.schema.name)
        if not rows_match(joined, piece):
            raise Reject(
                VIEW_NOT_JOIN_CONSISTENT, path, "the view is not the join of its split pieces"
            )
        updates: dict[str, TableUpdate] = {}
        for (attrs, body), sub in zip(stmt.branches, pieces):
            _merge(updates, self.run(body, sub, path), path)
        return updates

    def _hsplit(self, stmt: HSplit, piece: Relation, path: tuple) -> dict[str, TableUpdate]:
        split_idx = piece.schema.index(stmt.split_attr)
        buckets: dict[int, set] = {i: set() for i, _ in enumerate(stmt.branches)}
        rest: set = set()
        literal_index = {lit: i for i, (lit, _) in enumerate(stmt.branches)}
        for row in piece.rows:
            i = literal_index.get(row[split_idx])
            if i is not None:
                buckets[i].add(tuple(v for j, v in enumerate(row) if j != split_idx))
            elif stmt.otherwise is not None:
                rest.add(row)
            else:
                raise Reject(
                    ROW_NOT_COVERED,
                    path,
                    f"{stmt.split_attr}={row[split_idx]!r} matches no branch and there "
                    "is no OTHERWISE",
                )
        branch_schema = hsplit_piece_schema(piece.schema, stmt.split_attr)
        updates: dict[str, TableUpdate] = {}
        for i, (lit, body) in enumerate(stmt.branches):
            sub = Relation(branch_schema, frozenset(buckets[i]))
            _merge(updates, self.run(body, sub, path), path)
        if stmt.otherwise is not None:
            sub = Relation(piece.schema, frozenset(rest))
            _merge(updates, self.run(stmt.otherwise, sub, path), path)
        return updates


def apply_table_update(
    rel: Relation, tu: TableUpdate, path: tuple, counter: ReadCounter | None = None
) -> Relation:
    cov_idx = [rel.schema.index(a) for a in tu.covered_key]
    if counter is not None:
        counter.add(len(rel))
    groups: dict[tuple, list[Row]] = {}
    for row in rel.rows:
        groups.setdefault(tuple(row[i] for i in cov_idx), []).append(row)
    new_rows: list[Row] = []
    for image, writes in tu.cells.items():
        matched = groups.get(image)
        if matched:
            for row in matched:
                new_rows.append(
                    tuple(
                        writes.get(col.name, old) for col, old in zip(rel.schema.columns, row)
                    )
                )
        else:
            fresh = []
            for col in rel.schema.columns:
                if col.name in writes:
                    fresh.append(writes[col.name])
                elif col.nullable:
                    fresh.append(None)
                else:
                    raise Reject(
                        NOT_NULL_VIOLATION,
                        path,
                        f"insert into {rel.schema.name} leaves non-nullable "
                        f"{col.name} without a value",
                    )
            new_rows.append(tuple(fresh))
    try:
        return Relation(rel.schema, frozenset(new_rows))
    except KeyViolation as exc:
        raise Reject(KEY_VIOLATION, path, str(exc)) from None
    except NullabilityViolation as exc:
        raise Reject(NOT_NULL_VIOLATION, path, str(exc)) from None


def put(
    program: Program,
    sources: Database,
    view: Relation,
    *,
    counter: ReadCounter | None = None,
    validate_first: bool = True,
) -> PutOutcome:
    """Execute the update strategy; returns updated sources or a rejection."""
    if view.schema.name != program.view_name:
        raise PutviewError(
            f"program updates view {program.view_name!r} but was given {view.schema.name!r}"
        )
    if validate_first:
        schemas = {name: sources[name].schema for name in sources.names()}
        schemas[view.schema.name] = view.schema
        errors = validate(program, schemas)
        if errors:
            raise ValidationFailed(errors)
    try:
        updates = _Executor(sources, counter).run(program.root, view, ())
        db = sources
        for table in sorted(updates):
            db = db.with_table(
                apply_table_update(sources[table], updates[table], (), counter=counter)
            )
        return PutOutcome.updated(db)
    except Reject as rej:
        return PutOutcome.rejected(rej.reason, rej.path)


def get_view(
    program: Program, sources: Database, *, view_schema: Schema | None = None,
    counter: ReadCounter | None = None,
) -> Relation:
    """Evaluate the program's derived query; realign to a declared schema if given."""
    result = eval_query(derive_query(program), sources, counter=counter)
    if view_schema is not None:
        return realign(result, view_schema)
    return Relation(
        Schema(program.view_name, result.schema.columns, result.schema.key), result.rows
    )
