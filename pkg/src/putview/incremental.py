"""Incremental propagation of deltas in both directions.

Forward (inc_get): counting-based view maintenance. Every operator keeps
multiplicities of its set-semantics output, deltas flow through the classic
per-operator rules (joins expand to old-against-delta cross terms, projection
and union merge counts), and a view row is inserted or deleted exactly when
its support crosses zero. Counts never leak out of this module.

Backward (inc_put): view deltas are routed down the statement tree. Splits
partition or re-project the delta, a CHECK branch accepts only a net-empty
delta (the checked query reads the untouched sources, so any change to the
slice must fail), and an UPDATE turns delta rows into per-key cell patches
that touch only the affected source rows. The number of source rows fetched
is reported so callers can compare against full recomputation.

Programs in which two branches of one split can write the same source table
are routed through full put instead (flagged in the result): a branch whose
piece did not change still re-asserts its writes in full semantics, which a
purely delta-driven pass cannot see.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional

from .engine import (
    CHECK_FAILED,
    CONFLICTING_WRITES,
    KEY_VIOLATION,
    NOT_NULL_VIOLATION,
    ROW_NOT_COVERED,
    VIEW_NOT_JOIN_CONSISTENT,
    Reject,
    put,
)
from .errors import MalformedDelta, SchemaMismatch, ValidationFailed
from .query import ReadCounter
from .relation import (
    Database,
    Delta,
    Relation,
    Row,
    Schema,
    apply_delta,
    diff,
    equi_join,
    join_layout,
    project_rename,
    row_sort_key,
    rows_match,
)
from .syntax import (
    Base,
    Check,
    ConstExtend,
    HSplit,
    Join,
    Program,
    ProjectRename,
    QueryExpr,
    Select,
    Statement,
    Union,
    Update,
    VSplit,
    statement_label,
)
from .validation import hsplit_piece_schema, validate

# ---------------------------------------------------------------------------
# Counting-based incremental get
# ---------------------------------------------------------------------------


class _Counting:
    """Per-call cache of schemas, multiplicities and delta counts per node."""

    def __init__(self, db: Database, deltas: Mapping[str, Delta]):
        self.db = db
        self.deltas = dict(deltas)
        self._schema: dict[int, Schema] = {}
        self._counts: dict[int, dict[Row, int]] = {}

    def schema(self, q: QueryExpr) -> Schema:
        got = self._schema.get(id(q))
        if got is None:
            got = self._compute_schema(q)
            self._schema[id(q)] = got
        return got

    def _compute_schema(self, q: QueryExpr) -> Schema:
        from .query import eval_query

        empty = Database(
            {name: Relation(self.db[name].schema) for name in self.db.names()}
        )
        return eval_query(q, empty).schema

    def counts(self, q: QueryExpr) -> dict[Row, int]:
        got = self._counts.get(id(q))
        if got is None:
            got = self._compute_counts(q)
            self._counts[id(q)] = got
        return got

    def _compute_counts(self, q: QueryExpr) -> dict[Row, int]:
        if isinstance(q, Base):
            return {row: 1 for row in self.db[q.table].rows}
        if isinstance(q, ProjectRename):
            sub = self.counts(q.source)
            idx = [self.schema(q.source).index(s) for s, _ in q.pairs]
            out: dict[Row, int] = {}
            for row, c in sub.items():
                key = tuple(row[i] for i in idx)
                out[key] = out.get(key, 0) + c
            return out
        if isinstance(q, Select):
            pred = q.pred.compile(self.schema(q.source))
            return {row: c for row, c in self.counts(q.source).items() if pred(row)}
        if isinstance(q, ConstExtend):
            return {row + (q.literal,): c for row, c in self.counts(q.source).items()}
        if isinstance(q, Union):
            left = self.counts(q.left)
            self._check_union(q)
            out = dict(left)
            for row, c in self.counts(q.right).items():
                out[row] = out.get(row, 0) + c
            return out
        if isinstance(q, Join):
            return _join_counts(
                self.counts(q.left),
                self.counts(q.right),
                self.schema(q.left).attrs,
                self.schema(q.right).attrs,
                q.conds,
            )
        raise TypeError(f"not a query: {q!r}")

    def _check_union(self, q: Union) -> None:
        if self.schema(q.left).attrs != self.schema(q.right).attrs:
            raise SchemaMismatch(
                f"union attribute lists differ: {self.schema(q.left).attrs} "
                f"vs {self.schema(q.right).attrs}"
            )

    def delta_counts(self, q: QueryExpr) -> dict[Row, int]:
        if isinstance(q, Base):
            d = self.deltas.get(q.table)
            out: dict[Row, int] = {}
            if d is not None:
                for row in d.inserts:
                    out[row] = out.get(row, 0) + 1
                for row in d.deletes:
                    out[row] = out.get(row, 0) - 1
            return out
        if isinstance(q, ProjectRename):
            sub = self.delta_counts(q.source)
            idx = [self.schema(q.source).index(s) for s, _ in q.pairs]
            out = {}
            for row, c in sub.items():
                key = tuple(row[i] for i in idx)
                out[key] = out.get(key, 0) + c
            return out
        if isinstance(q, Select):
            pred = q.pred.compile(self.schema(q.source))
            return {row: c for row, c in self.delta_counts(q.source).items() if pred(row)}
        if isinstance(q, ConstExtend):
            return {row + (q.literal,): c for row, c in self.delta_counts(q.source).items()}
        if isinstance(q, Union):
            self._check_union(q)
            out = dict(self.delta_counts(q.left))
            for row, c in self.delta_counts(q.right).items():
                out[row] = out.get(row, 0) + c
            return out
        if isinstance(q, Join):
            left_attrs = self.schema(q.left).attrs
            right_attrs = self.schema(q.right).attrs
            d_left = self.delta_counts(q.left)
            d_right = self.delta_counts(q.right)
            out: dict[Row, int] = {}
            if d_left:
                _merge_counts(
                    out, _join_counts(d_left, self.counts(q.right), left_attrs, right_attrs, q.conds)
                )
            if d_right:
                _merge_counts(
                    out, _join_counts(self.counts(q.left), d_right, left_attrs, right_attrs, q.conds)
                )
            if d_left and d_right:
                _merge_counts(
                    out, _join_counts(d_left, d_right, left_attrs, right_attrs, q.conds)
                )
            return out
        raise TypeError(f"not a query: {q!r}")


def _merge_counts(target: dict[Row, int], extra: dict[Row, int]) -> None:
    for row, c in extra.items():
        target[row] = target.get(row, 0) + c


def _join_counts(
    left: dict[Row, int],
    right: dict[Row, int],
    left_attrs: tuple,
    right_attrs: tuple,
    conds: tuple,
) -> dict[Row, int]:
    _, keep, l_idx, r_idx = join_layout(left_attrs, right_attrs, conds)
    index: dict[tuple, list[tuple[Row, int]]] = {}
    for row, c in right.items():
        key = tuple(row[j] for j in r_idx)
        if any(v is None for v in key):
            continue
        index.setdefault(key, []).append((row, c))
    out: dict[Row, int] = {}
    for lrow, lc in left.items():
        key = tuple(lrow[i] for i in l_idx)
        if any(v is None for v in key):
            continue
        for rrow, rc in index.get(key, ()):
            combined = tuple(lrow) + tuple(rrow[j] for j in keep)
            out[combined] = out.get(combined, 0) + lc * rc
    return out


def inc_get(q: QueryExpr, sources: Database, deltas: Mapping[str, Delta]) -> Delta:
    """Delta on the view such that applying it to eval(q, sources) equals
    eval(q, sources after deltas)."""
    for table, d in deltas.items():
        apply_delta(sources[table], d)  # validates applicability
    counting = _Counting(sources, deltas)
    changes = counting.delta_counts(q)
    if not changes:
        return Delta.empty()
    old = counting.counts(q)
    inserts, deletes = set(), set()
    for row, change in changes.items():
        if change == 0:
            continue
        before = old.get(row, 0)
        after = before + change
        if after < 0:
            raise MalformedDelta(f"support of {row!r} would drop below zero")
        if before == 0 and after > 0:
            inserts.add(row)
        elif before > 0 and after == 0:
            deletes.add(row)
    return Delta(frozenset(inserts), frozenset(deletes))


# ---------------------------------------------------------------------------
# Incremental put
# ---------------------------------------------------------------------------


@dataclass
class _Patch:
    """Affected-keys-only counterpart of the full engine's TableUpdate."""

    covered_key: tuple
    writes: dict  # image -> {attr: value}
    removed: set  # images whose rows leave the table


@dataclass(frozen=True)
class IncPutOutcome:
    deltas: Optional[dict]  # table -> Delta, None when rejected
    reason: Optional[str] = None
    path: tuple = ()
    source_rows_read: int = 0
    full_fallback: bool = False

    @property
    def accepted(self) -> bool:
        return self.deltas is not None


def tables_written(stmt: Statement) -> set[str]:
    if isinstance(stmt, Update):
        return {stmt.src_table}
    if isinstance(stmt, Check):
        return set()
    if isinstance(stmt, VSplit):
        out: set[str] = set()
        for _, body in stmt.branches:
            out |= tables_written(body)
        return out
    if isinstance(stmt, HSplit):
        out = set()
        for _, body in stmt.branches:
            out |= tables_written(body)
        if stmt.otherwise is not None:
            out |= tables_written(stmt.otherwise)
        return out
    raise TypeError(f"not a statement: {stmt!r}")


def has_shared_branch_targets(stmt: Statement) -> bool:
    """True when two branches of some split may write the same table."""
    if isinstance(stmt, (Update, Check)):
        return False
    bodies: list[Statement] = []
    if isinstance(stmt, VSplit):
        bodies = [b for _, b in stmt.branches]
    elif isinstance(stmt, HSplit):
        bodies = [b for _, b in stmt.branches]
        if stmt.otherwise is not None:
            bodies.append(stmt.otherwise)
    seen: set[str] = set()
    for body in bodies:
        written = tables_written(body)
        if written & seen:
            return True
        seen |= written
    return any(has_shared_branch_targets(b) for b in bodies)


class _IncExecutor:
    def __init__(self, sources: Database):
        self.sources = sources

    def route(self, stmt: Statement, piece: Relation, d: Delta, path: tuple) -> dict[str, _Patch]:
        path = path + (statement_label(stmt),)
        if isinstance(stmt, Update):
            return self._update(stmt, piece, d, path)
        if isinstance(stmt, Check):
            if not d.is_empty():
                raise Reject(
                    CHECK_FAILED, path, "the checked view slice changed but its query did not"
                )
            return {}
        if isinstance(stmt, VSplit):
            return self._vsplit(stmt, piece, d, path)
        if isinstance(stmt, HSplit):
            return self._hsplit(stmt, piece, d, path)
        raise TypeError(f"not a statement: {stmt!r}")

    def _update(self, stmt: Update, piece: Relation, d: Delta, path: tuple) -> dict[str, _Patch]:
        if d.is_empty():
            return {}
        source_key = self.sources[stmt.src_table].schema.key
        view_pos = {attr: piece.schema.index(attr) for attr in stmt.view_attrs}
        pair_of = dict(zip(stmt.src_attrs, stmt.view_attrs))
        covered = tuple(k for k in source_key if k in pair_of)

        def image(row: Row) -> tuple:
            return tuple(row[view_pos[pair_of[k]]] for k in covered)

        writes: dict[tuple, dict] = {}
        for row in sorted(d.inserts, key=row_sort_key):
            img = image(row)
            w = {s: row[view_pos[v]] for s, v in zip(stmt.src_attrs, stmt.view_attrs)}
            if img in writes and writes[img] != w:
                raise Reject(
                    KEY_VIOLATION, path, f"view rows collide on mapped key {img!r}"
                )
            writes[img] = w
        removed = {image(row) for row in d.deletes} - set(writes)
        # mapped-key uniqueness over the whole updated slice (view-side scan)
        final = apply_delta(piece, d)
        seen: dict[tuple, Row] = {}
        for row in final.rows:
            img = image(row)
            if img in seen and seen[img] != row:
                raise Reject(KEY_VIOLATION, path, f"view rows collide on mapped key {img!r}")
            seen[img] = row
        return {stmt.src_table: _Patch(covered, writes, removed)}

    def _vsplit(self, stmt: VSplit, piece: Relation, d: Delta, path: tuple) -> dict[str, _Patch]:
        new_piece = apply_delta(piece, d)
        subs_old = [
            project_rename(piece, [(a, a) for a in attrs], name=piece.schema.name)
            for attrs, _ in stmt.branches
        ]
        subs_new = [
            project_rename(new_piece, [(a, a) for a in attrs], name=piece.schema.name)
            for attrs, _ in stmt.branches
        ]
        joined = subs_new[0]
        for sub in subs_new[1:]:
            shared = [(a, a) for a in joined.schema.attrs if sub.schema.has(a)]
            joined = equi_join(joined, sub, shared, name=piece.schema.name)
        if not rows_match(joined, new_piece):
            raise Reject(
                VIEW_NOT_JOIN_CONSISTENT, path, "the view is not the join of its split pieces"
            )
        patches: dict[str, _Patch] = {}
        for (attrs, body), old_sub, new_sub in zip(stmt.branches, subs_old, subs_new):
            sub_delta = diff(old_sub, new_sub)
            _merge_patches(patches, self.route(body, old_sub, sub_delta, path), path)
        return patches

    def _hsplit(self, stmt: HSplit, piece: Relation, d: Delta, path: tuple) -> dict[str, _Patch]:
        split_idx = piece.schema.index(stmt.split_attr)
        literal_index = {lit: i for i, (lit, _) in enumerate(stmt.branches)}
        n = len(stmt.branches)

        def bucket(rows):
            outs: list[set] = [set() for _ in range(n)]
            rest: set = set()
            for row in rows:
                i = literal_index.get(row[split_idx])
                if i is not None:
                    outs[i].add(tuple(v for j, v in enumerate(row) if j != split_idx))
                elif stmt.otherwise is not None:
                    rest.add(row)
                else:
                    raise Reject(
                        ROW_NOT_COVERED,
                        path,
                        f"{stmt.split_attr}={row[split_idx]!r} matches no branch and "
                        "there is no OTHERWISE",
                    )
            return outs, rest

        ins_buckets, ins_rest = bucket(d.inserts)
        del_buckets, del_rest = bucket(d.deletes)
        piece_rows, piece_rest = bucket(piece.rows)
        branch_schema = hsplit_piece_schema(piece.schema, stmt.split_attr)
        patches: dict[str, _Patch] = {}
        for i, (_, body) in enumerate(stmt.branches):
            sub_delta = Delta.normalized(ins_buckets[i], del_buckets[i])
            sub_piece = Relation(branch_schema, frozenset(piece_rows[i]))
            _merge_patches(patches, self.route(body, sub_piece, sub_delta, path), path)
        if stmt.otherwise is not None:
            sub_delta = Delta.normalized(ins_rest, del_rest)
            sub_piece = Relation(piece.schema, frozenset(piece_rest))
            _merge_patches(patches, self.route(stmt.otherwise, sub_piece, sub_delta, path), path)
        return patches


def _merge_patches(target: dict[str, _Patch], extra: dict[str, _Patch], path: tuple) -> None:
    for table, patch in extra.items():
        mine = target.get(table)
        if mine is None:
            target[table] = patch
            continue
        # Only reachable for programs with shared branch targets, which take
        # the full-put fallback; merging here would hide silent-branch writes.
        raise Reject(CONFLICTING_WRITES, path, f"two branches patched {table}")


def _materialize(
    sources: Database, patches: Mapping[str, _Patch], counter: ReadCounter
) -> dict[str, Delta]:
    deltas: dict[str, Delta] = {}
    for table in sorted(patches):
        patch = patches[table]
        rel = sources[table]
        cov_idx = [rel.schema.index(a) for a in patch.covered_key]
        index = {tuple(r[i] for i in cov_idx): r for r in rel.rows}
        inserts: set[Row] = set()
        deletes: set[Row] = set()
        for img in patch.removed:
            old = index.get(img)
            if old is not None:
                counter.add(1)
                deletes.add(old)
        for img, writes in patch.writes.items():
            old = index.get(img)
            if old is not None:
                counter.add(1)
                new = tuple(
                    writes.get(col.name, v) for col, v in zip(rel.schema.columns, old)
                )
                if new != old:
                    deletes.add(old)
                    inserts.add(new)
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
                            (),
                            f"insert into {table} leaves non-nullable {col.name} unset",
                        )
                inserts.add(tuple(fresh))
        d = Delta.normalized(inserts, deletes)
        if not d.is_empty():
            deltas[table] = d
    return deltas


def inc_put(
    program: Program,
    sources: Database,
    view: Relation,
    u: Delta,
    *,
    validate_first: bool = True,
) -> IncPutOutcome:
    """Translate a view delta into per-table source deltas.

    Requires the usual consistency precondition: the given view must equal
    the program's derived query on the given sources.
    """
    apply_delta(view, u)  # validates applicability against the current view
    if validate_first:
        schemas = {name: sources[name].schema for name in sources.names()}
        schemas[view.schema.name] = view.schema
        errors = validate(program, schemas)
        if errors:
            raise ValidationFailed(errors)

    if has_shared_branch_targets(program.root):
        counter = ReadCounter()
        outcome = put(program, sources, apply_delta(view, u), counter=counter, validate_first=False)
        if not outcome.accepted:
            return IncPutOutcome(
                None, outcome.reason, outcome.path,
                source_rows_read=counter.rows_read, full_fallback=True,
            )
        deltas = {}
        for table in sources.names():
            d = diff(sources[table], outcome.sources[table])
            if not d.is_empty():
                deltas[table] = d
        return IncPutOutcome(deltas, source_rows_read=counter.rows_read, full_fallback=True)

    counter = ReadCounter()
    try:
        patches = _IncExecutor(sources).route(program.root, view, u, ())
        deltas = _materialize(sources, patches, counter)
        return IncPutOutcome(deltas, source_rows_read=counter.rows_read)
    except Reject as rej:
        return IncPutOutcome(None, rej.reason, rej.path, source_rows_read=counter.rows_read)
