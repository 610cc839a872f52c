"""Query evaluation over a database, with optional lineage tracking and the
payment-distribution rules for sold query answers."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping

from .errors import EmptyAnswer, PutviewError
from .relation import (
    Database,
    Relation,
    Row,
    const_extend,
    equi_join,
    join_layout,
    project_rename,
    row_sort_key,
    select_rows,
    union,
)
from .syntax import Base, ConstExtend, Join, ProjectRename, QueryExpr, Select, Union


class ReadCounter:
    """Counts source rows fetched; threaded through evaluators on demand."""

    def __init__(self):
        self.rows_read = 0

    def add(self, n: int) -> None:
        self.rows_read += n


def eval_query(q: QueryExpr, db: Database, *, counter: ReadCounter | None = None) -> Relation:
    if isinstance(q, Base):
        rel = db[q.table]
        if counter is not None:
            counter.add(len(rel))
        return rel
    if isinstance(q, ProjectRename):
        return project_rename(eval_query(q.source, db, counter=counter), q.pairs)
    if isinstance(q, Select):
        return select_rows(eval_query(q.source, db, counter=counter), q.pred)
    if isinstance(q, Join):
        return equi_join(
            eval_query(q.left, db, counter=counter),
            eval_query(q.right, db, counter=counter),
            q.conds,
        )
    if isinstance(q, Union):
        return union(
            eval_query(q.left, db, counter=counter),
            eval_query(q.right, db, counter=counter),
        )
    if isinstance(q, ConstExtend):
        return const_extend(eval_query(q.source, db, counter=counter), q.attr, q.literal)
    raise TypeError(f"not a query: {q!r}")


# ---------------------------------------------------------------------------
# Lineage
# ---------------------------------------------------------------------------

Tid = tuple  # (table name, key tuple)


def tid_string(tid: Tid) -> str:
    table, key = tid
    return f"{table}({','.join(str(v) for v in key)})"


@dataclass(frozen=True)
class LineageRelation:
    """eval output plus, per row, the source tuple ids it was derived from."""

    relation: Relation
    lineage: Mapping[Row, frozenset]

    def __post_init__(self):
        object.__setattr__(self, "lineage", dict(self.lineage))
        if set(self.lineage) != set(self.relation.rows):
            raise PutviewError("lineage keys do not match the relation rows")
        for row, tids in self.lineage.items():
            if not tids:
                raise PutviewError(f"row {row!r} has empty lineage")

    def all_tids(self) -> set:
        out: set = set()
        for tids in self.lineage.values():
            out |= tids
        return out


def eval_with_lineage(q: QueryExpr, db: Database) -> LineageRelation:
    """Same rows as eval_query; lineage is the union over all derivations."""
    if isinstance(q, Base):
        rel = db[q.table]
        return LineageRelation(rel, {row: frozenset({(q.table, rel.key_of(row))}) for row in rel.rows})
    if isinstance(q, ProjectRename):
        sub = eval_with_lineage(q.source, db)
        out_rel = project_rename(sub.relation, q.pairs)
        idx = [sub.relation.schema.index(s) for s, _ in q.pairs]
        merged: dict[Row, frozenset] = {}
        for row, tids in sub.lineage.items():
            out = tuple(row[i] for i in idx)
            merged[out] = merged.get(out, frozenset()) | tids
        return LineageRelation(out_rel, merged)
    if isinstance(q, Select):
        sub = eval_with_lineage(q.source, db)
        out_rel = select_rows(sub.relation, q.pred)
        return LineageRelation(out_rel, {r: sub.lineage[r] for r in out_rel.rows})
    if isinstance(q, Join):
        left = eval_with_lineage(q.left, db)
        right = eval_with_lineage(q.right, db)
        out_rel = equi_join(left.relation, right.relation, q.conds)
        _, keep, l_idx, r_idx = join_layout(
            left.relation.schema.attrs, right.relation.schema.attrs, q.conds
        )
        index: dict[tuple, list[Row]] = {}
        for row in right.relation.rows:
            k = tuple(row[j] for j in r_idx)
            if q.conds and any(v is None for v in k):
                continue
            index.setdefault(k, []).append(row)
        merged = {}
        for lrow in left.relation.rows:
            k = tuple(lrow[i] for i in l_idx)
            if q.conds and any(v is None for v in k):
                continue
            candidates = index.get(k, ()) if q.conds else list(right.relation.rows)
            for rrow in candidates:
                out = tuple(lrow) + tuple(rrow[j] for j in keep)
                tids = left.lineage[lrow] | right.lineage[rrow]
                merged[out] = merged.get(out, frozenset()) | tids
        return LineageRelation(out_rel, merged)
    if isinstance(q, Union):
        left = eval_with_lineage(q.left, db)
        right = eval_with_lineage(q.right, db)
        out_rel = union(left.relation, right.relation)
        merged = dict(left.lineage)
        for row, tids in right.lineage.items():
            merged[row] = merged.get(row, frozenset()) | tids
        return LineageRelation(out_rel, merged)
    if isinstance(q, ConstExtend):
        sub = eval_with_lineage(q.source, db)
        out_rel = const_extend(sub.relation, q.attr, q.literal)
        return LineageRelation(out_rel, {row + (q.literal,): tids for row, tids in sub.lineage.items()})
    raise TypeError(f"not a query: {q!r}")


# ---------------------------------------------------------------------------
# Payment distribution
# ---------------------------------------------------------------------------

PER_TUPLE = "tuple"
PER_LINEAGE = "lineage"


def resolve_owner(tid: Tid, owners: Mapping[str, str]) -> str:
    """Owner lookup: exact tid string first, then a per-table default."""
    exact = owners.get(tid_string(tid))
    if exact is not None:
        return exact
    table_default = owners.get(tid[0])
    if table_default is not None:
        return table_default
    raise PutviewError(f"no owner for tid {tid_string(tid)}")


def distribute_payment(
    lr: LineageRelation,
    total_cents: int,
    policy: str,
    owners: Mapping[str, str],
) -> dict[str, int]:
    """Split ``total_cents`` among data owners, cent-exact.

    tuple policy: every answer row is worth the same; a row's worth is split
    equally over the distinct owners in its lineage. lineage policy: every
    distinct lineage tid is worth the same and pays its owner. Fractional
    shares are floored and the leftover cents go one each to owners in
    ascending name order.
    """
    if total_cents < 0:
        raise PutviewError("total must be non-negative")
    if policy not in (PER_TUPLE, PER_LINEAGE):
        raise PutviewError(f"unknown payment policy {policy!r}")
    shares: dict[str, Fraction] = {}
    if policy == PER_TUPLE:
        rows = lr.relation.sorted_rows()
        if not rows:
            raise EmptyAnswer("the answer has no rows")
        per_row = Fraction(total_cents, len(rows))
        for row in rows:
            row_owners = sorted({resolve_owner(t, owners) for t in lr.lineage[row]})
            part = per_row / len(row_owners)
            for owner in row_owners:
                shares[owner] = shares.get(owner, Fraction(0)) + part
    else:
        tids = lr.all_tids()
        if not tids:
            raise EmptyAnswer("the answer has no lineage tids")
        per_tid = Fraction(total_cents, len(tids))
        for tid in sorted(tids, key=lambda t: (t[0], row_sort_key(t[1]))):
            owner = resolve_owner(tid, owners)
            shares[owner] = shares.get(owner, Fraction(0)) + per_tid

    cents = {owner: int(s) for owner, s in shares.items()}  # int() floors a positive Fraction
    leftover = total_cents - sum(cents.values())
    for owner in sorted(cents):
        if leftover == 0:
            break
        cents[owner] += 1
        leftover -= 1
    return cents
