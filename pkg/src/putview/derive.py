"""Mechanical derivation of the unique view query from an update program,
and rendering of derived queries as SQL text.

Derivation is purely syntactic: a CHECK contributes its own query, an UPDATE
becomes projection plus renaming, a vertical split joins its branches on all
shared attributes, and a horizontal split unions its branches with the split
attribute reattached as a constant. The result is a function of the AST
alone: equal programs derive byte-identical queries.
"""

from __future__ import annotations

from .errors import PutviewError, UnprintableQuery
from .printer import print_literal
from .syntax import (
    AttrEq,
    Base,
    Check,
    Cmp,
    ConstExtend,
    HSplit,
    IsNull,
    Join,
    Program,
    ProjectRename,
    QueryExpr,
    Select,
    Statement,
    Union,
    Update,
    VSplit,
    flatten_pred,
    output_attrs,
)


def derive_query(program: Program) -> QueryExpr:
    query, _ = _derive(program.root)
    return query


def _derive(stmt: Statement) -> tuple[QueryExpr, tuple[str, ...]]:
    if isinstance(stmt, Check):
        return stmt.query, output_attrs(stmt.query)
    if isinstance(stmt, Update):
        query = ProjectRename(Base(stmt.src_table), tuple(zip(stmt.src_attrs, stmt.view_attrs)))
        return query, stmt.view_attrs
    if isinstance(stmt, VSplit):
        acc: QueryExpr | None = None
        acc_attrs: tuple[str, ...] = ()
        for _, body in stmt.branches:
            query, attrs = _derive(body)
            if acc is None:
                acc, acc_attrs = query, attrs
                continue
            shared = tuple((a, a) for a in acc_attrs if a in attrs)
            acc = Join(acc, query, shared)
            acc_attrs = acc_attrs + tuple(a for a in attrs if a not in acc_attrs)
        assert acc is not None
        return ProjectRename(acc, tuple((a, a) for a in acc_attrs)), acc_attrs
    if isinstance(stmt, HSplit):
        parts: list[tuple[QueryExpr, tuple[str, ...]]] = []
        for lit, body in stmt.branches:
            query, attrs = _derive(body)
            parts.append((ConstExtend(query, stmt.split_attr, lit), attrs + (stmt.split_attr,)))
        if stmt.otherwise is not None:
            parts.append(_derive(stmt.otherwise))
        first_attrs = parts[0][1]
        acc = parts[0][0]
        for query, attrs in parts[1:]:
            if attrs != first_attrs:
                query = ProjectRename(query, tuple((a, a) for a in first_attrs))
            acc = Union(acc, query)
        return acc, first_attrs
    raise TypeError(f"not a statement: {stmt!r}")


# ---------------------------------------------------------------------------
# SQL rendering
# ---------------------------------------------------------------------------


class _SqlWriter:
    def __init__(self):
        self.statements: list[str] = []
        self.counter = 0

    def fresh(self) -> str:
        self.counter += 1
        return f"tmp{self.counter}"

    def emit(self, q: QueryExpr, into: str) -> None:
        branches = _union_branches(q)
        if len(branches) > 1:
            self._emit_union(branches, into)
        else:
            self._emit_select(q, into)

    def _materialize(self, q: QueryExpr) -> str:
        name = self.fresh()
        self.emit(q, name)
        return name

    def _emit_union(self, branches: list[QueryExpr], into: str) -> None:
        subs = []
        for branch in branches:
            consts = []
            inner = branch
            while isinstance(inner, ConstExtend):
                consts.append((inner.literal, inner.attr))
                inner = inner.source
            consts.reverse()
            name = self._materialize(inner)
            items = ["*"] + [f"{print_literal(lit)} AS {attr}" for lit, attr in consts]
            subs.append(f"SELECT {', '.join(items)}\n       FROM   {name}")
        body = "\n       UNION\n       ".join(subs)
        self.statements.append(f"SELECT *\nINTO   {into}\nFROM   {body};")

    def _emit_select(self, q: QueryExpr, into: str) -> None:
        consts = []
        while isinstance(q, ConstExtend):
            consts.append((q.literal, q.attr))
            q = q.source
        consts.reverse()
        pairs = None
        if isinstance(q, ProjectRename):
            pairs = q.pairs
            q = q.source
        preds = []
        while isinstance(q, Select):
            preds = flatten_pred(q.pred) + preds
            q = q.source
        entries, conds = self._flatten_join(q)

        items = ["*"] if pairs is None else [
            src if src == dst else f"{src} AS {dst}" for src, dst in pairs
        ]
        items += [f"{print_literal(lit)} AS {attr}" for lit, attr in consts]
        where = list(conds)
        for p in preds:
            where.append(_render_pred(p))
        tables = ", ".join(name for name, _ in entries)
        text = f"SELECT {', '.join(items)}\nINTO   {into}\nFROM   {tables}"
        if where:
            text += f"\nWHERE  {' AND '.join(where)}"
        self.statements.append(text + ";")

    def _flatten_join(self, q: QueryExpr) -> tuple[list[tuple], list[str]]:
        """FROM entries as (name, known attrs or None) plus qualified conditions."""
        if isinstance(q, Base):
            return [(q.table, None)], []
        if isinstance(q, Join):
            l_entries, l_conds = self._flatten_join(q.left)
            r_entries, r_conds = self._flatten_join(q.right)
            conds = l_conds + r_conds
            for a, b in q.conds:
                conds.append(f"{_qualify(l_entries, a)}.{a} = {_qualify(r_entries, b)}.{b}")
            return l_entries + r_entries, conds
        # Anything else (a nested union, projection or selection) becomes a
        # temp table, mirroring how split branches are materialized.
        try:
            attrs = output_attrs(q)
        except PutviewError:
            attrs = None
        return [(self._materialize(q), attrs)], []


def _union_branches(q: QueryExpr) -> list[QueryExpr]:
    if isinstance(q, Union):
        return _union_branches(q.left) + _union_branches(q.right)
    return [q]


def _qualify(entries: list[tuple], attr: str) -> str:
    for name, attrs in entries:
        if attrs is not None and attr in attrs:
            return name
    if len(entries) == 1:
        return entries[0][0]
    raise UnprintableQuery(f"cannot qualify {attr!r} over {[n for n, _ in entries]}")


def _render_pred(p) -> str:
    if isinstance(p, Cmp):
        return f"{p.attr} {p.op} {print_literal(p.literal)}"
    if isinstance(p, IsNull):
        return f"{p.attr} IS NULL"
    if isinstance(p, AttrEq):
        return f"{p.attr1} = {p.attr2}"
    raise UnprintableQuery(f"cannot render predicate {p!r}")


def render_sql(q: QueryExpr, view_name: str) -> str:
    """Render a derived query as SELECT ... INTO statements.

    Composite queries materialize their sub-results into temp tables named
    tmp1, tmp2, ... in order of first use, so equal queries render to
    identical text.
    """
    writer = _SqlWriter()
    writer.emit(q, view_name)
    return "\n".join(writer.statements) + "\n"
