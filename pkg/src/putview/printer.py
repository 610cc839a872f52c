"""Pretty-printer for update programs; inverse of putview.parser."""

from __future__ import annotations

from .errors import UnprintableQuery
from .relation import Value
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
    Update,
    VSplit,
    flatten_pred,
)


def print_literal(v: Value) -> str:
    if v is None:
        return "null"
    if isinstance(v, int):
        return str(v)
    return f"'{v}'"


def render_check_query(q: QueryExpr) -> str:
    """Render a query back to SELECT/FROM/WHERE text.

    Only the shape produced by parse_check_query is supported: an optional
    ConstExtend chain over a ProjectRename over optional Selects over at most
    one Join of base tables.
    """
    consts = []
    while isinstance(q, ConstExtend):
        consts.append((q.literal, q.attr))
        q = q.source
    consts.reverse()
    if not isinstance(q, ProjectRename):
        raise UnprintableQuery(f"expected a projection at the top, found {type(q).__name__}")
    pairs = q.pairs
    q = q.source
    preds = []
    while isinstance(q, Select):
        preds = flatten_pred(q.pred) + preds
        q = q.source

    conds: list[str] = []
    if isinstance(q, Base):
        tables = [q.table]
    elif isinstance(q, Join) and isinstance(q.left, Base) and isinstance(q.right, Base):
        tables = [q.left.table, q.right.table]
        conds = [f"{q.left.table}.{a} = {q.right.table}.{b}" for a, b in q.conds]
    else:
        raise UnprintableQuery("only queries over one or two base tables are printable")

    items = [src if src == dst else f"{src} AS {dst}" for src, dst in pairs]
    items += [f"{print_literal(lit)} AS {attr}" for lit, attr in consts]
    for p in preds:
        if isinstance(p, Cmp):
            conds.append(f"{p.attr} {p.op} {print_literal(p.literal)}")
        elif isinstance(p, IsNull):
            conds.append(f"{p.attr} IS NULL")
        elif isinstance(p, AttrEq):
            conds.append(f"{p.attr1} = {p.attr2}")
        else:
            raise UnprintableQuery(f"cannot print predicate {p!r}")

    text = f"SELECT {', '.join(items)} FROM {', '.join(tables)}"
    if conds:
        text += f" WHERE {' AND '.join(conds)}"
    return text


def _print_stmt(stmt: Statement, depth: int) -> list[str]:
    pad = "  " * depth
    if isinstance(stmt, Check):
        return [f"{pad}CHECK VIEW {stmt.view_name} EQUALS", f"{pad}  {render_check_query(stmt.query)};"]
    if isinstance(stmt, Update):
        return [
            f"{pad}UPDATE {', '.join(stmt.src_attrs)}",
            f"{pad}IN SOURCE {stmt.src_table}",
            f"{pad}WITH {', '.join(stmt.view_attrs)}",
            f"{pad}IN VIEW {stmt.view_name}",
        ]
    if isinstance(stmt, VSplit):
        lines = [f"{pad}VSPLIT VIEW {stmt.view_name} WITH"]
        for attrs, body in stmt.branches:
            lines.append(f"{pad}  {', '.join(attrs)} {{")
            lines.extend(_print_stmt(body, depth + 2))
            lines.append(f"{pad}  }}")
        return lines
    if isinstance(stmt, HSplit):
        lines = [f"{pad}HSPLIT VIEW {stmt.view_name} ON {stmt.split_attr}"]
        for lit, body in stmt.branches:
            lines.append(f"{pad}  {print_literal(lit)} {{")
            lines.extend(_print_stmt(body, depth + 2))
            lines.append(f"{pad}  }}")
        if stmt.otherwise is not None:
            lines.append(f"{pad}  OTHERWISE {{")
            lines.extend(_print_stmt(stmt.otherwise, depth + 2))
            lines.append(f"{pad}  }}")
        return lines
    raise TypeError(f"not a statement: {stmt!r}")


def pretty_print(program: Program) -> str:
    return "\n".join(_print_stmt(program.root, 0)) + "\n"
