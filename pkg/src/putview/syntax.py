"""ASTs for the update-strategy language and its relational-algebra queries."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Union as TUnion

from .errors import TypeMismatch, UnknownAttribute
from .relation import Row, Schema, Value, values_compare

# ---------------------------------------------------------------------------
# Predicates
# ---------------------------------------------------------------------------

CMP_OPS = ("=", "<", "<=", ">", ">=")


@dataclass(frozen=True)
class Cmp:
    """attr <op> literal. Null never satisfies a comparison."""

    attr: str
    op: str
    literal: Value

    def __post_init__(self):
        if self.op not in CMP_OPS:
            raise ValueError(f"bad comparison operator {self.op!r}")
        if self.literal is None:
            raise TypeMismatch("compare against null is always false; use IsNull")

    def compile(self, schema: Schema) -> Callable[[Row], bool]:
        i = schema.index(self.attr)
        col = schema.columns[i]
        lit_is_int = isinstance(self.literal, int)
        if (col.type == "int") != lit_is_int and col.type != "unknown":
            raise TypeMismatch(
                f"{schema.name}.{self.attr} is {col.type}, literal {self.literal!r} is not"
            )
        op, lit = self.op, self.literal
        return lambda row: values_compare(row[i], op, lit)


@dataclass(frozen=True)
class AttrEq:
    attr1: str
    attr2: str

    def compile(self, schema: Schema) -> Callable[[Row], bool]:
        i, j = schema.index(self.attr1), schema.index(self.attr2)
        return lambda row: values_compare(row[i], "=", row[j])


@dataclass(frozen=True)
class IsNull:
    attr: str

    def compile(self, schema: Schema) -> Callable[[Row], bool]:
        i = schema.index(self.attr)
        return lambda row: row[i] is None


@dataclass(frozen=True)
class And:
    preds: tuple

    def __post_init__(self):
        object.__setattr__(self, "preds", tuple(self.preds))

    def compile(self, schema: Schema) -> Callable[[Row], bool]:
        parts = [p.compile(schema) for p in self.preds]
        return lambda row: all(p(row) for p in parts)


Pred = TUnion[Cmp, AttrEq, IsNull, And]


def flatten_pred(p: Pred) -> list[Pred]:
    if isinstance(p, And):
        out: list[Pred] = []
        for q in p.preds:
            out.extend(flatten_pred(q))
        return out
    return [p]


def conjoin(preds: list[Pred]) -> Pred:
    return preds[0] if len(preds) == 1 else And(tuple(preds))


# ---------------------------------------------------------------------------
# Query expressions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Base:
    table: str


@dataclass(frozen=True)
class ProjectRename:
    source: "QueryExpr"
    pairs: tuple  # ((src, dst), ...)

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple((s, d) for s, d in self.pairs))


@dataclass(frozen=True)
class Select:
    source: "QueryExpr"
    pred: Pred


@dataclass(frozen=True)
class Join:
    left: "QueryExpr"
    right: "QueryExpr"
    conds: tuple  # ((left_attr, right_attr), ...)

    def __post_init__(self):
        object.__setattr__(self, "conds", tuple((a, b) for a, b in self.conds))


@dataclass(frozen=True)
class Union:
    left: "QueryExpr"
    right: "QueryExpr"


@dataclass(frozen=True)
class ConstExtend:
    source: "QueryExpr"
    attr: str
    literal: Value


QueryExpr = TUnion[Base, ProjectRename, Select, Join, Union, ConstExtend]


def output_attrs(q: QueryExpr) -> tuple[str, ...]:
    """Statically known output attributes; defined for every derived query.

    Base tables have no static attribute list, so a bare Base anywhere but
    under a ProjectRename makes this undefined.
    """
    if isinstance(q, ProjectRename):
        return tuple(d for _, d in q.pairs)
    if isinstance(q, Select):
        return output_attrs(q.source)
    if isinstance(q, ConstExtend):
        return output_attrs(q.source) + (q.attr,)
    if isinstance(q, Union):
        return output_attrs(q.left)
    if isinstance(q, Join):
        left = output_attrs(q.left)
        right = output_attrs(q.right)
        dropped = {b for a, b in q.conds if a == b}
        return left + tuple(a for a in right if a not in dropped)
    raise UnknownAttribute(f"no static attribute list for {q!r}")


# ---------------------------------------------------------------------------
# Update-strategy statements
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Check:
    view_name: str
    query: QueryExpr


@dataclass(frozen=True)
class Update:
    src_attrs: tuple
    src_table: str
    view_attrs: tuple
    view_name: str

    def __post_init__(self):
        object.__setattr__(self, "src_attrs", tuple(self.src_attrs))
        object.__setattr__(self, "view_attrs", tuple(self.view_attrs))


@dataclass(frozen=True)
class VSplit:
    view_name: str
    branches: tuple  # ((attrs, Statement), ...)

    def __post_init__(self):
        object.__setattr__(
            self, "branches", tuple((tuple(attrs), body) for attrs, body in self.branches)
        )


@dataclass(frozen=True)
class HSplit:
    view_name: str
    split_attr: str
    branches: tuple  # ((literal, Statement), ...)
    otherwise: Optional["Statement"] = None

    def __post_init__(self):
        object.__setattr__(
            self, "branches", tuple((lit, body) for lit, body in self.branches)
        )


Statement = TUnion[Check, Update, VSplit, HSplit]


@dataclass(frozen=True)
class Program:
    """An update strategy: a single (possibly nested) statement."""

    root: Statement

    @property
    def view_name(self) -> str:
        return self.root.view_name


def statement_label(stmt: Statement) -> str:
    if isinstance(stmt, Check):
        return f"CHECK VIEW {stmt.view_name}"
    if isinstance(stmt, Update):
        return f"UPDATE {', '.join(stmt.src_attrs)} IN SOURCE {stmt.src_table}"
    if isinstance(stmt, VSplit):
        return f"VSPLIT VIEW {stmt.view_name}"
    if isinstance(stmt, HSplit):
        return f"HSPLIT VIEW {stmt.view_name} ON {stmt.split_attr}"
    raise TypeError(f"not a statement: {stmt!r}")


# ---------------------------------------------------------------------------
# JSON codecs (wire format for queries and predicates)
# ---------------------------------------------------------------------------


def pred_to_json(p: Pred) -> dict:
    if isinstance(p, Cmp):
        return {"kind": "cmp", "attr": p.attr, "op": p.op, "value": p.literal}
    if isinstance(p, AttrEq):
        return {"kind": "attr_eq", "left": p.attr1, "right": p.attr2}
    if isinstance(p, IsNull):
        return {"kind": "is_null", "attr": p.attr}
    if isinstance(p, And):
        return {"kind": "and", "preds": [pred_to_json(q) for q in p.preds]}
    raise TypeError(f"not a predicate: {p!r}")


def pred_from_json(d: dict) -> Pred:
    kind = d.get("kind")
    if kind == "cmp":
        return Cmp(d["attr"], d["op"], d["value"])
    if kind == "attr_eq":
        return AttrEq(d["left"], d["right"])
    if kind == "is_null":
        return IsNull(d["attr"])
    if kind == "and":
        return And(tuple(pred_from_json(q) for q in d["preds"]))
    raise ValueError(f"unknown predicate kind {kind!r}")


def query_to_json(q: QueryExpr) -> dict:
    if isinstance(q, Base):
        return {"op": "base", "table": q.table}
    if isinstance(q, ProjectRename):
        return {
            "op": "project",
            "source": query_to_json(q.source),
            "pairs": [[s, d] for s, d in q.pairs],
        }
    if isinstance(q, Select):
        return {"op": "select", "source": query_to_json(q.source), "pred": pred_to_json(q.pred)}
    if isinstance(q, Join):
        return {
            "op": "join",
            "left": query_to_json(q.left),
            "right": query_to_json(q.right),
            "conds": [[a, b] for a, b in q.conds],
        }
    if isinstance(q, Union):
        return {"op": "union", "left": query_to_json(q.left), "right": query_to_json(q.right)}
    if isinstance(q, ConstExtend):
        return {
            "op": "const",
            "source": query_to_json(q.source),
            "attr": q.attr,
            "value": q.literal,
        }
    raise TypeError(f"not a query: {q!r}")


def query_from_json(d: dict) -> QueryExpr:
    op = d.get("op")
    if op == "base":
        return Base(d["table"])
    if op == "project":
        return ProjectRename(query_from_json(d["source"]), tuple((s, t) for s, t in d["pairs"]))
    if op == "select":
        return Select(query_from_json(d["source"]), pred_from_json(d["pred"]))
    if op == "join":
        return Join(
            query_from_json(d["left"]),
            query_from_json(d["right"]),
            tuple((a, b) for a, b in d["conds"]),
        )
    if op == "union":
        return Union(query_from_json(d["left"]), query_from_json(d["right"]))
    if op == "const":
        return ConstExtend(query_from_json(d["source"]), d["attr"], d["value"])
    raise ValueError(f"unknown query op {op!r}")
