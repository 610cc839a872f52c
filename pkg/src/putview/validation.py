"""Static validation of update programs against table schemas.

The checks here are the syntactic acceptance conditions: attribute existence
and typing, key coverage of UPDATE statements, full consumption of the view
attributes, split-branch coverage, and branch-literal typing. A program that
passes validation may still reject a particular view at run time; a program
that fails validation is never executed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

from .errors import PutviewError
from .relation import (
    UNKNOWN,
    Column,
    Database,
    Relation,
    Schema,
    const_extend,
    equi_join,
    project_rename,
    union,
    value_type,
)
from .query import eval_query
from .syntax import (
    Check,
    HSplit,
    Program,
    QueryExpr,
    Statement,
    Update,
    VSplit,
    statement_label,
)


@dataclass(frozen=True)
class ValidationError:
    code: str
    message: str
    path: tuple

    def __str__(self):
        where = " > ".join(self.path)
        return f"{self.code}: {self.message} [{where}]" if where else f"{self.code}: {self.message}"


def query_schema(q: QueryExpr, schemas: Mapping[str, Schema], *, name: str | None = None) -> Schema:
    """Type a query by evaluating it over empty relations."""
    empty = Database({n: Relation(s) for n, s in schemas.items()})
    schema = eval_query(q, empty).schema
    if name is not None:
        schema = Schema(name, schema.columns, schema.key)
    return schema


def vsplit_piece_schema(view: Schema, attrs: tuple[str, ...]) -> Schema:
    return project_rename(Relation(view), [(a, a) for a in attrs]).schema


def hsplit_piece_schema(view: Schema, split_attr: str) -> Schema:
    columns = tuple(c for c in view.columns if c.name != split_attr)
    if split_attr in view.key:
        remaining = tuple(k for k in view.key if k != split_attr)
        key = remaining if remaining else tuple(c.name for c in columns)
    else:
        key = view.key
    return Schema(view.name, columns, key)


def _types_compatible(a: Column, b: Column) -> bool:
    return a.type == UNKNOWN or b.type == UNKNOWN or a.type == b.type


class _Validator:
    def __init__(self, schemas: Mapping[str, Schema]):
        self.schemas = dict(schemas)
        self.errors: list[ValidationError] = []

    def error(self, code: str, message: str, path: tuple) -> None:
        self.errors.append(ValidationError(code, message, path))

    def statement(self, stmt: Statement, piece: Schema, path: tuple) -> None:
        path = path + (statement_label(stmt),)
        if isinstance(stmt, Update):
            self.update(stmt, piece, path)
        elif isinstance(stmt, Check):
            self.check(stmt, piece, path)
        elif isinstance(stmt, VSplit):
            self.vsplit(stmt, piece, path)
        elif isinstance(stmt, HSplit):
            self.hsplit(stmt, piece, path)
        else:
            raise TypeError(f"not a statement: {stmt!r}")

    def update(self, stmt: Update, piece: Schema, path: tuple) -> None:
        src = self.schemas.get(stmt.src_table)
        if src is None:
            self.error("UnknownTable", f"source table {stmt.src_table!r} not declared", path)
            return
        ok = True
        for a in stmt.src_attrs:
            if not src.has(a):
                self.error("UnknownAttribute", f"{stmt.src_table}.{a} does not exist", path)
                ok = False
        for a in stmt.view_attrs:
            if not piece.has(a):
                self.error("UnknownAttribute", f"view attribute {a!r} not in {piece.attrs}", path)
                ok = False
        if not ok:
            return
        if len(set(stmt.src_attrs)) != len(stmt.src_attrs):
            self.error("DuplicateAttribute", f"source attributes repeat: {stmt.src_attrs}", path)
        if len(set(stmt.view_attrs)) != len(stmt.view_attrs):
            self.error("DuplicateAttribute", f"view attributes repeat: {stmt.view_attrs}", path)
        missing_key = [k for k in src.key if k not in stmt.src_attrs]
        if missing_key:
            self.error(
                "KeyNotCovered",
                f"UPDATE must write the whole key of {stmt.src_table}; missing {missing_key}",
                path,
            )
        unconsumed = [a for a in piece.attrs if a not in stmt.view_attrs]
        if unconsumed:
            self.error(
                "AttrNotCovered",
                f"view attributes {unconsumed} are not consumed by the UPDATE",
                path,
            )
        for s, v in zip(stmt.src_attrs, stmt.view_attrs):
            if not _types_compatible(src.column(s), piece.column(v)):
                self.error(
                    "TypeMismatch",
                    f"{stmt.src_table}.{s} is {src.column(s).type} but view {v} is {piece.column(v).type}",
                    path,
                )

    def check(self, stmt: Check, piece: Schema, path: tuple) -> None:
        # The checked query reads the sources; the view itself is not a table.
        sources_only = {n: s for n, s in self.schemas.items() if n != stmt.view_name}
        try:
            q_schema = query_schema(stmt.query, sources_only)
        except PutviewError as exc:
            self.error("QueryError", str(exc), path)
            return
        if set(q_schema.attrs) != set(piece.attrs):
            self.error(
                "AttrNotCovered",
                f"CHECK query yields {q_schema.attrs} but the view slice has {piece.attrs}",
                path,
            )
            return
        for attr in piece.attrs:
            if not _types_compatible(q_schema.column(attr), piece.column(attr)):
                self.error(
                    "TypeMismatch",
                    f"CHECK query attribute {attr} is {q_schema.column(attr).type}, "
                    f"view declares {piece.column(attr).type}",
                    path,
                )

    def vsplit(self, stmt: VSplit, piece: Schema, path: tuple) -> None:
        covered: set[str] = set()
        for attrs, body in stmt.branches:
            unknown = [a for a in attrs if not piece.has(a)]
            if unknown:
                self.error("UnknownAttribute", f"branch attributes {unknown} not in view", path)
                continue
            covered |= set(attrs)
            self.statement(body, vsplit_piece_schema(piece, attrs), path)
        uncovered = [a for a in piece.attrs if a not in covered]
        if uncovered:
            self.error(
                "AttrNotCovered", f"no VSPLIT branch covers view attributes {uncovered}", path
            )

    def hsplit(self, stmt: HSplit, piece: Schema, path: tuple) -> None:
        if not piece.has(stmt.split_attr):
            self.error("UnknownAttribute", f"split attribute {stmt.split_attr!r} not in view", path)
            return
        col = piece.column(stmt.split_attr)
        for lit, _ in stmt.branches:
            if lit is None:
                if not col.nullable:
                    self.error(
                        "LiteralTypeMismatch",
                        f"null branch on non-nullable attribute {stmt.split_attr}",
                        path,
                    )
            elif col.type != UNKNOWN and value_type(lit) != col.type:
                self.error(
                    "LiteralTypeMismatch",
                    f"branch literal {lit!r} does not match {stmt.split_attr}:{col.type}",
                    path,
                )
        branch_piece = hsplit_piece_schema(piece, stmt.split_attr)
        for _, body in stmt.branches:
            self.statement(body, branch_piece, path)
        if stmt.otherwise is not None:
            self.statement(stmt.otherwise, piece, path)


def validate(program: Program, schemas: Mapping[str, Schema]) -> list[ValidationError]:
    """Empty list iff the program is accepted against these schemas.

    ``schemas`` must include the program's view table along with every source
    table the program names.
    """
    validator = _Validator(schemas)
    view = schemas.get(program.view_name)
    if view is None:
        validator.error(
            "UnknownView", f"view {program.view_name!r} is not declared in the schemas", ()
        )
        return validator.errors
    validator.statement(program.root, view, ())
    return validator.errors


def infer_view_schema(program: Program, schemas: Mapping[str, Schema]) -> Schema:
    """Best-effort view schema when no declaration exists.

    Projection and join key inference follow the relational operators; a
    horizontal split keys on the split attribute plus the branches' common
    key when the split column cannot be null, else on the common key alone.
    """
    schema, _ = _infer_stmt(program.root, schemas)
    return Schema(program.view_name, schema.columns, schema.key)


def _infer_stmt(stmt: Statement, schemas: Mapping[str, Schema]) -> tuple[Schema, bool]:
    """Returns (schema, key_is_inferred_not_widened)."""
    if isinstance(stmt, Update):
        src = schemas[stmt.src_table]
        rel = project_rename(
            Relation(src), list(zip(stmt.src_attrs, stmt.view_attrs)), name=stmt.view_name
        )
        return rel.schema, True
    if isinstance(stmt, Check):
        return query_schema(stmt.query, schemas, name=stmt.view_name), True
    if isinstance(stmt, VSplit):
        acc: Relation | None = None
        for attrs, body in stmt.branches:
            schema, _ = _infer_stmt(body, schemas)
            rel = Relation(Schema(stmt.view_name, schema.columns, schema.key))
            if acc is None:
                acc = rel
            else:
                shared = [a for a in acc.schema.attrs if schema.has(a)]
                acc = equi_join(acc, rel, [(a, a) for a in shared])
        assert acc is not None
        return acc.schema, True
    if isinstance(stmt, HSplit):
        branch_rels = []
        branch_keys = []
        for lit, body in stmt.branches:
            schema, _ = _infer_stmt(body, schemas)
            branch_keys.append(tuple(schema.key))
            rel = const_extend(
                Relation(Schema(stmt.view_name, schema.columns, schema.key)),
                stmt.split_attr,
                lit,
            )
            branch_rels.append(rel)
        if stmt.otherwise is not None:
            schema, _ = _infer_stmt(stmt.otherwise, schemas)
            branch_keys.append(tuple(k for k in schema.key if k != stmt.split_attr))
            branch_rels.append(Relation(Schema(stmt.view_name, schema.columns, schema.key)))
        first_attrs = branch_rels[0].schema.attrs
        acc = branch_rels[0]
        for rel in branch_rels[1:]:
            if rel.schema.attrs != first_attrs:
                rel = project_rename(rel, [(a, a) for a in first_attrs], name=stmt.view_name)
            acc = union(acc, rel)
        common = branch_keys[0] if all(k == branch_keys[0] for k in branch_keys) else None
        if common is not None:
            split_col = acc.schema.column(stmt.split_attr)
            key = ((stmt.split_attr,) if not split_col.nullable else ()) + common
            if key:
                return Schema(stmt.view_name, acc.schema.columns, key), True
        return acc.schema, False
    raise TypeError(f"not a statement: {stmt!r}")
