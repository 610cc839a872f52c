"""Hand-written recursive-descent parser for the update-strategy language.

Keywords are upper-case and case-sensitive; ``null``/``NULL`` is the null
literal; text literals use single quotes. A program is one statement, with
sequencing expressed by nesting splits.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import ArityMismatch, DuplicateBranchLiteral, ProgramSyntaxError
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
    Pred,
    Program,
    ProjectRename,
    QueryExpr,
    Select,
    Statement,
    Update,
    VSplit,
    conjoin,
)

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<int>-?\d+)
  | (?P<text>'[^']*')
  | (?P<ident>[a-zA-Z_][a-zA-Z0-9_]*)
  | (?P<op><=|>=|=|<|>)
  | (?P<punc>[{},;().*])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str  # IDENT | INT | TEXT | NULL | OP | PUNC | EOF
    value: str
    line: int
    column: int


def _tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    line, col = 1, 1
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ProgramSyntaxError(f"unexpected character {text[pos]!r}", line, col)
        lexeme = m.group(0)
        kind = m.lastgroup
        if kind != "ws":
            if kind == "ident" and lexeme in ("null", "NULL"):
                tokens.append(Token("NULL", lexeme, line, col))
            else:
                tokens.append(Token(kind.upper(), lexeme, line, col))
        newlines = lexeme.count("\n")
        if newlines:
            line += newlines
            col = len(lexeme) - lexeme.rfind("\n")
        else:
            col += len(lexeme)
        pos = m.end()
    tokens.append(Token("EOF", "", line, col))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.pos = 0

    # -- token helpers ------------------------------------------------------

    def peek(self, ahead: int = 0) -> Token:
        return self.tokens[min(self.pos + ahead, len(self.tokens) - 1)]

    def next(self) -> Token:
        tok = self.tokens[self.pos]
        if tok.kind != "EOF":
            self.pos += 1
        return tok

    def fail(self, message: str, tok: Token | None = None):
        tok = tok or self.peek()
        raise ProgramSyntaxError(message, tok.line, tok.column)

    def expect(self, kind: str, value: str | None = None) -> Token:
        tok = self.peek()
        if tok.kind != kind or (value is not None and tok.value != value):
            want = value if value is not None else kind
            self.fail(f"expected {want!r}, found {tok.value!r}" if tok.value else f"expected {want!r}")
        return self.next()

    def expect_kw(self, word: str) -> Token:
        return self.expect("IDENT", word)

    def at_kw(self, word: str) -> bool:
        tok = self.peek()
        return tok.kind == "IDENT" and tok.value == word

    def ident(self) -> str:
        return self.expect("IDENT").value

    def literal(self) -> Value:
        tok = self.peek()
        if tok.kind == "NULL":
            self.next()
            return None
        if tok.kind == "INT":
            self.next()
            return int(tok.value)
        if tok.kind == "TEXT":
            self.next()
            return tok.value[1:-1]
        self.fail(f"expected a literal, found {tok.value!r}")

    def attr_list(self) -> tuple[str, ...]:
        attrs = [self.ident()]
        while self.peek().kind == "PUNC" and self.peek().value == ",":
            self.next()
            attrs.append(self.ident())
        return tuple(attrs)

    # -- statements ---------------------------------------------------------

    def statement(self) -> Statement:
        tok = self.peek()
        if tok.kind != "IDENT":
            self.fail(f"expected a statement, found {tok.value!r}")
        if tok.value == "CHECK":
            return self.check_stmt()
        if tok.value == "UPDATE":
            return self.update_stmt()
        if tok.value == "VSPLIT":
            return self.vsplit_stmt()
        if tok.value == "HSPLIT":
            return self.hsplit_stmt()
        self.fail(f"expected CHECK, UPDATE, VSPLIT or HSPLIT, found {tok.value!r}")

    def check_stmt(self) -> Check:
        self.expect_kw("CHECK")
        self.expect_kw("VIEW")
        view = self.ident()
        self.expect_kw("EQUALS")
        query = self.select_query()
        self.expect("PUNC", ";")
        return Check(view, query)

    def update_stmt(self) -> Update:
        tok = self.peek()
        self.expect_kw("UPDATE")
        src_attrs = self.attr_list()
        self.expect_kw("IN")
        self.expect_kw("SOURCE")
        src_table = self.ident()
        self.expect_kw("WITH")
        view_attrs = self.attr_list()
        self.expect_kw("IN")
        self.expect_kw("VIEW")
        view = self.ident()
        if len(src_attrs) != len(view_attrs):
            raise ArityMismatch(
                f"UPDATE lists {len(src_attrs)} source attributes but "
                f"{len(view_attrs)} view attributes (line {tok.line})"
            )
        return Update(src_attrs, src_table, view_attrs, view)

    def vsplit_stmt(self) -> VSplit:
        self.expect_kw("VSPLIT")
        self.expect_kw("VIEW")
        view = self.ident()
        self.expect_kw("WITH")
        branches = []
        while self.peek().kind == "IDENT" and not self.at_kw("OTHERWISE"):
            # A branch starts with an attribute list; statements keywords
            # cannot start one because a '{' must follow the list.
            attrs = self.attr_list()
            self.expect("PUNC", "{")
            body = self.statement()
            self.expect("PUNC", "}")
            branches.append((attrs, body))
        if len(branches) < 2:
            self.fail(f"VSPLIT VIEW {view} needs at least two branches")
        stmt = VSplit(view, tuple(branches))
        self._check_view_references(stmt, view)
        return stmt

    def hsplit_stmt(self) -> HSplit:
        self.expect_kw("HSPLIT")
        self.expect_kw("VIEW")
        view = self.ident()
        self.expect_kw("ON")
        split_attr = self.ident()
        branches = []
        seen: list[Value] = []
        while self.peek().kind in ("NULL", "INT", "TEXT"):
            lit = self.literal()
            if lit in seen:
                raise DuplicateBranchLiteral(
                    f"HSPLIT VIEW {view} repeats branch literal {lit!r}"
                )
            seen.append(lit)
            self.expect("PUNC", "{")
            body = self.statement()
            self.expect("PUNC", "}")
            branches.append((lit, body))
        if not branches:
            self.fail(f"HSPLIT VIEW {view} needs at least one literal branch")
        otherwise = None
        if self.at_kw("OTHERWISE"):
            self.next()
            self.expect("PUNC", "{")
            otherwise = self.statement()
            self.expect("PUNC", "}")
        stmt = HSplit(view, split_attr, tuple(branches), otherwise)
        self._check_view_references(stmt, view)
        return stmt

    def _check_view_references(self, stmt: Statement, view: str) -> None:
        bodies = []
        if isinstance(stmt, VSplit):
            bodies = [b for _, b in stmt.branches]
        elif isinstance(stmt, HSplit):
            bodies = [b for _, b in stmt.branches]
            if stmt.otherwise is not None:
                bodies.append(stmt.otherwise)
        for body in bodies:
            if body.view_name != view:
                self.fail(
                    f"branch of {view} references view {body.view_name!r}; "
                    f"every statement inside a split must name the split's view"
                )

    # -- check-query sublanguage ---------------------------------------------

    def qualified_attr(self) -> tuple[str | None, str]:
        first = self.ident()
        if self.peek().kind == "PUNC" and self.peek().value == ".":
            self.next()
            return first, self.ident()
        return None, first

    def select_query(self) -> QueryExpr:
        self.expect_kw("SELECT")
        attr_items: list[tuple[str | None, str, str]] = []  # (qualifier, src, dst)
        const_items: list[tuple[Value, str]] = []
        while True:
            tok = self.peek()
            if tok.kind in ("NULL", "INT", "TEXT"):
                lit = self.literal()
                self.expect_kw("AS")
                const_items.append((lit, self.ident()))
            else:
                qual, attr = self.qualified_attr()
                dst = attr
                if self.at_kw("AS"):
                    self.next()
                    dst = self.ident()
                attr_items.append((qual, attr, dst))
            if self.peek().kind == "PUNC" and self.peek().value == ",":
                self.next()
                continue
            break
        if not attr_items:
            self.fail("SELECT needs at least one attribute item")
        self.expect_kw("FROM")
        tables = [self.ident()]
        while self.peek().kind == "PUNC" and self.peek().value == ",":
            self.next()
            tables.append(self.ident())
        if len(tables) != len(set(tables)):
            self.fail(f"FROM lists a table twice: {tables}")

        join_conds: list[tuple[str, str, str, str]] = []  # (tab1, a1, tab2, a2)
        preds: list[Pred] = []
        if self.at_kw("WHERE"):
            self.next()
            while True:
                self._where_cond(tables, join_conds, preds)
                if self.at_kw("AND"):
                    self.next()
                    continue
                break

        query = self._fold_from(tables, join_conds)
        if preds:
            query = Select(query, conjoin(preds))
        pairs = []
        for qual, src, dst in attr_items:
            if qual is not None and qual not in tables:
                self.fail(f"{qual}.{src} names a table not in FROM")
            pairs.append((src, dst))
        query = ProjectRename(query, tuple(pairs))
        for lit, dst in const_items:
            query = ConstExtend(query, dst, lit)
        return query

    def _where_cond(self, tables, join_conds, preds) -> None:
        tok = self.peek()
        qual, attr = self.qualified_attr()
        if qual is not None and qual not in tables:
            self.fail(f"{qual}.{attr} names a table not in FROM", tok)
        if self.at_kw("IS"):
            self.next()
            self.expect("NULL")
            preds.append(IsNull(attr))
            return
        op_tok = self.expect("OP")
        nxt = self.peek()
        if nxt.kind in ("NULL", "INT", "TEXT"):
            lit = self.literal()
            if lit is None:
                self.fail("compare against null is always false; use IS NULL", nxt)
            preds.append(Cmp(attr, op_tok.value, lit))
            return
        qual2, attr2 = self.qualified_attr()
        if qual2 is not None and qual2 not in tables:
            self.fail(f"{qual2}.{attr2} names a table not in FROM", nxt)
        if op_tok.value != "=":
            self.fail("only '=' may compare two attributes", op_tok)
        if qual is not None and qual2 is not None and qual != qual2:
            join_conds.append((qual, attr, qual2, attr2))
        else:
            preds.append(AttrEq(attr, attr2))

    def _fold_from(self, tables: list[str], join_conds) -> QueryExpr:
        query: QueryExpr = Base(tables[0])
        joined = {tables[0]}
        remaining = list(join_conds)
        for table in tables[1:]:
            conds = []
            rest = []
            for (t1, a1, t2, a2) in remaining:
                if t2 == table and t1 in joined:
                    conds.append((a1, a2))
                elif t1 == table and t2 in joined:
                    conds.append((a2, a1))
                else:
                    rest.append((t1, a1, t2, a2))
            remaining = rest
            query = Join(query, Base(table), tuple(conds))
            joined.add(table)
        for (t1, a1, t2, a2) in remaining:
            self.fail(f"join condition {t1}.{a1} = {t2}.{a2} does not link new tables")
        return query


def parse_program(text: str) -> Program:
    parser = _Parser(text)
    stmt = parser.statement()
    parser.expect("EOF")
    return Program(stmt)


def parse_check_query(text: str) -> QueryExpr:
    parser = _Parser(text)
    query = parser.select_query()
    if parser.peek().kind == "PUNC" and parser.peek().value == ";":
        parser.next()
    parser.expect("EOF")
    return query
