"""Property test: parse(pretty_print(program)) is the identity on ASTs."""

from hypothesis import given, settings
from hypothesis import strategies as st

from putview.parser import parse_program
from putview.printer import pretty_print
from putview.syntax import (
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
    Select,
    Update,
    VSplit,
    conjoin,
)

ident = st.from_regex(r"[a-z][a-z0-9_]{0,4}", fullmatch=True).filter(lambda s: s != "null")
literal = st.one_of(
    st.none(),
    st.integers(-99, 99),
    st.from_regex(r"[a-zA-Z0-9_ ]{1,6}", fullmatch=True),
)


@st.composite
def update_stmt(draw, view):
    n = draw(st.integers(1, 3))
    src_attrs = draw(st.lists(ident, min_size=n, max_size=n, unique=True))
    view_attrs = draw(st.lists(ident, min_size=n, max_size=n, unique=True))
    table = draw(ident)
    return Update(tuple(src_attrs), table, tuple(view_attrs), view)


@st.composite
def check_stmt(draw, view):
    tables = draw(st.lists(ident, min_size=1, max_size=2, unique=True))
    pool = draw(st.lists(ident, min_size=1, max_size=3, unique=True))
    pairs = []
    for attr in pool:
        dst = draw(st.one_of(st.just(attr), ident))
        if dst in [d for _, d in pairs]:
            dst = attr
        if attr == dst or dst not in [d for _, d in pairs]:
            pairs.append((attr, dst))
    taken = {d for _, d in pairs}
    consts = []
    for lit in draw(st.lists(literal, max_size=2)):
        name = draw(ident)
        if name not in taken:
            taken.add(name)
            consts.append((lit, name))

    query = Base(tables[0])
    if len(tables) == 2:
        conds = tuple(
            (draw(ident), draw(ident)) for _ in range(draw(st.integers(0, 2)))
        )
        query = Join(query, Base(tables[1]), conds)
    preds = []
    for _ in range(draw(st.integers(0, 2))):
        kind = draw(st.integers(0, 2))
        if kind == 0:
            lit = draw(st.one_of(st.integers(-99, 99), st.from_regex(r"[a-z]{1,4}", fullmatch=True)))
            preds.append(Cmp(draw(ident), draw(st.sampled_from(["=", "<", "<=", ">", ">="])), lit))
        elif kind == 1:
            preds.append(IsNull(draw(ident)))
        else:
            preds.append(AttrEq(draw(ident), draw(ident)))
    if preds:
        query = Select(query, conjoin(preds))
    query = ProjectRename(query, tuple(pairs))
    for lit, name in consts:
        query = ConstExtend(query, name, lit)
    return Check(view, query)


def statement(view, depth):
    leaf = st.one_of(update_stmt(view), check_stmt(view))
    if depth <= 0:
        return leaf
    return st.one_of(leaf, vsplit_stmt(view, depth - 1), hsplit_stmt(view, depth - 1))


@st.composite
def vsplit_stmt(draw, view, depth):
    n = draw(st.integers(2, 3))
    branches = []
    for _ in range(n):
        attrs = draw(st.lists(ident, min_size=1, max_size=3, unique=True))
        body = draw(statement(view, depth))
        branches.append((tuple(attrs), body))
    return VSplit(view, tuple(branches))


@st.composite
def hsplit_stmt(draw, view, depth):
    split_attr = draw(ident)
    lits = draw(st.lists(literal, min_size=1, max_size=3, unique_by=lambda v: (type(v).__name__, v)))
    branches = tuple((lit, draw(statement(view, depth))) for lit in lits)
    otherwise = draw(st.one_of(st.none(), statement(view, depth)))
    return HSplit(view, split_attr, branches, otherwise)


@st.composite
def programs(draw):
    view = draw(ident)
    return Program(draw(statement(view, 2)))


@settings(max_examples=120, deadline=None)
@given(programs())
def test_parse_inverts_pretty_print(program):
    assert parse_program(pretty_print(program)) == program


@settings(max_examples=60, deadline=None)
@given(programs())
def test_pretty_print_idempotent_on_text(program):
    text = pretty_print(program)
    assert pretty_print(parse_program(text)) == text
