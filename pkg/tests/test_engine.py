import pytest

from putview.engine import (
    CHECK_FAILED,
    CONFLICTING_WRITES,
    KEY_VIOLATION,
    NOT_NULL_VIOLATION,
    ROW_NOT_COVERED,
    VIEW_NOT_JOIN_CONSISTENT,
    get_view,
    put,
)
from putview.errors import ValidationFailed
from putview.parser import parse_program
from putview.relation import Column, Database, Relation, Schema
from putview.validation import validate


def rel(name, cols, key, rows):
    return Relation(Schema(name, cols, key), frozenset(rows))


def peer1_sources(vehicle_rows):
    return Database(
        {
            "vehicles": rel(
                "vehicles",
                (Column("vid"), Column("loc"), Column("rid", nullable=True)),
                ("vid",),
                vehicle_rows,
            ),
            "area_map": rel(
                "area_map",
                (Column("loc"), Column("area")),
                ("loc",),
                {("Kanda", "Tokyo"), ("Ueno", "Tokyo"), ("Gion", "Kyoto")},
            ),
        }
    )


PEER1_VIEW_SCHEMA = Schema(
    "peer1_public",
    (Column("vehicle_id"), Column("current_area"), Column("request_id", nullable=True)),
    ("vehicle_id",),
)


def peer1_view(rows):
    return Relation(PEER1_VIEW_SCHEMA, frozenset(rows))


def test_request_id_overwrite_reaches_rid_only(peer1_program):
    sources = peer1_sources({("v1", "Kanda", "r0")})
    outcome = put(peer1_program, sources, peer1_view({("v1", "Tokyo", "r9")}))
    assert outcome.accepted
    assert outcome.sources["vehicles"].rows == {("v1", "Kanda", "r9")}
    assert outcome.sources["area_map"] == sources["area_map"]


def test_tampered_area_rejected(peer1_program):
    sources = peer1_sources({("v1", "Kanda", "r0")})
    outcome = put(peer1_program, sources, peer1_view({("v1", "Kyoto", "r0")}))
    assert not outcome.accepted
    assert outcome.reason == CHECK_FAILED
    assert any("CHECK" in step for step in outcome.path)


def test_rejection_leaves_sources_untouched(peer1_program):
    sources = peer1_sources({("v1", "Kanda", "r0")})
    before = {name: sources[name].rows for name in sources.names()}
    put(peer1_program, sources, peer1_view({("v1", "Kyoto", "r0")}))
    assert {name: sources[name].rows for name in sources.names()} == before


@pytest.mark.parametrize("fixture_db,fixture_program,view_name", [
    ("peer1_db", "peer1_program", "peer1_public"),
    ("peer2_db", "peer2_program", "peer2_public"),
    ("mediator_db", "integrator_program", "all_vehicles"),
])
def test_getput_on_sample_data(request, fixture_db, fixture_program, view_name):
    db, view_schema = request.getfixturevalue(fixture_db)
    program = request.getfixturevalue(fixture_program)
    view = get_view(program, db, view_schema=view_schema)
    outcome = put(program, db, view)
    assert outcome.accepted
    assert outcome.sources == db


def test_putget_after_accepted_edit(peer1_program, peer1_db):
    db, view_schema = peer1_db
    view = get_view(peer1_program, db, view_schema=view_schema)
    edited = Relation(
        view.schema,
        frozenset({("v1", "Tokyo", "r9") if row[0] == "v1" else row for row in view.rows}),
    )
    outcome = put(peer1_program, db, edited)
    assert outcome.accepted
    assert get_view(peer1_program, outcome.sources, view_schema=view_schema) == edited


def test_peer2_booking_moves_between_tables(peer2_program, peer2_db):
    db, view_schema = peer2_db
    view = get_view(peer2_program, db, view_schema=view_schema)
    assert ("v2", "Osaka", None) in view.rows
    edited = Relation(
        view.schema,
        frozenset({("v2", "Osaka", "r5") if row[0] == "v2" else row for row in view.rows}),
    )
    outcome = put(peer2_program, db, edited)
    assert outcome.accepted
    assert ("v2",) not in outcome.sources["unoccupied_vehicles"].by_key()
    assert outcome.sources["occupied_vehicles"].by_key()[("v2",)] == ("v2", "Osaka", "r5")


def test_update_deletes_missing_keys_and_inserts_new(peer2_program, peer2_db):
    db, view_schema = peer2_db
    view = get_view(peer2_program, db, view_schema=view_schema)
    rows = {row for row in view.rows if row[0] != "v5"} | {("v9", "Nagoya", None)}
    outcome = put(peer2_program, db, Relation(view.schema, frozenset(rows)))
    assert outcome.accepted
    unocc = outcome.sources["unoccupied_vehicles"].rows
    assert ("v9", "Nagoya") in unocc and ("v5", "Kyoto") not in unocc


def test_insert_through_peer1_rejected_by_check(peer1_program, peer1_db):
    # a brand-new view row join-checks against the original sources and fails
    db, view_schema = peer1_db
    view = get_view(peer1_program, db, view_schema=view_schema)
    outcome = put(
        peer1_program, db, Relation(view.schema, view.rows | {("v9", "Tokyo", None)})
    )
    assert not outcome.accepted
    assert outcome.reason == CHECK_FAILED


def test_vsplit_join_consistency_rejection():
    text = """VSPLIT VIEW v WITH
      k, a {
        UPDATE k, x IN SOURCE t1 WITH k, a IN VIEW v
      }
      k, b {
        UPDATE k, y IN SOURCE t2 WITH k, b IN VIEW v
      }
    """
    program = parse_program(text)
    sources = Database(
        {
            "t1": rel("t1", (Column("k"), Column("x")), ("k",), {("k1", "x1")}),
            "t2": rel("t2", (Column("k"), Column("y")), ("k",), {("k1", "y1")}),
        }
    )
    schema = Schema("v", (Column("k"), Column("a"), Column("b")), ("k", "a", "b"))
    # two rows with the same k: the pieces join back to four rows, not two
    view = Relation(schema, frozenset({("k1", "a1", "b1"), ("k1", "a2", "b2")}))
    outcome = put(program, sources, view)
    assert not outcome.accepted
    assert outcome.reason == VIEW_NOT_JOIN_CONSISTENT


def test_conflicting_writes_between_branches():
    text = """VSPLIT VIEW v WITH
      k, a {
        UPDATE k, x IN SOURCE t WITH k, a IN VIEW v
      }
      k, b {
        UPDATE k, x IN SOURCE t WITH k, b IN VIEW v
      }
    """
    program = parse_program(text)
    sources = Database({"t": rel("t", (Column("k"), Column("x")), ("k",), {("k1", "old")})})
    schema = Schema("v", (Column("k"), Column("a"), Column("b")), ("k",))
    outcome = put(program, sources, Relation(schema, frozenset({("k1", "same", "same")})))
    assert outcome.accepted
    assert outcome.sources["t"].rows == {("k1", "same")}
    outcome = put(program, sources, Relation(schema, frozenset({("k1", "one", "two")})))
    assert not outcome.accepted
    assert outcome.reason == CONFLICTING_WRITES


def test_hsplit_row_not_covered():
    text = """HSPLIT VIEW v ON tag
      'a' {
        UPDATE k IN SOURCE ta WITH k IN VIEW v
      }
    """
    program = parse_program(text)
    sources = Database({"ta": rel("ta", (Column("k"),), ("k",), set())})
    schema = Schema("v", (Column("k"), Column("tag")), ("k",))
    outcome = put(program, sources, Relation(schema, frozenset({("k1", "b")})))
    assert not outcome.accepted
    assert outcome.reason == ROW_NOT_COVERED


def test_insert_with_non_nullable_unmentioned_attr_rejected():
    program = parse_program("UPDATE k IN SOURCE t WITH k IN VIEW v")
    sources = Database(
        {"t": rel("t", (Column("k"), Column("x", nullable=False)), ("k",), {("k1", "x1")})}
    )
    schema = Schema("v", (Column("k"),), ("k",))
    outcome = put(program, sources, Relation(schema, frozenset({("k1",), ("k2",)})))
    assert not outcome.accepted
    assert outcome.reason == NOT_NULL_VIOLATION


def test_view_not_unique_on_mapped_key():
    program = parse_program("UPDATE k, x IN SOURCE t WITH k, a IN VIEW v")
    sources = Database(
        {"t": rel("t", (Column("k"), Column("x")), ("k",), {("k1", "x1")})}
    )
    schema = Schema("v", (Column("k"), Column("a")), ("k", "a"))
    view = Relation(schema, frozenset({("k1", "p"), ("k1", "q")}))
    outcome = put(program, sources, view)
    assert not outcome.accepted
    assert outcome.reason == KEY_VIOLATION


def test_put_determinism(peer1_program, peer1_db):
    db, view_schema = peer1_db
    bad = peer1_view({("v1", "Nowhere", "r1")})
    first = put(peer1_program, db, bad)
    second = put(peer1_program, db, bad)
    assert first.reason == second.reason and first.path == second.path


def test_validate_fixture_programs(peer1_program, peer2_program, integrator_program,
                                   peer1_db, peer2_db, mediator_db):
    for program, (db, view_schema) in [
        (peer1_program, peer1_db),
        (peer2_program, peer2_db),
        (integrator_program, mediator_db),
    ]:
        schemas = {name: db[name].schema for name in db.names()}
        schemas[view_schema.name] = view_schema
        assert validate(program, schemas) == []


def test_validate_update_missing_key():
    program = parse_program("UPDATE x IN SOURCE t WITH a IN VIEW v")
    schemas = {
        "t": Schema("t", (Column("k"), Column("x")), ("k",)),
        "v": Schema("v", (Column("a"),), ("a",)),
    }
    errors = validate(program, schemas)
    assert any(e.code == "KeyNotCovered" for e in errors)


def test_validate_vsplit_uncovered_attr():
    text = """VSPLIT VIEW v WITH
      k, a {
        UPDATE k, x IN SOURCE t WITH k, a IN VIEW v
      }
      k {
        UPDATE k IN SOURCE t2 WITH k IN VIEW v
      }
    """
    schemas = {
        "t": Schema("t", (Column("k"), Column("x")), ("k",)),
        "t2": Schema("t2", (Column("k"),), ("k",)),
        "v": Schema("v", (Column("k"), Column("a"), Column("b")), ("k",)),
    }
    errors = validate(parse_program(text), schemas)
    assert any(e.code == "AttrNotCovered" for e in errors)


def test_put_refuses_invalid_program():
    program = parse_program("UPDATE x IN SOURCE t WITH a IN VIEW v")
    sources = Database({"t": rel("t", (Column("k"), Column("x")), ("k",), {("k1", "x1")})})
    view = Relation(Schema("v", (Column("a"),), ("a",)), frozenset())
    with pytest.raises(ValidationFailed):
        put(program, sources, view)


def test_hsplit_literal_type_checked():
    text = """HSPLIT VIEW v ON n
      'x' {
        UPDATE k IN SOURCE t WITH k IN VIEW v
      }
      OTHERWISE {
        UPDATE k, n IN SOURCE t2 WITH k, n IN VIEW v
      }
    """
    schemas = {
        "t": Schema("t", (Column("k"),), ("k",)),
        "t2": Schema("t2", (Column("k"), Column("n", "int")), ("k",)),
        "v": Schema("v", (Column("k"), Column("n", "int")), ("k",)),
    }
    errors = validate(parse_program(text), schemas)
    assert any(e.code == "LiteralTypeMismatch" for e in errors)
