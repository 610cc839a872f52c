"""View-schema inference and the remaining validation corners."""

from putview.parser import parse_program
from putview.relation import Column, Schema
from putview.storage import load_dir
from putview.validation import infer_view_schema, query_schema, validate
from putview.data import RIDESHARING
from putview.syntax import Base, ProjectRename


def schemas_of(db_dir):
    db, views = load_dir(RIDESHARING / db_dir)
    schemas = {name: db[name].schema for name in db.names()}
    schemas.update(views)
    return schemas


def test_infer_peer1_view_key_from_join():
    program = parse_program((RIDESHARING / "peer1.ust").read_text())
    db, _ = load_dir(RIDESHARING / "db_peer1")
    inferred = infer_view_schema(program, {n: db[n].schema for n in db.names()})
    assert inferred.name == "peer1_public"
    assert set(inferred.attrs) == {"vehicle_id", "request_id", "current_area"}
    assert inferred.key == ("vehicle_id",)
    assert inferred.column("request_id").nullable


def test_infer_peer2_key_drops_nullable_split_attr():
    program = parse_program((RIDESHARING / "peer2.ust").read_text())
    db, _ = load_dir(RIDESHARING / "db_peer2")
    inferred = infer_view_schema(program, {n: db[n].schema for n in db.names()})
    # request_id is nullable, so the key is the branches' shared key alone
    assert inferred.key == ("vehicle_id",)
    assert inferred.column("request_id").nullable


def test_infer_integrator_key_includes_split_attr():
    program = parse_program((RIDESHARING / "integrator.ust").read_text())
    db, views = load_dir(RIDESHARING / "db_mediator")
    inferred = infer_view_schema(program, {n: db[n].schema for n in db.names()})
    assert inferred.key == ("company_id", "vehicle_id")
    assert inferred.column("company_id").type == "int"
    assert not inferred.column("company_id").nullable


def test_query_schema_types_project_over_join():
    program = parse_program((RIDESHARING / "peer1.ust").read_text())
    schemas = schemas_of("db_peer1")
    check = program.root.branches[1][1]
    schema = query_schema(check.query, schemas)
    assert schema.attrs == ("vehicle_id", "current_area")
    assert schema.key == ("vehicle_id",)


def test_validate_unknown_table_and_attr():
    program = parse_program("UPDATE vid IN SOURCE nowhere WITH vehicle_id IN VIEW v")
    errors = validate(
        program, {"v": Schema("v", (Column("vehicle_id"),), ("vehicle_id",))}
    )
    assert any(e.code == "UnknownTable" for e in errors)

    program = parse_program("UPDATE nope IN SOURCE t WITH vehicle_id IN VIEW v")
    errors = validate(
        program,
        {
            "t": Schema("t", (Column("vid"),), ("vid",)),
            "v": Schema("v", (Column("vehicle_id"),), ("vehicle_id",)),
        },
    )
    assert any(e.code == "UnknownAttribute" for e in errors)


def test_validate_check_attr_mismatch():
    program = parse_program("CHECK VIEW v EQUALS SELECT vid AS a FROM t;")
    errors = validate(
        program,
        {
            "t": Schema("t", (Column("vid"),), ("vid",)),
            "v": Schema("v", (Column("a"), Column("b")), ("a",)),
        },
    )
    assert any(e.code == "AttrNotCovered" for e in errors)


def test_validate_type_mismatch_between_source_and_view():
    program = parse_program("UPDATE vid, n IN SOURCE t WITH a, b IN VIEW v")
    errors = validate(
        program,
        {
            "t": Schema("t", (Column("vid"), Column("n", "int")), ("vid",)),
            "v": Schema("v", (Column("a"), Column("b", "text")), ("a",)),
        },
    )
    assert any(e.code == "TypeMismatch" for e in errors)


def test_check_query_may_not_reference_the_view():
    program = parse_program("CHECK VIEW v EQUALS SELECT a FROM v;")
    errors = validate(program, {"v": Schema("v", (Column("a"),), ("a",))})
    assert any(e.code == "QueryError" for e in errors)


def test_validation_error_paths_name_statements():
    program = parse_program((RIDESHARING / "peer2.ust").read_text())
    schemas = schemas_of("db_peer2")
    bad = dict(schemas)
    bad["unoccupied_vehicles"] = Schema(
        "unoccupied_vehicles", (Column("vid"), Column("zone")), ("vid",)
    )
    errors = validate(program, bad)
    assert errors
    assert any("HSPLIT" in str(e) and "UPDATE" in str(e) for e in errors)
