"""Acceptance gate: one test per shipping criterion, each printing a verdict.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines. Every tolerance is exact: set equality on relations, cent-exact
payments, byte-identical traces, and hard wall-clock budgets.
"""

import json
import random
import time
from contextlib import contextmanager

import pytest

from putview.data import DOMAINS, RIDESHARING, TRAJECTORIES
from putview.derive import derive_query
from putview.engine import get_view, put
from putview.federation import run_scenario, trace_to_jsonl
from putview.incremental import inc_get, inc_put
from putview.laws import check_roundtrip, check_validity_exhaustive
from putview.parser import parse_program
from putview.query import (
    PER_LINEAGE,
    PER_TUPLE,
    ReadCounter,
    distribute_payment,
    eval_query,
    eval_with_lineage,
)
from putview.relation import (
    Column,
    Database,
    Delta,
    Relation,
    Schema,
    apply_delta,
    diff,
    rows_match,
)
from putview.service.ops import parse_query_input
from putview.storage import load_dir
from putview.syntax import Base, ConstExtend, Join, ProjectRename, Union


@contextmanager
def criterion(number, description):
    try:
        yield
    except BaseException:
        print(f"ACCEPTANCE {number} [{description}]: FAIL")
        raise
    print(f"ACCEPTANCE {number} [{description}]: PASS")


def program(name):
    return parse_program((RIDESHARING / name).read_text())


def fixture_db(name):
    return load_dir(RIDESHARING / name)


# --- criterion 1 -----------------------------------------------------------

PEER1_GOLDEN = ProjectRename(
    Join(Base("vehicles"), Base("area_map"), (("loc", "loc"),)),
    (("vid", "vehicle_id"), ("area", "current_area"), ("rid", "request_id")),
)
PEER2_GOLDEN = Union(
    ConstExtend(
        ProjectRename(
            Base("unoccupied_vehicles"), (("vid", "vehicle_id"), ("area", "current_area"))
        ),
        "request_id",
        None,
    ),
    ProjectRename(
        Base("occupied_vehicles"),
        (("vid", "vehicle_id"), ("area", "current_area"), ("rid", "request_id")),
    ),
)
INTEGRATOR_GOLDEN = Union(
    ConstExtend(
        ProjectRename(
            Base("peer1_public"),
            tuple((a, a) for a in ("vehicle_id", "current_area", "request_id")),
        ),
        "company_id",
        1,
    ),
    ConstExtend(
        ProjectRename(
            Base("peer2_public"),
            tuple((a, a) for a in ("vehicle_id", "current_area", "request_id")),
        ),
        "company_id",
        2,
    ),
)


def _db_variants(db, table, extra_rows):
    schema = db[table].schema
    yield db
    yield db.with_table(Relation(schema))
    yield db.with_table(Relation(schema, frozenset(extra_rows)))


def test_criterion_1_query_derivation_fidelity():
    with criterion(1, "derived queries match the hand-written ones on all fixtures"):
        start = time.monotonic()
        cases = [
            ("peer1.ust", PEER1_GOLDEN, "db_peer1", "vehicles",
             {("v7", "Gion", "r7"), ("v8", "Ueno", None)}),
            ("peer2.ust", PEER2_GOLDEN, "db_peer2", "unoccupied_vehicles",
             {("v7", "Nagoya"), ("v8", "Osaka")}),
            ("integrator.ust", INTEGRATOR_GOLDEN, "db_mediator", "peer2_public",
             {("v7", "Nagoya", "r7"), ("v8", "Osaka", None)}),
        ]
        for prog_name, golden, db_name, table, extra in cases:
            derived = derive_query(program(prog_name))
            db, _ = fixture_db(db_name)
            count = 0
            for variant in _db_variants(db, table, extra):
                assert rows_match(eval_query(derived, variant), eval_query(golden, variant))
                count += 1
            assert count >= 3
        elapsed = time.monotonic() - start
        assert elapsed < 1.0, f"took {elapsed:.3f}s, budget is 1s"


# --- criterion 2 -----------------------------------------------------------


def test_criterion_2_putback_examples():
    with criterion(2, "request-id overwrite reaches rid with loc untouched; tamper rejected"):
        p1 = program("peer1.ust")
        db, views = fixture_db("db_peer1")
        view_schema = views["peer1_public"]
        view = get_view(p1, db, view_schema=view_schema)
        edited = Relation(
            view.schema,
            frozenset(
                ("v1", "Tokyo", "new_id") if row[0] == "v1" else row for row in view.rows
            ),
        )
        outcome = put(p1, db, edited)
        assert outcome.accepted
        assert outcome.sources["vehicles"].by_key()[("v1",)] == ("v1", "Kanda", "new_id")
        assert outcome.sources["area_map"] == db["area_map"]

        tampered = Relation(
            view.schema,
            frozenset(
                ("v1", "Osaka", "r1") if row[0] == "v1" else row for row in view.rows
            ),
        )
        rejected = put(p1, db, tampered)
        assert not rejected.accepted and rejected.reason == "CheckFailed"


# --- criterion 3 -----------------------------------------------------------


def test_criterion_3_incremental_get_insert_example():
    with criterion(3, "source insert propagates to exactly one area-joined view insert"):
        p1 = program("peer1.ust")
        db, _ = fixture_db("db_peer1")
        q = derive_query(p1)
        w = {"vehicles": Delta(frozenset({("new_vid", "Kanda", "new_rid")}), frozenset())}
        d = inc_get(q, db, w)
        assert len(d.inserts) == 1 and not d.deletes
        row = next(iter(d.inserts))
        attrs = ("vehicle_id", "request_id", "current_area")  # derived attribute order
        named = dict(zip(attrs, row))
        assert named == {
            "vehicle_id": "new_vid",
            "request_id": "new_rid",
            "current_area": "Tokyo",
        }


# --- criterion 4 -----------------------------------------------------------

ROUNDTRIP_FIXTURES = [
    ("peer1.ust", "db_peer1", "peer1_public"),
    ("peer2.ust", "db_peer2", "peer2_public"),
    ("integrator.ust", "db_mediator", "all_vehicles"),
    ("integrator3.ust", "db_mediator", "all_vehicles"),
]


def test_criterion_4_roundtrip_laws():
    with criterion(4, "GetPut and PutGet hold over >=200 accepted edits per program"):
        for prog_name, db_name, view_name in ROUNDTRIP_FIXTURES:
            db, views = fixture_db(db_name)
            report = check_roundtrip(
                program(prog_name), db, views[view_name], trials=200, seed=1729
            )
            assert report.accepted >= 200, (prog_name, report.to_json())
            assert report.failures == [], (prog_name, report.to_json())


# --- criterion 5 -----------------------------------------------------------


def test_criterion_5_validity_theorem_checks():
    with criterion(5, "exhaustive validity holds; key-free update breaks determination"):
        start = time.monotonic()
        for prog_name, db_name, view_name, domain_file in [
            ("peer1.ust", "db_peer1", "peer1_public", "peer1_domain.json"),
            ("peer2.ust", "db_peer2", "peer2_public", "peer2_domain.json"),
            ("integrator.ust", "db_mediator", "all_vehicles", "integrator_domain.json"),
        ]:
            db, views = fixture_db(db_name)
            domain = json.loads((DOMAINS / domain_file).read_text())
            report = check_validity_exhaustive(program(prog_name), db, views[view_name], domain)
            assert report.ok, (prog_name, report.to_json())

        broken = parse_program("UPDATE loc IN SOURCE vehicles WITH l IN VIEW broken")
        schema_t = Schema("vehicles", (Column("vid"), Column("loc")), ("vid",))
        schema_v = Schema("broken", (Column("vehicle_id"), Column("l")), ("vehicle_id",))
        report = check_validity_exhaustive(
            broken,
            Database({"vehicles": Relation(schema_t)}),
            schema_v,
            {"vid": ["v1"], "loc": ["Kanda", "Ueno"],
             "vehicle_id": ["v1", "v2"], "l": ["Kanda", "Ueno"]},
        )
        assert not report.view_determined
        assert report.determination_counterexample is not None
        elapsed = time.monotonic() - start
        assert elapsed < 60.0, f"took {elapsed:.1f}s, budget is 60s"


# --- criterion 6 -----------------------------------------------------------

AREAS = ["Tokyo", "Kyoto", "Osaka", "Nagoya"]
RIDS = [None, "r1", "r2", "r3"]


def _random_edit(rng, view, schema, updatable):
    rows = sorted(view.rows)
    kind = rng.random()
    if rows and kind < 0.6:
        row = list(rng.choice(rows))
        attr = rng.choice(updatable)
        i = schema.index(attr)
        col = schema.columns[i]
        pool = AREAS if "area" in attr else RIDS
        pool = [v for v in pool if col.nullable or v is not None]
        row[i] = rng.choice(pool)
        key_idx = schema.key_indexes()
        target = tuple(row[j] for j in key_idx)
        kept = {r for r in view.rows if tuple(r[j] for j in key_idx) != target}
        return Delta.normalized({tuple(row)}, view.rows - kept)
    if rows and kind < 0.8:
        return Delta(frozenset(), frozenset({tuple(rng.choice(rows))}))
    values = []
    for col in schema.columns:
        if col.name in schema.key:
            values.append(rng.randrange(1, 3) if col.type == "int" else f"z{rng.randrange(200)}")
        elif "area" in col.name:
            values.append(rng.choice(AREAS))
        else:
            values.append(rng.choice([v for v in RIDS if col.nullable or v is not None]))
    new_row = tuple(values)
    key_idx = schema.key_indexes()
    if any(tuple(r[j] for j in key_idx) == tuple(new_row[j] for j in key_idx) for r in view.rows):
        return Delta.empty()
    return Delta(frozenset({new_row}), frozenset())


def test_criterion_6_incremental_full_equivalence_and_efficiency():
    with criterion(6, ">=500 random deltas agree with full recomputation; fewer rows read"):
        for prog_name, db_name, view_name, updatable in [
            ("peer1.ust", "db_peer1", "peer1_public", ["request_id"]),
            ("peer2.ust", "db_peer2", "peer2_public", ["current_area", "request_id"]),
            ("integrator.ust", "db_mediator", "all_vehicles", ["current_area", "request_id"]),
            ("integrator3.ust", "db_mediator", "all_vehicles", ["current_area", "request_id"]),
        ]:
            prog = program(prog_name)
            db, views = fixture_db(db_name)
            view_schema = views[view_name]
            rng = random.Random(975)
            checked = 0
            attempts = 0
            while checked < 500 and attempts < 20000:
                attempts += 1
                view = get_view(prog, db, view_schema=view_schema)
                try:
                    u = _random_edit(rng, view, view_schema, updatable)
                    apply_delta(view, u)
                except Exception:
                    continue
                if u.is_empty():
                    continue
                inc = inc_put(prog, db, view, u)
                full = put(prog, db, apply_delta(view, u))
                assert inc.accepted == full.accepted, (prog_name, u)
                if full.accepted:
                    for table in db.names():
                        assert inc.deltas.get(table, Delta.empty()) == diff(
                            db[table], full.sources[table]
                        ), (prog_name, table)
                    db = full.sources
                else:
                    assert inc.reason == full.reason, (prog_name, u)
                checked += 1
            assert checked >= 500, f"{prog_name}: only {checked} deltas exercised"

        # efficiency on the single-row-edit benchmark
        prog = program("peer1.ust")
        db, views = fixture_db("db_peer1")
        view = get_view(prog, db, view_schema=views["peer1_public"])
        u = Delta(
            frozenset({("v1", "Tokyo", "bench")}), frozenset({("v1", "Tokyo", "r1")})
        )
        inc = inc_put(prog, db, view, u)
        counter = ReadCounter()
        put(prog, db, apply_delta(view, u), counter=counter)
        assert inc.accepted
        assert inc.source_rows_read < counter.rows_read, (
            inc.source_rows_read, counter.rows_read
        )


# --- criterion 7 -----------------------------------------------------------


def test_criterion_7_lineage_payments():
    with criterion(7, "$30 splits to u1:$21/u2:$9 per-tuple and u1:$20/u2:$10 per-lineage"):
        db, _ = load_dir(TRAJECTORIES)
        query = parse_query_input(json.loads((TRAJECTORIES / "query.json").read_text()))
        owners = json.loads((TRAJECTORIES / "owners.json").read_text())
        lr = eval_with_lineage(query, db)
        assert len(lr.relation) == 5
        assert len(lr.all_tids()) == 6
        assert distribute_payment(lr, 3000, PER_TUPLE, owners) == {"u1": 2100, "u2": 900}
        assert distribute_payment(lr, 3000, PER_LINEAGE, owners) == {"u1": 2000, "u2": 1000}


# --- criterion 8 -----------------------------------------------------------


def test_criterion_8_federation_advanced_scenario():
    with criterion(8, "advanced scenario: vanish/invisible/appear, retry, privacy, < 5s"):
        start = time.monotonic()
        trace = run_scenario(RIDESHARING / "advanced.json", compare_full=True)
        elapsed = time.monotonic() - start

        def entries(kind, step=None):
            return [
                e for e in trace
                if e["type"] == kind and (step is None or e["step"] == step)
            ]

        # retry loop: first candidate rejected, second succeeds
        attempts = entries("booking_attempt", step=1)
        assert [a["company"] for a in attempts] == [1, 2]
        assert entries("rollback", step=1)[0]["reason"] == "CheckFailed"
        result = entries("booking_result", step=1)[0]
        assert result["outcome"] == "booked" and result["company"] == 2

        # booked car vanished from the empty-car integrated view
        booked_delta = [e for e in entries("put", step=1)]  # commit happened
        commit = entries("commit", step=1)
        assert commit
        vanish = [
            e for e in trace
            if e["step"] == 1 and e["type"] == "connector" and e["direction"] == "to_peer"
        ]
        assert vanish[-1]["view_delta"]["deletes"] == [["b1", "Tokyo"]]

        # occupied-car changes invisible to the mediator (steps 2 and 3)
        for step_no in (2, 3):
            assert entries("integrated_update", step=step_no)[0]["view_delta"] == {
                "inserts": [], "deletes": [],
            }

        # freed car appears (step 6)
        assert entries("integrated_update", step=6)[0]["view_delta"]["inserts"] == [
            [2, "b3", "Nagoya"]
        ]

        # quiescence verified after every event by construction; spot-check digests
        assert entries("quiescence")

        # privacy: precise locations never cross the connector
        text = trace_to_jsonl(trace)
        for loc in ("Kanda", "Ueno", "Gion", "Arashiyama"):
            assert loc not in text

        # atomicity: the rejected attempt left no residue; replay is identical
        assert trace_to_jsonl(run_scenario(RIDESHARING / "advanced.json")) == text
        assert elapsed < 5.0, f"took {elapsed:.1f}s, budget is 5s"
