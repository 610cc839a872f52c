import json

import pytest

from putview.data import TRAJECTORIES
from putview.errors import EmptyAnswer
from putview.parser import parse_check_query
from putview.query import (
    PER_LINEAGE,
    PER_TUPLE,
    distribute_payment,
    eval_query,
    eval_with_lineage,
    tid_string,
)
from putview.relation import Column, Database, Relation, Schema
from putview.syntax import Base, Union


@pytest.fixture()
def answer_query():
    parts = [parse_check_query(text) for text in json.loads((TRAJECTORIES / "query.json").read_text())]
    q = parts[0]
    for part in parts[1:]:
        q = Union(q, part)
    return q


OWNERS = {"R1": "u1", "R2": "u2"}


def test_base_eval_is_identity(trajectories_db):
    assert eval_query(Base("R1"), trajectories_db) == trajectories_db["R1"]


def test_select_id_below_101_over_union_yields_first_table(trajectories_db):
    from putview.syntax import Cmp, Select

    q = Select(Union(Base("R1"), Base("R2")), Cmp("id", "<", 101))
    assert eval_query(q, trajectories_db).rows == trajectories_db["R1"].rows


def test_answer_rows(answer_query, trajectories_db):
    result = eval_query(answer_query, trajectories_db)
    assert result.sorted_rows() == [
        ("10:00", "Oike"),
        ("10:30", "Chionin"),
        ("11:00", "Oike"),
        ("11:00", "Yasaka"),
        ("11:30", "Gion"),
    ]


def test_lineage_rows_match_eval(answer_query, trajectories_db):
    lr = eval_with_lineage(answer_query, trajectories_db)
    assert lr.relation.rows == eval_query(answer_query, trajectories_db).rows


def test_lineage_of_collapsed_row(answer_query, trajectories_db):
    lr = eval_with_lineage(answer_query, trajectories_db)
    assert lr.lineage[("10:00", "Oike")] == {("R1", (1, "10:00")), ("R2", (101, "10:00"))}
    assert lr.lineage[("10:30", "Chionin")] == {("R1", (1, "10:30"))}
    assert len(lr.all_tids()) == 6


def test_singleton_lineage_without_collapse(trajectories_db):
    q = parse_check_query("SELECT id, time, location FROM R1")
    lr = eval_with_lineage(q, trajectories_db)
    assert all(len(tids) == 1 for tids in lr.lineage.values())


def test_self_union_keeps_lineage(trajectories_db):
    q = Base("R1")
    doubled = eval_with_lineage(Union(q, q), trajectories_db)
    single = eval_with_lineage(q, trajectories_db)
    assert dict(doubled.lineage) == dict(single.lineage)


def test_join_lineage_unions_sides(peer1_db):
    db, _ = peer1_db
    q = parse_check_query(
        "SELECT vid, area FROM vehicles, area_map WHERE vehicles.loc = area_map.loc"
    )
    lr = eval_with_lineage(q, db)
    assert lr.lineage[("v1", "Tokyo")] == {
        ("vehicles", ("v1",)),
        ("area_map", ("Kanda",)),
    }


def test_payment_per_tuple_reference_split(answer_query, trajectories_db):
    lr = eval_with_lineage(answer_query, trajectories_db)
    assert distribute_payment(lr, 3000, PER_TUPLE, OWNERS) == {"u1": 2100, "u2": 900}


def test_payment_per_lineage_reference_split(answer_query, trajectories_db):
    lr = eval_with_lineage(answer_query, trajectories_db)
    assert distribute_payment(lr, 3000, PER_LINEAGE, OWNERS) == {"u1": 2000, "u2": 1000}


def test_payment_zero_total(answer_query, trajectories_db):
    lr = eval_with_lineage(answer_query, trajectories_db)
    assert distribute_payment(lr, 0, PER_TUPLE, OWNERS) == {"u1": 0, "u2": 0}


def test_payments_sum_exactly_with_remainders(answer_query, trajectories_db):
    lr = eval_with_lineage(answer_query, trajectories_db)
    for total in (1, 7, 99, 101, 3001):
        for policy in (PER_TUPLE, PER_LINEAGE):
            paid = distribute_payment(lr, total, policy, OWNERS)
            assert sum(paid.values()) == total


def test_payment_uneven_remainder_goes_to_ascending_owners(answer_query, trajectories_db):
    # 5 rows, $0.07 -> 7/5 cents per row; floor shares then assign the
    # leftover cents to owners in ascending name order.
    lr = eval_with_lineage(answer_query, trajectories_db)
    paid = distribute_payment(lr, 7, PER_TUPLE, OWNERS)
    # u1: 0.7+1.4*3 = 4.9 -> 4; u2: 0.7+1.4 = 2.1 -> 2; leftover 1 -> u1
    assert paid == {"u1": 5, "u2": 2}


def test_empty_answer_raises(trajectories_db):
    empty = Database({"R1": Relation(trajectories_db["R1"].schema)})
    lr = eval_with_lineage(Base("R1"), empty)
    with pytest.raises(EmptyAnswer):
        distribute_payment(lr, 100, PER_TUPLE, OWNERS)


def test_exact_tid_owner_overrides_table_default(answer_query, trajectories_db):
    lr = eval_with_lineage(answer_query, trajectories_db)
    owners = dict(OWNERS)
    owners[tid_string(("R1", (1, "11:30")))] = "u3"  # t4 sold to a different owner
    paid = distribute_payment(lr, 3000, PER_LINEAGE, owners)
    assert paid == {"u1": 1500, "u2": 1000, "u3": 500}
