"""Property-based and exhaustive verification of the round-trip laws.

check_roundtrip drives seeded random edits through put and asserts the two
round-trip laws on every accepted edit; failures carry a greedily minimized
counterexample and replay deterministically from (seed, trial index).

check_validity_exhaustive enumerates every database and view over small
per-attribute domains and decides the two validity properties directly:
source stability (some view puts back to the unchanged source) and view
determination (equal put results imply equal views, over accepted puts).
"""

from __future__ import annotations

import itertools
import random
import time
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

from .derive import derive_query
from .engine import get_view, put
from .errors import DomainTooLarge, PutviewError
from .incremental import tables_written
from .query import eval_query
from .relation import Database, Relation, Schema, realign, rows_match, value_sort_key
from .syntax import Check, HSplit, Program, Statement, Update, VSplit, output_attrs


def _canonical_rows(rel: Relation) -> tuple:
    return tuple(rel.sorted_rows())


def _canonical_db(db: Database) -> tuple:
    return tuple((name, _canonical_rows(db[name])) for name in db.names())


# ---------------------------------------------------------------------------
# Round-trip law checking
# ---------------------------------------------------------------------------


@dataclass
class LawFailure:
    law: str
    trial: int
    sources: tuple
    view: tuple
    detail: str


@dataclass
class RoundtripReport:
    program_view: str
    seed: int
    trials_requested: int
    accepted: int
    rejected: int
    attempts: int
    failures: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures and self.accepted >= self.trials_requested

    def to_json(self) -> dict:
        return {
            "view": self.program_view,
            "seed": self.seed,
            "trials_requested": self.trials_requested,
            "accepted": self.accepted,
            "rejected": self.rejected,
            "attempts": self.attempts,
            "failures": [
                {
                    "law": f.law,
                    "trial": f.trial,
                    "sources": [[name, [list(r) for r in rows]] for name, rows in f.sources],
                    "view": [list(r) for r in f.view],
                    "detail": f.detail,
                }
                for f in self.failures
            ],
            "ok": self.ok,
        }


def _updatable_attrs(stmt: Statement) -> tuple[set, set]:
    """(attrs written by some UPDATE, attrs pinned by some CHECK)."""
    if isinstance(stmt, Update):
        return set(stmt.view_attrs), set()
    if isinstance(stmt, Check):
        return set(), set(output_attrs(stmt.query))
    written: set = set()
    pinned: set = set()
    bodies = []
    if isinstance(stmt, VSplit):
        bodies = [b for _, b in stmt.branches]
    elif isinstance(stmt, HSplit):
        bodies = [b for _, b in stmt.branches]
        if stmt.otherwise is not None:
            bodies.append(stmt.otherwise)
        written.add(stmt.split_attr)
    for body in bodies:
        w, p = _updatable_attrs(body)
        written |= w
        pinned |= p
    return written, pinned


def _split_literals(stmt: Statement, pools: dict, closed: set) -> dict:
    """Branch literals per split attribute. An attribute lands in ``closed``
    when some split over it has no OTHERWISE: only listed literals route."""
    if isinstance(stmt, HSplit):
        pool = pools.setdefault(stmt.split_attr, set())
        for lit, body in stmt.branches:
            pool.add(lit)
            _split_literals(body, pools, closed)
        if stmt.otherwise is not None:
            _split_literals(stmt.otherwise, pools, closed)
        else:
            closed.add(stmt.split_attr)
    elif isinstance(stmt, VSplit):
        for _, body in stmt.branches:
            _split_literals(body, pools, closed)
    return pools


class _EditGenerator:
    """Random view edits biased toward attributes the strategy can accept."""

    def __init__(self, rng: random.Random, view_schema: Schema, program: Program):
        self.rng = rng
        self.schema = view_schema
        written, pinned = _updatable_attrs(program.root)
        self.closed_split_attrs: set = set()
        self.split_literals = _split_literals(program.root, {}, self.closed_split_attrs)
        overwritable = [
            a
            for a in view_schema.attrs
            if a in written and a not in pinned and a not in view_schema.key
        ]
        self.overwritable = overwritable or [
            a for a in view_schema.attrs if a not in view_schema.key
        ]
        self._fresh = 0

    def _value_pool(self, attr: str, observed: set) -> list:
        col = self.schema.column(attr)
        values = set(v for v in observed if v is not None)
        values |= {v for v in self.split_literals.get(attr, ()) if v is not None}
        pool = sorted(values, key=value_sort_key)
        if attr in self.closed_split_attrs:
            if None in self.split_literals.get(attr, ()):
                pool.append(None)
            return pool
        if col.type == "int":
            pool = pool + [max((int(v) for v in pool), default=0) + 1]
        else:
            self._fresh += 1
            pool = pool + [f"x{self._fresh}"]
        if col.nullable:
            pool.append(None)
        return pool

    def edit(self, view: Relation) -> Relation:
        rows = view.sorted_rows()
        kind = self.rng.random()
        if rows and kind < 0.7 and self.overwritable:
            row = list(self.rng.choice(rows))
            attr = self.rng.choice(self.overwritable)
            i = self.schema.index(attr)
            observed = {r[i] for r in rows}
            pool = self._value_pool(attr, observed)
            if not pool:
                return view
            row[i] = self.rng.choice(pool)
            key_idx = self.schema.key_indexes()
            target_key = tuple(row[j] for j in key_idx)
            new_rows = {r for r in view.rows if tuple(r[j] for j in key_idx) != target_key}
            new_rows.add(tuple(row))
            return Relation(self.schema, frozenset(new_rows))
        if rows and kind < 0.85:
            victim = self.rng.choice(rows)
            return Relation(self.schema, view.rows - {victim})
        values = []
        for col in self.schema.columns:
            observed = {r[self.schema.index(col.name)] for r in rows}
            if col.name in self.schema.key and col.name not in self.closed_split_attrs:
                self._fresh += 1
                values.append(self._fresh if col.type == "int" else f"new{self._fresh}")
            else:
                pool = self._value_pool(col.name, observed)
                if not pool:
                    return view
                values.append(self.rng.choice(pool))
        return Relation(self.schema, view.rows | {tuple(values)})


def _minimize(program: Program, sources: Database, view: Relation, fails) -> tuple:
    """Greedy shrink: drop source rows, then view rows, while the law still fails."""
    db = sources
    for name in db.names():
        for row in db[name].sorted_rows():
            candidate = db.with_table(Relation(db[name].schema, db[name].rows - {row}))
            if fails(candidate, view):
                db = candidate
    v = view
    for row in v.sorted_rows():
        candidate = Relation(v.schema, v.rows - {row})
        if fails(db, candidate):
            v = candidate
    return _canonical_db(db), _canonical_rows(v)


def check_roundtrip(
    program: Program,
    sources: Database,
    view_schema: Schema,
    trials: int = 200,
    seed: int = 0,
    max_attempts: int | None = None,
) -> RoundtripReport:
    """Drive ``trials`` accepted random edits and assert GetPut and PutGet."""
    rng = random.Random(seed)
    generator = _EditGenerator(rng, view_schema, program)
    report = RoundtripReport(program.view_name, seed, trials, 0, 0, 0)
    max_attempts = max_attempts or trials * 40
    db = sources
    query = derive_query(program)

    def getput_fails(s: Database, v: Relation) -> bool:
        try:
            out = put(program, s, v, validate_first=False)
        except PutviewError:
            return False
        if not out.accepted:
            return False
        return not rows_match(eval_query(query, out.sources), v)

    def stability_fails(s: Database, _v: Relation) -> bool:
        try:
            derived = realign(eval_query(query, s), view_schema)
            out = put(program, s, derived, validate_first=False)
        except PutviewError:
            return True
        return not out.accepted or out.sources != s

    # GetPut must already hold on the starting state: putting back the
    # unedited view may not move (or reject) the sources.
    if stability_fails(db, None):
        empty_view = Relation(view_schema)
        small = _minimize(program, db, empty_view, stability_fails)
        report.failures.append(
            LawFailure("GetPut", 0, *small, "put(s, get(s)) != s on the initial state")
        )

    while report.accepted < trials and report.attempts < max_attempts:
        report.attempts += 1
        view = get_view(program, db, view_schema=view_schema)
        try:
            edited = generator.edit(view)
        except PutviewError:
            continue
        if edited.rows == view.rows:
            continue
        outcome = put(program, db, edited, validate_first=False)
        if not outcome.accepted:
            report.rejected += 1
            continue
        report.accepted += 1
        new_db = outcome.sources
        # PutGet: the accepted view must be recomputable from the new sources
        recomputed = eval_query(query, new_db)
        if not rows_match(recomputed, edited):
            small = _minimize(program, db, edited, getput_fails)
            report.failures.append(
                LawFailure("PutGet", report.attempts, *small, "get(put(s,v)) != v")
            )
            continue
        # GetPut: putting back the unchanged view must not move the sources
        stable = put(program, new_db, realign(recomputed, view_schema), validate_first=False)
        if not stable.accepted or stable.sources != new_db:
            report.failures.append(
                LawFailure(
                    "GetPut",
                    report.attempts,
                    _canonical_db(new_db),
                    _canonical_rows(recomputed),
                    "put(s, get(s)) != s",
                )
            )
            continue
        db = new_db
    return report


# ---------------------------------------------------------------------------
# Exhaustive validity checking
# ---------------------------------------------------------------------------


@dataclass
class ValidityReport:
    program_view: str
    databases: int
    views: int
    pairs_checked: int
    accepted_puts: int
    source_stable: bool
    view_determined: bool
    stability_counterexample: Optional[tuple] = None
    determination_counterexample: Optional[tuple] = None
    elapsed_seconds: float = 0.0

    @property
    def ok(self) -> bool:
        return self.source_stable and self.view_determined

    def to_json(self) -> dict:
        return {
            "view": self.program_view,
            "databases": self.databases,
            "views": self.views,
            "pairs_checked": self.pairs_checked,
            "accepted_puts": self.accepted_puts,
            "source_stable": self.source_stable,
            "view_determined": self.view_determined,
            "stability_counterexample": self.stability_counterexample,
            "determination_counterexample": self.determination_counterexample,
            "elapsed_seconds": round(self.elapsed_seconds, 3),
            "ok": self.ok,
        }


def _domain_for(schema: Schema, domain: Mapping[str, Sequence]) -> list[list]:
    pools = []
    for col in schema.columns:
        scoped = None
        if isinstance(domain.get(schema.name), Mapping):
            scoped = domain[schema.name].get(col.name)
        values = scoped if scoped is not None else domain.get(col.name)
        if values is None:
            raise PutviewError(f"no domain values for {schema.name}.{col.name}")
        values = list(values)
        if not col.nullable and None in values:
            values = [v for v in values if v is not None]
        pools.append(values)
    return pools


def _enumerate_relations(schema: Schema, domain: Mapping[str, Sequence]) -> list[Relation]:
    pools = _domain_for(schema, domain)
    candidates = [tuple(row) for row in itertools.product(*pools)]
    key_idx = schema.key_indexes()
    groups: dict[tuple, list] = {}
    for row in candidates:
        groups.setdefault(tuple(row[i] for i in key_idx), []).append(row)
    group_choices = [[None] + rows for rows in groups.values()]
    relations = []
    for combo in itertools.product(*group_choices):
        rows = frozenset(r for r in combo if r is not None)
        relations.append(Relation(schema, rows))
    return relations


def check_validity_exhaustive(
    program: Program,
    sources: Database,
    view_schema: Schema,
    domain: Mapping[str, Sequence],
    max_states: int = 1_000_000,
) -> ValidityReport:
    """Enumerate all (source, view) pairs over the domain and decide validity.

    Tables the program never writes stay fixed at their given contents.
    Validation is deliberately not consulted: this is the tool for probing
    strategies that validation would refuse.
    """
    start = time.monotonic()
    written = sorted(tables_written(program.root) & set(sources.names()))
    per_table = {name: _enumerate_relations(sources[name].schema, domain) for name in written}
    views = _enumerate_relations(view_schema, domain)
    total_dbs = 1
    for rels in per_table.values():
        total_dbs *= len(rels)
    if total_dbs * len(views) > max_states:
        raise DomainTooLarge(
            f"{total_dbs} databases x {len(views)} views exceeds the {max_states} bound"
        )

    databases = []
    for combo in itertools.product(*(per_table[name] for name in written)):
        db = sources
        for rel in combo:
            db = db.with_table(rel)
        databases.append(db)

    report = ValidityReport(
        program.view_name, len(databases), len(views), 0, 0, True, True
    )

    query = derive_query(program)
    results: dict[tuple, tuple] = {}
    for db in databases:
        stable = False
        derived_view: Relation | None = None
        try:
            derived = eval_query(query, db)
            derived_view = realign(derived, view_schema)
        except PutviewError:
            derived_view = None
        if derived_view is not None:
            out = put(program, db, derived_view, validate_first=False)
            if out.accepted and out.sources == db:
                stable = True
        for view in views:
            report.pairs_checked += 1
            outcome = put(program, db, view, validate_first=False)
            if not outcome.accepted:
                continue
            report.accepted_puts += 1
            if not stable and outcome.sources == db:
                stable = True
            result_key = _canonical_db(outcome.sources)
            view_key = _canonical_rows(view)
            seen = results.get(result_key)
            if seen is None:
                results[result_key] = (view_key, _canonical_db(db))
            elif seen[0] != view_key and report.determination_counterexample is None:
                report.view_determined = False
                report.determination_counterexample = [
                    ["view_a", list(seen[0])],
                    ["view_b", list(view_key)],
                    ["result", list(result_key)],
                ]
        if not stable and report.stability_counterexample is None:
            report.source_stable = False
            report.stability_counterexample = [["sources", list(_canonical_db(db))]]
    report.elapsed_seconds = time.monotonic() - start
    return report
