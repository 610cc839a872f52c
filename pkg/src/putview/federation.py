"""In-process federation of peers and a mediator.

Peers hold source tables and a controller program; the mediator keeps a copy
of every peer view plus an integrated view defined by an integrator program.
Connectors are synchronous delta messages. Every event commits atomically
across all tiers or rolls back everywhere, and after each event every
materialized view equals its derived query exactly.

Only view-level data crosses the connector: traces record view deltas and
digests, never source rows, so a peer's precise locations stay private.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping, Optional

from .derive import derive_query
from .engine import get_view, put
from .errors import (
    InvariantViolation,
    KeyViolation,
    MalformedDelta,
    MissingDeleteTarget,
    NullabilityViolation,
    PutviewError,
    ScenarioParseError,
    UnknownArea,
    UnknownPeer,
    ValidationFailed,
)
from .incremental import inc_get, inc_put
from .parser import parse_program
from .query import eval_query
from .relation import Database, Delta, Relation, Schema, apply_delta, diff, realign, row_sort_key
from .storage import load_dir, schema_from_json
from .syntax import Program
from .validation import infer_view_schema, query_schema, validate

# ---------------------------------------------------------------------------
# Policies
# ---------------------------------------------------------------------------


class AlwaysAccept:
    name = "always_accept"

    def __call__(self, before: Database, after: Database, view_delta: Delta) -> bool:
        return True


class RejectNonNullOverwrite:
    """Refuse re-booking: a view row's request_id may not change while set."""

    name = "reject_nonnull_overwrite"

    def __init__(self, view_schema: Schema):
        self.schema = view_schema

    def __call__(self, before: Database, after: Database, view_delta: Delta) -> bool:
        if not self.schema.has("request_id"):
            return True
        rid_idx = self.schema.index("request_id")
        key_idx = self.schema.key_indexes()
        deleted = {tuple(r[i] for i in key_idx): r for r in view_delta.deletes}
        for row in view_delta.inserts:
            old = deleted.get(tuple(row[i] for i in key_idx))
            if old is None:
                continue
            if old[rid_idx] is not None and row[rid_idx] is not None and old[rid_idx] != row[rid_idx]:
                return False
        return True


class ProbabilisticReject:
    """Deterministic pseudo-random rejection keyed on the delta contents."""

    name = "probabilistic_reject"

    def __init__(self, seed: int, rate: float):
        self.seed = seed
        self.rate = rate

    def __call__(self, before: Database, after: Database, view_delta: Delta) -> bool:
        payload = json.dumps(
            [self.seed, sorted(map(list, view_delta.inserts), key=str),
             sorted(map(list, view_delta.deletes), key=str)],
            sort_keys=True,
        )
        value = int(hashlib.sha256(payload.encode()).hexdigest()[:8], 16) / 0xFFFFFFFF
        return value >= self.rate


def make_policy(spec, view_schema: Schema):
    if isinstance(spec, str):
        spec = {"name": spec}
    name = spec.get("name")
    if name == "always_accept":
        return AlwaysAccept()
    if name == "reject_nonnull_overwrite":
        return RejectNonNullOverwrite(view_schema)
    if name == "probabilistic_reject":
        return ProbabilisticReject(int(spec.get("seed", 0)), float(spec.get("rate", 0.5)))
    raise ScenarioParseError(f"unknown policy {name!r}")


# ---------------------------------------------------------------------------
# Federation state
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PeerState:
    pid: int
    sources: Database
    program: Program
    view_schema: Schema
    policy: object
    derived_attrs: tuple


@dataclass(frozen=True)
class Federation:
    peers: Mapping[int, PeerState]
    peer_views: Mapping[int, Relation]
    integrator: Program
    integrated_schema: Schema
    integrated: Relation
    integrator_attrs: tuple
    adjacency: Mapping[str, tuple]

    def views_db(self) -> Database:
        return Database({rel.schema.name: rel for rel in self.peer_views.values()})

    def peer_by_view(self, view_name: str) -> PeerState:
        for peer in self.peers.values():
            if peer.view_schema.name == view_name:
                return peer
        raise UnknownPeer(f"no peer exports view {view_name!r}")


def realign_delta(d: Delta, from_attrs: tuple, to_attrs: tuple) -> Delta:
    if tuple(from_attrs) == tuple(to_attrs):
        return d
    perm = [list(from_attrs).index(a) for a in to_attrs]
    move = lambda rows: frozenset(tuple(r[i] for i in perm) for r in rows)
    return Delta(move(d.inserts), move(d.deletes))


def _digest(rel: Relation) -> str:
    payload = json.dumps([list(r) for r in rel.sorted_rows()])
    return hashlib.sha256(payload.encode()).hexdigest()[:12]


def _db_digest(db: Database) -> str:
    payload = json.dumps({name: [list(r) for r in db[name].sorted_rows()] for name in db.names()})
    return hashlib.sha256(payload.encode()).hexdigest()[:12]


def _delta_json(d: Delta) -> dict:
    return {
        "inserts": [list(r) for r in sorted(d.inserts, key=row_sort_key)],
        "deletes": [list(r) for r in sorted(d.deletes, key=row_sort_key)],
    }


def build_federation(
    peers: list[PeerState],
    peer_views: dict[int, Relation],
    integrator: Program,
    integrated_schema: Schema,
    adjacency: Mapping[str, list],
) -> Federation:
    view_names = [p.view_schema.name for p in peers]
    if len(set(view_names)) != len(view_names):
        raise ScenarioParseError(f"peer view names collide: {view_names}")
    ids = [p.pid for p in peers]
    if len(set(ids)) != len(ids):
        raise ScenarioParseError(f"peer ids collide: {ids}")
    for peer in peers:
        schemas = {name: peer.sources[name].schema for name in peer.sources.names()}
        schemas[peer.view_schema.name] = peer.view_schema
        errors = validate(peer.program, schemas)
        if errors:
            raise ValidationFailed(errors)
    view_schemas = {p.view_schema.name: p.view_schema for p in peers}
    view_schemas[integrated_schema.name] = integrated_schema
    errors = validate(integrator, view_schemas)
    if errors:
        raise ValidationFailed(errors)
    views_db = Database({rel.schema.name: rel for rel in peer_views.values()})
    integrated = realign(eval_query(derive_query(integrator), views_db), integrated_schema)
    integrator_attrs = query_schema(
        derive_query(integrator), {p.view_schema.name: p.view_schema for p in peers}
    ).attrs
    return Federation(
        {p.pid: p for p in peers},
        dict(peer_views),
        integrator,
        integrated_schema,
        integrated,
        integrator_attrs,
        {k: tuple(v) for k, v in adjacency.items()},
    )


# ---------------------------------------------------------------------------
# Events
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SourceUpdate:
    peer: int
    table: str
    delta: Delta


@dataclass(frozen=True)
class ViewUpdate:
    delta: Delta


@dataclass(frozen=True)
class BookingRequest:
    rid: str
    pickup_area: str
    k: int


def parse_event(doc: dict, fed: Federation) -> object:
    kind = doc.get("type")
    if kind == "source_update":
        pid = doc["peer"]
        if pid not in fed.peers:
            raise UnknownPeer(f"no peer with id {pid}")
        table = doc["table"]
        schema = fed.peers[pid].sources[table].schema
        to_rows = lambda rows: frozenset(tuple(r) for r in rows)
        return SourceUpdate(pid, table, Delta(to_rows(doc.get("insert", [])), to_rows(doc.get("delete", []))))
    if kind == "view_update":
        to_rows = lambda rows: frozenset(tuple(r) for r in rows)
        return ViewUpdate(Delta(to_rows(doc.get("insert", [])), to_rows(doc.get("delete", []))))
    if kind == "booking":
        return BookingRequest(doc["rid"], doc["pickup_area"], int(doc.get("K", doc.get("k", 1))))
    raise ScenarioParseError(f"unknown event type {kind!r}")


# ---------------------------------------------------------------------------
# Stepping
# ---------------------------------------------------------------------------


def candidate_taxis(fed: Federation, pickup_area: str, k: int) -> list[tuple]:
    """Unoccupied integrated rows ranked by area proximity, ties by ids."""
    if k < 1:
        raise PutviewError("K must be at least 1")
    known: set[str] = set(fed.adjacency)
    for neighbors in fed.adjacency.values():
        known |= set(neighbors)
    if pickup_area not in known:
        raise UnknownArea(f"area {pickup_area!r} is not in the adjacency map")
    hops = {pickup_area: 0}
    frontier = [pickup_area]
    while frontier:
        nxt = []
        for area in frontier:
            for neighbor in fed.adjacency.get(area, ()):
                if neighbor not in hops:
                    hops[neighbor] = hops[area] + 1
                    nxt.append(neighbor)
        frontier = nxt
    schema = fed.integrated_schema
    cid = schema.index("company_id")
    vid = schema.index("vehicle_id")
    area_idx = schema.index("current_area")
    rid_idx = schema.index("request_id") if schema.has("request_id") else None
    scored = []
    for row in fed.integrated.rows:
        if rid_idx is not None and row[rid_idx] is not None:
            continue
        area = row[area_idx]
        if area not in hops:
            continue
        scored.append((row[cid], row[vid], 10 - hops[area]))
    scored.sort(key=lambda item: (-item[2], item[0], item[1]))
    return scored[:k]


class _Stepper:
    def __init__(self, fed: Federation, mode: str = "incremental"):
        self.fed = fed
        self.mode = mode
        self.entries: list[dict] = []

    def log(self, **entry) -> None:
        self.entries.append(entry)

    # -- source updates -----------------------------------------------------

    def source_update(self, ev: SourceUpdate) -> Federation:
        fed = self.fed
        peer = fed.peers[ev.peer]
        new_sources = peer.sources.with_table(apply_delta(peer.sources[ev.table], ev.delta))
        self.log(
            type="event",
            event_type="source_update",
            peer=ev.peer,
            table=ev.table,
            inserts=len(ev.delta.inserts),
            deletes=len(ev.delta.deletes),
            delta_digest=hashlib.sha256(
                json.dumps(_delta_json(ev.delta)).encode()
            ).hexdigest()[:12],
        )
        controller_query = derive_query(peer.program)
        if self.mode == "incremental":
            w = inc_get(controller_query, peer.sources, {ev.table: ev.delta})
            w = realign_delta(w, peer.derived_attrs, peer.view_schema.attrs)
            new_view = apply_delta(fed.peer_views[ev.peer], w)
        else:
            new_view = realign(
                eval_query(controller_query, new_sources), peer.view_schema
            )
            w = diff(fed.peer_views[ev.peer], new_view)
        self.log(type="connector", direction="to_mediator", peer=ev.peer, view_delta=_delta_json(w))

        old_views_db = fed.views_db()
        if self.mode == "incremental":
            wi = inc_get(derive_query(fed.integrator), old_views_db, {peer.view_schema.name: w})
            wi = realign_delta(wi, fed.integrator_attrs, fed.integrated_schema.attrs)
            new_integrated = apply_delta(fed.integrated, wi)
        else:
            new_views_db = old_views_db.with_table(new_view)
            new_integrated = realign(
                eval_query(derive_query(fed.integrator), new_views_db), fed.integrated_schema
            )
            wi = diff(fed.integrated, new_integrated)
        self.log(type="integrated_update", view_delta=_delta_json(wi))

        peers = dict(fed.peers)
        peers[ev.peer] = replace(peer, sources=new_sources)
        peer_views = dict(fed.peer_views)
        peer_views[ev.peer] = new_view
        return replace(fed, peers=peers, peer_views=peer_views, integrated=new_integrated)

    # -- view updates (and booking attempts) ---------------------------------

    def view_update(self, u: Delta) -> Optional[Federation]:
        """Returns the committed federation, or None after logging a rollback."""
        fed = self.fed
        views_db = fed.views_db()
        if self.mode == "incremental":
            out = inc_put(fed.integrator, views_db, fed.integrated, u, validate_first=False)
            if not out.accepted:
                self.log(type="put", tier="mediator", outcome="rejected",
                         reason=out.reason, path=list(out.path))
                self.log(type="rollback", reason=out.reason)
                return None
            view_deltas = out.deltas
        else:
            new_integrated = apply_delta(fed.integrated, u)
            outcome = put(fed.integrator, views_db, new_integrated, validate_first=False)
            if not outcome.accepted:
                self.log(type="put", tier="mediator", outcome="rejected",
                         reason=outcome.reason, path=list(outcome.path))
                self.log(type="rollback", reason=outcome.reason)
                return None
            view_deltas = {}
            for name in views_db.names():
                d = diff(views_db[name], outcome.sources[name])
                if not d.is_empty():
                    view_deltas[name] = d
        self.log(type="put", tier="mediator", outcome="accepted")

        staged: list[tuple[PeerState, Relation, Database, Delta]] = []
        for view_name in sorted(view_deltas):
            delta = view_deltas[view_name]
            peer = fed.peer_by_view(view_name)
            self.log(type="connector", direction="to_peer", peer=peer.pid,
                     view_delta=_delta_json(delta))
            if self.mode == "incremental":
                pout = inc_put(peer.program, peer.sources, fed.peer_views[peer.pid],
                               delta, validate_first=False)
                if not pout.accepted:
                    self.log(type="put", tier="peer", peer=peer.pid, outcome="rejected",
                             reason=pout.reason, path=list(pout.path))
                    self.log(type="rollback", reason=pout.reason)
                    return None
                new_sources = peer.sources
                for table, d in pout.deltas.items():
                    new_sources = new_sources.with_table(apply_delta(new_sources[table], d))
            else:
                new_view_rel = apply_delta(fed.peer_views[peer.pid], delta)
                outcome = put(peer.program, peer.sources, new_view_rel, validate_first=False)
                if not outcome.accepted:
                    self.log(type="put", tier="peer", peer=peer.pid, outcome="rejected",
                             reason=outcome.reason, path=list(outcome.path))
                    self.log(type="rollback", reason=outcome.reason)
                    return None
                new_sources = outcome.sources
            self.log(type="put", tier="peer", peer=peer.pid, outcome="accepted")
            if not peer.policy(peer.sources, new_sources, delta):
                self.log(type="policy", peer=peer.pid, policy=getattr(peer.policy, "name", "?"),
                         outcome="rejected")
                self.log(type="rollback", reason="PolicyRejected")
                return None
            self.log(type="policy", peer=peer.pid, policy=getattr(peer.policy, "name", "?"),
                     outcome="accepted")
            staged.append((peer, apply_delta(fed.peer_views[peer.pid], delta), new_sources, delta))

        peers = dict(fed.peers)
        peer_views = dict(fed.peer_views)
        for peer, new_view, new_sources, _ in staged:
            peers[peer.pid] = replace(peer, sources=new_sources)
            peer_views[peer.pid] = new_view
        new_integrated = apply_delta(fed.integrated, u)
        self.log(type="commit")
        return replace(fed, peers=peers, peer_views=peer_views, integrated=new_integrated)

    def booking(self, ev: BookingRequest) -> Federation:
        fed = self.fed
        self.log(type="event", event_type="booking", rid=ev.rid,
                 pickup_area=ev.pickup_area, k=ev.k)
        candidates = candidate_taxis(fed, ev.pickup_area, ev.k)
        self.log(type="candidates", ranking=[list(c) for c in candidates])
        schema = fed.integrated_schema
        cid = schema.index("company_id")
        vid = schema.index("vehicle_id")
        rid_idx = schema.index("request_id") if schema.has("request_id") else None
        for company, vehicle, score in candidates:
            row = next(
                r for r in fed.integrated.rows if r[cid] == company and r[vid] == vehicle
            )
            if rid_idx is not None:
                booked = tuple(
                    ev.rid if i == rid_idx else v for i, v in enumerate(row)
                )
                u = Delta(frozenset({booked}), frozenset({row}))
            else:
                u = Delta(frozenset(), frozenset({row}))
            self.log(type="booking_attempt", company=company, vehicle=vehicle, score=score)
            committed = self.view_update(u)
            if committed is not None:
                self.log(type="booking_result", outcome="booked", rid=ev.rid,
                         company=company, vehicle=vehicle)
                return committed
        self.log(type="booking_result", outcome="failed", rid=ev.rid)
        return fed


def step(fed: Federation, event, *, mode: str = "incremental") -> tuple[Federation, list[dict]]:
    """Process one event atomically; a rejection returns the input state."""
    stepper = _Stepper(fed, mode)
    if isinstance(event, SourceUpdate):
        new_fed = stepper.source_update(event)
    elif isinstance(event, ViewUpdate):
        stepper.log(type="event", event_type="view_update", view_delta=_delta_json(event.delta))
        result = stepper.view_update(event.delta)
        new_fed = result if result is not None else fed
    elif isinstance(event, BookingRequest):
        new_fed = stepper.booking(event)
    else:
        raise ScenarioParseError(f"unknown event {event!r}")
    return new_fed, stepper.entries


def verify_quiescence(fed: Federation) -> None:
    """Every materialized view must equal its derived query, exactly."""
    for pid, peer in fed.peers.items():
        expected = realign(
            eval_query(derive_query(peer.program), peer.sources), peer.view_schema
        )
        if expected != fed.peer_views[pid]:
            raise InvariantViolation(f"peer {pid} view copy has drifted")
    expected = realign(
        eval_query(derive_query(fed.integrator), fed.views_db()), fed.integrated_schema
    )
    if expected != fed.integrated:
        raise InvariantViolation("integrated view has drifted")


def state_digests(fed: Federation) -> dict:
    return {
        "integrated": _digest(fed.integrated),
        "peer_views": {str(pid): _digest(rel) for pid, rel in sorted(fed.peer_views.items())},
        "peer_sources": {str(pid): _db_digest(peer.sources) for pid, peer in sorted(fed.peers.items())},
    }


# ---------------------------------------------------------------------------
# Scenario files
# ---------------------------------------------------------------------------


def load_scenario(path: Path) -> dict:
    """Read a scenario file and inline every file reference."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ScenarioParseError(f"{path}: {exc}") from None
    base = path.parent
    return inline_scenario(doc, base)


def inline_scenario(doc: dict, base: Optional[Path]) -> dict:
    def need_base(what: str) -> Path:
        if base is None:
            raise ScenarioParseError(f"{what} references a file but no base directory is known")
        return base

    out = dict(doc)
    peers = []
    for peer_doc in doc.get("peers", []):
        peer = dict(peer_doc)
        if "program_text" not in peer:
            if "program" not in peer:
                raise ScenarioParseError(f"peer {peer.get('id')}: no program given")
            peer["program_text"] = (need_base("peer program") / peer.pop("program")).read_text()
        if "database" not in peer:
            if "data_dir" not in peer:
                raise ScenarioParseError(f"peer {peer.get('id')}: no database given")
            db, views = load_dir(need_base("peer data") / peer.pop("data_dir"))
            peer["database"] = _db_to_json(db)
            peer["view_schemas"] = [
                {"name": s.name, "attrs": [
                    {"name": c.name, "type": c.type, "nullable": c.nullable} for c in s.columns
                ], "key": list(s.key)}
                for s in views.values()
            ]
        peers.append(peer)
    out["peers"] = peers
    if "integrator_text" not in out:
        if "integrator" not in out:
            raise ScenarioParseError("no integrator program given")
        out["integrator_text"] = (need_base("integrator") / out.pop("integrator")).read_text()
    return out


def _db_to_json(db: Database) -> dict:
    tables = []
    for name in db.names():
        rel = db[name]
        tables.append(
            {
                "name": name,
                "attrs": [
                    {"name": c.name, "type": c.type, "nullable": c.nullable}
                    for c in rel.schema.columns
                ],
                "key": list(rel.schema.key),
                "rows": [list(r) for r in rel.sorted_rows()],
            }
        )
    return {"tables": tables}


def _db_from_json(doc: dict) -> Database:
    tables = {}
    for entry in doc.get("tables", []):
        schema = schema_from_json(entry)
        rows = frozenset(tuple(r) for r in entry.get("rows", []))
        tables[schema.name] = Relation(schema, rows)
    return Database(tables)


def scenario_federation(doc: dict) -> Federation:
    peers = []
    peer_views = {}
    view_schemas = {}
    for peer_doc in doc.get("peers", []):
        pid = int(peer_doc["id"])
        program = parse_program(peer_doc["program_text"])
        sources = _db_from_json(peer_doc["database"])
        declared = {s["name"]: schema_from_json(s) for s in peer_doc.get("view_schemas", [])}
        if program.view_name in declared:
            view_schema = declared[program.view_name]
        else:
            schemas = {name: sources[name].schema for name in sources.names()}
            view_schema = infer_view_schema(program, schemas)
        policy = make_policy(peer_doc.get("policy", "always_accept"), view_schema)
        schemas = {name: sources[name].schema for name in sources.names()}
        derived_attrs = query_schema(derive_query(program), schemas).attrs
        peer = PeerState(pid, sources, program, view_schema, policy, derived_attrs)
        peers.append(peer)
        peer_views[pid] = get_view(program, sources, view_schema=view_schema)
        view_schemas[view_schema.name] = view_schema
    integrator = parse_program(doc["integrator_text"])
    if "integrated_schema" in doc:
        integrated_schema = schema_from_json(doc["integrated_schema"])
    else:
        integrated_schema = infer_view_schema(integrator, view_schemas)
    adjacency = doc.get("area_adjacency", {})
    return build_federation(peers, peer_views, integrator, integrated_schema, adjacency)


def run_scenario(scenario, *, base: Optional[Path] = None, compare_full: bool = False) -> list[dict]:
    """Fold the event list over the federation, verifying quiescence each step.

    ``scenario`` is a path or an (inlined) scenario dict. With compare_full,
    every event is also processed by full recomputation and the resulting
    states must agree exactly with the incremental ones.
    """
    if isinstance(scenario, (str, Path)):
        doc = load_scenario(Path(scenario))
    else:
        doc = inline_scenario(scenario, base)
    fed = scenario_federation(doc)
    trace: list[dict] = [
        {"step": 0, "type": "initial", "scenario": doc.get("name", ""), "digests": state_digests(fed)}
    ]
    for index, event_doc in enumerate(doc.get("events", []), start=1):
        event = parse_event(event_doc, fed)
        try:
            new_fed, entries = step(fed, event, mode="incremental")
        except (KeyViolation, MissingDeleteTarget, MalformedDelta, NullabilityViolation) as exc:
            raise InvariantViolation(f"event {index} cannot be applied: {exc}") from exc
        if compare_full:
            full_fed, _ = step(fed, event, mode="full")
            if state_digests(full_fed) != state_digests(new_fed):
                raise InvariantViolation(
                    f"incremental and full processing diverge at event {index}"
                )
        fed = new_fed
        try:
            verify_quiescence(fed)
        except InvariantViolation as exc:
            raise InvariantViolation(f"after event {index}: {exc}") from None
        for entry in entries:
            trace.append({"step": index, **entry})
        trace.append({"step": index, "type": "quiescence", "digests": state_digests(fed)})
    return trace


def trace_to_jsonl(trace: list[dict]) -> str:
    return "\n".join(json.dumps(entry, sort_keys=True) for entry in trace) + "\n"
