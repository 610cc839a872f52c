"""Command-line client.

Every subcommand assembles the same request payload the HTTP service takes
and sends it either to the in-process service operations (default) or to a
running server (--server URL). Exit status: 0 on success, 1 when a put is
rejected, a check finds failures or an input is invalid, 2 on usage errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import PutviewError
from .parser import parse_program
from .relation import Schema
from .service import ops
from .service.models import (
    DatabaseModel,
    DeriveRequest,
    GetRequest,
    LineageRequest,
    PutRequest,
    RelationModel,
    RoundtripRequest,
    SchemaModel,
    SimulateRequest,
    ValidityRequest,
)
from .storage import load_dir, load_relation, save_dir
from .validation import infer_view_schema
from .federation import load_scenario, trace_to_jsonl


class ClientError(Exception):
    pass


_ROUTES = {
    "/derive": (DeriveRequest, ops.derive),
    "/get": (GetRequest, ops.get),
    "/put": (PutRequest, ops.put_view),
    "/check/roundtrip": (RoundtripRequest, ops.roundtrip),
    "/check/validity": (ValidityRequest, ops.validity),
    "/lineage": (LineageRequest, ops.lineage),
    "/simulate": (SimulateRequest, ops.simulate),
}


class Client:
    """Thin transport: in-process by default, HTTP when a server is given."""

    def __init__(self, server: str | None):
        self.server = server.rstrip("/") if server else None

    def call(self, path: str, payload: dict) -> dict:
        if self.server is None:
            model_cls, handler = _ROUTES[path]
            try:
                return handler(model_cls.model_validate(payload)).model_dump()
            except PutviewError as exc:
                raise ClientError(f"{type(exc).__name__}: {exc}") from None
        import httpx

        response = httpx.post(f"{self.server}{path}", json=payload, timeout=120.0)
        if response.status_code >= 400:
            try:
                detail = response.json()
            except ValueError:
                detail = {"detail": response.text}
            raise ClientError(f"{detail.get('error', response.status_code)}: {detail.get('detail')}")
        return response.json()


def _load_db_payload(db_dir: str) -> tuple[dict, dict[str, Schema]]:
    db, views = load_dir(Path(db_dir))
    return DatabaseModel.from_database(db).model_dump(), views


def _resolve_view_schema(program_text: str, db_dir: str) -> tuple[dict | None, Schema | None]:
    program = parse_program(program_text)
    db, views = load_dir(Path(db_dir))
    declared = views.get(program.view_name)
    if declared is not None:
        return SchemaModel.from_schema(declared).model_dump(), declared
    schemas = {name: db[name].schema for name in db.names()}
    try:
        inferred = infer_view_schema(program, schemas)
    except PutviewError:
        return None, None
    if set(inferred.key) == set(inferred.attrs) and len(inferred.attrs) > 1:
        print(
            f"warning: no declared schema for view {program.view_name!r}; "
            "key inference widened to all attributes",
            file=sys.stderr,
        )
    return SchemaModel.from_schema(inferred).model_dump(), inferred


def cmd_derive(client: Client, args) -> int:
    program_text = Path(args.program).read_text()
    result = client.call("/derive", {"program": program_text})
    if args.json:
        print(json.dumps(result, sort_keys=True))
    else:
        sys.stdout.write(result["sql"])
    return 0


def cmd_get(client: Client, args) -> int:
    program_text = Path(args.program).read_text()
    database, _ = _load_db_payload(args.db)
    view_schema, _ = _resolve_view_schema(program_text, args.db)
    result = client.call(
        "/get", {"program": program_text, "database": database, "view_schema": view_schema}
    )
    view = RelationModel.model_validate(result["view"]).to_relation()
    from .storage import relation_to_csv

    sys.stdout.write(relation_to_csv(view))
    return 0


def cmd_put(client: Client, args) -> int:
    program_text = Path(args.program).read_text()
    database, views = _load_db_payload(args.db)
    _, view_schema = _resolve_view_schema(program_text, args.db)
    if view_schema is None:
        raise ClientError("the view schema is not declared in schema.json and cannot be inferred")
    view = load_relation(Path(args.view), view_schema)
    payload = {
        "program": program_text,
        "database": database,
        "view": RelationModel.from_relation(view).model_dump(),
    }
    result = client.call("/put", payload)
    if not result["accepted"]:
        if args.json:
            print(json.dumps({k: result[k] for k in ("accepted", "reason", "path")}, sort_keys=True))
        print(f"rejected: {result['reason']} at {' > '.join(result['path'])}", file=sys.stderr)
        return 1
    out_db = DatabaseModel.model_validate(result["sources"]).to_database()
    save_dir(out_db, Path(args.out), extra_schemas={view_schema.name: view_schema})
    if args.json:
        print(json.dumps({"accepted": True, "out": str(args.out)}, sort_keys=True))
    else:
        print(f"accepted; updated sources written to {args.out}")
    return 0


def cmd_check(client: Client, args) -> int:
    program_text = Path(args.program).read_text()
    database, _ = _load_db_payload(args.db)
    view_schema, _ = _resolve_view_schema(program_text, args.db)
    payload = {"program": program_text, "database": database, "view_schema": view_schema}
    if args.mode == "roundtrip":
        payload.update({"trials": args.trials, "seed": args.seed})
        result = client.call("/check/roundtrip", payload)
    else:
        if not args.domain:
            raise ClientError("check validity needs --domain")
        payload["domain"] = json.loads(Path(args.domain).read_text())
        result = client.call("/check/validity", payload)
    if args.json:
        print(json.dumps(result["report"], sort_keys=True))
    else:
        for key, value in sorted(result["report"].items()):
            print(f"{key}: {value}")
    return 0 if result["ok"] else 1


def cmd_lineage(client: Client, args) -> int:
    database, _ = _load_db_payload(args.db)
    payload = {
        "query": json.loads(Path(args.query).read_text()),
        "database": database,
        "total_cents": args.total,
        "policy": args.policy,
        "owners": json.loads(Path(args.owners).read_text()),
    }
    result = client.call("/lineage", payload)
    print(json.dumps(result["payments"], sort_keys=True))
    return 0


def cmd_sim(client: Client, args) -> int:
    scenario = load_scenario(Path(args.scenario))
    result = client.call(
        "/simulate", {"scenario": scenario, "compare_full": args.full_recompute}
    )
    text = trace_to_jsonl(result["trace"])
    if args.trace:
        Path(args.trace).write_text(text)
        print(f"trace written to {args.trace} ({len(result['trace'])} entries)")
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="putview",
        description="Relational views defined by update strategies.",
    )
    parser.add_argument("--server", help="URL of a running putview service; default is in-process")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("derive", help="derive the view query from a program and print SQL")
    p.add_argument("program")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_derive)

    p = sub.add_parser("get", help="evaluate the derived view and print it as CSV")
    p.add_argument("--db", required=True)
    p.add_argument("--program", required=True)
    p.set_defaults(func=cmd_get)

    p = sub.add_parser("put", help="run the update strategy against an edited view")
    p.add_argument("--db", required=True)
    p.add_argument("--program", required=True)
    p.add_argument("--view", required=True)
    p.add_argument("--out", required=True, help="directory for the updated sources")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_put)

    p = sub.add_parser("check", help="round-trip laws or exhaustive validity")
    p.add_argument("mode", choices=["roundtrip", "validity"])
    p.add_argument("--program", required=True)
    p.add_argument("--db", required=True)
    p.add_argument("--domain", help="JSON file of per-attribute value domains")
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("lineage", help="evaluate a query with lineage and split a payment")
    p.add_argument("--query", required=True)
    p.add_argument("--db", required=True)
    p.add_argument("--total", type=int, required=True, help="total payment in cents")
    p.add_argument("--policy", choices=["tuple", "lineage"], required=True)
    p.add_argument("--owners", required=True, help="JSON map of tid or table to owner")
    p.set_defaults(func=cmd_lineage)

    p = sub.add_parser("sim", help="run a federation scenario")
    p.add_argument("--scenario", required=True)
    p.add_argument("--trace", help="write the trace to this JSONL file")
    p.add_argument("--full-recompute", action="store_true",
                   help="also replay every event with full recomputation and compare")
    p.set_defaults(func=cmd_sim)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    client = Client(args.server)
    try:
        return args.func(client, args)
    except (ClientError, PutviewError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
