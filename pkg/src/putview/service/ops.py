"""Service operations: pure functions from request models to response models.

The FastAPI app and the command-line client both call these directly, so the
wire format has exactly one implementation.
"""

from __future__ import annotations

from ..derive import derive_query, render_sql
from ..engine import get_view, put
from ..errors import PutviewError
from ..federation import run_scenario
from ..laws import check_roundtrip, check_validity_exhaustive
from ..parser import parse_check_query, parse_program
from ..query import distribute_payment, eval_with_lineage
from ..relation import Schema
from ..syntax import Program, QueryExpr, Union as QUnion, query_from_json, query_to_json
from ..validation import infer_view_schema, validate
from .models import (
    CheckResponse,
    DatabaseModel,
    DeriveRequest,
    DeriveResponse,
    GetRequest,
    GetResponse,
    LineageRequest,
    LineageResponse,
    PutRequest,
    PutResponse,
    RelationModel,
    RoundtripRequest,
    SimulateRequest,
    SimulateResponse,
    ValidateRequest,
    ValidateResponse,
    ValidityRequest,
)


def _view_schema(request, program: Program) -> Schema:
    if request.view_schema is not None:
        return request.view_schema.to_schema()
    db = request.database.to_database()
    schemas = {name: db[name].schema for name in db.names()}
    return infer_view_schema(program, schemas)


def derive(request: DeriveRequest) -> DeriveResponse:
    program = parse_program(request.program)
    query = derive_query(program)
    return DeriveResponse(
        view=program.view_name,
        sql=render_sql(query, program.view_name),
        query=query_to_json(query),
    )


def get(request: GetRequest) -> GetResponse:
    program = parse_program(request.program)
    db = request.database.to_database()
    view = get_view(program, db, view_schema=_view_schema(request, program))
    return GetResponse(view=RelationModel.from_relation(view))


def put_view(request: PutRequest) -> PutResponse:
    program = parse_program(request.program)
    db = request.database.to_database()
    outcome = put(program, db, request.view.to_relation())
    if not outcome.accepted:
        return PutResponse(accepted=False, reason=outcome.reason, path=list(outcome.path))
    return PutResponse(accepted=True, sources=DatabaseModel.from_database(outcome.sources))


def validate_program(request: ValidateRequest) -> ValidateResponse:
    program = parse_program(request.program)
    db = request.database.to_database()
    schemas = {name: db[name].schema for name in db.names()}
    schemas.setdefault(program.view_name, _view_schema(request, program))
    return ValidateResponse(errors=[str(e) for e in validate(program, schemas)])


def roundtrip(request: RoundtripRequest) -> CheckResponse:
    program = parse_program(request.program)
    db = request.database.to_database()
    report = check_roundtrip(
        program, db, _view_schema(request, program), trials=request.trials, seed=request.seed
    )
    return CheckResponse(ok=report.ok, report=report.to_json())


def validity(request: ValidityRequest) -> CheckResponse:
    program = parse_program(request.program)
    db = request.database.to_database()
    report = check_validity_exhaustive(
        program, db, _view_schema(request, program), request.domain,
        max_states=request.max_states,
    )
    return CheckResponse(ok=report.ok, report=report.to_json())


def parse_query_input(spec) -> QueryExpr:
    """Accept a SELECT string, a list of SELECT strings (unioned), or query JSON."""
    if isinstance(spec, str):
        return parse_check_query(spec)
    if isinstance(spec, list):
        parts = [parse_check_query(text) for text in spec]
        if not parts:
            raise PutviewError("empty query list")
        query = parts[0]
        for part in parts[1:]:
            query = QUnion(query, part)
        return query
    return query_from_json(spec)


def lineage(request: LineageRequest) -> LineageResponse:
    query = parse_query_input(request.query)
    db = request.database.to_database()
    lr = eval_with_lineage(query, db)
    payments = distribute_payment(lr, request.total_cents, request.policy, request.owners)
    return LineageResponse(
        payments=payments,
        answer_rows=len(lr.relation),
        lineage_tids=len(lr.all_tids()),
    )


def simulate(request: SimulateRequest) -> SimulateResponse:
    trace = run_scenario(request.scenario, compare_full=request.compare_full)
    return SimulateResponse(trace=trace)
