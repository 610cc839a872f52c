"""putview: relational views defined by their update strategies.

A view is written as a put program in a small strategy language; the unique
query that computes the view is derived from the program, updates propagate
incrementally in both directions, and a federation simulator wires peers and
a mediator together out of these parts.
"""

from .engine import PutOutcome, get_view, put
from .derive import derive_query, render_sql
from .incremental import inc_get, inc_put
from .laws import check_roundtrip, check_validity_exhaustive
from .parser import parse_check_query, parse_program
from .printer import pretty_print
from .query import distribute_payment, eval_query, eval_with_lineage
from .relation import Column, Database, Delta, Relation, Schema
from .federation import run_scenario
from .syntax import Program
from .validation import infer_view_schema, validate

__version__ = "0.1.0"

__all__ = [
    "Column",
    "Database",
    "Delta",
    "Program",
    "PutOutcome",
    "Relation",
    "Schema",
    "check_roundtrip",
    "check_validity_exhaustive",
    "derive_query",
    "distribute_payment",
    "eval_query",
    "eval_with_lineage",
    "get_view",
    "inc_get",
    "inc_put",
    "infer_view_schema",
    "parse_check_query",
    "parse_program",
    "pretty_print",
    "put",
    "render_sql",
    "run_scenario",
    "validate",
    "__version__",
]
