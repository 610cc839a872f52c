"""Load and save databases as a schema.json plus one RFC-4180 CSV per table.

The schema file may declare more tables than there are CSV files: tables
without data files are view declarations, used to type and order view
relations (their CSVs are supplied separately, e.g. to a put call).
An empty CSV field is null; values are typed by the schema.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

from .errors import SchemaMismatch, TypeMismatch
from .relation import INT, TEXT, Column, Database, Relation, Schema, Value, row_sort_key


def schema_to_json(schema: Schema) -> dict:
    return {
        "name": schema.name,
        "attrs": [
            {"name": c.name, "type": c.type, "nullable": c.nullable} for c in schema.columns
        ],
        "key": list(schema.key),
    }


def schema_from_json(d: dict) -> Schema:
    columns = []
    for a in d["attrs"]:
        if a["type"] not in (INT, TEXT):
            raise SchemaMismatch(f"schema file declares bad type {a['type']!r}")
        columns.append(Column(a["name"], a["type"], bool(a.get("nullable", False))))
    return Schema(d["name"], tuple(columns), tuple(d["key"]))


def load_schemas(path: Path) -> dict[str, Schema]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    schemas = {}
    for entry in doc["tables"]:
        schema = schema_from_json(entry)
        if schema.name in schemas:
            raise SchemaMismatch(f"schema file declares {schema.name!r} twice")
        schemas[schema.name] = schema
    return schemas


def save_schemas(schemas: dict[str, Schema], path: Path) -> None:
    doc = {"tables": [schema_to_json(schemas[name]) for name in sorted(schemas)]}
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def _parse_field(field: str, col: Column, table: str) -> Value:
    if field == "":
        return None
    if col.type == INT:
        try:
            return int(field)
        except ValueError:
            raise TypeMismatch(f"{table}.{col.name}: {field!r} is not an integer") from None
    return field


def rows_from_csv(text: str, schema: Schema) -> frozenset:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise SchemaMismatch(f"CSV for {schema.name} has no header row") from None
    if tuple(header) != schema.attrs:
        raise SchemaMismatch(
            f"CSV header {header} does not match {schema.name}({', '.join(schema.attrs)})"
        )
    rows = set()
    for raw in reader:
        if not raw:
            continue
        if len(raw) != len(schema.columns):
            raise SchemaMismatch(f"CSV row {raw} has wrong arity for {schema.name}")
        rows.add(tuple(_parse_field(f, c, schema.name) for f, c in zip(raw, schema.columns)))
    return frozenset(rows)


def relation_to_csv(rel: Relation) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(rel.schema.attrs)
    key_idx = rel.schema.key_indexes()
    for row in sorted(rel.rows, key=lambda r: row_sort_key(tuple(r[i] for i in key_idx))):
        writer.writerow(["" if v is None else v for v in row])
    return out.getvalue()


def load_relation(path: Path, schema: Schema) -> Relation:
    return Relation(schema, rows_from_csv(Path(path).read_text(encoding="utf-8"), schema))


def load_dir(db_dir: Path) -> tuple[Database, dict[str, Schema]]:
    """Read a database directory.

    Returns the database of tables that have CSV files plus the view
    declarations (schemas without data files).
    """
    db_dir = Path(db_dir)
    schemas = load_schemas(db_dir / "schema.json")
    tables = {}
    views = {}
    for name, schema in schemas.items():
        csv_path = db_dir / f"{name}.csv"
        if csv_path.exists():
            tables[name] = load_relation(csv_path, schema)
        else:
            views[name] = schema
    return Database(tables), views


def save_dir(db: Database, db_dir: Path, *, extra_schemas: dict[str, Schema] | None = None) -> None:
    db_dir = Path(db_dir)
    db_dir.mkdir(parents=True, exist_ok=True)
    schemas = {name: db[name].schema for name in db.names()}
    if extra_schemas:
        for name, schema in extra_schemas.items():
            schemas.setdefault(name, schema)
    save_schemas(schemas, db_dir / "schema.json")
    for name in db.names():
        (db_dir / f"{name}.csv").write_text(relation_to_csv(db[name]), encoding="utf-8")
