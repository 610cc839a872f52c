"""Pydantic request/response models: the service wire format."""

from __future__ import annotations

from typing import Literal, Optional, Union

from pydantic import BaseModel, Field

from ..relation import Column, Database, Relation, Schema

Value = Union[int, str, None]


class ColumnModel(BaseModel):
    name: str
    type: Literal["int", "text"] = "text"
    nullable: bool = False


class SchemaModel(BaseModel):
    name: str
    attrs: list[ColumnModel]
    key: list[str]

    def to_schema(self) -> Schema:
        return Schema(
            self.name,
            tuple(Column(c.name, c.type, c.nullable) for c in self.attrs),
            tuple(self.key),
        )

    @classmethod
    def from_schema(cls, schema: Schema) -> "SchemaModel":
        return cls(
            name=schema.name,
            attrs=[
                ColumnModel(name=c.name, type=c.type, nullable=c.nullable)
                for c in schema.columns
            ],
            key=list(schema.key),
        )


class RelationModel(SchemaModel):
    rows: list[list[Value]] = Field(default_factory=list)

    def to_relation(self) -> Relation:
        return Relation(self.to_schema(), frozenset(tuple(r) for r in self.rows))

    @classmethod
    def from_relation(cls, rel: Relation) -> "RelationModel":
        base = SchemaModel.from_schema(rel.schema)
        return cls(**base.model_dump(), rows=[list(r) for r in rel.sorted_rows()])


class DatabaseModel(BaseModel):
    tables: list[RelationModel] = Field(default_factory=list)

    def to_database(self) -> Database:
        return Database({t.name: t.to_relation() for t in self.tables})

    @classmethod
    def from_database(cls, db: Database) -> "DatabaseModel":
        return cls(tables=[RelationModel.from_relation(db[name]) for name in db.names()])


class DeriveRequest(BaseModel):
    program: str


class DeriveResponse(BaseModel):
    view: str
    sql: str
    query: dict


class GetRequest(BaseModel):
    program: str
    database: DatabaseModel
    view_schema: Optional[SchemaModel] = None


class GetResponse(BaseModel):
    view: RelationModel


class PutRequest(BaseModel):
    program: str
    database: DatabaseModel
    view: RelationModel


class PutResponse(BaseModel):
    accepted: bool
    sources: Optional[DatabaseModel] = None
    reason: Optional[str] = None
    path: list[str] = Field(default_factory=list)


class ValidateRequest(BaseModel):
    program: str
    database: DatabaseModel
    view_schema: Optional[SchemaModel] = None


class ValidateResponse(BaseModel):
    errors: list[str]


class RoundtripRequest(BaseModel):
    program: str
    database: DatabaseModel
    view_schema: Optional[SchemaModel] = None
    trials: int = 200
    seed: int = 0


class ValidityRequest(BaseModel):
    program: str
    database: DatabaseModel
    view_schema: Optional[SchemaModel] = None
    domain: dict
    max_states: int = 1_000_000


class CheckResponse(BaseModel):
    ok: bool
    report: dict


class LineageRequest(BaseModel):
    query: Union[str, list[str], dict]
    database: DatabaseModel
    total_cents: int
    policy: Literal["tuple", "lineage"]
    owners: dict[str, str]


class LineageResponse(BaseModel):
    payments: dict[str, int]
    answer_rows: int
    lineage_tids: int


class SimulateRequest(BaseModel):
    scenario: dict
    compare_full: bool = False


class SimulateResponse(BaseModel):
    trace: list[dict]
