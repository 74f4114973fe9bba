"""Endpoint role assignment and injection-point discovery.

Roles partition every non-admin endpoint by what it does with resource IDs:
producers return fresh ones, consumers take them as parameters into key
positions of SQL statements, false producers hand back the very IDs they
consumed (and are enforced exactly like consumers), producer-consumers do
both with different kinds, and the rest touch no resource IDs at all.

A parameter becomes an injection point only when it reaches a primary- or
foreign-key position: a WHERE key condition of a SELECT/DELETE/UPDATE, an
inserted key value, or an updated key value. Token claims never do; callers
cannot tamper with their own token.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .appmodel import AppModel
from .errors import ValidationError
from .schema import ResourceIdKind, Schema
from .taint import FlowFacts, ParamToSql, SqlToReturn

ROLES = ("producer", "consumer", "false_producer", "producer_consumer", "neither")

SQL_OPS = ("select", "delete", "insert", "update_set", "update_where")


@dataclass(frozen=True)
class InjectionPoint:
    endpoint: str
    param: str
    kind: ResourceIdKind
    stmt: str
    sql_op: str

    def __post_init__(self):
        if self.sql_op not in SQL_OPS:
            raise ValidationError(f"bad sql_op {self.sql_op!r}")

    def key(self) -> str:
        return f"{self.endpoint}:{self.param}:{self.sql_op}:{self.stmt}:{self.kind.label()}"

    def sort_key(self):
        return (self.endpoint, self.param, self.sql_op, self.stmt, self.kind.label())

    def to_json(self) -> dict:
        return {
            "endpoint": self.endpoint,
            "param": self.param,
            "kind": self.kind.to_json(),
            "stmt": self.stmt,
            "sql_op": self.sql_op,
        }

    @staticmethod
    def from_json(doc: dict) -> "InjectionPoint":
        return InjectionPoint(
            endpoint=doc["endpoint"],
            param=doc["param"],
            kind=ResourceIdKind.from_json(doc["kind"]),
            stmt=doc["stmt"],
            sql_op=doc["sql_op"],
        )


@dataclass(frozen=True)
class Classification:
    endpoint: str
    role: str
    produced: tuple[tuple[ResourceIdKind, str], ...]  # (kind, stmt_id)
    injection_points: tuple[InjectionPoint, ...]

    def to_json(self) -> dict:
        return {
            "endpoint": self.endpoint,
            "role": self.role,
            "produced": [{"kind": k.to_json(), "stmt": s} for k, s in self.produced],
            "injection_points": [p.to_json() for p in self.injection_points],
        }


def _consumption_points(endpoint_id: str, facts: FlowFacts, model: AppModel) -> list[InjectionPoint]:
    ed = model.endpoint(endpoint_id)
    schema = model.schema
    points: list[InjectionPoint] = []
    for f in facts.of(ParamToSql):
        if f.endpoint != endpoint_id:
            continue
        parsed = ed.parsed.get(f.stmt)
        if parsed is None:
            continue
        pos = f.position
        if pos.column is None:
            continue
        table, col = pos.column.split(".", 1)
        kind = schema.kind_of(table, col)
        if kind is None:
            continue  # non-key position: not an injection point
        stmt_op = parsed.stmt.op
        if pos.role == "where" and stmt_op in ("select", "delete"):
            sql_op = stmt_op
        elif pos.role == "where" and stmt_op == "update":
            sql_op = "update_where"
        elif pos.role == "set" and stmt_op == "update":
            sql_op = "update_set"
        elif pos.role == "insert" and stmt_op == "insert":
            sql_op = "insert"
        else:
            continue
        points.append(InjectionPoint(endpoint_id, f.param, kind, f.stmt, sql_op))
    return sorted(set(points), key=lambda p: p.sort_key())


def _production(endpoint_id: str, facts: FlowFacts, schema: Schema) -> list[tuple[ResourceIdKind, str]]:
    out: list[tuple[ResourceIdKind, str]] = []
    for f in facts.of(SqlToReturn):
        if f.endpoint != endpoint_id:
            continue
        table, col = f.column.split(".", 1)
        kind = schema.kind_of(table, col)
        if kind is not None and (kind, f.stmt) not in out:
            out.append((kind, f.stmt))
    return sorted(out, key=lambda ks: (ks[0].label(), ks[1]))


def classify_endpoint(endpoint_id: str, facts: FlowFacts, model: AppModel) -> Classification:
    """Role of one endpoint from its production and consumption of resource IDs."""
    produced = _production(endpoint_id, facts, model.schema)
    points = _consumption_points(endpoint_id, facts, model)
    produced_kinds = {k for k, _ in produced}
    consumed_kinds = {p.kind for p in points}
    if produced and not points:
        role = "producer"
    elif points and not produced:
        role = "consumer"
    elif not produced and not points:
        role = "neither"
    elif produced_kinds <= consumed_kinds:
        # returns only what it consumed: a consumer in producer's clothing
        role = "false_producer"
    else:
        role = "producer_consumer"
    return Classification(
        endpoint=endpoint_id,
        role=role,
        produced=tuple(produced),
        injection_points=tuple(points),
    )


def classify_all(model: AppModel, facts: FlowFacts) -> list[Classification]:
    """Classifications for every non-admin endpoint, in endpoint-id order."""
    out = []
    for ed in sorted(model.endpoints, key=lambda e: e.endpoint.id):
        if ed.endpoint.admin_only:
            continue
        out.append(classify_endpoint(ed.endpoint.id, facts, model))
    return out


def injection_points(model: AppModel, facts: FlowFacts) -> list[InjectionPoint]:
    """Every consumer-side injection point across the app, deterministic order."""
    points: list[InjectionPoint] = []
    for c in classify_all(model, facts):
        points.extend(c.injection_points)
    return sorted(set(points), key=lambda p: p.sort_key())


def classification_report(classifications: list[Classification]) -> str:
    return json.dumps([c.to_json() for c in classifications], sort_keys=True, indent=2) + "\n"
