"""Interval construction, dependence resolution, backtracking and policy emission.

Every producer SELECT that returns resource IDs defines an interval: the set
of IDs a caller can legitimately have obtained from that endpoint. Intervals
carry three dependency kinds — token-bound conditions, conditions fed by the
producer's own parameters (the producer consumed a parent kind first), and
conditions fed by another statement's output (parent resource IDs).

Per injection point, matched intervals are resolved (a full-table parent
lifts its condition entirely, a narrower parent becomes a nested membership
test), foreign-key intervals are backtracked to the primary-key interval of
the producer that fed the inserting POST consumer, and the resulting set is
shrunk with the subset and union merge rules. A point whose resolved set
covers its whole table is exempt from runtime checks; a point no producer
feeds is denied by default and reported loudly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

from . import sql as sqlmod
from .appmodel import AppModel
from .classify import Classification, InjectionPoint, classify_all
from .errors import CyclicDependency, ValidationError
from .schema import ResourceIdKind, Schema
from .sql import Condition, ReducedSelect, covers_full_table, merge_subset, merge_union, reduce_select
from .taint import FlowFacts, FrontendEdge, ParamToSql, SqlToReturn

FORMAT_POLICY = "bolaz-policy/1"


# ---------------------------------------------------------------------------
# Intervals and dependencies
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Dependency:
    dep: str  # "consumed_kind" | "token_user" | "parent_interval"
    kind: ResourceIdKind | None = None   # consumed_kind
    via_param: str | None = None         # consumed_kind
    claim: str | None = None             # token_user
    interval: str | None = None          # parent_interval
    via_column: str | None = None        # parent_interval

    def to_json(self) -> dict:
        if self.dep == "token_user":
            return {"dep": "token_user", "claim": self.claim}
        if self.dep == "consumed_kind":
            return {"dep": "consumed_kind", "kind": self.kind.to_json(), "via_param": self.via_param}
        return {"dep": "parent_interval", "interval": self.interval, "via_column": self.via_column}

    @staticmethod
    def from_json(doc: dict) -> "Dependency":
        if doc["dep"] == "token_user":
            return Dependency("token_user", claim=doc["claim"])
        if doc["dep"] == "consumed_kind":
            return Dependency("consumed_kind", kind=ResourceIdKind.from_json(doc["kind"]),
                              via_param=doc["via_param"])
        return Dependency("parent_interval", interval=doc["interval"], via_column=doc["via_column"])


@dataclass(frozen=True)
class MsgInterval:
    id: str
    producer_endpoint: str
    reduced: ReducedSelect
    kind: ResourceIdKind
    deps: tuple[Dependency, ...] = ()
    incomplete: bool = False  # foreign-key interval with no backtracking chain

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "producer": self.producer_endpoint,
            "kind": self.kind.to_json(),
            "reduced": self.reduced.to_json(),
            "deps": [d.to_json() for d in self.deps],
            "incomplete": self.incomplete,
        }

    @staticmethod
    def from_json(doc: dict) -> "MsgInterval":
        return MsgInterval(
            id=doc["id"],
            producer_endpoint=doc["producer"],
            reduced=ReducedSelect.from_json(doc["reduced"]),
            kind=ResourceIdKind.from_json(doc["kind"]),
            deps=tuple(Dependency.from_json(d) for d in doc.get("deps", [])),
            incomplete=bool(doc.get("incomplete", False)),
        )


@dataclass
class MsgIntervalSet:
    point: InjectionPoint
    intervals: list[MsgInterval]
    unrestricted: bool = False

    def to_json(self) -> dict:
        return {
            "point": self.point.to_json(),
            "intervals": [i.id for i in self.intervals],
            "unrestricted": self.unrestricted,
        }


@dataclass
class AuthzPolicy:
    sets: list[MsgIntervalSet]
    producer_cache_specs: list[tuple[str, str, ResourceIdKind]]
    unassociated_points: list[InjectionPoint]
    interval_registry: dict[str, MsgInterval] = field(default_factory=dict)

    def set_for(self, point_key: str) -> MsgIntervalSet | None:
        for s in self.sets:
            if s.point.key() == point_key:
                return s
        return None

    def is_unassociated(self, point_key: str) -> bool:
        return any(p.key() == point_key for p in self.unassociated_points)

    def points_for_endpoint(self, endpoint: str) -> list[InjectionPoint]:
        out = [s.point for s in self.sets if s.point.endpoint == endpoint]
        out.extend(p for p in self.unassociated_points if p.endpoint == endpoint)
        return sorted(set(out), key=lambda p: p.sort_key())

    def to_json(self) -> dict:
        return {
            "format": FORMAT_POLICY,
            "intervals": {iid: iv.to_json() for iid, iv in sorted(self.interval_registry.items())},
            "sets": [s.to_json() for s in self.sets],
            "producer_cache_specs": [
                {"endpoint": e, "field": f, "kind": k.to_json()}
                for e, f, k in self.producer_cache_specs
            ],
            "unassociated_points": [p.to_json() for p in self.unassociated_points],
        }

    def serialize(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=2) + "\n"

    @staticmethod
    def from_json(doc: dict) -> "AuthzPolicy":
        if doc.get("format") != FORMAT_POLICY:
            raise ValidationError(f"policy must declare \"format\": \"{FORMAT_POLICY}\"")
        registry = {iid: MsgInterval.from_json(iv) for iid, iv in doc.get("intervals", {}).items()}
        sets = [
            MsgIntervalSet(
                point=InjectionPoint.from_json(s["point"]),
                intervals=[registry[iid] for iid in s["intervals"]],
                unrestricted=bool(s["unrestricted"]),
            )
            for s in doc.get("sets", [])
        ]
        specs = [
            (c["endpoint"], c["field"], ResourceIdKind.from_json(c["kind"]))
            for c in doc.get("producer_cache_specs", [])
        ]
        unassoc = [InjectionPoint.from_json(p) for p in doc.get("unassociated_points", [])]
        return AuthzPolicy(sets=sets, producer_cache_specs=specs,
                           unassociated_points=unassoc, interval_registry=registry)


def interval_id(endpoint: str, stmt: str, kind: ResourceIdKind) -> str:
    return f"{endpoint}:{stmt}:{kind.label()}"


# ---------------------------------------------------------------------------
# Interval construction
# ---------------------------------------------------------------------------


def _kind_of_output(model: AppModel, endpoint: str, v: sqlmod.ValueSource) -> ResourceIdKind:
    """Resource-ID kind of a statement-output value, via the parent statement's
    projection list; non-key and non-select parents are unsupported dependencies."""
    ed = model.endpoint(endpoint)
    parsed = ed.parsed.get(v.stmt)
    if parsed is None or parsed.stmt.op != "select":
        raise ValidationError(
            f"endpoint {endpoint}: condition consumes output of non-select {v.stmt!r}"
        )
    for proj in parsed.stmt.projections:
        if proj == "count(*)":
            continue
        table, col = proj.split(".", 1)
        if col == v.column:
            kind = model.schema.kind_of(table, col)
            if kind is None:
                raise ValidationError(
                    f"endpoint {endpoint}: parent statement {v.stmt} feeds non-key "
                    f"column {proj}; only resource-ID dependencies are supported"
                )
            return kind
    raise ValidationError(
        f"endpoint {endpoint}: statement {v.stmt} does not project column {v.column!r}"
    )


def _deps_for(reduced: ReducedSelect, producer_endpoint: str, model: AppModel) -> tuple[Dependency, ...]:
    schema = model.schema
    deps: list[Dependency] = []
    for cond in reduced.retained:
        v = cond.value
        if v.kind == "token" and not any(d.dep == "token_user" and d.claim == v.claim for d in deps):
            deps.append(Dependency("token_user", claim=v.claim))
        elif v.kind == "sql_output":
            parent_kind = _kind_of_output(model, producer_endpoint, v)
            pid = interval_id(producer_endpoint, v.stmt, parent_kind)
            deps.append(Dependency("parent_interval", interval=pid, via_column=cond.qualified()))
        elif v.kind == "param":
            fk = schema.table(cond.table).foreign_key_for(cond.column)
            if fk is not None:
                kind = schema.kind_of(cond.table, cond.column)
                deps.append(Dependency("consumed_kind", kind=kind, via_param=v.name))
    return tuple(deps)


def build_intervals(classification: Classification, model: AppModel) -> list[MsgInterval]:
    """Raw intervals for a producer's returned resource IDs, one per
    (producing SELECT, kind), with dependencies read off the retained conditions."""
    if classification.role not in ("producer", "producer_consumer"):
        return []
    ed = model.endpoint(classification.endpoint)
    schema = model.schema
    out: list[MsgInterval] = []
    for kind, stmt_id in classification.produced:
        parsed = ed.parsed.get(stmt_id)
        if parsed is None or parsed.stmt.op != "select":
            continue
        reduced = reduce_select(parsed.stmt, schema).with_kind_first(kind)
        out.append(MsgInterval(
            id=interval_id(classification.endpoint, stmt_id, kind),
            producer_endpoint=classification.endpoint,
            reduced=reduced,
            kind=kind,
            deps=_deps_for(reduced, classification.endpoint, schema),
        ))
    return sorted(out, key=lambda i: i.id)


def associate(facts: FlowFacts) -> list[tuple[str, str, str, str]]:
    """(producer, return_field, consumer, param) projections of frontend edges."""
    out = {
        (f.producer, f.return_field, f.consumer, f.param)
        for f in facts.of(FrontendEdge)
    }
    return sorted(out)


def match_kinds(point_kind: ResourceIdKind, candidate_kind: ResourceIdKind) -> bool:
    """Same underlying identifier domain: equal columns, or a PK/FK pair
    referencing the same primary key."""
    return point_kind.domain() == candidate_kind.domain()


# ---------------------------------------------------------------------------
# Policy builder
# ---------------------------------------------------------------------------


class _PolicyBuilder:
    def __init__(self, model: AppModel, facts: FlowFacts, classifications: list[Classification]):
        self.model = model
        self.schema = model.schema
        self.facts = facts
        self.classifications = {c.endpoint: c for c in classifications}
        self.edges = associate(facts)
        # (endpoint, return_field) -> [(stmt, qualified column, kind)]
        self.return_bindings: dict[tuple[str, str], list[tuple[str, str, ResourceIdKind]]] = {}
        for f in facts.of(SqlToReturn):
            table, col = f.column.split(".", 1)
            kind = self.schema.kind_of(table, col)
            if kind is not None:
                self.return_bindings.setdefault((f.endpoint, f.return_field), []).append(
                    (f.stmt, f.column, kind)
                )
        self.raw_intervals: dict[str, MsgInterval] = {}
        for c in classifications:
            for iv in build_intervals(c, model):
                self.raw_intervals[iv.id] = iv
        self.registry: dict[str, MsgInterval] = {}
        self._resolved: dict[str, MsgInterval] = {}
        self._interval_stack: list[str] = []
        self.point_sets: dict[str, MsgIntervalSet] = {}
        self._point_stack: list[str] = []
        self.all_points = sorted(
            {p for c in classifications for p in c.injection_points},
            key=lambda p: p.sort_key(),
        )

    # -- raw interval lookup -------------------------------------------------

    def _raw_interval(self, endpoint: str, stmt: str, kind: ResourceIdKind) -> MsgInterval:
        iid = interval_id(endpoint, stmt, kind)
        iv = self.raw_intervals.get(iid)
        if iv is None:
            # auxiliary interval: a statement referenced as a parent without
            # being part of the producer's returned intervals
            ed = self.model.endpoint(endpoint)
            parsed = ed.parsed.get(stmt)
            if parsed is None or parsed.stmt.op != "select":
                raise ValidationError(
                    f"interval dependency references non-select statement {endpoint}:{stmt}"
                )
            reduced = reduce_select(parsed.stmt, self.schema).with_kind_first(kind)
            iv = MsgInterval(
                id=iid, producer_endpoint=endpoint, reduced=reduced, kind=kind,
                deps=_deps_for(reduced, endpoint, self.schema),
            )
            self.raw_intervals[iid] = iv
        return iv

    def _parent_kind_for_output(self, endpoint: str, v: sqlmod.ValueSource) -> ResourceIdKind:
        ed = self.model.endpoint(endpoint)
        parsed = ed.parsed.get(v.stmt)
        if parsed is None or parsed.stmt.op != "select":
            raise ValidationError(
                f"endpoint {endpoint}: condition consumes output of non-select {v.stmt!r}"
            )
        for proj in parsed.stmt.projections:
            if proj == "count(*)":
                continue
            table, col = proj.split(".", 1)
            if col == v.column:
                kind = self.schema.kind_of(table, col)
                if kind is None:
                    raise ValidationError(
                        f"endpoint {endpoint}: parent statement {v.stmt} feeds non-key "
                        f"column {proj}; only resource-ID dependencies are supported"
                    )
                return kind
        raise ValidationError(
            f"endpoint {endpoint}: statement {v.stmt} does not project column {v.column!r}"
        )

    # -- resolution ------------------------------------------------------------

    def resolve_interval(self, interval: MsgInterval) -> MsgInterval:
        if interval.id in self._resolved:
            return self._resolved[interval.id]
        if interval.id in self._interval_stack:
            raise CyclicDependency(
                f"interval dependency cycle: {' -> '.join(self._interval_stack + [interval.id])}"
            )
        self._interval_stack.append(interval.id)
        try:
            groups: list[tuple[Condition, ...]] = []
            for group in interval.reduced.groups:
                new_group: list[Condition] = []
                for cond in group:
                    v = cond.value
                    if v.kind == "sql_output":
                        parent_kind = self._parent_kind_for_output(interval.producer_endpoint, v)
                        parent = self._raw_interval(interval.producer_endpoint, v.stmt, parent_kind)
                        resolved_parent = self.resolve_interval(parent)
                        if covers_full_table(resolved_parent.reduced, True, self.schema):
                            continue  # parent spans the table: the limitation is discarded
                        self.registry[resolved_parent.id] = resolved_parent
                        new_group.append(replace(cond, value=sqlmod.interval_ref(resolved_parent.id)))
                    elif v.kind == "param":
                        fk = self.schema.table(cond.table).foreign_key_for(cond.column)
                        if fk is None:
                            continue  # non-key param condition: reduction artifact, drop
                        fk_kind = self.schema.kind_of(cond.table, cond.column)
                        point = InjectionPoint(
                            endpoint=interval.producer_endpoint, param=v.name,
                            kind=fk_kind, stmt=interval.reduced.base.id, sql_op="select",
                        )
                        pset = self.resolve_point(point)
                        if pset.unrestricted:
                            continue  # consumed kind spans the table: drop the condition
                        new_group.append(replace(cond, value=sqlmod.interval_set_ref(point.key())))
                    else:
                        new_group.append(cond)
                groups.append(tuple(new_group))
            resolved = replace(interval, reduced=replace(interval.reduced, groups=tuple(groups)))
            self._resolved[interval.id] = resolved
            return resolved
        finally:
            self._interval_stack.pop()

    def backtrack_candidates(self, interval: MsgInterval) -> list[MsgInterval]:
        """PK intervals of producers feeding the POST consumers that insert this
        foreign-key column (data streams 1 and 3 of the backtracking flow)."""
        kind = interval.kind
        if kind.role != "fk":
            return []
        out: list[MsgInterval] = []
        inserters: list[tuple[str, str]] = []
        for f in self.facts.of(ParamToSql):
            if f.position.role != "insert" or f.position.column != kind.label():
                continue
            ed = self.model.endpoint(f.endpoint)
            if ed.endpoint.method == "POST":
                inserters.append((f.endpoint, f.param))
        for consumer, cparam in sorted(set(inserters)):
            for producer, fld, edge_consumer, edge_param in self.edges:
                if edge_consumer != consumer or edge_param != cparam:
                    continue
                for stmt, _column, pkind in self.return_bindings.get((producer, fld), []):
                    if pkind.domain() != (kind.ref_table, kind.ref_column):
                        continue
                    if self.classifications.get(producer) is None:
                        continue
                    raw = self.raw_intervals.get(interval_id(producer, stmt, pkind))
                    if raw is None:
                        continue
                    out.append(self.resolve_interval(raw))
        return sorted(out, key=lambda i: i.id)

    def resolve_point(self, point: InjectionPoint) -> MsgIntervalSet:
        key = point.key()
        if key in self.point_sets:
            return self.point_sets[key]
        if key in self._point_stack:
            raise CyclicDependency(
                f"injection-point dependency cycle: {' -> '.join(self._point_stack + [key])}"
            )
        self._point_stack.append(key)
        try:
            candidates: list[MsgInterval] = []
            for producer, fld, consumer, cparam in self.edges:
                if consumer != point.endpoint or cparam != point.param:
                    continue
                for stmt, _column, pkind in self.return_bindings.get((producer, fld), []):
                    if not match_kinds(point.kind, pkind):
                        continue
                    raw = self.raw_intervals.get(interval_id(producer, stmt, pkind))
                    if raw is None:
                        continue  # producer is not classified as producing (e.g. FP-API)
                    candidates.append(self.resolve_interval(raw))
            expanded: list[MsgInterval] = []
            for iv in candidates:
                if iv.kind.role == "fk":
                    backs = self.backtrack_candidates(iv)
                    if backs:
                        expanded.extend(backs)
                    else:
                        expanded.append(replace(iv, incomplete=True))
                else:
                    expanded.append(iv)
            # distinct by id, deterministic order
            unique = sorted({i.id: i for i in expanded}.values(), key=lambda i: i.id)
            merged = optimize_intervals(unique)
            unrestricted = any(
                covers_full_table(i.reduced, True, self.schema) for i in merged
            )
            pset = MsgIntervalSet(
                point=point,
                intervals=[] if unrestricted else merged,
                unrestricted=unrestricted,
            )
            self.point_sets[key] = pset
            for iv in pset.intervals:
                self.registry[iv.id] = iv
            return pset
        finally:
            self._point_stack.pop()

    def build(self) -> AuthzPolicy:
        sets: list[MsgIntervalSet] = []
        unassociated: list[InjectionPoint] = []
        for point in self.all_points:
            pset = self.resolve_point(point)
            if not pset.unrestricted and not pset.intervals:
                unassociated.append(point)
            else:
                sets.append(pset)
        specs: set[tuple[str, str, ResourceIdKind]] = set()
        restricted_params = {
            (s.point.endpoint, s.point.param) for s in sets if not s.unrestricted
        }
        for producer, fld, consumer, cparam in self.edges:
            if (consumer, cparam) not in restricted_params:
                continue
            for _stmt, _column, pkind in self.return_bindings.get((producer, fld), []):
                specs.add((producer, fld, pkind))
        return AuthzPolicy(
            sets=sets,
            producer_cache_specs=sorted(specs, key=lambda s: (s[0], s[1], s[2].label())),
            unassociated_points=unassociated,
            interval_registry=dict(self.registry),
        )


def optimize_intervals(intervals: list[MsgInterval]) -> list[MsgInterval]:
    """Merge to fixpoint: the subset rule keeps the broader statement, the
    union rule joins single-table statements; every merge shrinks the set."""
    work = list(intervals)
    changed = True
    while changed and len(work) > 1:
        changed = False
        n = len(work)
        for i in range(n):
            for j in range(i + 1, n):
                a, b = work[i], work[j]
                merged = _merge_pair(a, b)
                if merged is not None:
                    work = [w for k, w in enumerate(work) if k not in (i, j)]
                    work.append(merged)
                    changed = True
                    break
            if changed:
                break
    return sorted(work, key=lambda i: i.id)


def _merge_pair(a: MsgInterval, b: MsgInterval) -> MsgInterval | None:
    if a.kind != b.kind:
        return None
    r = merge_subset(a.reduced, b.reduced)
    if r is not None:
        return a
    r = merge_subset(b.reduced, a.reduced)
    if r is not None:
        return b
    r = merge_union(a.reduced, b.reduced)
    if r is not None:
        deps = tuple(dict.fromkeys(a.deps + b.deps))
        return MsgInterval(
            id=f"union:{min(a.id, b.id)}|{max(a.id, b.id)}",
            producer_endpoint=a.producer_endpoint,
            reduced=r,
            kind=a.kind,
            deps=deps,
            incomplete=a.incomplete or b.incomplete,
        )
    return None


# ---------------------------------------------------------------------------
# Public operations
# ---------------------------------------------------------------------------


def resolve_dependence(interval: MsgInterval, builder: _PolicyBuilder) -> MsgInterval:
    """Substitute parent and consumed-kind dependencies into runtime-checkable
    conditions; full-table parents drop their condition outright."""
    return builder.resolve_interval(interval)


def backtrack_fk(interval: MsgInterval, builder: _PolicyBuilder) -> MsgInterval:
    """Replace a foreign-key interval with the primary-key interval of the
    producer feeding the inserting POST consumer; kept (flagged incomplete)
    when no such chain exists."""
    candidates = builder.backtrack_candidates(interval)
    if candidates:
        return candidates[0]
    return replace(interval, incomplete=True)


def policy_builder(model: AppModel, facts: FlowFacts,
                   classifications: list[Classification] | None = None) -> _PolicyBuilder:
    if classifications is None:
        classifications = classify_all(model, facts)
    return _PolicyBuilder(model, facts, classifications)


def build_policy(model: AppModel, facts: FlowFacts,
                 classifications: list[Classification] | None = None) -> AuthzPolicy:
    """Full offline pipeline: intervals, association, resolution, backtracking,
    optimization, cache specs and the unassociated-point report."""
    return policy_builder(model, facts, classifications).build()
