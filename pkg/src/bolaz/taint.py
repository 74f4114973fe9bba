"""Static taint tracking over the app model.

Server side: a label lattice (sets of param/token/statement-output labels)
propagated through the straight-line SSA handlers, emitting which params and
claims reach which SQL positions and which statement columns reach which
response fields. Identifier values are never transformed along these flows,
so label propagation is plain set union.

Frontend side: response fields traced into call arguments and navigations,
within a page and across pages through router params, classified by six flow
patterns. Two of the patterns (producer-to-router hops) are intermediate;
complete producer-to-consumer edges carry the same-page patterns or the
router-receiving patterns after cross-page composition.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

from .appmodel import (
    ApiCall,
    AppModel,
    Assign,
    Element,
    EndpointDef,
    ExecSql,
    Expr,
    PageModel,
    PageSource,
    Project,
    Return,
)
from .errors import ParseError
from .schema import Schema
from .sql import SqlPosition

PATTERNS = ("P2C", "P2Event2C", "P2Router", "P2Event2Router", "Router2PC", "Router2C")


# ---------------------------------------------------------------------------
# Facts
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ParamToSql:
    endpoint: str
    param: str
    stmt: str
    position: SqlPosition
    fact = "param_to_sql"

    def sort_key(self):
        return (self.fact, self.endpoint, self.param, self.stmt, str(self.position.to_json()))

    def to_json(self) -> dict:
        return {"fact": self.fact, "endpoint": self.endpoint, "param": self.param,
                "stmt": self.stmt, "position": self.position.to_json()}


@dataclass(frozen=True)
class TokenToSql:
    endpoint: str
    claim: str
    stmt: str
    position: SqlPosition
    fact = "token_to_sql"

    def sort_key(self):
        return (self.fact, self.endpoint, self.claim, self.stmt, str(self.position.to_json()))

    def to_json(self) -> dict:
        return {"fact": self.fact, "endpoint": self.endpoint, "claim": self.claim,
                "stmt": self.stmt, "position": self.position.to_json()}


@dataclass(frozen=True)
class SqlToReturn:
    endpoint: str
    stmt: str
    column: str  # qualified
    return_field: str
    fact = "sql_to_return"

    def sort_key(self):
        return (self.fact, self.endpoint, self.stmt, self.column, self.return_field)

    def to_json(self) -> dict:
        return {"fact": self.fact, "endpoint": self.endpoint, "stmt": self.stmt,
                "column": self.column, "field": self.return_field}


@dataclass(frozen=True)
class SqlToSql:
    endpoint: str
    from_stmt: str
    from_column: str
    to_stmt: str
    to_position: SqlPosition
    fact = "sql_to_sql"

    def sort_key(self):
        return (self.fact, self.endpoint, self.from_stmt, self.from_column,
                self.to_stmt, str(self.to_position.to_json()))

    def to_json(self) -> dict:
        return {"fact": self.fact, "endpoint": self.endpoint, "from_stmt": self.from_stmt,
                "from_column": self.from_column, "to_stmt": self.to_stmt,
                "to_position": self.to_position.to_json()}


@dataclass(frozen=True)
class FrontendEdge:
    producer: str
    return_field: str
    consumer: str
    param: str
    pattern: str
    path: tuple[str, ...]  # page and element waypoints
    fact = "frontend_edge"

    def sort_key(self):
        return (self.fact, self.producer, self.return_field, self.consumer, self.param,
                self.pattern, self.path)

    def to_json(self) -> dict:
        return {"fact": self.fact, "producer": self.producer, "field": self.return_field,
                "consumer": self.consumer, "param": self.param, "pattern": self.pattern,
                "path": list(self.path)}


FlowFact = ParamToSql | TokenToSql | SqlToReturn | SqlToSql | FrontendEdge


@dataclass
class FlowFacts:
    facts: list[FlowFact] = field(default_factory=list)

    def __iter__(self):
        return iter(self.facts)

    def __len__(self):
        return len(self.facts)

    def of(self, cls) -> list:
        return [f for f in self.facts if isinstance(f, cls)]

    def to_jsonl(self) -> str:
        return "".join(json.dumps(f.to_json(), sort_keys=True) + "\n" for f in self.facts)

    @staticmethod
    def from_jsonl(text: str) -> "FlowFacts":
        facts: list[FlowFact] = []
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            doc = json.loads(line)
            facts.append(_fact_from_json(doc))
        return FlowFacts(facts=_dedup_sorted(facts))


def _fact_from_json(doc: dict) -> FlowFact:
    kind = doc.get("fact")
    if kind == "param_to_sql":
        return ParamToSql(doc["endpoint"], doc["param"], doc["stmt"],
                          SqlPosition.from_json(doc["position"]))
    if kind == "token_to_sql":
        return TokenToSql(doc["endpoint"], doc["claim"], doc["stmt"],
                          SqlPosition.from_json(doc["position"]))
    if kind == "sql_to_return":
        return SqlToReturn(doc["endpoint"], doc["stmt"], doc["column"], doc["field"])
    if kind == "sql_to_sql":
        return SqlToSql(doc["endpoint"], doc["from_stmt"], doc["from_column"],
                        doc["to_stmt"], SqlPosition.from_json(doc["to_position"]))
    if kind == "frontend_edge":
        return FrontendEdge(doc["producer"], doc["field"], doc["consumer"], doc["param"],
                            doc["pattern"], tuple(doc["path"]))
    raise ParseError(f"unknown fact kind in facts file: {doc!r}")


def _dedup_sorted(facts: list[FlowFact]) -> list[FlowFact]:
    return sorted(set(facts), key=lambda f: f.sort_key())


# ---------------------------------------------------------------------------
# Server-side flows
# ---------------------------------------------------------------------------

# labels: ("param", name) | ("token", claim) | ("sqlout", stmt, column) | ("rows", stmt)
Label = tuple


def _expr_labels(expr: Expr, env: dict[str, set[Label]]) -> set[Label]:
    if expr.kind == "var":
        return set(env.get(expr.name, set()))
    if expr.kind == "param":
        return {("param", expr.name)}
    if expr.kind == "token_claim":
        return {("token", expr.claim)}
    if expr.kind == "literal":
        return set()
    if expr.kind == "sql_result":
        return {("sqlout", expr.stmt, expr.column)}
    if expr.kind == "sql_rows":
        return {("rows", expr.stmt)}
    # collection_of taints element-wise
    out: set[Label] = set()
    for item in expr.items:
        out |= _expr_labels(item, env)
    return out


def _project_labels(labels: set[Label], fld: str, ed: EndpointDef) -> set[Label]:
    """Field projection keeps matching statement-output labels and everything
    that is not column-structured."""
    out: set[Label] = set()
    for lab in labels:
        if lab[0] == "rows":
            stmt = lab[1]
            parsed = ed.parsed.get(stmt)
            if parsed is not None and parsed.stmt.op == "select":
                for proj in parsed.stmt.projections:
                    if proj != "count(*)" and proj.split(".", 1)[1] == fld:
                        out.add(("sqlout", stmt, proj.split(".", 1)[1]))
        elif lab[0] == "sqlout":
            if lab[2] == fld:
                out.add(lab)
        else:
            out.add(lab)
    return out


def _qualified(ed: EndpointDef, stmt_id: str, column: str) -> str:
    """Qualify a statement-result column with its owning table."""
    parsed = ed.parsed.get(stmt_id)
    if parsed is None or parsed.stmt.op != "select":
        return column
    for proj in parsed.stmt.projections:
        if proj != "count(*)" and proj.split(".", 1)[1] == column:
            return proj
    return column


def server_flows(model: AppModel) -> list[FlowFact]:
    """Param/token/statement flows inside every non-admin endpoint handler."""
    facts: list[FlowFact] = []
    for ed in model.endpoints:
        if ed.endpoint.admin_only:
            continue
        env: dict[str, set[Label]] = {}
        eid = ed.endpoint.id
        for stmt in ed.handler:
            if isinstance(stmt, Assign):
                env[stmt.dst] = _expr_labels(stmt.src, env)
            elif isinstance(stmt, Project):
                env[stmt.dst] = _project_labels(env.get(stmt.src, set()), stmt.fld, ed)
            elif isinstance(stmt, ExecSql):
                parsed = ed.parsed[stmt.stmt]
                for ph, expr in stmt.args:
                    positions = parsed.positions.get(ph, ())
                    labels = _expr_labels(expr, env)
                    for pos in positions:
                        if pos.role == "pagination":
                            continue
                        for lab in labels:
                            if lab[0] == "param":
                                facts.append(ParamToSql(eid, lab[1], stmt.stmt, pos))
                            elif lab[0] == "token":
                                facts.append(TokenToSql(eid, lab[1], stmt.stmt, pos))
                            elif lab[0] == "sqlout":
                                facts.append(SqlToSql(eid, lab[1],
                                                      _qualified(ed, lab[1], lab[2]),
                                                      stmt.stmt, pos))
            elif isinstance(stmt, Return):
                for fname, expr in stmt.fields:
                    for lab in _expr_labels(expr, env):
                        if lab[0] == "sqlout":
                            facts.append(SqlToReturn(eid, lab[1],
                                                     _qualified(ed, lab[1], lab[2]), fname))
                        elif lab[0] == "rows":
                            parsed = ed.parsed.get(lab[1])
                            if parsed is not None and parsed.stmt.op == "select":
                                for proj in parsed.stmt.projections:
                                    if proj != "count(*)":
                                        facts.append(SqlToReturn(eid, lab[1], proj, fname))
    return _dedup_sorted(facts)


# ---------------------------------------------------------------------------
# Frontend flows
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _ToRouter:
    """Intermediate producer-to-router hop awaiting a receiving page."""

    producer: str
    return_field: str
    target_page: str
    router_param: str
    via_event: bool
    path: tuple[str, ...]


@dataclass(frozen=True)
class _RouterFeed:
    """Intermediate router-param-to-call hop on a receiving page."""

    page: str
    router_param: str
    consumer: str
    param: str
    path: tuple[str, ...]


@dataclass(frozen=True)
class _RouterForward:
    """Router param forwarded into a further navigation."""

    page: str
    router_param: str
    target_page: str
    target_router_param: str
    path: tuple[str, ...]


def _resolve_event_data(el: Element | None) -> PageSource | None:
    if el is not None and el.type == "event":
        return el.data_from
    return None


def _producing_endpoints(server_facts: list[FlowFact], schema: Schema) -> set[str]:
    out: set[str] = set()
    for f in server_facts:
        if isinstance(f, SqlToReturn):
            table, col = f.column.split(".", 1)
            if schema.kind_of(table, col) is not None:
                out.add(f.endpoint)
    return out


def frontend_flows(model: AppModel, server_facts: list[FlowFact] | None = None) -> list[FlowFact]:
    """Producer-to-consumer edges through pages, events and router params."""
    if server_facts is None:
        server_facts = server_flows(model)
    producers_by_return = _producing_endpoints(server_facts, model.schema)

    edges: list[FrontendEdge] = []
    to_router: list[_ToRouter] = []
    feeds: list[_RouterFeed] = []
    forwards: list[_RouterForward] = []

    for page in model.pages:
        call_endpoint = {c.id: c.endpoint for c in page.on_load_calls if c.id}
        for call, element in page.calls():
            via_event = element is not None and element.type == "event"
            for pname, src in call.args:
                actual = src
                if src.kind == "event_data":
                    actual = _resolve_event_data(element)
                    if actual is None:
                        continue
                if actual.kind == "response_field":
                    producer = call_endpoint.get(actual.call)
                    if producer is None:
                        continue
                    pattern = "P2Event2C" if via_event else "P2C"
                    path = (page.id,) + ((f"{page.id}/{element.id}",) if element else ())
                    edges.append(FrontendEdge(producer, actual.fld, call.endpoint,
                                              pname, pattern, path))
                elif actual.kind == "router_param":
                    path = (page.id,) + ((f"{page.id}/{element.id}",) if element else ())
                    feeds.append(_RouterFeed(page.id, actual.name, call.endpoint, pname, path))
                # literal / page_var / client_store feed no producer edge
        for el in page.elements:
            nav = el.navigate
            if nav is None:
                continue
            for rp, src in nav.carried:
                actual = src
                via_event = el.type == "event"
                if src.kind == "event_data":
                    actual = _resolve_event_data(el)
                    if actual is None:
                        continue
                if actual.kind == "response_field":
                    producer = call_endpoint.get(actual.call)
                    if producer is None:
                        continue
                    to_router.append(_ToRouter(
                        producer, actual.fld, nav.target_page, rp,
                        via_event, (page.id, f"{page.id}/{el.id}", nav.target_page),
                    ))
                elif actual.kind == "router_param":
                    forwards.append(_RouterForward(
                        page.id, actual.name, nav.target_page, rp,
                        (page.id, f"{page.id}/{el.id}", nav.target_page),
                    ))

    # extend producer-to-router hops through router-to-router forwards to fixpoint
    frontier = list(to_router)
    seen: set[tuple] = {(t.producer, t.return_field, t.target_page, t.router_param) for t in frontier}
    while frontier:
        nxt: list[_ToRouter] = []
        for t in frontier:
            for fw in forwards:
                if fw.page == t.target_page and fw.router_param == t.router_param:
                    key = (t.producer, t.return_field, fw.target_page, fw.target_router_param)
                    if key in seen:
                        continue
                    seen.add(key)
                    ext = _ToRouter(t.producer, t.return_field, fw.target_page,
                                    fw.target_router_param, t.via_event, t.path + fw.path[1:])
                    nxt.append(ext)
                    to_router.append(ext)
        frontier = nxt

    for t in to_router:
        for f in feeds:
            if f.page == t.target_page and f.router_param == t.router_param:
                pattern = "Router2PC" if f.consumer in producers_by_return else "Router2C"
                edges.append(FrontendEdge(t.producer, t.return_field, f.consumer, f.param,
                                          pattern, t.path + f.path[1:]))
    return _dedup_sorted(list(edges))


def all_facts(model: AppModel) -> FlowFacts:
    """Server and frontend facts, deduplicated, in deterministic order."""
    server = server_flows(model)
    frontend = frontend_flows(model, server)
    return FlowFacts(facts=_dedup_sorted(server + frontend))
