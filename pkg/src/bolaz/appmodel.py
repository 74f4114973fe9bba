"""Declarative three-tier application model.

An app file describes what extraction tooling would otherwise mine from real
server and frontend code: endpoints with straight-line SSA handlers and their
annotated SQL, pages with on-load calls, event elements and navigations, and
the token claims the deployment maps to identity columns. The analyzer and the
harness both run off this one model.

Handlers are branch-free by design; interval analysis treats control flow
conservatively and client-side condition logic is out of scope, so the IR
refuses to model it rather than model it unsoundly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from . import sql as sqlmod
from .errors import DanglingReference, DuplicateId, ParseError, ValidationError
from .schema import ResourceIdKind, Schema, load_schema

FORMAT_APP = "bolaz-app/1"

HTTP_METHODS = ("GET", "POST", "PUT", "PATCH", "DELETE")
PARAM_LOCATIONS = ("path", "query", "body")


# ---------------------------------------------------------------------------
# Handler expressions
# ---------------------------------------------------------------------------

# kinds: var | param | token_claim | literal | sql_result | sql_rows | collection_of


@dataclass(frozen=True)
class Expr:
    kind: str
    name: str | None = None       # var, param
    claim: str | None = None      # token_claim
    value: object = None          # literal
    stmt: str | None = None       # sql_result, sql_rows
    column: str | None = None     # sql_result
    items: tuple["Expr", ...] = ()  # collection_of

    KINDS = ("var", "param", "token_claim", "literal", "sql_result", "sql_rows", "collection_of")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValidationError(f"bad expression kind {self.kind!r}")

    def to_json(self) -> dict:
        if self.kind == "var":
            return {"kind": "var", "name": self.name}
        if self.kind == "param":
            return {"kind": "param", "name": self.name}
        if self.kind == "token_claim":
            return {"kind": "token_claim", "claim": self.claim}
        if self.kind == "literal":
            return {"kind": "literal", "value": self.value}
        if self.kind == "sql_result":
            return {"kind": "sql_result", "stmt": self.stmt, "column": self.column}
        if self.kind == "sql_rows":
            return {"kind": "sql_rows", "stmt": self.stmt}
        return {"kind": "collection_of", "items": [e.to_json() for e in self.items]}

    @staticmethod
    def from_json(doc: dict) -> "Expr":
        kind = doc.get("kind")
        if kind == "var":
            return Expr("var", name=doc["name"])
        if kind == "param":
            return Expr("param", name=doc["name"])
        if kind == "token_claim":
            return Expr("token_claim", claim=doc["claim"])
        if kind == "literal":
            return Expr("literal", value=doc.get("value"))
        if kind == "sql_result":
            return Expr("sql_result", stmt=doc["stmt"], column=doc["column"])
        if kind == "sql_rows":
            return Expr("sql_rows", stmt=doc["stmt"])
        if kind == "collection_of":
            return Expr("collection_of", items=tuple(Expr.from_json(e) for e in doc["items"]))
        raise ParseError(f"bad handler expression: {doc!r}")


@dataclass(frozen=True)
class Assign:
    dst: str
    src: Expr
    op = "assign"


@dataclass(frozen=True)
class Project:
    dst: str
    src: str
    fld: str
    op = "project"


@dataclass(frozen=True)
class ExecSql:
    stmt: str
    args: tuple[tuple[str, Expr], ...]
    op = "exec_sql"


@dataclass(frozen=True)
class Return:
    fields: tuple[tuple[str, Expr], ...]
    op = "return"


HandlerStmt = Assign | Project | ExecSql | Return


def _stmt_from_json(doc: dict) -> HandlerStmt:
    op = doc.get("op")
    if op == "assign":
        return Assign(dst=doc["dst"], src=Expr.from_json(doc["src"]))
    if op == "project":
        return Project(dst=doc["dst"], src=doc["src"], fld=doc["field"])
    if op == "exec_sql":
        return ExecSql(stmt=doc["stmt"],
                       args=tuple((k, Expr.from_json(v)) for k, v in sorted(doc.get("args", {}).items())))
    if op == "return":
        return Return(fields=tuple((k, Expr.from_json(v)) for k, v in sorted(doc["fields"].items())))
    raise ParseError(f"bad handler statement: {doc!r}")


def _stmt_to_json(stmt: HandlerStmt) -> dict:
    if isinstance(stmt, Assign):
        return {"op": "assign", "dst": stmt.dst, "src": stmt.src.to_json()}
    if isinstance(stmt, Project):
        return {"op": "project", "dst": stmt.dst, "src": stmt.src, "field": stmt.fld}
    if isinstance(stmt, ExecSql):
        return {"op": "exec_sql", "stmt": stmt.stmt, "args": {k: v.to_json() for k, v in stmt.args}}
    return {"op": "return", "fields": {k: v.to_json() for k, v in stmt.fields}}


# ---------------------------------------------------------------------------
# Endpoints
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Param:
    name: str
    location: str

    def __post_init__(self):
        if self.location not in PARAM_LOCATIONS:
            raise ValidationError(f"bad param location {self.location!r}")


@dataclass(frozen=True)
class Endpoint:
    id: str
    method: str
    path_template: str
    params: tuple[Param, ...] = ()
    token_required: bool = False
    admin_only: bool = False

    def __post_init__(self):
        if self.method not in HTTP_METHODS:
            raise ValidationError(f"endpoint {self.id}: bad method {self.method!r}")
        names = [p.name for p in self.params]
        if len(set(names)) != len(names):
            raise ValidationError(f"endpoint {self.id}: duplicate param names")
        for seg in self.path_template.split("/"):
            if seg.startswith("{") and seg.endswith("}"):
                name = seg[1:-1]
                match = next((p for p in self.params if p.name == name), None)
                if match is None or match.location != "path":
                    raise ValidationError(
                        f"endpoint {self.id}: path segment {{{name}}} needs a path param"
                    )

    def param(self, name: str) -> Param | None:
        return next((p for p in self.params if p.name == name), None)


@dataclass(frozen=True)
class SqlDecl:
    id: str
    text: str
    bindings: dict[str, sqlmod.ValueSource]


@dataclass
class EndpointDef:
    endpoint: Endpoint
    sql: list[SqlDecl]
    handler: list[HandlerStmt]
    parsed: dict[str, sqlmod.ParsedSql] = field(default_factory=dict)

    def sql_ids(self) -> list[str]:
        return [s.id for s in self.sql]


# ---------------------------------------------------------------------------
# Pages
# ---------------------------------------------------------------------------

# page-source kinds: response_field | router_param | page_var | literal
# | client_store | event_data


@dataclass(frozen=True)
class PageSource:
    kind: str
    call: str | None = None    # response_field
    fld: str | None = None     # response_field
    name: str | None = None    # router_param, page_var
    key: str | None = None     # client_store
    value: object = None       # literal

    KINDS = ("response_field", "router_param", "page_var", "literal", "client_store", "event_data")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValidationError(f"bad page source kind {self.kind!r}")

    def to_json(self) -> dict:
        if self.kind == "response_field":
            return {"kind": "response_field", "call": self.call, "field": self.fld}
        if self.kind == "router_param":
            return {"kind": "router_param", "name": self.name}
        if self.kind == "page_var":
            return {"kind": "page_var", "name": self.name}
        if self.kind == "literal":
            return {"kind": "literal", "value": self.value}
        if self.kind == "client_store":
            return {"kind": "client_store", "key": self.key}
        return {"kind": "event_data"}

    @staticmethod
    def from_json(doc: dict) -> "PageSource":
        kind = doc.get("kind")
        if kind == "response_field":
            return PageSource("response_field", call=doc["call"], fld=doc["field"])
        if kind == "router_param":
            return PageSource("router_param", name=doc["name"])
        if kind == "page_var":
            return PageSource("page_var", name=doc["name"])
        if kind == "literal":
            return PageSource("literal", value=doc.get("value"))
        if kind == "client_store":
            return PageSource("client_store", key=doc["key"])
        if kind == "event_data":
            return PageSource("event_data")
        raise ParseError(f"bad page source: {doc!r}")


@dataclass(frozen=True)
class ApiCall:
    endpoint: str
    args: tuple[tuple[str, PageSource], ...] = ()
    id: str | None = None  # required when another source references this call

    def to_json(self) -> dict:
        out: dict = {"endpoint": self.endpoint, "args": {k: v.to_json() for k, v in self.args}}
        if self.id:
            out["id"] = self.id
        return out

    @staticmethod
    def from_json(doc: dict) -> "ApiCall":
        return ApiCall(
            endpoint=doc["endpoint"],
            args=tuple((k, PageSource.from_json(v)) for k, v in sorted(doc.get("args", {}).items())),
            id=doc.get("id"),
        )


@dataclass(frozen=True)
class Navigate:
    target_page: str
    carried: tuple[tuple[str, PageSource], ...] = ()

    def to_json(self) -> dict:
        return {"target_page": self.target_page, "carried": {k: v.to_json() for k, v in self.carried}}

    @staticmethod
    def from_json(doc: dict) -> "Navigate":
        return Navigate(
            target_page=doc["target_page"],
            carried=tuple((k, PageSource.from_json(v)) for k, v in sorted(doc.get("carried", {}).items())),
        )


@dataclass(frozen=True)
class Element:
    """Page element: a rendered-data event that triggers a call or a
    navigation, or a plain navigation link."""

    id: str
    type: str  # "event" | "navigate"
    data_from: PageSource | None = None   # event
    call: ApiCall | None = None           # event action
    navigate: Navigate | None = None      # event action or plain link

    def __post_init__(self):
        if self.type not in ("event", "navigate"):
            raise ValidationError(f"element {self.id}: bad type {self.type!r}")
        if self.type == "event":
            if self.data_from is None or (self.call is None) == (self.navigate is None):
                raise ValidationError(
                    f"element {self.id}: an event carries data_from and exactly one of call/navigate"
                )
        if self.type == "navigate" and self.navigate is None:
            raise ValidationError(f"element {self.id}: navigate element needs a navigation")

    def to_json(self) -> dict:
        out: dict = {"type": self.type, "id": self.id}
        if self.data_from is not None:
            out["data_from"] = self.data_from.to_json()
        if self.call is not None:
            out["call"] = self.call.to_json()
        if self.navigate is not None:
            out["navigate"] = self.navigate.to_json()
        return out

    @staticmethod
    def from_json(doc: dict) -> "Element":
        return Element(
            id=doc["id"],
            type=doc["type"],
            data_from=PageSource.from_json(doc["data_from"]) if "data_from" in doc else None,
            call=ApiCall.from_json(doc["call"]) if "call" in doc else None,
            navigate=Navigate.from_json(doc["navigate"]) if "navigate" in doc else None,
        )


@dataclass(frozen=True)
class PageModel:
    id: str
    on_load_calls: tuple[ApiCall, ...] = ()
    elements: tuple[Element, ...] = ()
    router_params: tuple[str, ...] = ()

    def __post_init__(self):
        ids = [e.id for e in self.elements]
        if len(set(ids)) != len(ids):
            raise ValidationError(f"page {self.id}: duplicate element ids")

    def calls(self) -> list[tuple[ApiCall, Element | None]]:
        out: list[tuple[ApiCall, Element | None]] = [(c, None) for c in self.on_load_calls]
        for el in self.elements:
            if el.call is not None:
                out.append((el.call, el))
        return out


# ---------------------------------------------------------------------------
# Token claims and the full model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TokenClaim:
    claim: str
    maps_to: ResourceIdKind | None  # None: opaque claim, not an identity column


@dataclass
class AppModel:
    schema: Schema
    endpoints: list[EndpointDef]
    pages: list[PageModel]
    token_claims: list[TokenClaim]
    seed_data: dict[str, list[dict]] = field(default_factory=dict)

    def endpoint(self, endpoint_id: str) -> EndpointDef:
        for e in self.endpoints:
            if e.endpoint.id == endpoint_id:
                return e
        raise DanglingReference(f"unknown endpoint {endpoint_id!r}")

    def has_endpoint(self, endpoint_id: str) -> bool:
        return any(e.endpoint.id == endpoint_id for e in self.endpoints)

    def page(self, page_id: str) -> PageModel:
        for p in self.pages:
            if p.id == page_id:
                return p
        raise DanglingReference(f"unknown page {page_id!r}")

    def claim(self, name: str) -> TokenClaim | None:
        return next((c for c in self.token_claims if c.claim == name), None)

    def user_identity_claims(self) -> list[TokenClaim]:
        return [c for c in self.token_claims if c.maps_to is not None]


# ---------------------------------------------------------------------------
# Loading
# ---------------------------------------------------------------------------


def _derive_binding(endpoint_id: str, expr: Expr, ssa: dict[str, Expr]) -> sqlmod.ValueSource:
    """Static value source of a handler expression, chasing SSA assignments."""
    seen: set[str] = set()
    e = expr
    while e.kind == "var":
        if e.name in seen or e.name not in ssa:
            return sqlmod.unbound()
        seen.add(e.name)
        e = ssa[e.name]
    if e.kind == "param":
        return sqlmod.param(endpoint_id, e.name)
    if e.kind == "token_claim":
        return sqlmod.token(e.claim)
    if e.kind == "literal":
        return sqlmod.constant(e.value)
    if e.kind == "sql_result":
        return sqlmod.sql_output(e.stmt, e.column)
    return sqlmod.unbound()


def _load_endpoint(doc: dict, schema: Schema) -> EndpointDef:
    edoc = doc.get("endpoint")
    if edoc is None:
        raise ParseError("endpoint entry missing 'endpoint' object")
    endpoint = Endpoint(
        id=edoc["id"],
        method=edoc["method"],
        path_template=edoc.get("path_template", "/" + edoc["id"]),
        params=tuple(Param(p["name"], p["location"]) for p in edoc.get("params", [])),
        token_required=bool(edoc.get("token_required", False)),
        admin_only=bool(edoc.get("admin_only", False)),
    )
    handler = [_stmt_from_json(s) for s in doc.get("handler", [])]

    # single static assignment; Return, when present, terminates the handler
    assigned: set[str] = set()
    ssa_env: dict[str, Expr] = {}
    for i, stmt in enumerate(handler):
        if isinstance(stmt, (Assign, Project)):
            if stmt.dst in assigned:
                raise ValidationError(f"endpoint {endpoint.id}: variable {stmt.dst!r} assigned twice")
            assigned.add(stmt.dst)
            if isinstance(stmt, Assign):
                ssa_env[stmt.dst] = stmt.src
        if isinstance(stmt, Return) and i != len(handler) - 1:
            raise ValidationError(f"endpoint {endpoint.id}: return must be the final statement")

    sql_decls: list[SqlDecl] = []
    parsed: dict[str, sqlmod.ParsedSql] = {}
    exec_args: dict[str, dict[str, Expr]] = {}
    for stmt in handler:
        if isinstance(stmt, ExecSql):
            exec_args[stmt.stmt] = dict(stmt.args)
    for sdoc in doc.get("sql", []):
        sid = sdoc["id"]
        if sid in parsed:
            raise DuplicateId(f"endpoint {endpoint.id}: duplicate sql id {sid!r}")
        declared = {k: sqlmod.ValueSource.from_json(v) for k, v in sdoc.get("bindings", {}).items()}
        derived = {
            ph: _derive_binding(endpoint.id, e, ssa_env)
            for ph, e in exec_args.get(sid, {}).items()
        }
        bindings = dict(derived)
        for ph, src in declared.items():
            if src.kind == "param" and src.endpoint is None:
                src = sqlmod.ValueSource("param", endpoint=endpoint.id, name=src.name)
            got = derived.get(ph)
            if got is not None and got.kind != "unbound" and got.canon() != src.canon():
                raise ValidationError(
                    f"endpoint {endpoint.id}: binding for :{ph} in {sid} declares "
                    f"{src.kind} but the handler passes {got.kind}"
                )
            bindings[ph] = src
        p = sqlmod.parse_sql(sdoc["text"], schema, bindings, stmt_id=sid, endpoint=endpoint.id)
        sql_decls.append(SqlDecl(id=sid, text=sdoc["text"], bindings=bindings))
        parsed[sid] = p

    for stmt in handler:
        if isinstance(stmt, ExecSql):
            if stmt.stmt not in parsed:
                raise DanglingReference(
                    f"endpoint {endpoint.id}: exec_sql references undeclared statement {stmt.stmt!r}"
                )
            want = parsed[stmt.stmt].placeholder_names
            got = {k for k, _ in stmt.args}
            if want != got:
                raise ValidationError(
                    f"endpoint {endpoint.id}: exec_sql args for {stmt.stmt} bind {sorted(got)}, "
                    f"statement has placeholders {sorted(want)}"
                )
    param_names = {pr.name for pr in endpoint.params}
    for decl in sql_decls:
        for ph, src in decl.bindings.items():
            if src.kind == "param" and src.name not in param_names:
                raise DanglingReference(
                    f"endpoint {endpoint.id}: statement {decl.id} binds unknown param {src.name!r}"
                )
            if src.kind == "sql_output" and src.stmt not in parsed:
                raise DanglingReference(
                    f"endpoint {endpoint.id}: statement {decl.id} consumes unknown statement {src.stmt!r}"
                )
    return EndpointDef(endpoint=endpoint, sql=sql_decls, handler=handler, parsed=parsed)


def load_app(document: str | dict) -> AppModel:
    """Parse, cross-link and validate an app-model document."""
    if isinstance(document, str):
        try:
            doc = json.loads(document)
        except json.JSONDecodeError as e:
            raise ParseError(f"app model is not valid JSON: {e}") from e
    else:
        doc = document
    if not isinstance(doc, dict):
        raise ParseError("app model must be a JSON object")
    if doc.get("format") != FORMAT_APP:
        raise ParseError(f"app model must declare \"format\": \"{FORMAT_APP}\"")
    schema = load_schema(doc.get("schema", {"tables": []}))

    endpoints: list[EndpointDef] = []
    seen_eids: set[str] = set()
    for edoc in doc.get("endpoints", []):
        ed = _load_endpoint(edoc, schema)
        if ed.endpoint.id in seen_eids:
            raise DuplicateId(f"duplicate endpoint id {ed.endpoint.id!r}")
        seen_eids.add(ed.endpoint.id)
        endpoints.append(ed)

    pages: list[PageModel] = []
    seen_pids: set[str] = set()
    for pdoc in doc.get("pages", []):
        page = PageModel(
            id=pdoc["id"],
            on_load_calls=tuple(ApiCall.from_json(c) for c in pdoc.get("on_load_calls", [])),
            elements=tuple(Element.from_json(e) for e in pdoc.get("elements", [])),
            router_params=tuple(pdoc.get("router_params", [])),
        )
        if page.id in seen_pids:
            raise DuplicateId(f"duplicate page id {page.id!r}")
        seen_pids.add(page.id)
        pages.append(page)

    claims: list[TokenClaim] = []
    for cdoc in doc.get("token_claims", []):
        maps_to = cdoc.get("maps_to")
        if maps_to in (None, "opaque"):
            kind = None
        else:
            kind = schema.kind_of(maps_to["table"], maps_to["column"])
            if kind is None:
                raise ValidationError(
                    f"token claim {cdoc['claim']!r} maps to non-key column "
                    f"{maps_to['table']}.{maps_to['column']}"
                )
        claims.append(TokenClaim(claim=cdoc["claim"], maps_to=kind))

    model = AppModel(
        schema=schema,
        endpoints=endpoints,
        pages=pages,
        token_claims=claims,
        seed_data={k: list(v) for k, v in doc.get("seed_data", {}).items()},
    )
    _check_cross_references(model)
    return model


def _check_cross_references(model: AppModel):
    page_ids = {p.id for p in model.pages}
    for page in model.pages:
        # only on-load responses are rendered into the page, so only they can
        # feed later calls; within the on-load list, references look backwards
        prior_ids: set[str] = set()
        onload_ids = {c.id for c in page.on_load_calls if c.id}
        for call, element in page.calls():
            if not model.has_endpoint(call.endpoint):
                raise DanglingReference(
                    f"page {page.id}: call references unknown endpoint {call.endpoint!r}"
                )
            valid_refs = prior_ids if element is None else onload_ids
            ep = model.endpoint(call.endpoint).endpoint
            for pname, src in call.args:
                if ep.param(pname) is None:
                    raise DanglingReference(
                        f"page {page.id}: call to {call.endpoint} binds unknown param {pname!r}"
                    )
                if src.kind == "response_field" and src.call not in valid_refs:
                    raise DanglingReference(
                        f"page {page.id}: response_field references call {src.call!r} "
                        "which is not a prior on-load call"
                    )
                if src.kind == "router_param" and src.name not in page.router_params:
                    raise DanglingReference(
                        f"page {page.id}: router param {src.name!r} is not declared"
                    )
                if src.kind == "event_data" and element is None:
                    raise DanglingReference(
                        f"page {page.id}: event_data used outside an event element"
                    )
            if element is None and call.id:
                prior_ids.add(call.id)
        for el in page.elements:
            if el.type == "event" and el.data_from is not None:
                df = el.data_from
                if df.kind == "response_field" and df.call not in onload_ids:
                    raise DanglingReference(
                        f"page {page.id}: element {el.id} renders unknown call {df.call!r}"
                    )
                if df.kind == "router_param" and df.name not in page.router_params:
                    raise DanglingReference(
                        f"page {page.id}: element {el.id} renders undeclared router param {df.name!r}"
                    )
            nav = el.navigate
            if nav is not None:
                if nav.target_page not in page_ids:
                    raise DanglingReference(
                        f"page {page.id}: navigation to unknown page {nav.target_page!r}"
                    )
                target = model.page(nav.target_page)
                for rp, src in nav.carried:
                    if rp not in target.router_params:
                        raise DanglingReference(
                            f"page {page.id}: carried router param {rp!r} "
                            f"is not declared by page {nav.target_page}"
                        )
                    if src.kind == "response_field" and src.call not in onload_ids:
                        raise DanglingReference(
                            f"page {page.id}: navigation carries unknown call field {src.call!r}"
                        )
                    if src.kind == "event_data" and el.type != "event":
                        raise DanglingReference(
                            f"page {page.id}: event_data in a non-event navigation"
                        )
                    if src.kind == "router_param" and src.name not in page.router_params:
                        raise DanglingReference(
                            f"page {page.id}: router param {src.name!r} is not declared"
                        )


def validate_app(model: AppModel) -> list[str]:
    """Non-fatal diagnostics: dead statements, unreachable pages, navigation cycles."""
    warnings: list[str] = []
    for ed in model.endpoints:
        executed = {s.stmt for s in ed.handler if isinstance(s, ExecSql)}
        for decl in ed.sql:
            if decl.id not in executed:
                warnings.append(
                    f"endpoint {ed.endpoint.id}: statement {decl.id} is declared but never executed"
                )
    # navigation graph: cycles and unreachable pages (roots: pages nobody links to)
    links: dict[str, set[str]] = {p.id: set() for p in model.pages}
    for p in model.pages:
        for el in p.elements:
            if el.navigate is not None:
                links[p.id].add(el.navigate.target_page)
    targets = {t for outs in links.values() for t in outs}
    roots = [p for p in links if p not in targets]
    reachable: set[str] = set()
    stack = list(roots)
    while stack:
        cur = stack.pop()
        if cur in reachable:
            continue
        reachable.add(cur)
        stack.extend(links[cur])
    for p in sorted(links):
        if p not in reachable and roots:
            warnings.append(f"page {p} is unreachable from any root page")
    # cycle detection over navigation edges
    state: dict[str, int] = {}

    def visit(node: str) -> bool:
        state[node] = 1
        for nxt in links[node]:
            if state.get(nxt) == 1:
                return True
            if state.get(nxt, 0) == 0 and visit(nxt):
                return True
        state[node] = 2
        return False

    for p in sorted(links):
        if state.get(p, 0) == 0 and visit(p):
            warnings.append(f"navigation cycle involving page {p}")
            break
    return warnings


def serialize_app(model: AppModel) -> dict:
    """Round-trippable document form of a loaded model."""
    doc: dict = {"format": FORMAT_APP, "schema": model.schema.to_json()}
    doc["endpoints"] = []
    for ed in model.endpoints:
        e = ed.endpoint
        doc["endpoints"].append({
            "endpoint": {
                "id": e.id,
                "method": e.method,
                "path_template": e.path_template,
                "params": [{"name": p.name, "location": p.location} for p in e.params],
                "token_required": e.token_required,
                "admin_only": e.admin_only,
            },
            "sql": [
                {"id": s.id, "text": s.text,
                 "bindings": {k: v.to_json() for k, v in sorted(s.bindings.items())}}
                for s in ed.sql
            ],
            "handler": [_stmt_to_json(s) for s in ed.handler],
        })
    doc["pages"] = [
        {
            "id": p.id,
            "on_load_calls": [c.to_json() for c in p.on_load_calls],
            "elements": [e.to_json() for e in p.elements],
            "router_params": list(p.router_params),
        }
        for p in model.pages
    ]
    doc["token_claims"] = [
        {"claim": c.claim, "maps_to": c.maps_to.to_json() if c.maps_to else "opaque"}
        for c in model.token_claims
    ]
    if model.seed_data:
        doc["seed_data"] = model.seed_data
    return doc
