"""Restricted SQL AST: parser, resource-ID projection, interval reduction and merging.

The grammar covers exactly what three-tier CRUD handlers use: conjunctive
SELECT/INSERT/UPDATE/DELETE with `:name` placeholders whose value sources are
declared out of band. A SELECT that projects key columns defines an
authorization interval once reduced: pagination and free user-input
conditions are stripped (users can widen those to the whole table through
paging or empty keyword search), while foreign-key conditions and
constant/token/statement-fed conditions are what actually bound the interval.

Interval sets are shrunk with two merge rules: a subset rule that keeps the
broader statement, and a union rule that joins single-table statements into a
disjunction-of-conjunctions form. Both are syntactic on normalized condition
sets; the test suite checks them against brute-force row enumeration.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace

from .errors import (
    DependenciesUnresolved,
    KindMismatch,
    NotAProducer,
    ParseError,
    UnboundPlaceholder,
    UnknownColumn,
    UnsupportedConstruct,
    ValidationError,
)
from .schema import ResourceIdKind, Schema

# ---------------------------------------------------------------------------
# Value sources
# ---------------------------------------------------------------------------

# kinds: constant | param | token | sql_output | unbound | interval_ref | interval_set_ref
# The last two never appear in parsed statements; dependence resolution
# substitutes them in and the runtime evaluates them recursively.


@dataclass(frozen=True)
class ValueSource:
    kind: str
    value: object = None          # constant: literal (int/str or list for IN)
    endpoint: str | None = None   # param
    name: str | None = None       # param
    claim: str | None = None      # token
    stmt: str | None = None       # sql_output
    column: str | None = None     # sql_output
    interval: str | None = None   # interval_ref
    point: str | None = None      # interval_set_ref

    KINDS = ("constant", "param", "token", "sql_output", "unbound", "interval_ref", "interval_set_ref")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValidationError(f"bad value source kind {self.kind!r}")

    @property
    def is_user_input(self) -> bool:
        return self.kind in ("param", "unbound")

    def canon(self) -> tuple:
        if self.kind == "constant":
            v = self.value
            if isinstance(v, list):
                v = tuple(sorted(v, key=lambda x: (str(type(x)), str(x))))
            return ("constant", type(v).__name__, str(v))
        if self.kind == "param":
            return ("param", self.endpoint, self.name)
        if self.kind == "token":
            return ("token", self.claim)
        if self.kind == "sql_output":
            return ("sql_output", self.stmt, self.column)
        if self.kind == "interval_ref":
            return ("interval_ref", self.interval)
        if self.kind == "interval_set_ref":
            return ("interval_set_ref", self.point)
        return ("unbound",)

    def to_json(self) -> dict:
        out: dict = {"kind": self.kind}
        if self.kind == "constant":
            out["value"] = self.value
        elif self.kind == "param":
            out["name"] = self.name
            if self.endpoint:
                out["endpoint"] = self.endpoint
        elif self.kind == "token":
            out["claim"] = self.claim
        elif self.kind == "sql_output":
            out["stmt"] = self.stmt
            out["column"] = self.column
        elif self.kind == "interval_ref":
            out["interval"] = self.interval
        elif self.kind == "interval_set_ref":
            out["point"] = self.point
        return out

    @staticmethod
    def from_json(doc: dict) -> "ValueSource":
        kind = doc.get("kind")
        if kind == "constant":
            return constant(doc.get("value"))
        if kind == "param":
            return param(doc.get("endpoint"), doc["name"])
        if kind == "token":
            return token(doc["claim"])
        if kind == "sql_output":
            return sql_output(doc["stmt"], doc["column"])
        if kind == "unbound":
            return unbound()
        if kind == "interval_ref":
            return interval_ref(doc["interval"])
        if kind == "interval_set_ref":
            return interval_set_ref(doc["point"])
        raise ValidationError(f"bad value source document: {doc!r}")


def constant(value) -> ValueSource:
    return ValueSource("constant", value=value)


def param(endpoint: str | None, name: str) -> ValueSource:
    return ValueSource("param", endpoint=endpoint, name=name)


def token(claim: str) -> ValueSource:
    return ValueSource("token", claim=claim)


def sql_output(stmt: str, column: str) -> ValueSource:
    return ValueSource("sql_output", stmt=stmt, column=column)


def unbound() -> ValueSource:
    return ValueSource("unbound")


def interval_ref(interval_id: str) -> ValueSource:
    return ValueSource("interval_ref", interval=interval_id)


def interval_set_ref(point_key: str) -> ValueSource:
    return ValueSource("interval_set_ref", point=point_key)


# ---------------------------------------------------------------------------
# Conditions and statements
# ---------------------------------------------------------------------------

_OPS = ("=", "IN", "LIKE")


@dataclass(frozen=True)
class Condition:
    """One conjunct: `table.column <op> value-source`."""

    table: str
    column: str
    op: str
    value: ValueSource

    def __post_init__(self):
        if self.op not in _OPS:
            raise ValidationError(f"unsupported operator {self.op!r}")

    def qualified(self) -> str:
        return f"{self.table}.{self.column}"

    def canon(self) -> tuple:
        return (self.table, self.column, self.op, self.value.canon())

    def to_json(self) -> dict:
        return {"column": self.qualified(), "op": self.op, "value": self.value.to_json()}

    @staticmethod
    def from_json(doc: dict) -> "Condition":
        table, column = doc["column"].split(".", 1)
        return Condition(table, column, doc["op"], ValueSource.from_json(doc["value"]))


@dataclass(frozen=True)
class Select:
    id: str
    tables: tuple[str, ...]
    projections: tuple[str, ...]  # "table.column", or "count(*)"
    where: tuple[Condition, ...] = ()
    join_conditions: tuple[tuple[str, str], ...] = ()  # qualified column pairs
    has_pagination: bool = False
    order_by: tuple[str, ...] = ()  # parsed, no membership effect

    op = "select"

    @property
    def is_single_table(self) -> bool:
        return len(self.tables) == 1


@dataclass(frozen=True)
class Insert:
    id: str
    table: str
    values: tuple[tuple[str, ValueSource], ...]  # (column, source) in declaration order

    op = "insert"


@dataclass(frozen=True)
class Update:
    id: str
    table: str
    set_values: tuple[tuple[str, ValueSource], ...]
    where: tuple[Condition, ...] = ()

    op = "update"


@dataclass(frozen=True)
class Delete:
    id: str
    table: str
    where: tuple[Condition, ...] = ()

    op = "delete"


SqlStmt = Select | Insert | Update | Delete


# Where a placeholder landed inside a statement; drives Table-1 style
# injection-point mapping and taint fact positions.
@dataclass(frozen=True)
class SqlPosition:
    role: str  # "where" | "insert" | "set" | "pagination"
    column: str | None = None  # qualified, None for pagination

    def to_json(self) -> dict:
        return {self.role: self.column} if self.column else {self.role: True}

    @staticmethod
    def from_json(doc: dict) -> "SqlPosition":
        (role, col), = doc.items()
        return SqlPosition(role, col if isinstance(col, str) else None)


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

_PLACEHOLDER_RE = re.compile(r"^:([A-Za-z_][A-Za-z0-9_]*)$")
_IDENT_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")
_QUAL_RE = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*)\.([A-Za-z_][A-Za-z0-9_]*)$")
_NUM_RE = re.compile(r"^-?\d+$")

_TOKEN_RE = re.compile(
    r"""\s*(
        :?[A-Za-z_][A-Za-z0-9_]*(?:\.[A-Za-z_][A-Za-z0-9_]*)?   # ident, qualified ident, :placeholder
        | -?\d+                                                 # integer literal
        | '(?:[^'\\]|\\.)*'                                     # single-quoted string
        | "(?:[^"\\]|\\.)*"                                     # double-quoted string
        | \*
        | [(),=]
    )""",
    re.VERBOSE,
)

_KEYWORDS = {
    "select", "from", "where", "and", "or", "in", "like", "limit", "order",
    "by", "asc", "desc", "insert", "into", "values", "update", "set",
    "delete", "join", "on", "not", "count",
}


def _tokenize(text: str) -> list[str]:
    out, pos = [], 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            rest = text[pos:].strip()
            if not rest:
                break
            raise ParseError(f"cannot tokenize SQL at: {rest[:40]!r}")
        out.append(m.group(1))
        pos = m.end()
    return out


class _Cursor:
    def __init__(self, tokens: list[str], text: str):
        self.toks = tokens
        self.i = 0
        self.text = text

    def peek(self) -> str | None:
        return self.toks[self.i] if self.i < len(self.toks) else None

    def peek_kw(self) -> str | None:
        t = self.peek()
        return t.lower() if t is not None and t.lower() in _KEYWORDS else None

    def next(self) -> str:
        if self.i >= len(self.toks):
            raise ParseError(f"unexpected end of SQL: {self.text!r}")
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect_kw(self, kw: str):
        t = self.next()
        if t.lower() != kw:
            raise ParseError(f"expected {kw.upper()!r}, got {t!r} in {self.text!r}")

    def expect(self, lit: str):
        t = self.next()
        if t != lit:
            raise ParseError(f"expected {lit!r}, got {t!r} in {self.text!r}")

    def try_kw(self, kw: str) -> bool:
        t = self.peek()
        if t is not None and t.lower() == kw:
            self.i += 1
            return True
        return False

    @property
    def done(self) -> bool:
        return self.i >= len(self.toks)


def _unquote(tok: str):
    if tok and tok[0] in "'\"":
        body = tok[1:-1]
        return body.replace("\\" + tok[0], tok[0]).replace("\\\\", "\\")
    if _NUM_RE.match(tok):
        return int(tok)
    return None


class _StmtParser:
    """Single-statement recursive-descent parser over the restricted grammar."""

    def __init__(self, stmt_id: str, text: str, schema: Schema,
                 bindings: dict[str, ValueSource], endpoint: str | None):
        self.stmt_id = stmt_id
        self.schema = schema
        self.bindings = bindings
        self.endpoint = endpoint
        self.cur = _Cursor(_tokenize(text), text)
        self.positions: dict[str, list[SqlPosition]] = {}
        self.placeholders: list[str] = []

    # -- helpers ------------------------------------------------------------

    def _note(self, ph: str, pos: SqlPosition):
        self.placeholders.append(ph)
        self.positions.setdefault(ph, []).append(pos)

    def _source_for(self, ph: str) -> ValueSource:
        if ph not in self.bindings:
            raise UnboundPlaceholder(f"placeholder :{ph} has no binding in statement {self.stmt_id}")
        src = self.bindings[ph]
        if src.kind == "param" and src.endpoint is None and self.endpoint is not None:
            src = replace(src, endpoint=self.endpoint)
        return src

    def _value(self, position: SqlPosition) -> ValueSource:
        tok = self.cur.next()
        m = _PLACEHOLDER_RE.match(tok)
        if m:
            ph = m.group(1)
            self._note(ph, position)
            return self._source_for(ph)
        lit = _unquote(tok)
        if lit is None:
            raise ParseError(f"expected literal or :placeholder, got {tok!r}")
        return constant(lit)

    def _qualify(self, tok: str, tables: list[str]) -> tuple[str, str]:
        m = _QUAL_RE.match(tok)
        if m:
            table, col = m.group(1), m.group(2)
            if table not in tables:
                raise UnknownColumn(f"column {tok!r} references table outside FROM clause")
            if not self.schema.has_column(table, col):
                raise UnknownColumn(f"no column {col!r} in table {table!r}")
            return table, col
        if not _IDENT_RE.match(tok) or tok.lower() in _KEYWORDS:
            raise ParseError(f"expected column name, got {tok!r}")
        owners = [t for t in tables if self.schema.has_column(t, tok)]
        if not owners:
            raise UnknownColumn(f"no column {tok!r} in tables {tables}")
        if len(owners) > 1:
            raise UnknownColumn(f"ambiguous column {tok!r}; qualify with a table name")
        return owners[0], tok

    # -- clauses ------------------------------------------------------------

    def _where_clause(self, tables: list[str]) -> tuple[list[Condition], list[tuple[str, str]]]:
        conds: list[Condition] = []
        joins: list[tuple[str, str]] = []
        while True:
            tok = self.cur.next()
            if tok.lower() == "or":
                raise UnsupportedConstruct("disjunctive WHERE clauses are not supported")
            table, col = self._qualify(tok, tables)
            op_tok = self.cur.next()
            op = op_tok.upper() if op_tok.upper() in ("IN", "LIKE") else op_tok
            if op == "=":
                nxt = self.cur.peek()
                if nxt is not None and (_QUAL_RE.match(nxt) or (
                        _IDENT_RE.match(nxt) and nxt.lower() not in _KEYWORDS
                        and not _PLACEHOLDER_RE.match(nxt)
                        and any(self.schema.has_column(t, nxt.split(".")[-1]) for t in tables)
                        and _unquote(nxt) is None)):
                    # column = column: a join condition
                    rtable, rcol = self._qualify(self.cur.next(), tables)
                    joins.append((f"{table}.{col}", f"{rtable}.{rcol}"))
                else:
                    conds.append(Condition(table, col, "=",
                                           self._value(SqlPosition("where", f"{table}.{col}"))))
            elif op == "IN":
                pos = SqlPosition("where", f"{table}.{col}")
                nxt = self.cur.peek()
                if nxt == "(":
                    self.cur.expect("(")
                    items = []
                    while True:
                        items.append(self._value(pos))
                        if self.cur.peek() == ",":
                            self.cur.next()
                            continue
                        break
                    self.cur.expect(")")
                    if all(v.kind == "constant" for v in items):
                        conds.append(Condition(table, col, "IN", constant([v.value for v in items])))
                    elif len(items) == 1:
                        conds.append(Condition(table, col, "IN", items[0]))
                    else:
                        raise UnsupportedConstruct("mixed placeholder IN-lists are not supported")
                else:
                    conds.append(Condition(table, col, "IN", self._value(pos)))
            elif op == "LIKE":
                conds.append(Condition(table, col, "LIKE",
                                       self._value(SqlPosition("where", f"{table}.{col}"))))
            else:
                raise UnsupportedConstruct(f"operator {op_tok!r} is not supported")
            if not self.cur.try_kw("and"):
                break
        return conds, joins

    def _order_limit(self, tables: list[str]) -> tuple[tuple[str, ...], bool]:
        order: list[str] = []
        has_pagination = False
        if self.cur.try_kw("order"):
            self.cur.expect_kw("by")
            while True:
                t, c = self._qualify(self.cur.next(), tables)
                order.append(f"{t}.{c}")
                if not self.cur.try_kw("desc"):
                    self.cur.try_kw("asc")
                if self.cur.peek() == ",":
                    self.cur.next()
                    continue
                break
        if self.cur.try_kw("limit"):
            has_pagination = True
            self._limit_value()
            if self.cur.peek() == ",":
                self.cur.next()
                self._limit_value()
        return tuple(order), has_pagination

    def _limit_value(self):
        tok = self.cur.next()
        m = _PLACEHOLDER_RE.match(tok)
        if m:
            self._note(m.group(1), SqlPosition("pagination"))
            self._source_for(m.group(1))
        elif _unquote(tok) is None:
            raise ParseError(f"expected LIMIT bound, got {tok!r}")

    # -- statements ----------------------------------------------------------

    def parse(self) -> SqlStmt:
        head = self.cur.peek()
        if head is None:
            raise ParseError("empty SQL statement")
        kw = head.lower()
        if kw == "select":
            stmt = self._select()
        elif kw == "insert":
            stmt = self._insert()
        elif kw == "update":
            stmt = self._update()
        elif kw == "delete":
            stmt = self._delete()
        else:
            raise ParseError(f"statement must start with SELECT/INSERT/UPDATE/DELETE, got {head!r}")
        if not self.cur.done:
            raise ParseError(f"trailing tokens after statement: {self.cur.toks[self.cur.i:]!r}")
        return stmt

    def _select(self) -> Select:
        self.cur.expect_kw("select")
        raw_projs: list[str] = []
        while True:
            tok = self.cur.next()
            if tok.lower() == "count":
                self.cur.expect("(")
                self.cur.expect("*")
                self.cur.expect(")")
                raw_projs.append("count(*)")
            elif tok.lower() in ("sum", "avg", "min", "max"):
                raise UnsupportedConstruct(f"aggregate {tok.upper()} is not supported")
            elif tok == "(":
                raise UnsupportedConstruct("subqueries are not supported")
            else:
                raw_projs.append(tok)
            if self.cur.peek() == ",":
                self.cur.next()
                continue
            break
        self.cur.expect_kw("from")
        tables = [self._table_name()]
        joins: list[tuple[str, str]] = []
        while True:
            if self.cur.peek() == ",":
                self.cur.next()
                tables.append(self._table_name())
            elif self.cur.try_kw("join"):
                tables.append(self._table_name())
                self.cur.expect_kw("on")
                (lt, lc) = self._qualify(self.cur.next(), tables)
                self.cur.expect("=")
                (rt, rc) = self._qualify(self.cur.next(), tables)
                joins.append((f"{lt}.{lc}", f"{rt}.{rc}"))
            else:
                break
        projections = tuple(
            p if p == "count(*)" else "%s.%s" % self._qualify(p, tables) for p in raw_projs
        )
        where: list[Condition] = []
        if self.cur.try_kw("where"):
            conds, wjoins = self._where_clause(tables)
            where.extend(conds)
            joins.extend(wjoins)
        order, has_pagination = self._order_limit(tables)
        if len(tables) > 1 and not joins:
            raise ValidationError(f"multi-table SELECT {self.stmt_id} requires join conditions")
        if len(tables) == 1 and joins:
            raise ValidationError(f"single-table SELECT {self.stmt_id} cannot have join conditions")
        return Select(
            id=self.stmt_id,
            tables=tuple(tables),
            projections=projections,
            where=tuple(where),
            join_conditions=tuple(joins),
            has_pagination=has_pagination,
            order_by=order,
        )

    def _table_name(self) -> str:
        tok = self.cur.next()
        if not _IDENT_RE.match(tok) or tok.lower() in _KEYWORDS:
            raise ParseError(f"expected table name, got {tok!r}")
        if not self.schema.has_table(tok):
            raise UnknownColumn(f"unknown table {tok!r}")
        return tok

    def _insert(self) -> Insert:
        self.cur.expect_kw("insert")
        self.cur.expect_kw("into")
        table = self._table_name()
        self.cur.expect("(")
        cols: list[str] = []
        while True:
            tok = self.cur.next()
            if not self.schema.has_column(table, tok):
                raise UnknownColumn(f"no column {tok!r} in table {table!r}")
            cols.append(tok)
            if self.cur.peek() == ",":
                self.cur.next()
                continue
            break
        self.cur.expect(")")
        self.cur.expect_kw("values")
        self.cur.expect("(")
        values: list[ValueSource] = []
        for col in cols:
            values.append(self._value(SqlPosition("insert", f"{table}.{col}")))
            if self.cur.peek() == ",":
                self.cur.next()
        self.cur.expect(")")
        if len(values) != len(cols):
            raise ParseError(f"INSERT {self.stmt_id}: {len(cols)} columns but {len(values)} values")
        return Insert(id=self.stmt_id, table=table, values=tuple(zip(cols, values)))

    def _update(self) -> Update:
        self.cur.expect_kw("update")
        table = self._table_name()
        self.cur.expect_kw("set")
        sets: list[tuple[str, ValueSource]] = []
        while True:
            col = self.cur.next()
            if not self.schema.has_column(table, col):
                raise UnknownColumn(f"no column {col!r} in table {table!r}")
            self.cur.expect("=")
            sets.append((col, self._value(SqlPosition("set", f"{table}.{col}"))))
            if self.cur.peek() == ",":
                self.cur.next()
                continue
            break
        where: list[Condition] = []
        if self.cur.try_kw("where"):
            conds, joins = self._where_clause([table])
            if joins:
                raise UnsupportedConstruct("column-to-column conditions are not supported in UPDATE")
            where.extend(conds)
        return Update(id=self.stmt_id, table=table, set_values=tuple(sets), where=tuple(where))

    def _delete(self) -> Delete:
        self.cur.expect_kw("delete")
        self.cur.expect_kw("from")
        table = self._table_name()
        where: list[Condition] = []
        if self.cur.try_kw("where"):
            conds, joins = self._where_clause([table])
            if joins:
                raise UnsupportedConstruct("column-to-column conditions are not supported in DELETE")
            where.extend(conds)
        return Delete(id=self.stmt_id, table=table, where=tuple(where))


@dataclass(frozen=True)
class ParsedSql:
    stmt: SqlStmt
    # placeholder -> positions it occupies, in source order
    positions: dict[str, tuple[SqlPosition, ...]]

    @property
    def placeholder_names(self) -> set[str]:
        return set(self.positions)


def parse_sql(
    text: str,
    schema: Schema,
    bindings: dict[str, ValueSource],
    stmt_id: str = "s",
    endpoint: str | None = None,
) -> ParsedSql:
    """Parse one restricted-grammar statement with per-placeholder value sources."""
    p = _StmtParser(stmt_id, text, schema, bindings, endpoint)
    stmt = p.parse()
    extra = set(bindings) - set(p.placeholders)
    if extra:
        raise UnboundPlaceholder(
            f"bindings name placeholders absent from statement {stmt_id}: {sorted(extra)}"
        )
    return ParsedSql(stmt=stmt, positions={k: tuple(v) for k, v in p.positions.items()})


# ---------------------------------------------------------------------------
# Resource-ID projection and reduction
# ---------------------------------------------------------------------------


def projected_resource_ids(stmt: Select, schema: Schema) -> list[ResourceIdKind]:
    """Key columns among the projections; empty means the SELECT produces no
    resource IDs (a count-style interval that only reads an amount of data)."""
    out: list[ResourceIdKind] = []
    for proj in stmt.projections:
        if proj == "count(*)":
            continue
        table, col = proj.split(".", 1)
        kind = schema.kind_of(table, col)
        if kind is not None and kind not in out:
            out.append(kind)
    return out


@dataclass(frozen=True)
class ReducedSelect:
    """A SELECT stripped to the conditions that legitimately bound an interval.

    `groups` is a disjunction of conjunctive condition lists; straight from
    reduction there is exactly one group, union merges append more. The union
    form is internal only and never re-parsed.
    """

    base: Select
    groups: tuple[tuple[Condition, ...], ...]
    resource_ids: tuple[ResourceIdKind, ...]

    def __post_init__(self):
        if not self.resource_ids:
            raise ValidationError("a reduced select must produce at least one resource ID")
        if self.base.has_pagination:
            raise ValidationError("reduced selects carry no pagination")

    @property
    def retained(self) -> tuple[Condition, ...]:
        if len(self.groups) != 1:
            raise ValidationError("merged union interval has no single retained set")
        return self.groups[0]

    @property
    def is_union(self) -> bool:
        return len(self.groups) > 1

    @property
    def main_table(self) -> str:
        return self.resource_ids[0].table

    def with_kind_first(self, kind: ResourceIdKind) -> "ReducedSelect":
        rest = tuple(k for k in self.resource_ids if k != kind)
        return replace(self, resource_ids=(kind,) + rest)

    def to_json(self) -> dict:
        return {
            "tables": list(self.base.tables),
            "projections": list(self.base.projections),
            "join_conditions": [list(j) for j in self.base.join_conditions],
            "groups": [[c.to_json() for c in g] for g in self.groups],
            "resource_ids": [k.to_json() for k in self.resource_ids],
        }

    def serialize(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=2) + "\n"

    @staticmethod
    def from_json(doc: dict) -> "ReducedSelect":
        base = Select(
            id="reduced",
            tables=tuple(doc["tables"]),
            projections=tuple(doc["projections"]),
            where=(),
            join_conditions=tuple(tuple(j) for j in doc["join_conditions"]),
            has_pagination=False,
        )
        return ReducedSelect(
            base=base,
            groups=tuple(tuple(Condition.from_json(c) for c in g) for g in doc["groups"]),
            resource_ids=tuple(ResourceIdKind.from_json(k) for k in doc["resource_ids"]),
        )


def _keeps_condition(cond: Condition, schema: Schema) -> bool:
    table = schema.table(cond.table)
    if table.foreign_key_for(cond.column) is not None:
        # FK conditions are the necessary conditions that define the interval,
        # whatever feeds them.
        return True
    return cond.value.kind in ("constant", "token", "sql_output", "interval_ref", "interval_set_ref")


def reduce_select(stmt: Select, schema: Schema) -> ReducedSelect:
    """Strip pagination and free user-input conditions, keeping FK conditions and
    constant/token/statement-fed conditions; joins are always retained."""
    kinds = projected_resource_ids(stmt, schema)
    if not kinds:
        raise NotAProducer(f"SELECT {stmt.id} projects no resource-ID column")
    retained = tuple(c for c in stmt.where if _keeps_condition(c, schema))
    base = replace(stmt, where=retained, has_pagination=False, order_by=())
    return ReducedSelect(base=base, groups=(retained,), resource_ids=tuple(kinds))


def _non_restricting_joins(r: ReducedSelect, schema: Schema) -> bool:
    """True when every join pairs a foreign key with the primary key it
    references; under referential integrity such joins drop no rows."""
    for left, right in r.base.join_conditions:
        lt, lc = left.split(".", 1)
        rt, rc = right.split(".", 1)
        lk = schema.kind_of(lt, lc)
        rk = schema.kind_of(rt, rc)
        if lk is None or rk is None:
            return False
        pair = sorted([lk, rk], key=lambda k: k.role)  # fk before pk
        fk, pk = pair[0], pair[1]
        if fk.role != "fk" or pk.role != "pk":
            return False
        if (fk.ref_table, fk.ref_column) != (pk.table, pk.column):
            return False
    return True


def covers_full_table(r: ReducedSelect, deps_resolved: bool, schema: Schema | None = None) -> bool:
    """Whether the interval imposes no restriction on its main table.

    Conservative for multi-table selects: any retained condition counts as a
    restriction (a condition on a joined table still restricts main-table rows
    through the join), and joins themselves must be FK-to-referenced-PK pairs.
    """
    if not deps_resolved:
        raise DependenciesUnresolved(
            "full-table coverage is only meaningful after dependency resolution"
        )
    if not any(len(g) == 0 for g in r.groups):
        return False
    # some disjunct is unconditioned: the select reaches every main-table row
    # unless the join structure itself restricts
    if r.base.is_single_table:
        return True
    if schema is None:
        return False
    return _non_restricting_joins(r, schema)


# ---------------------------------------------------------------------------
# Merge rules
# ---------------------------------------------------------------------------


def _same_kind(si: ReducedSelect, sj: ReducedSelect) -> ResourceIdKind:
    ki, kj = si.resource_ids[0], sj.resource_ids[0]
    if ki != kj:
        raise KindMismatch(f"cannot merge intervals over {ki.label()} and {kj.label()}")
    return ki


def _group_sets(r: ReducedSelect) -> list[frozenset[tuple]]:
    return [frozenset(c.canon() for c in g) for g in r.groups]


def _dnf_subset(si: ReducedSelect, sj: ReducedSelect) -> bool:
    """rows(sj) ⊆ rows(si), syntactically: every sj disjunct strengthens some
    si disjunct."""
    gi, gj = _group_sets(si), _group_sets(sj)
    return all(any(g_i <= g_j for g_i in gi) for g_j in gj)


def _join_canon(r: ReducedSelect) -> frozenset:
    return frozenset(tuple(sorted(j)) for j in r.base.join_conditions)


def merge_subset(si: ReducedSelect, sj: ReducedSelect) -> ReducedSelect | None:
    """Subset rule: when si is at least as broad as sj, the pair merges to si.

    Applicability follows the produced kind's table: single-table pairs over
    the same table; a single-table si absorbing a multi-table sj with the same
    main table; multi-table pairs only with identical table sets and joins
    (differing join structure makes row sets syntactically incomparable).
    """
    _same_kind(si, sj)
    if si.main_table != sj.main_table:
        return None
    si_single, sj_single = si.base.is_single_table, sj.base.is_single_table
    if si_single and sj_single:
        return si if _dnf_subset(si, sj) else None
    if si_single and not sj_single:
        # si's conditions are all on the shared main table, so compare them
        # against sj's main-table conditions only; sj's joins and joined-table
        # conditions can only shrink sj further.
        gi = _group_sets(si)
        gj_main = [frozenset(c.canon() for c in g if c.table == sj.main_table) for g in sj.groups]
        if all(any(g_i <= g_j for g_i in gi) for g_j in gj_main):
            return si
        return None
    if not si_single and not sj_single:
        # differing join structure makes row sets syntactically incomparable
        if set(si.base.tables) != set(sj.base.tables) or _join_canon(si) != _join_canon(sj):
            return None
        return si if _dnf_subset(si, sj) else None
    # a multi-table si may restrict through its join; never declared broader
    # than a single-table sj on syntax alone
    return None


def merge_union(si: ReducedSelect, sj: ReducedSelect) -> ReducedSelect | None:
    """Intersection/union rule: single-table statements over one table merge
    into a disjunction whose membership is exactly the union of row sets.
    Subset pairs are expected to be routed through merge_subset first."""
    _same_kind(si, sj)
    if not (si.base.is_single_table and sj.base.is_single_table):
        return None
    if si.base.tables != sj.base.tables:
        return None
    groups = list(si.groups)
    seen = {frozenset(c.canon() for c in g) for g in groups}
    for g in sj.groups:
        key = frozenset(c.canon() for c in g)
        if key not in seen:
            groups.append(g)
            seen.add(key)
    projections = tuple(dict.fromkeys(si.base.projections + sj.base.projections))
    resource_ids = tuple(dict.fromkeys(si.resource_ids + sj.resource_ids))
    base = replace(si.base, projections=projections, where=())
    return ReducedSelect(base=base, groups=tuple(groups), resource_ids=resource_ids)
