"""Relational schema model and resource-ID column identification.

A resource ID is a primary-key or foreign-key column; those are the only
columns whose values identify objects and therefore the only positions
that matter for injection-point discovery and interval construction.
Composite primary keys are rejected at load time so interval membership
stays a scalar set test.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import ParseError, UnknownColumn, UnknownTable, ValidationError

_IDENT_OK = set("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_")

SCALAR_KINDS = ("integer", "string")


def _check_ident(name: str, what: str) -> str:
    if not name or not isinstance(name, str) or set(name) - _IDENT_OK or name[0].isdigit():
        raise ValidationError(f"invalid {what} identifier: {name!r}")
    return name


@dataclass(frozen=True)
class ForeignKey:
    column: str
    ref_table: str
    ref_column: str


@dataclass(frozen=True)
class TableDef:
    name: str
    columns: tuple[str, ...]
    primary_key: str
    foreign_keys: tuple[ForeignKey, ...] = ()
    # Optional scalar kind per column ("integer"/"string"); only the store
    # consults this, analysis treats columns as opaque identifiers.
    column_types: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        _check_ident(self.name, "table")
        for c in self.columns:
            _check_ident(c, "column")
        if len(set(self.columns)) != len(self.columns):
            raise ValidationError(f"table {self.name}: duplicate column names")
        if self.primary_key not in self.columns:
            raise ValidationError(f"table {self.name}: primary key {self.primary_key} not a column")
        for fk in self.foreign_keys:
            if fk.column not in self.columns:
                raise ValidationError(f"table {self.name}: foreign key column {fk.column} not a column")
            if fk.column == self.primary_key and fk.ref_table == self.name:
                raise ValidationError(
                    f"table {self.name}: column {fk.column} cannot be both the primary key "
                    "and a foreign key to itself"
                )
        for col, kind in self.column_types.items():
            if col not in self.columns:
                raise ValidationError(f"table {self.name}: column_types names unknown column {col}")
            if kind not in SCALAR_KINDS:
                raise ValidationError(f"table {self.name}: unknown scalar kind {kind!r}")

    def foreign_key_for(self, column: str) -> ForeignKey | None:
        for fk in self.foreign_keys:
            if fk.column == column:
                return fk
        return None


@dataclass(frozen=True)
class ResourceIdKind:
    """Identity of one resource-ID column: its table, column and key role."""

    table: str
    column: str
    # "pk" or "fk"; foreign keys carry the referenced primary key.
    role: str
    ref_table: str | None = None
    ref_column: str | None = None

    def __post_init__(self):
        if self.role not in ("pk", "fk"):
            raise ValidationError(f"bad resource-id role {self.role!r}")
        if self.role == "fk" and (self.ref_table is None or self.ref_column is None):
            raise ValidationError("fk kind requires ref_table/ref_column")

    @property
    def is_primary(self) -> bool:
        return self.role == "pk"

    def domain(self) -> tuple[str, str]:
        """Underlying identifier domain: the primary key this kind draws from."""
        if self.role == "pk":
            return (self.table, self.column)
        return (self.ref_table, self.ref_column)

    def label(self) -> str:
        return f"{self.table}.{self.column}"

    def to_json(self) -> dict:
        out = {"table": self.table, "column": self.column, "role": self.role}
        if self.role == "fk":
            out["ref_table"] = self.ref_table
            out["ref_column"] = self.ref_column
        return out

    @staticmethod
    def from_json(doc: dict) -> "ResourceIdKind":
        return ResourceIdKind(
            table=doc["table"],
            column=doc["column"],
            role=doc["role"],
            ref_table=doc.get("ref_table"),
            ref_column=doc.get("ref_column"),
        )


@dataclass(frozen=True)
class Schema:
    tables: tuple[TableDef, ...]

    def __post_init__(self):
        names = [t.name for t in self.tables]
        if len(set(names)) != len(names):
            raise ValidationError("duplicate table names")
        by_name = {t.name: t for t in self.tables}
        for t in self.tables:
            for fk in t.foreign_keys:
                ref = by_name.get(fk.ref_table)
                if ref is None:
                    raise ValidationError(
                        f"table {t.name}: foreign key {fk.column} references missing table {fk.ref_table}"
                    )
                if fk.ref_column != ref.primary_key:
                    raise ValidationError(
                        f"table {t.name}: foreign key {fk.column} must reference "
                        f"{fk.ref_table}'s primary key, not {fk.ref_column}"
                    )

    def table(self, name: str) -> TableDef:
        for t in self.tables:
            if t.name == name:
                return t
        raise UnknownTable(f"unknown table {name!r}")

    def has_table(self, name: str) -> bool:
        return any(t.name == name for t in self.tables)

    def has_column(self, table: str, column: str) -> bool:
        return column in self.table(table).columns

    def kind_of(self, table: str, column: str) -> ResourceIdKind | None:
        """The resource-ID kind of a column, or None for non-key columns."""
        t = self.table(table)
        if column not in t.columns:
            raise UnknownColumn(f"no column {column!r} in table {table!r}")
        fk = t.foreign_key_for(column)
        if fk is not None:
            return ResourceIdKind(table, column, "fk", fk.ref_table, fk.ref_column)
        if column == t.primary_key:
            return ResourceIdKind(table, column, "pk")
        return None

    def to_json(self) -> dict:
        return {
            "tables": [
                {
                    "name": t.name,
                    "columns": list(t.columns),
                    "primary_key": t.primary_key,
                    "foreign_keys": [
                        {"column": fk.column, "ref_table": fk.ref_table, "ref_column": fk.ref_column}
                        for fk in t.foreign_keys
                    ],
                    **({"column_types": dict(sorted(t.column_types.items()))} if t.column_types else {}),
                }
                for t in self.tables
            ]
        }


def load_schema(document: str | dict) -> Schema:
    """Parse and validate a schema document (JSON text or already-decoded dict)."""
    if isinstance(document, str):
        try:
            doc = json.loads(document)
        except json.JSONDecodeError as e:
            raise ParseError(f"schema is not valid JSON: {e}") from e
    else:
        doc = document
    if not isinstance(doc, dict) or "tables" not in doc:
        raise ParseError("schema document must be an object with a 'tables' list")
    tables = []
    for tdoc in doc["tables"]:
        try:
            pk = tdoc["primary_key"]
        except (KeyError, TypeError) as e:
            raise ParseError(f"table entry missing primary_key: {tdoc!r}") from e
        if isinstance(pk, (list, tuple)):
            raise ValidationError(f"table {tdoc.get('name')}: composite primary keys are not supported")
        fks = tuple(
            ForeignKey(f["column"], f["ref_table"], f["ref_column"])
            for f in tdoc.get("foreign_keys", [])
        )
        tables.append(
            TableDef(
                name=tdoc["name"],
                columns=tuple(tdoc["columns"]),
                primary_key=pk,
                foreign_keys=fks,
                column_types=dict(tdoc.get("column_types", {})),
            )
        )
    return Schema(tables=tuple(tables))


def resource_id_columns(schema: Schema, table: str) -> list[ResourceIdKind]:
    """Primary-key kind followed by one foreign-key kind per FK, in declaration order."""
    t = schema.table(table)
    out = [ResourceIdKind(t.name, t.primary_key, "pk")]
    for fk in t.foreign_keys:
        out.append(ResourceIdKind(t.name, fk.column, "fk", fk.ref_table, fk.ref_column))
    return out
