"""Database catalogs and the typed schema graph.

A catalog (tables, columns, keys) is loaded either from a Spider-style
``tables.json`` document or by introspecting a live SQLite file, then turned
into a graph with table/column nodes and has / primary_key / foreign_key
edges. Node and edge ordering is deterministic so identical catalogs always
produce identical graphs.
"""

from __future__ import annotations

import json
import sqlite3
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .errors import (
    CatalogIntegrityError,
    CatalogParseError,
    EmptySchemaError,
    StructSqlError,
)


class ColumnType(Enum):
    TEXT = "text"
    NUMBER = "number"
    TIME = "time"
    BOOLEAN = "boolean"
    OTHER = "other"


@dataclass(frozen=True)
class ColumnDef:
    name: str
    data_type: ColumnType = ColumnType.TEXT

    def __post_init__(self):
        if not self.name.strip():
            raise CatalogIntegrityError("column name empty after trimming")


@dataclass(frozen=True)
class TableDef:
    name: str
    columns: tuple[ColumnDef, ...]


@dataclass(frozen=True)
class SchemaCatalog:
    """Tables, columns and key constraints for one database.

    Primary keys are flat column indices (tables in order, columns in table
    order); foreign keys are (referencing, referenced) index pairs.
    """

    db_id: str
    tables: tuple[TableDef, ...]
    primary_keys: tuple[int, ...] = ()
    foreign_keys: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        self.validate()

    @property
    def column_count(self) -> int:
        return sum(len(t.columns) for t in self.tables)

    def column_location(self, flat_index: int) -> tuple[int, int]:
        """Map a flat column index to (table index, column index)."""
        i = flat_index
        for ti, table in enumerate(self.tables):
            if i < len(table.columns):
                return ti, i
            i -= len(table.columns)
        raise CatalogIntegrityError(
            f"column index {flat_index} out of range", db_id=self.db_id, index=flat_index
        )

    def column_name(self, flat_index: int) -> str:
        ti, ci = self.column_location(flat_index)
        return f"{self.tables[ti].name}.{self.tables[ti].columns[ci].name}"

    def validate(self) -> None:
        seen_tables: set[str] = set()
        for table in self.tables:
            key = table.name.strip().lower()
            if not key:
                raise CatalogIntegrityError("table name empty", db_id=self.db_id)
            if key in seen_tables:
                raise CatalogIntegrityError(
                    f"duplicate table name {table.name!r}", db_id=self.db_id
                )
            seen_tables.add(key)
            seen_cols: set[str] = set()
            for col in table.columns:
                ckey = col.name.strip().lower()
                if ckey in seen_cols:
                    raise CatalogIntegrityError(
                        f"duplicate column {col.name!r} in table {table.name!r}",
                        db_id=self.db_id,
                    )
                seen_cols.add(ckey)
        n = self.column_count
        for pk in self.primary_keys:
            if not 0 <= pk < n:
                raise CatalogIntegrityError(
                    f"primary key index {pk} does not resolve to a column",
                    db_id=self.db_id,
                    index=pk,
                )
        for src, dst in self.foreign_keys:
            for idx in (src, dst):
                if not 0 <= idx < n:
                    raise CatalogIntegrityError(
                        f"foreign key index {idx} does not resolve to a column",
                        db_id=self.db_id,
                        index=idx,
                    )
            if src == dst:
                raise CatalogIntegrityError(
                    f"foreign key references column {src} to itself",
                    db_id=self.db_id,
                    index=src,
                )


class NodeKind(Enum):
    TABLE = "table"
    COLUMN = "column"


class EdgeRelation(Enum):
    HAS = "has"
    PRIMARY_KEY = "primary_key"
    FOREIGN_KEY = "foreign_key"


_EDGE_ORDER = {EdgeRelation.HAS: 0, EdgeRelation.PRIMARY_KEY: 1, EdgeRelation.FOREIGN_KEY: 2}


@dataclass(frozen=True)
class SchemaNode:
    node_id: int
    kind: NodeKind
    label: str
    table_index: int | None = None  # owning table for columns, None for tables
    data_type: ColumnType | None = None  # columns only


@dataclass(frozen=True)
class SchemaEdge:
    source: int
    target: int
    relation: EdgeRelation


@dataclass(frozen=True)
class SchemaGraph:
    db_id: str
    nodes: tuple[SchemaNode, ...]
    edges: tuple[SchemaEdge, ...]

    @property
    def table_nodes(self) -> list[SchemaNode]:
        return [n for n in self.nodes if n.kind is NodeKind.TABLE]

    @property
    def column_nodes(self) -> list[SchemaNode]:
        return [n for n in self.nodes if n.kind is NodeKind.COLUMN]

    def neighbors(self, node_id: int) -> list[int]:
        """Node ids sharing any edge with ``node_id``, ascending, deduplicated."""
        out: set[int] = set()
        for e in self.edges:
            if e.source == node_id:
                out.add(e.target)
            elif e.target == node_id:
                out.add(e.source)
        return sorted(out)

    def node_for_table(self, table_name: str) -> SchemaNode | None:
        key = table_name.lower()
        for n in self.table_nodes:
            if n.label.lower() == key:
                return n
        return None

    def node_for_column(self, table_name: str, column_name: str) -> SchemaNode | None:
        tnode = self.node_for_table(table_name)
        if tnode is None:
            return None
        # table node ids equal their table index by construction
        for n in self.column_nodes:
            if n.table_index == tnode.node_id and n.label.lower() == column_name.lower():
                return n
        return None


def load_spider_catalogs(data: bytes) -> list[SchemaCatalog]:
    """Parse a Spider ``tables.json`` document into one catalog per db_id.

    The ``*`` pseudo-column (index 0) is dropped; key indices are shifted
    accordingly. Original name strings are preserved.
    """
    try:
        doc = json.loads(data.decode("utf-8"))
    except UnicodeDecodeError as exc:
        raise CatalogParseError(f"catalog is not UTF-8: {exc}", byte_offset=exc.start)
    except json.JSONDecodeError as exc:
        raise CatalogParseError(f"catalog is not valid JSON: {exc.msg}", byte_offset=exc.pos)
    if not isinstance(doc, list):
        raise CatalogParseError("catalog document must be an array", byte_offset=0)

    catalogs = []
    for entry in doc:
        catalogs.append(_catalog_from_entry(entry))
    return catalogs


def load_spider_catalog(data: bytes, db_id: str) -> SchemaCatalog:
    """Convenience lookup of a single db_id in a ``tables.json`` document."""
    for catalog in load_spider_catalogs(data):
        if catalog.db_id == db_id:
            return catalog
    raise CatalogIntegrityError(f"db_id {db_id!r} not present in catalog", db_id=db_id)


_TYPE_NAMES = {t.value: t for t in ColumnType}


def _catalog_from_entry(entry: dict) -> SchemaCatalog:
    try:
        db_id = entry["db_id"]
        table_names = entry["table_names_original"]
        column_names = entry["column_names_original"]
        column_types = entry.get("column_types", [])
        primary_keys = entry.get("primary_keys", [])
        foreign_keys = entry.get("foreign_keys", [])
    except (KeyError, TypeError) as exc:
        raise CatalogParseError(f"catalog entry missing field: {exc}")

    n_raw = len(column_names)
    per_table: dict[int, list[ColumnDef]] = {i: [] for i in range(len(table_names))}
    # flat index (after dropping '*') for each raw index
    flat_of_raw: dict[int, int] = {}
    flat = 0
    for raw_idx, (table_idx, col_name) in enumerate(column_names):
        if table_idx < 0:
            continue  # the '*' pseudo-column
        if table_idx >= len(table_names):
            raise CatalogIntegrityError(
                f"column {col_name!r} references table index {table_idx}",
                db_id=db_id,
                index=raw_idx,
            )
        type_name = column_types[raw_idx] if raw_idx < len(column_types) else "text"
        ctype = _TYPE_NAMES.get(str(type_name).lower(), ColumnType.OTHER)
        per_table[table_idx].append(ColumnDef(name=col_name, data_type=ctype))

    # Spider orders columns by table, so flat indices follow raw order.
    for raw_idx, (table_idx, _name) in enumerate(column_names):
        if table_idx < 0:
            continue
        flat_of_raw[raw_idx] = flat
        flat += 1

    def resolve(raw_idx, what: str) -> int:
        if not isinstance(raw_idx, int) or raw_idx < 0 or raw_idx >= n_raw:
            raise CatalogIntegrityError(
                f"{what} index {raw_idx} out of range", db_id=db_id, index=raw_idx
            )
        if raw_idx not in flat_of_raw:
            raise CatalogIntegrityError(
                f"{what} index {raw_idx} names the '*' pseudo-column",
                db_id=db_id,
                index=raw_idx,
            )
        return flat_of_raw[raw_idx]

    tables = tuple(
        TableDef(name=table_names[i], columns=tuple(per_table[i]))
        for i in range(len(table_names))
    )
    pks = tuple(resolve(pk, "primary key") for pk in primary_keys)
    fks = tuple(
        (resolve(src, "foreign key"), resolve(dst, "foreign key"))
        for src, dst in foreign_keys
    )
    return SchemaCatalog(db_id=db_id, tables=tables, primary_keys=pks, foreign_keys=fks)


def map_declared_type(declared: str | None) -> ColumnType:
    """SQLite declared-type affinity to the 5-type convention."""
    d = (declared or "").upper()
    if "INT" in d or "REAL" in d or "FLOA" in d or "DOUB" in d or "NUM" in d or "DEC" in d:
        return ColumnType.NUMBER
    if "CHAR" in d or "CLOB" in d or "TEXT" in d:
        return ColumnType.TEXT
    if "DATE" in d or "TIME" in d or "YEAR" in d:
        return ColumnType.TIME
    if "BOOL" in d:
        return ColumnType.BOOLEAN
    return ColumnType.OTHER


def introspect_sqlite(db_path: str | Path) -> SchemaCatalog:
    """Build a catalog from a live SQLite database file.

    Reads user tables, declared primary keys and declared foreign keys; the
    database is opened read-only and never written.
    """
    path = Path(db_path)
    if not path.is_file():
        raise OSError(f"database file not readable: {path}")
    uri = f"file:{path}?mode=ro"
    try:
        conn = sqlite3.connect(uri, uri=True)
    except sqlite3.Error as exc:
        raise OSError(f"cannot open database {path}: {exc}")
    try:
        try:
            rows = conn.execute(
                "SELECT name FROM sqlite_master WHERE type='table' "
                "AND name NOT LIKE 'sqlite_%' ORDER BY rowid"
            ).fetchall()
        except sqlite3.DatabaseError as exc:
            raise OSError(f"corrupt database {path}: {exc}")
        table_names = [r[0] for r in rows]
        if not table_names:
            raise EmptySchemaError(f"database {path} has no user tables")

        tables = []
        flat_index: dict[tuple[str, str], int] = {}
        pks: list[int] = []
        flat = 0
        for tname in table_names:
            cols = []
            for _cid, cname, decl, _notnull, _dflt, pk_flag in conn.execute(
                f'PRAGMA table_info("{tname}")'
            ):
                cols.append(ColumnDef(name=cname, data_type=map_declared_type(decl)))
                flat_index[(tname.lower(), cname.lower())] = flat
                if pk_flag:
                    pks.append(flat)
                flat += 1
            tables.append(TableDef(name=tname, columns=tuple(cols)))

        fks: list[tuple[int, int]] = []
        for tname in table_names:
            for row in conn.execute(f'PRAGMA foreign_key_list("{tname}")'):
                # row: id, seq, ref_table, from_col, to_col, ...
                ref_table, from_col, to_col = row[2], row[3], row[4]
                if to_col is None:
                    to_col = _implicit_pk_column(conn, ref_table)
                src = flat_index.get((tname.lower(), str(from_col).lower()))
                dst = flat_index.get((str(ref_table).lower(), str(to_col).lower()))
                if src is None or dst is None:
                    raise CatalogIntegrityError(
                        f"dangling foreign key {tname}.{from_col} -> {ref_table}.{to_col}",
                        db_id=path.stem,
                    )
                fks.append((src, dst))
        return SchemaCatalog(
            db_id=path.stem,
            tables=tuple(tables),
            primary_keys=tuple(pks),
            foreign_keys=tuple(fks),
        )
    finally:
        conn.close()


def _implicit_pk_column(conn: sqlite3.Connection, table: str) -> str:
    for _cid, cname, _decl, _nn, _dflt, pk_flag in conn.execute(
        f'PRAGMA table_info("{table}")'
    ):
        if pk_flag:
            return cname
    raise CatalogIntegrityError(f"referenced table {table!r} has no primary key")


def build_schema_graph(catalog: SchemaCatalog) -> SchemaGraph:
    """Construct the typed schema graph from a validated catalog.

    Nodes: tables in catalog order, then columns in (table, position) order.
    Edges: one has-edge per column (table -> column), one primary_key edge per
    pk column (column -> table), one foreign_key edge per fk pair
    (referencing -> referenced); ordered has < primary_key < foreign_key,
    then by (source, target). Duplicate edges are rejected.
    """
    catalog.validate()
    nodes: list[SchemaNode] = []
    for ti, table in enumerate(catalog.tables):
        nodes.append(SchemaNode(node_id=ti, kind=NodeKind.TABLE, label=table.name))
    n_tables = len(catalog.tables)
    col_node_of_flat: list[int] = []
    nid = n_tables
    for ti, table in enumerate(catalog.tables):
        for col in table.columns:
            nodes.append(
                SchemaNode(
                    node_id=nid,
                    kind=NodeKind.COLUMN,
                    label=col.name,
                    table_index=ti,
                    data_type=col.data_type,
                )
            )
            col_node_of_flat.append(nid)
            nid += 1

    edges: list[SchemaEdge] = []
    flat = 0
    for ti, table in enumerate(catalog.tables):
        for _col in table.columns:
            edges.append(SchemaEdge(ti, col_node_of_flat[flat], EdgeRelation.HAS))
            flat += 1
    for pk in catalog.primary_keys:
        ti, _ci = catalog.column_location(pk)
        edges.append(SchemaEdge(col_node_of_flat[pk], ti, EdgeRelation.PRIMARY_KEY))
    for src, dst in catalog.foreign_keys:
        edges.append(
            SchemaEdge(col_node_of_flat[src], col_node_of_flat[dst], EdgeRelation.FOREIGN_KEY)
        )

    edges.sort(key=lambda e: (_EDGE_ORDER[e.relation], e.source, e.target))
    seen = set()
    for e in edges:
        key = (e.source, e.target, e.relation)
        if key in seen:
            raise CatalogIntegrityError(
                f"duplicate edge {key}", db_id=catalog.db_id
            )
        seen.add(key)
    return SchemaGraph(db_id=catalog.db_id, nodes=tuple(nodes), edges=tuple(edges))


def schema_label(node: SchemaNode) -> str:
    """Matching label for a schema node: lowercase, underscores as spaces."""
    return node.label.lower().replace("_", " ").strip()
