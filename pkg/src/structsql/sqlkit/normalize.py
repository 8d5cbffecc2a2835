"""SQL canonicalization and clause-level comparison structures.

``normalize_sql`` renders a parsed statement back to text with uppercase
keywords, lowercase aggregate names, single spaces, no trailing semicolon,
and table aliases renamed T1..Tn in first-appearance order (tables written
without an alias stay bare).

``clause_sets`` produces the structural comparison form used by exact set
match: per-core select item lists (ordered), table sets, join-condition
sets, where-conjunct sets, group-by/having sets, plus statement-level
order-by, limit, and set operations. Column references are resolved through
alias scopes to ``table.column`` and lowercased, so spelling differences in
aliasing or qualification do not affect comparison. Literals are compared
exactly; two bare ``?`` parameters compare equal by construction.

``flatten_view`` exposes recursive (subquery-inclusive) table, join,
group-by and where-predicate sets for error classification.
"""

from __future__ import annotations

from dataclasses import dataclass

from .parser import (
    AndExpr,
    BetweenPredicate,
    BinaryOp,
    ColumnRef,
    Comparison,
    FuncCall,
    InPredicate,
    IsNullPredicate,
    Join,
    LikePredicate,
    Literal,
    NotExpr,
    OrExpr,
    OrderItem,
    Placeholder,
    SelectCore,
    SelectItem,
    Star,
    Statement,
    Subquery,
    TableRef,
    parse_sql,
)

_COMMUTATIVE = {"=", "!="}


def _quote_string(text: str) -> str:
    return "'" + text.replace("'", "''") + "'"


# --------------------------------------------------------------------------
# Canonical text rendering (normalize_sql)
# --------------------------------------------------------------------------


class _Renamer:
    """Assigns T1..Tn to aliased tables in first-appearance order."""

    def __init__(self):
        self.counter = 0

    def next_alias(self) -> str:
        self.counter += 1
        return f"T{self.counter}"


def _core_alias_maps(core: SelectCore, renamer: _Renamer) -> dict[str, str]:
    """old alias (lower) -> new alias for one core, in from-then-joins order."""
    mapping: dict[str, str] = {}
    refs = []
    if core.from_table is not None:
        refs.append(core.from_table)
    refs.extend(j.table for j in core.joins)
    for ref in refs:
        if ref.alias is not None:
            mapping[ref.alias.lower()] = renamer.next_alias()
    return mapping


def _render_statement(stmt: Statement, renamer: _Renamer, scopes: tuple) -> str:
    parts = []
    for i, core in enumerate(stmt.cores):
        if i > 0:
            parts.append(stmt.set_ops[i - 1].upper())
        parts.append(_render_core(core, renamer, scopes))
    if stmt.order_by:
        rendered = ", ".join(
            f"{_render_expr(o.expr, scopes)} {o.direction.upper()}" for o in stmt.order_by
        )
        parts.append(f"ORDER BY {rendered}")
    if stmt.limit is not None:
        parts.append(f"LIMIT {stmt.limit}")
    return " ".join(parts)


def _render_core(core: SelectCore, renamer: _Renamer, outer_scopes: tuple) -> str:
    alias_map = _core_alias_maps(core, renamer)
    scopes = (alias_map,) + outer_scopes

    def table_ref(ref: TableRef) -> str:
        if ref.subquery is not None:
            inner = _render_statement(ref.subquery, renamer, scopes)
            text = f"({inner})"
        else:
            text = ref.name
        if ref.alias is not None:
            text += f" AS {alias_map[ref.alias.lower()]}"
        return text

    pieces = ["SELECT"]
    if core.distinct:
        pieces.append("DISTINCT")
    items = []
    for item in core.items:
        text = _render_expr(item.expr, scopes, renamer)
        if item.alias is not None:
            text += f" AS {item.alias}"
        items.append(text)
    pieces.append(", ".join(items))
    if core.from_table is not None:
        pieces.append("FROM")
        pieces.append(table_ref(core.from_table))
        for join in core.joins:
            pieces.append(join.kind.upper())
            pieces.append(table_ref(join.table))
            if join.condition is not None:
                pieces.append("ON")
                pieces.append(_render_expr(join.condition, scopes, renamer))
    if core.where is not None:
        pieces.append("WHERE")
        pieces.append(_render_expr(core.where, scopes, renamer))
    if core.group_by:
        pieces.append("GROUP BY")
        pieces.append(", ".join(_render_expr(e, scopes, renamer) for e in core.group_by))
    if core.having is not None:
        pieces.append("HAVING")
        pieces.append(_render_expr(core.having, scopes, renamer))
    return " ".join(pieces)


def _render_expr(expr, scopes: tuple, renamer: _Renamer | None = None) -> str:
    r = lambda e: _render_expr(e, scopes, renamer)
    if isinstance(expr, Literal):
        if expr.kind == "string":
            return _quote_string(expr.text)
        return expr.text
    if isinstance(expr, ColumnRef):
        if expr.table is not None:
            shown = expr.table
            for scope in scopes:
                if expr.table.lower() in scope:
                    shown = scope[expr.table.lower()]
                    break
            return f"{shown}.{expr.column}"
        return expr.column
    if isinstance(expr, Star):
        return f"{expr.table}.*" if expr.table else "*"
    if isinstance(expr, FuncCall):
        inner = r(expr.arg)
        if expr.distinct:
            inner = f"DISTINCT {inner}"
        return f"{expr.name}({inner})"
    if isinstance(expr, BinaryOp):
        return f"{r(expr.left)} {expr.op} {r(expr.right)}"
    if isinstance(expr, Comparison):
        return f"{r(expr.left)} {expr.op} {r(expr.right)}"
    if isinstance(expr, InPredicate):
        op = "NOT IN" if expr.negated else "IN"
        if isinstance(expr.target, (Subquery, Placeholder)):
            return f"{r(expr.operand)} {op} {r(expr.target)}"
        values = ", ".join(r(v) for v in expr.target)
        return f"{r(expr.operand)} {op} ({values})"
    if isinstance(expr, LikePredicate):
        op = "NOT LIKE" if expr.negated else "LIKE"
        return f"{r(expr.operand)} {op} {r(expr.pattern)}"
    if isinstance(expr, BetweenPredicate):
        op = "NOT BETWEEN" if expr.negated else "BETWEEN"
        return f"{r(expr.operand)} {op} {r(expr.low)} AND {r(expr.high)}"
    if isinstance(expr, IsNullPredicate):
        return f"{r(expr.operand)} IS {'NOT ' if expr.negated else ''}NULL"
    if isinstance(expr, NotExpr):
        return f"NOT {r(expr.operand)}"
    if isinstance(expr, AndExpr):
        return " AND ".join(_maybe_paren(t, scopes, renamer) for t in expr.terms)
    if isinstance(expr, OrExpr):
        return " OR ".join(_maybe_paren(t, scopes, renamer) for t in expr.terms)
    if isinstance(expr, Subquery):
        if renamer is None:
            renamer = _Renamer()
        return f"({_render_statement(expr.statement, renamer, scopes)})"
    if isinstance(expr, Placeholder):
        # parenthesized so substituting a full statement stays parseable
        return "({sub:%d})" % expr.node_id
    raise TypeError(f"cannot render {expr!r}")


def _maybe_paren(expr, scopes, renamer) -> str:
    text = _render_expr(expr, scopes, renamer)
    if isinstance(expr, (AndExpr, OrExpr)):
        return f"({text})"
    return text


def normalize_sql(sql: str | Statement) -> str:
    """Canonical single-line rendering of a statement."""
    stmt = parse_sql(sql) if isinstance(sql, str) else sql
    return _render_statement(stmt, _Renamer(), ())


# --------------------------------------------------------------------------
# Resolved comparison structures (exact match, error classification)
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CoreSets:
    select: tuple[str, ...]
    distinct: bool
    tables: frozenset[str]
    join_conds: frozenset[str]
    where: frozenset[str]
    group_by: frozenset[str]
    having: frozenset[str]


@dataclass(frozen=True)
class StatementSets:
    cores: tuple[CoreSets, ...]
    set_ops: tuple[str, ...]
    order_by: tuple[str, ...]
    limit: int | None


@dataclass(frozen=True)
class FlatView:
    tables: frozenset[str]
    outer_select_columns: frozenset[str]
    join_conditions: frozenset[str]
    group_by: frozenset[str]
    having: frozenset[str]
    where_structural: frozenset[str]
    where_literal: frozenset[str]
    subquery_shape: tuple


class _ScopeChain:
    """Alias resolution: alias/table name (lower) -> real table name (lower)."""

    def __init__(self, frames: tuple[dict[str, str], ...] = ()):
        self.frames = frames

    def push(self, core: SelectCore) -> "_ScopeChain":
        frame: dict[str, str] = {}
        refs = []
        if core.from_table is not None:
            refs.append(core.from_table)
        refs.extend(j.table for j in core.joins)
        for ref in refs:
            if ref.name is None:
                continue
            real = ref.name.lower()
            frame[real] = real
            if ref.alias is not None:
                frame[ref.alias.lower()] = real
        return _ScopeChain((frame,) + self.frames)

    def resolve(self, name: str) -> str | None:
        key = name.lower()
        for frame in self.frames:
            if key in frame:
                return frame[key]
        return None

    def sole_table(self) -> str | None:
        if not self.frames:
            return None
        reals = sorted(set(self.frames[0].values()))
        return reals[0] if len(reals) == 1 else None


def _resolved(expr, scope: _ScopeChain, opaque_subqueries: bool = False) -> str:
    """Canonical resolved text: lowercase identifiers, aliases replaced by
    real table names, commutative comparisons and AND/OR operands sorted.

    With ``opaque_subqueries`` every nested statement renders as ``(sub)``,
    so predicate structure can be compared independently of subquery bodies
    (those are compared through the flattened clause sets instead).
    """
    r = lambda e: _resolved(e, scope, opaque_subqueries)
    if isinstance(expr, Literal):
        if expr.kind == "string":
            return _quote_string(expr.text)
        return expr.text.lower()
    if isinstance(expr, ColumnRef):
        table = None
        if expr.table is not None:
            table = scope.resolve(expr.table) or expr.table.lower()
        else:
            table = scope.sole_table()
        col = expr.column.lower()
        return f"{table}.{col}" if table else col
    if isinstance(expr, Star):
        if expr.table:
            resolved = scope.resolve(expr.table) or expr.table.lower()
            return f"{resolved}.*"
        return "*"
    if isinstance(expr, FuncCall):
        inner = r(expr.arg)
        if expr.distinct:
            inner = f"distinct {inner}"
        return f"{expr.name}({inner})"
    if isinstance(expr, BinaryOp):
        return f"{r(expr.left)} {expr.op} {r(expr.right)}"
    if isinstance(expr, Comparison):
        left, right = r(expr.left), r(expr.right)
        if expr.op in _COMMUTATIVE and right < left:
            left, right = right, left
        return f"{left} {expr.op} {right}"
    if isinstance(expr, InPredicate):
        op = "not in" if expr.negated else "in"
        if isinstance(expr.target, (Subquery, Placeholder)):
            return f"{r(expr.operand)} {op} {r(expr.target)}"
        values = ", ".join(sorted(r(v) for v in expr.target))
        return f"{r(expr.operand)} {op} ({values})"
    if isinstance(expr, LikePredicate):
        op = "not like" if expr.negated else "like"
        return f"{r(expr.operand)} {op} {r(expr.pattern)}"
    if isinstance(expr, BetweenPredicate):
        op = "not between" if expr.negated else "between"
        return f"{r(expr.operand)} {op} {r(expr.low)} and {r(expr.high)}"
    if isinstance(expr, IsNullPredicate):
        return f"{r(expr.operand)} is {'not ' if expr.negated else ''}null"
    if isinstance(expr, NotExpr):
        return f"not ({r(expr.operand)})"
    if isinstance(expr, AndExpr):
        return " and ".join(sorted(f"({r(t)})" for t in expr.terms))
    if isinstance(expr, OrExpr):
        return " or ".join(sorted(f"({r(t)})" for t in expr.terms))
    if isinstance(expr, Subquery):
        if opaque_subqueries:
            return "(sub)"
        return f"({_resolved_statement(expr.statement, scope)})"
    if isinstance(expr, Placeholder):
        return "(sub)" if opaque_subqueries else "{sub}"
    raise TypeError(f"cannot resolve {expr!r}")


def _resolved_statement(stmt: Statement, outer: _ScopeChain) -> str:
    parts = []
    for i, core in enumerate(stmt.cores):
        if i > 0:
            parts.append(stmt.set_ops[i - 1])
        scope = outer.push(core)
        sel = ", ".join(_resolved(it.expr, scope) for it in core.items)
        text = f"select {'distinct ' if core.distinct else ''}{sel}"
        if core.from_table is not None:
            tables = sorted(
                t for t in _core_tables(core)
            )
            text += " from " + ", ".join(tables)
            conds = sorted(_join_conjuncts(core, scope))
            if conds:
                text += " on " + " and ".join(conds)
        if core.where is not None:
            text += " where " + " and ".join(sorted(_conjuncts(core.where, scope)))
        if core.group_by:
            text += " group by " + ", ".join(sorted(_resolved(e, scope) for e in core.group_by))
        if core.having is not None:
            text += " having " + " and ".join(sorted(_conjuncts(core.having, scope)))
        parts.append(text)
    scope = outer.push(stmt.cores[0])
    if stmt.order_by:
        parts.append(
            "order by "
            + ", ".join(f"{_resolved(o.expr, scope)} {o.direction}" for o in stmt.order_by)
        )
    if stmt.limit is not None:
        parts.append(f"limit {stmt.limit}")
    return " ".join(parts)


def _conjuncts(expr, scope: _ScopeChain) -> list[str]:
    if isinstance(expr, AndExpr):
        out = []
        for term in expr.terms:
            out.extend(_conjuncts(term, scope))
        return out
    return [_resolved(expr, scope)]


def _core_tables(core: SelectCore) -> set[str]:
    tables = set()
    refs = [core.from_table] if core.from_table is not None else []
    refs.extend(j.table for j in core.joins)
    for ref in refs:
        if ref.name is not None:
            tables.add(ref.name.lower())
    return tables


def _join_conjuncts(core: SelectCore, scope: _ScopeChain) -> list[str]:
    out = []
    for join in core.joins:
        if join.condition is not None:
            out.extend(_conjuncts(join.condition, scope))
    return out


def clause_sets(stmt: Statement | str) -> StatementSets:
    """Comparison structure for exact set match."""
    if isinstance(stmt, str):
        stmt = parse_sql(stmt)
    cores = []
    for core in stmt.cores:
        scope = _ScopeChain().push(core)
        cores.append(
            CoreSets(
                select=tuple(_resolved(it.expr, scope) for it in core.items),
                distinct=core.distinct,
                tables=frozenset(_core_tables(core)),
                join_conds=frozenset(_join_conjuncts(core, scope)),
                where=frozenset(_conjuncts(core.where, scope)) if core.where is not None else frozenset(),
                group_by=frozenset(_resolved(e, scope) for e in core.group_by),
                having=frozenset(_conjuncts(core.having, scope)) if core.having is not None else frozenset(),
            )
        )
    scope = _ScopeChain().push(stmt.cores[0])
    order_by = tuple(f"{_resolved(o.expr, scope)} {o.direction}" for o in stmt.order_by)
    return StatementSets(
        cores=tuple(cores), set_ops=stmt.set_ops, order_by=order_by, limit=stmt.limit
    )


def _has_literal(expr) -> bool:
    if isinstance(expr, Literal):
        return True
    if isinstance(expr, (Subquery, Placeholder, ColumnRef, Star)):
        return False
    if isinstance(expr, FuncCall):
        return _has_literal(expr.arg)
    if isinstance(expr, (BinaryOp, Comparison)):
        return _has_literal(expr.left) or _has_literal(expr.right)
    if isinstance(expr, InPredicate):
        if isinstance(expr.target, (Subquery, Placeholder)):
            return _has_literal(expr.operand)
        return True
    if isinstance(expr, LikePredicate):
        return _has_literal(expr.operand) or _has_literal(expr.pattern)
    if isinstance(expr, BetweenPredicate):
        return any(_has_literal(e) for e in (expr.operand, expr.low, expr.high))
    if isinstance(expr, IsNullPredicate):
        return _has_literal(expr.operand)
    if isinstance(expr, NotExpr):
        return _has_literal(expr.operand)
    if isinstance(expr, (AndExpr, OrExpr)):
        return any(_has_literal(t) for t in expr.terms)
    return False


def _has_subquery(expr) -> bool:
    if isinstance(expr, Subquery):
        return True
    if isinstance(expr, (Literal, ColumnRef, Star, Placeholder)):
        return False
    if isinstance(expr, FuncCall):
        return _has_subquery(expr.arg)
    if isinstance(expr, (BinaryOp, Comparison)):
        return _has_subquery(expr.left) or _has_subquery(expr.right)
    if isinstance(expr, InPredicate):
        if isinstance(expr.target, Subquery):
            return True
        if isinstance(expr.target, Placeholder):
            return False
        return _has_subquery(expr.operand) or any(_has_subquery(v) for v in expr.target)
    if isinstance(expr, LikePredicate):
        return _has_subquery(expr.operand) or _has_subquery(expr.pattern)
    if isinstance(expr, BetweenPredicate):
        return any(_has_subquery(e) for e in (expr.operand, expr.low, expr.high))
    if isinstance(expr, IsNullPredicate):
        return _has_subquery(expr.operand)
    if isinstance(expr, NotExpr):
        return _has_subquery(expr.operand)
    if isinstance(expr, (AndExpr, OrExpr)):
        return any(_has_subquery(t) for t in expr.terms)
    return False


def _iter_subquery_statements(expr):
    if isinstance(expr, Subquery):
        yield expr.statement
        return
    if isinstance(expr, (Literal, ColumnRef, Star, Placeholder)) or expr is None:
        return
    if isinstance(expr, FuncCall):
        yield from _iter_subquery_statements(expr.arg)
    elif isinstance(expr, (BinaryOp, Comparison)):
        yield from _iter_subquery_statements(expr.left)
        yield from _iter_subquery_statements(expr.right)
    elif isinstance(expr, InPredicate):
        yield from _iter_subquery_statements(expr.operand)
        if isinstance(expr.target, Subquery):
            yield expr.target.statement
        elif not isinstance(expr.target, Placeholder):
            for v in expr.target:
                yield from _iter_subquery_statements(v)
    elif isinstance(expr, LikePredicate):
        yield from _iter_subquery_statements(expr.operand)
        yield from _iter_subquery_statements(expr.pattern)
    elif isinstance(expr, BetweenPredicate):
        for e in (expr.operand, expr.low, expr.high):
            yield from _iter_subquery_statements(e)
    elif isinstance(expr, IsNullPredicate):
        yield from _iter_subquery_statements(expr.operand)
    elif isinstance(expr, NotExpr):
        yield from _iter_subquery_statements(expr.operand)
    elif isinstance(expr, (AndExpr, OrExpr)):
        for t in expr.terms:
            yield from _iter_subquery_statements(t)


def _collect_columns(expr, scope: _ScopeChain, out: set[str]):
    if isinstance(expr, ColumnRef):
        out.add(_resolved(expr, scope))
    elif isinstance(expr, FuncCall):
        _collect_columns(expr.arg, scope, out)
    elif isinstance(expr, (BinaryOp, Comparison)):
        _collect_columns(expr.left, scope, out)
        _collect_columns(expr.right, scope, out)
    # stars, literals, subqueries contribute no outer select columns


def flatten_view(stmt: Statement | str) -> FlatView:
    """Recursive clause view across all nesting levels."""
    if isinstance(stmt, str):
        stmt = parse_sql(stmt)
    tables: set[str] = set()
    join_conditions: set[str] = set()
    group_by: set[str] = set()
    having: set[str] = set()
    where_structural: set[str] = set()
    where_literal: set[str] = set()
    shape: list = []
    set_ops: list[str] = []
    outer_select_columns: set[str] = set()

    def visit(statement: Statement, outer_scope: _ScopeChain, depth: int, top: bool):
        set_ops.extend(statement.set_ops)
        for core in statement.cores:
            scope = outer_scope.push(core)
            tables.update(_core_tables(core))
            join_conditions.update(_join_conjuncts(core, scope))
            group_by.update(_resolved(e, scope) for e in core.group_by)
            if core.having is not None:
                having.update(_conjuncts(core.having, scope))
            if top:
                for item in core.items:
                    _collect_columns(item.expr, scope, outer_select_columns)
            if core.where is not None:
                for term in _split_and(core.where):
                    text = _resolved(term, scope, opaque_subqueries=True)
                    if _has_literal(term) and not _has_subquery(term):
                        where_literal.add(text)
                    else:
                        where_structural.add(text)
            # recurse
            for clause, exprs in (
                ("select", [it.expr for it in core.items]),
                ("where", [core.where] if core.where is not None else []),
                ("having", [core.having] if core.having is not None else []),
            ):
                for e in exprs:
                    for sub in _iter_subquery_statements(e):
                        shape.append((clause, depth + 1))
                        visit(sub, scope, depth + 1, top=False)
            refs = [core.from_table] if core.from_table is not None else []
            refs.extend(j.table for j in core.joins)
            for ref in refs:
                if ref.subquery is not None:
                    shape.append(("from", depth + 1))
                    visit(ref.subquery, scope, depth + 1, top=False)

    visit(stmt, _ScopeChain(), 0, top=True)
    return FlatView(
        tables=frozenset(tables),
        outer_select_columns=frozenset(outer_select_columns),
        join_conditions=frozenset(join_conditions),
        group_by=frozenset(group_by),
        having=frozenset(having),
        where_structural=frozenset(where_structural),
        where_literal=frozenset(where_literal),
        subquery_shape=(tuple(sorted(set_ops)), tuple(sorted(shape))),
    )


def _split_and(expr) -> list:
    if isinstance(expr, AndExpr):
        out = []
        for t in expr.terms:
            out.extend(_split_and(t))
        return out
    return [expr]
