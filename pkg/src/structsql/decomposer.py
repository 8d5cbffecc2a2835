"""Syntax-tree decomposition into SQL meta-operation subtasks and assembly.

A static rule table maps grammar nonterminals to meta-operations; annotated
nodes become subtasks ordered bottom-up (postorder), negation subtasks are
rewritten to subqueries so they precede their ancestor's WHERE subtask, and
assembly slots generated components into ``{sub:<node-id>}`` placeholders
before a final parse gate.

The same splitting machinery that backs assembly also runs in reverse:
``split_gold_components`` cuts a gold SQL into a root-with-placeholders plus
its subqueries, which powers both the round-trip oracle and the offline
oracle endpoint.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

from .errors import AssemblyError, GrammarError
from .question.grammar import classes_for
from .question.parser import SyntaxTree
from .question.tokens import Token
from .sqlkit import normalize_sql, parse_fragment, parse_sql
from .sqlkit.parser import (
    AndExpr,
    BetweenPredicate,
    BinaryOp,
    Comparison,
    FuncCall,
    InPredicate,
    IsNullPredicate,
    LikePredicate,
    NotExpr,
    OrExpr,
    Placeholder,
    SelectCore,
    Statement,
    Subquery,
)


class MetaOpKind(Enum):
    SELECT = "select"
    FROM_JOIN = "from_join"
    WHERE = "where"
    GROUP_BY = "group_by"
    HAVING = "having"
    ORDER_BY = "order_by"
    LIMIT = "limit"
    AGGREGATE = "aggregate"
    SUBQUERY = "subquery"
    SET_OP = "set_op"


_KIND_BY_NAME = {k.value: k for k in MetaOpKind}


@dataclass(frozen=True)
class MetaOperation:
    kind: MetaOpKind
    schema_nodes: tuple[int, ...] = ()
    literals: tuple[str, ...] = ()
    modifiers: tuple[str, ...] = ()


@dataclass(frozen=True)
class SqlComponent:
    node_id: int
    text: str
    kind: MetaOpKind

    def __post_init__(self):
        parse_fragment(self.text, self.kind.value)


@dataclass
class SubtaskPlan:
    """Bottom-up generation plan: annotated nodes in postorder, root last.

    ``tree`` is None for synthetic plans built from a gold SQL split.
    """

    annotations: dict[int, MetaOperation]
    order: tuple[int, ...]
    root_id: int
    tree: SyntaxTree | None = None

    def kind_of(self, node_id: int) -> MetaOpKind:
        return self.annotations[node_id].kind


DEFAULT_RULES_TEXT = """
# Nonterminal => meta_op[,modifier ...]
Question => select
AggregateOp => aggregate
Superlative => order_by,limit
Grouping => group_by
Condition => where
Negation => where,not_in
Entity => from_join
Comparison => where
Ordering => order_by
"""


def parse_rules(text: str) -> dict[str, tuple[MetaOpKind, tuple[str, ...]]]:
    rules: dict[str, tuple[MetaOpKind, tuple[str, ...]]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=>" not in line:
            raise GrammarError(f"rule line {lineno}: missing '=>'")
        lhs, rhs = (p.strip() for p in line.split("=>", 1))
        parts = [p.strip() for p in rhs.split(",") if p.strip()]
        if not parts or parts[0] not in _KIND_BY_NAME:
            raise GrammarError(f"rule line {lineno}: unknown meta-operation {rhs!r}")
        rules[lhs] = (_KIND_BY_NAME[parts[0]], tuple(parts[1:]))
    return rules


def default_rules() -> dict[str, tuple[MetaOpKind, tuple[str, ...]]]:
    return parse_rules(DEFAULT_RULES_TEXT)


_AGG_CANON = {
    "count": "count",
    "number": "count",
    "many": "count",
    "sum": "sum",
    "total": "sum",
    "average": "avg",
    "avg": "avg",
    "mean": "avg",
    "maximum": "max",
    "max": "max",
    "minimum": "min",
    "min": "min",
}


def map_nodes(
    tree: SyntaxTree,
    tokens: list[Token],
    linking=None,
    rules: dict[str, tuple[MetaOpKind, tuple[str, ...]]] | None = None,
) -> dict[int, MetaOperation]:
    """Annotate tree nodes with meta-operations via the rule table.

    Deterministic and total: unmatched nodes stay unannotated, the root is
    always annotated ``select``. Payload hints carry linked schema node ids
    and literal-looking tokens (numbers, capitalized mid-question words)
    within each node's span.
    """
    rules = rules if rules is not None else default_rules()
    assignments = list(getattr(linking, "assignments", ()) or ())
    annotations: dict[int, MetaOperation] = {}

    for node in tree.nodes:
        if node.node_id == tree.root_id:
            kind, mods = MetaOpKind.SELECT, ()
        elif node.children and node.symbol in rules:
            kind, mods = rules[node.symbol]
        else:
            continue
        start, end = node.span
        schema_nodes = tuple(
            sorted(a.schema_node for a in assignments if start <= a.query_node < end)
        )
        literals = []
        modifiers = list(mods)
        for tok in tokens[start:end]:
            if tok.surface[0:1].isdigit():
                literals.append(tok.surface)
            elif (
                tok.position > 0
                and tok.surface[:1].isupper()
                and tok.surface.isalpha()
            ):
                literals.append(tok.surface)
        if kind is MetaOpKind.AGGREGATE:
            for tok in tokens[start:end]:
                canon = _AGG_CANON.get(tok.lemma)
                if canon and (
                    "count" in classes_for(tok) or "agg" in classes_for(tok) or "many" in classes_for(tok)
                ):
                    modifiers.append(canon)
                    break
        annotations[node.node_id] = MetaOperation(
            kind=kind,
            schema_nodes=schema_nodes,
            literals=tuple(literals),
            modifiers=tuple(modifiers),
        )
    return annotations


def decompose(tree: SyntaxTree, annotations: dict[int, MetaOperation]) -> SubtaskPlan:
    """Postorder plan over annotated nodes; negation subtasks become
    subqueries so they precede their ancestor's WHERE subtask."""
    if tree.root_id not in annotations:
        raise AssemblyError("root node is not annotated", node_id=tree.root_id)
    rewritten = dict(annotations)
    for node_id, op in annotations.items():
        if node_id != tree.root_id and "not_in" in op.modifiers:
            rewritten[node_id] = replace(op, kind=MetaOpKind.SUBQUERY)

    order: list[int] = []

    def walk(node_id: int):
        for child in tree.node(node_id).children:
            walk(child)
        if node_id in rewritten:
            order.append(node_id)

    walk(tree.root_id)
    return SubtaskPlan(
        annotations=rewritten, order=tuple(order), root_id=tree.root_id, tree=tree
    )


def assemble(components: list[SqlComponent], plan: SubtaskPlan) -> str:
    """Slot child components into placeholders and return the normalized root.

    Missing components raise AssemblyError naming the node; a root that does
    not parse raises the parser's position-bearing diagnostic.
    """
    by_node = {c.node_id: c for c in components}
    for node_id in plan.order:
        if node_id not in by_node:
            raise AssemblyError(f"missing component for node {node_id}", node_id=node_id)
    if plan.root_id not in by_node:
        raise AssemblyError("missing root component", node_id=plan.root_id)

    resolved: dict[int, str] = {}
    for node_id in plan.order:
        text = by_node[node_id].text
        for child_id, child_text in resolved.items():
            text = text.replace("{sub:%d}" % child_id, child_text)
        resolved[node_id] = text
    root_text = resolved[plan.root_id]
    statement = parse_sql(root_text)  # parse gate; raises SqlSyntaxError
    return normalize_sql(statement)


def validate_sql(text: str) -> Statement:
    """Parse gate for the supported SQL subset; raises SqlSyntaxError with a
    token-position diagnostic on rejection."""
    return parse_sql(text)


# --------------------------------------------------------------------------
# Gold-SQL splitting (round-trip oracle, oracle endpoint)
# --------------------------------------------------------------------------


def _pull_subqueries(expr, alloc, collected):
    """Replace WHERE/HAVING subqueries with placeholders, depth-first."""
    if expr is None or isinstance(expr, (Placeholder,)):
        return expr
    if isinstance(expr, Subquery):
        inner_stmt, inner_parts = _statement_with_placeholders(expr.statement, alloc)
        node_id = next(alloc)
        collected.extend(inner_parts)
        collected.append((node_id, inner_stmt))
        return Placeholder(node_id)
    if isinstance(expr, InPredicate):
        target = expr.target
        if isinstance(target, Subquery):
            target = _pull_subqueries(target, alloc, collected)
        return replace(expr, operand=expr.operand, target=target)
    if isinstance(expr, Comparison):
        return replace(
            expr,
            left=_pull_subqueries(expr.left, alloc, collected),
            right=_pull_subqueries(expr.right, alloc, collected),
        )
    if isinstance(expr, NotExpr):
        return replace(expr, operand=_pull_subqueries(expr.operand, alloc, collected))
    if isinstance(expr, AndExpr):
        return AndExpr(terms=tuple(_pull_subqueries(t, alloc, collected) for t in expr.terms))
    if isinstance(expr, OrExpr):
        return OrExpr(terms=tuple(_pull_subqueries(t, alloc, collected) for t in expr.terms))
    return expr


def _statement_with_placeholders(stmt: Statement, alloc):
    collected: list[tuple[int, Statement]] = []
    cores = []
    for core in stmt.cores:
        where = _pull_subqueries(core.where, alloc, collected) if core.where is not None else None
        having = _pull_subqueries(core.having, alloc, collected) if core.having is not None else None
        cores.append(replace(core, where=where, having=having))
    return replace(stmt, cores=tuple(cores)), collected


def split_gold_components(
    sql: str, node_ids: list[int] | None = None, root_id: int = 0
) -> tuple[SubtaskPlan, list[SqlComponent]]:
    """Cut a gold SQL into subquery components plus a root with placeholders.

    Components come back in bottom-up order (inner subqueries first, root
    last); ``assemble`` on them reproduces the normalized gold byte-for-byte.
    Explicit ``node_ids`` are consumed in that same bottom-up order.
    """
    stmt = parse_sql(sql)
    provided = list(node_ids) if node_ids is not None else None

    def alloc_gen():
        n = root_id
        while True:
            n += 1
            yield n

    if provided is None:
        alloc = alloc_gen()
    else:
        alloc = iter(provided)
    try:
        root_stmt, parts = _statement_with_placeholders(stmt, alloc)
    except StopIteration:
        raise AssemblyError(
            f"gold SQL has more subqueries than the {len(provided or [])} provided node ids"
        )

    components = [
        SqlComponent(node_id=nid, text=normalize_sql(part), kind=MetaOpKind.SUBQUERY)
        for nid, part in parts
    ]
    components.append(
        SqlComponent(node_id=root_id, text=normalize_sql(root_stmt), kind=MetaOpKind.SELECT)
    )
    annotations = {
        c.node_id: MetaOperation(
            kind=MetaOpKind.SUBQUERY if c.node_id != root_id else MetaOpKind.SELECT
        )
        for c in components
    }
    plan = SubtaskPlan(
        annotations=annotations,
        order=tuple(c.node_id for c in components),
        root_id=root_id,
        tree=None,
    )
    return plan, components


def _render_from_body(core: SelectCore) -> str:
    normalized = normalize_sql(Statement(cores=(core,)))
    marker = " FROM "
    idx = normalized.find(marker)
    if idx < 0:
        return ""
    body = normalized[idx + len(marker):]
    for stop in (" WHERE ", " GROUP BY ", " HAVING "):
        cut = body.find(stop)
        if cut >= 0:
            body = body[:cut]
    return body


def _clause_fragment(statement: Statement, kind: MetaOpKind) -> str:
    """Best-effort clause text of ``kind`` from a parsed statement; falls back
    to a minimal valid fragment when the statement lacks that clause."""
    core = statement.cores[0]
    text = normalize_sql(statement)
    if kind is MetaOpKind.AGGREGATE:
        for item in core.items:
            if isinstance(item.expr, FuncCall):
                bare = replace(item, alias=None)
                return normalize_sql(
                    Statement(cores=(SelectCore(items=(bare,)),))
                )[len("SELECT "):]
        return "count(*)"
    if kind is MetaOpKind.FROM_JOIN:
        body = _render_from_body(core)
        return body or "placeholder_table"
    if kind is MetaOpKind.WHERE:
        marker = " WHERE "
        idx = text.find(marker)
        if idx >= 0:
            tail = text[idx + len(marker):]
            for stop in (" GROUP BY ", " HAVING ", " ORDER BY ", " LIMIT "):
                cut = tail.find(stop)
                if cut >= 0:
                    tail = tail[:cut]
            return tail
        return "1 = 1"
    if kind is MetaOpKind.GROUP_BY:
        marker = " GROUP BY "
        idx = text.find(marker)
        if idx >= 0:
            tail = text[idx + len(marker):]
            for stop in (" HAVING ", " ORDER BY ", " LIMIT "):
                cut = tail.find(stop)
                if cut >= 0:
                    tail = tail[:cut]
            return tail
        return "1"
    if kind is MetaOpKind.HAVING:
        marker = " HAVING "
        idx = text.find(marker)
        if idx >= 0:
            tail = text[idx + len(marker):]
            for stop in (" ORDER BY ", " LIMIT "):
                cut = tail.find(stop)
                if cut >= 0:
                    tail = tail[:cut]
            return tail
        return "count(*) > 0"
    if kind is MetaOpKind.ORDER_BY:
        marker = " ORDER BY "
        idx = text.find(marker)
        if idx >= 0:
            return text[idx + len(marker):]
        return "count(*) DESC"
    if kind is MetaOpKind.LIMIT:
        return str(statement.limit) if statement.limit is not None else "1"
    return text


def components_from_gold(plan: SubtaskPlan, gold_sql: str) -> list[SqlComponent]:
    """Derive per-subtask components from a gold SQL for a concrete plan.

    Subquery subtasks receive the gold's extracted subqueries (bottom-up)
    when the counts line up, in which case the root carries matching
    placeholders; otherwise every subtask gets a self-contained fragment and
    the root carries the full gold. Non-root clause subtasks receive the
    matching clause text (context for generation; assembly only consumes
    placeholder references).
    """
    subquery_nodes = [
        nid for nid in plan.order
        if nid != plan.root_id and plan.kind_of(nid) is MetaOpKind.SUBQUERY
    ]
    stmt = parse_sql(gold_sql)
    probe_plan, probe_parts = split_gold_components(gold_sql, root_id=-1)
    gold_subquery_count = len(probe_parts) - 1

    components: list[SqlComponent] = []
    if subquery_nodes and gold_subquery_count == len(subquery_nodes):
        split_plan, split_components = split_gold_components(
            gold_sql, node_ids=subquery_nodes, root_id=plan.root_id
        )
        by_node = {c.node_id: c for c in split_components}
        root_text = by_node[plan.root_id].text
        sub_texts = {nid: by_node[nid].text for nid in subquery_nodes}
    else:
        root_text = normalize_sql(stmt)
        sub_texts = {nid: root_text for nid in subquery_nodes}

    for nid in plan.order:
        kind = plan.kind_of(nid)
        if nid == plan.root_id:
            components.append(SqlComponent(node_id=nid, text=root_text, kind=MetaOpKind.SELECT))
        elif kind is MetaOpKind.SUBQUERY:
            components.append(SqlComponent(node_id=nid, text=sub_texts[nid], kind=kind))
        else:
            components.append(
                SqlComponent(node_id=nid, text=_clause_fragment(stmt, kind), kind=kind)
            )
    return components
