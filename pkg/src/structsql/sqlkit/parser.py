"""Recursive-descent parser for the supported SQL subset.

Covers: SELECT with DISTINCT, FROM with INNER/LEFT JOIN and ON, WHERE with
AND/OR/NOT/IN/LIKE/BETWEEN/IS NULL and comparisons, GROUP BY, HAVING,
ORDER BY ASC/DESC, LIMIT, the five scalar aggregates, nested subqueries,
and UNION/INTERSECT/EXCEPT. Anything else is rejected with a diagnostic
naming the 1-based offending token.

``{sub:<id>}`` placeholder tokens stand in for not-yet-substituted child
components and are accepted wherever a subquery or operand may appear.

Double-quoted text is parsed as a string literal (the common benchmark-gold
convention), backtick/bracket quoting as identifiers.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from ..errors import SqlSyntaxError

KEYWORDS = {
    "select", "distinct", "from", "as", "join", "inner", "left", "outer",
    "on", "where", "and", "or", "not", "in", "like", "between", "group",
    "by", "having", "order", "asc", "desc", "limit", "union", "intersect",
    "except", "all", "is", "null",
}

AGGREGATES = {"count", "sum", "avg", "min", "max"}

_TOKEN_RE = re.compile(
    r"""
    \{sub:(?P<sub>\d+)\}
  | (?P<string>'(?:[^']|'')*'|"(?:[^"]|"")*")
  | (?P<ident>`[^`]+`|\[[^\]]+\]|[A-Za-z_][A-Za-z_0-9]*)
  | (?P<number>\d+\.\d+|\.\d+|\d+)
  | (?P<op><>|!=|>=|<=|=|<|>|\*|\+|-|/|,|\(|\)|\.|;|\?)
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class SqlToken:
    kind: str  # keyword | ident | number | string | op | placeholder
    text: str  # normalized: keywords lower, strings hold raw content
    index: int  # 1-based token index for diagnostics


def tokenize_sql(text: str) -> list[SqlToken]:
    tokens: list[SqlToken] = []
    pos = 0
    n = len(text)
    while pos < n:
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise SqlSyntaxError(
                f"unrecognized character {text[pos]!r}", position=len(tokens) + 1,
                token=text[pos],
            )
        idx = len(tokens) + 1
        if m.group("sub") is not None:
            tokens.append(SqlToken("placeholder", m.group("sub"), idx))
        elif m.group("string") is not None:
            raw = m.group("string")
            quote = raw[0]
            body = raw[1:-1].replace(quote * 2, quote)
            tokens.append(SqlToken("string", body, idx))
        elif m.group("ident") is not None:
            raw = m.group("ident")
            if raw[0] in "`[":
                tokens.append(SqlToken("ident", raw[1:-1], idx))
            elif raw.lower() in KEYWORDS:
                tokens.append(SqlToken("keyword", raw.lower(), idx))
            else:
                tokens.append(SqlToken("ident", raw, idx))
        elif m.group("number") is not None:
            tokens.append(SqlToken("number", m.group("number"), idx))
        else:
            tokens.append(SqlToken("op", m.group("op"), idx))
        pos = m.end()
    return tokens


# --------------------------------------------------------------------------
# AST
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Literal:
    text: str
    kind: str  # number | string | null | param


@dataclass(frozen=True)
class ColumnRef:
    column: str
    table: str | None = None


@dataclass(frozen=True)
class Star:
    table: str | None = None


@dataclass(frozen=True)
class FuncCall:
    name: str
    arg: object
    distinct: bool = False


@dataclass(frozen=True)
class BinaryOp:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class Comparison:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class InPredicate:
    operand: object
    target: object  # Subquery | Placeholder | tuple of literals/exprs
    negated: bool = False


@dataclass(frozen=True)
class LikePredicate:
    operand: object
    pattern: object
    negated: bool = False


@dataclass(frozen=True)
class BetweenPredicate:
    operand: object
    low: object
    high: object
    negated: bool = False


@dataclass(frozen=True)
class IsNullPredicate:
    operand: object
    negated: bool = False


@dataclass(frozen=True)
class NotExpr:
    operand: object


@dataclass(frozen=True)
class AndExpr:
    terms: tuple


@dataclass(frozen=True)
class OrExpr:
    terms: tuple


@dataclass(frozen=True)
class Subquery:
    statement: "Statement"


@dataclass(frozen=True)
class Placeholder:
    node_id: int


@dataclass(frozen=True)
class TableRef:
    name: str | None
    alias: str | None = None
    subquery: "Statement | None" = None


@dataclass(frozen=True)
class Join:
    kind: str  # "join" | "inner join" | "left join"
    table: TableRef
    condition: object | None


@dataclass(frozen=True)
class SelectItem:
    expr: object
    alias: str | None = None


@dataclass(frozen=True)
class OrderItem:
    expr: object
    direction: str = "asc"


@dataclass(frozen=True)
class SelectCore:
    items: tuple[SelectItem, ...]
    distinct: bool = False
    from_table: TableRef | None = None
    joins: tuple[Join, ...] = ()
    where: object | None = None
    group_by: tuple = ()
    having: object | None = None


@dataclass(frozen=True)
class Statement:
    cores: tuple[SelectCore, ...]
    set_ops: tuple[str, ...] = ()  # between consecutive cores
    order_by: tuple[OrderItem, ...] = ()
    limit: int | None = None

    @property
    def has_order_by(self) -> bool:
        return bool(self.order_by)


class _Parser:
    def __init__(self, tokens: list[SqlToken]):
        self.tokens = tokens
        self.pos = 0

    # -- token utilities ---------------------------------------------------

    def peek(self, offset: int = 0) -> SqlToken | None:
        i = self.pos + offset
        return self.tokens[i] if i < len(self.tokens) else None

    def at_keyword(self, *names: str) -> bool:
        t = self.peek()
        return t is not None and t.kind == "keyword" and t.text in names

    def at_op(self, *ops: str) -> bool:
        t = self.peek()
        return t is not None and t.kind == "op" and t.text in ops

    def advance(self) -> SqlToken:
        t = self.peek()
        if t is None:
            raise SqlSyntaxError("unexpected end of input", position=len(self.tokens) + 1)
        self.pos += 1
        return t

    def expect_keyword(self, name: str) -> SqlToken:
        t = self.peek()
        if t is None or t.kind != "keyword" or t.text != name:
            raise self._error(f"expected {name.upper()}")
        return self.advance()

    def expect_op(self, op: str) -> SqlToken:
        t = self.peek()
        if t is None or t.kind != "op" or t.text != op:
            raise self._error(f"expected {op!r}")
        return self.advance()

    def _error(self, message: str) -> SqlSyntaxError:
        t = self.peek()
        if t is None:
            return SqlSyntaxError(message, position=len(self.tokens) + 1)
        return SqlSyntaxError(message, position=t.index, token=t.text)

    # -- statements ---------------------------------------------------------

    def parse_statement(self) -> Statement:
        cores = [self.parse_core()]
        set_ops = []
        while self.at_keyword("union", "intersect", "except"):
            op = self.advance().text
            if op == "union" and self.at_keyword("all"):
                self.advance()
                op = "union all"
            set_ops.append(op)
            cores.append(self.parse_core())
        order_by: tuple[OrderItem, ...] = ()
        limit = None
        if self.at_keyword("order"):
            self.advance()
            self.expect_keyword("by")
            order_by = self.parse_order_items()
        if self.at_keyword("limit"):
            self.advance()
            t = self.peek()
            if t is None or t.kind != "number" or "." in t.text:
                raise self._error("expected integer after LIMIT")
            self.advance()
            limit = int(t.text)
        return Statement(
            cores=tuple(cores), set_ops=tuple(set_ops), order_by=order_by, limit=limit
        )

    def parse_order_items(self) -> tuple[OrderItem, ...]:
        items = []
        while True:
            expr = self.parse_expr()
            direction = "asc"
            if self.at_keyword("asc", "desc"):
                direction = self.advance().text
            items.append(OrderItem(expr=expr, direction=direction))
            if self.at_op(","):
                self.advance()
                continue
            break
        return tuple(items)

    def parse_core(self) -> SelectCore:
        self.expect_keyword("select")
        distinct = False
        if self.at_keyword("distinct"):
            self.advance()
            distinct = True
        items = [self.parse_select_item()]
        while self.at_op(","):
            self.advance()
            items.append(self.parse_select_item())
        from_table = None
        joins: list[Join] = []
        where = None
        group_by: tuple = ()
        having = None
        if self.at_keyword("from"):
            self.advance()
            from_table = self.parse_table_ref()
            while self.at_keyword("join", "inner", "left"):
                joins.append(self.parse_join())
        if self.at_keyword("where"):
            self.advance()
            where = self.parse_expr()
        if self.at_keyword("group"):
            self.advance()
            self.expect_keyword("by")
            exprs = [self.parse_expr()]
            while self.at_op(","):
                self.advance()
                exprs.append(self.parse_expr())
            group_by = tuple(exprs)
        if self.at_keyword("having"):
            self.advance()
            having = self.parse_expr()
        return SelectCore(
            items=tuple(items),
            distinct=distinct,
            from_table=from_table,
            joins=tuple(joins),
            where=where,
            group_by=group_by,
            having=having,
        )

    def parse_select_item(self) -> SelectItem:
        expr = self.parse_expr()
        alias = None
        if self.at_keyword("as"):
            self.advance()
            t = self.peek()
            if t is None or t.kind != "ident":
                raise self._error("expected alias after AS")
            alias = self.advance().text
        elif self.peek() is not None and self.peek().kind == "ident":
            alias = self.advance().text
        return SelectItem(expr=expr, alias=alias)

    def parse_table_ref(self) -> TableRef:
        if self.at_op("("):
            self.advance()
            inner = self.parse_statement()
            self.expect_op(")")
            alias = self._maybe_alias()
            return TableRef(name=None, alias=alias, subquery=inner)
        t = self.peek()
        if t is None or t.kind != "ident":
            raise self._error("expected table name")
        self.advance()
        return TableRef(name=t.text, alias=self._maybe_alias())

    def _maybe_alias(self) -> str | None:
        if self.at_keyword("as"):
            self.advance()
            t = self.peek()
            if t is None or t.kind != "ident":
                raise self._error("expected alias after AS")
            return self.advance().text
        t = self.peek()
        if t is not None and t.kind == "ident":
            return self.advance().text
        return None

    def parse_join(self) -> Join:
        kind = "join"
        if self.at_keyword("inner"):
            self.advance()
            kind = "inner join"
        elif self.at_keyword("left"):
            self.advance()
            if self.at_keyword("outer"):
                self.advance()
            kind = "left join"
        self.expect_keyword("join")
        table = self.parse_table_ref()
        condition = None
        if self.at_keyword("on"):
            self.advance()
            condition = self.parse_expr()
        return Join(kind=kind, table=table, condition=condition)

    # -- expressions ---------------------------------------------------------

    def parse_expr(self):
        return self.parse_or()

    def parse_or(self):
        terms = [self.parse_and()]
        while self.at_keyword("or"):
            self.advance()
            terms.append(self.parse_and())
        return terms[0] if len(terms) == 1 else OrExpr(terms=tuple(terms))

    def parse_and(self):
        terms = [self.parse_not()]
        while self.at_keyword("and"):
            self.advance()
            terms.append(self.parse_not())
        return terms[0] if len(terms) == 1 else AndExpr(terms=tuple(terms))

    def parse_not(self):
        if self.at_keyword("not"):
            self.advance()
            return NotExpr(operand=self.parse_not())
        return self.parse_predicate()

    def parse_predicate(self):
        operand = self.parse_additive()
        negated = False
        if self.at_keyword("not"):
            self.advance()
            negated = True
            if not self.at_keyword("in", "like", "between"):
                raise self._error("expected IN, LIKE or BETWEEN after NOT")
        if self.at_keyword("in"):
            self.advance()
            return self._parse_in_target(operand, negated)
        if self.at_keyword("like"):
            self.advance()
            return LikePredicate(operand=operand, pattern=self.parse_additive(), negated=negated)
        if self.at_keyword("between"):
            self.advance()
            low = self.parse_additive()
            self.expect_keyword("and")
            high = self.parse_additive()
            return BetweenPredicate(operand=operand, low=low, high=high, negated=negated)
        if self.at_keyword("is"):
            self.advance()
            neg = False
            if self.at_keyword("not"):
                self.advance()
                neg = True
            self.expect_keyword("null")
            return IsNullPredicate(operand=operand, negated=neg)
        if self.at_op("=", "!=", "<>", "<", "<=", ">", ">="):
            op = self.advance().text
            if op == "<>":
                op = "!="
            right = self.parse_additive()
            return Comparison(op=op, left=operand, right=right)
        return operand

    def _parse_in_target(self, operand, negated: bool):
        t = self.peek()
        if t is not None and t.kind == "placeholder":
            self.advance()
            return InPredicate(
                operand=operand, target=Placeholder(int(t.text)), negated=negated
            )
        self.expect_op("(")
        t = self.peek()
        if t is not None and t.kind == "keyword" and t.text == "select":
            inner = self.parse_statement()
            self.expect_op(")")
            return InPredicate(operand=operand, target=Subquery(inner), negated=negated)
        if t is not None and t.kind == "placeholder":
            self.advance()
            self.expect_op(")")
            return InPredicate(
                operand=operand, target=Placeholder(int(t.text)), negated=negated
            )
        values = [self.parse_additive()]
        while self.at_op(","):
            self.advance()
            values.append(self.parse_additive())
        self.expect_op(")")
        return InPredicate(operand=operand, target=tuple(values), negated=negated)

    def parse_additive(self):
        left = self.parse_term()
        while self.at_op("+", "-"):
            op = self.advance().text
            left = BinaryOp(op=op, left=left, right=self.parse_term())
        return left

    def parse_term(self):
        left = self.parse_factor()
        while self.at_op("*", "/"):
            # '*' is multiplication only between operands; bare '*' is
            # handled in parse_factor before we ever get here.
            op = self.advance().text
            left = BinaryOp(op=op, left=left, right=self.parse_factor())
        return left

    def parse_factor(self):
        t = self.peek()
        if t is None:
            raise self._error("expected expression")
        if t.kind == "placeholder":
            self.advance()
            return Placeholder(int(t.text))
        if t.kind == "number":
            self.advance()
            return Literal(text=t.text, kind="number")
        if t.kind == "string":
            self.advance()
            return Literal(text=t.text, kind="string")
        if t.kind == "keyword" and t.text == "null":
            self.advance()
            return Literal(text="NULL", kind="null")
        if t.kind == "op" and t.text == "?":
            self.advance()
            return Literal(text="?", kind="param")
        if t.kind == "op" and t.text == "*":
            self.advance()
            return Star()
        if t.kind == "op" and t.text == "(":
            self.advance()
            inner_t = self.peek()
            if inner_t is not None and inner_t.kind == "keyword" and inner_t.text == "select":
                stmt = self.parse_statement()
                self.expect_op(")")
                return Subquery(stmt)
            expr = self.parse_expr()
            self.expect_op(")")
            return expr
        if t.kind == "ident":
            nxt = self.peek(1)
            if nxt is not None and nxt.kind == "op" and nxt.text == "(":
                return self.parse_func_call()
            self.advance()
            if self.at_op("."):
                self.advance()
                col = self.peek()
                if col is not None and col.kind == "op" and col.text == "*":
                    self.advance()
                    return Star(table=t.text)
                if col is None or col.kind != "ident":
                    raise self._error("expected column name after '.'")
                self.advance()
                return ColumnRef(column=col.text, table=t.text)
            return ColumnRef(column=t.text)
        raise self._error(f"unexpected token {t.text!r}")

    def parse_func_call(self) -> FuncCall:
        name_tok = self.advance()
        name = name_tok.text.lower()
        if name not in AGGREGATES:
            raise SqlSyntaxError(
                f"unsupported function {name_tok.text!r}",
                position=name_tok.index,
                token=name_tok.text,
            )
        self.expect_op("(")
        distinct = False
        if self.at_keyword("distinct"):
            self.advance()
            distinct = True
        if self.at_op("*"):
            self.advance()
            arg = Star()
        else:
            arg = self.parse_additive()
        self.expect_op(")")
        return FuncCall(name=name, arg=arg, distinct=distinct)

    def finish(self):
        if self.at_op(";"):
            self.advance()
        if self.pos != len(self.tokens):
            raise self._error("trailing input after statement")


def parse_sql(text: str) -> Statement:
    """Parse a full statement; raises SqlSyntaxError on anything unsupported."""
    tokens = tokenize_sql(text)
    if not tokens:
        raise SqlSyntaxError("empty SQL text", position=1)
    parser = _Parser(tokens)
    stmt = parser.parse_statement()
    parser.finish()
    return stmt


def parse_fragment(text: str, kind: str):
    """Parse a clause fragment under the grammar slice for its kind.

    Kinds follow the SQL meta-operations: full statements for select /
    subquery / set_op, a from-clause body for from_join, expressions for
    where / having / aggregate, expression lists for group_by, order items
    (with optional LIMIT tail) for order_by, and a bare integer for limit.
    """
    tokens = tokenize_sql(text)
    if not tokens:
        raise SqlSyntaxError(f"empty {kind} fragment", position=1)
    parser = _Parser(tokens)
    if kind in ("select", "subquery", "set_op"):
        result = parser.parse_statement()
    elif kind == "from_join":
        table = parser.parse_table_ref()
        joins = []
        while parser.at_keyword("join", "inner", "left"):
            joins.append(parser.parse_join())
        result = (table, tuple(joins))
    elif kind in ("where", "having"):
        result = parser.parse_expr()
    elif kind == "aggregate":
        result = parser.parse_additive()
    elif kind == "group_by":
        exprs = [parser.parse_expr()]
        while parser.at_op(","):
            parser.advance()
            exprs.append(parser.parse_expr())
        result = tuple(exprs)
    elif kind == "order_by":
        if parser.at_keyword("order"):
            parser.advance()
            parser.expect_keyword("by")
        items = parser.parse_order_items()
        limit = None
        if parser.at_keyword("limit"):
            parser.advance()
            tok = parser.advance()
            if tok.kind != "number":
                raise SqlSyntaxError("expected integer after LIMIT", tok.index, tok.text)
            limit = int(tok.text)
        result = (items, limit)
    elif kind == "limit":
        tok = parser.advance()
        if tok.kind != "number" or "." in tok.text:
            raise SqlSyntaxError("expected integer limit", tok.index, tok.text)
        result = int(tok.text)
    else:
        raise SqlSyntaxError(f"unknown fragment kind {kind!r}", position=1)
    parser.finish()
    return result
