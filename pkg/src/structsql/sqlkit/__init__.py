"""SQL subset parsing, normalization, and clause comparison."""

from .parser import (
    Statement,
    SelectCore,
    SelectItem,
    TableRef,
    Join,
    OrderItem,
    ColumnRef,
    FuncCall,
    Star,
    Literal,
    Subquery,
    Placeholder,
    Comparison,
    InPredicate,
    LikePredicate,
    BetweenPredicate,
    IsNullPredicate,
    AndExpr,
    OrExpr,
    NotExpr,
    BinaryOp,
    parse_sql,
    parse_fragment,
)
from .normalize import normalize_sql, clause_sets, flatten_view, FlatView

__all__ = [
    "Statement",
    "SelectCore",
    "SelectItem",
    "TableRef",
    "Join",
    "OrderItem",
    "ColumnRef",
    "FuncCall",
    "Star",
    "Literal",
    "Subquery",
    "Placeholder",
    "Comparison",
    "InPredicate",
    "LikePredicate",
    "BetweenPredicate",
    "IsNullPredicate",
    "AndExpr",
    "OrExpr",
    "NotExpr",
    "BinaryOp",
    "parse_sql",
    "parse_fragment",
    "normalize_sql",
    "clause_sets",
    "flatten_view",
    "FlatView",
]
