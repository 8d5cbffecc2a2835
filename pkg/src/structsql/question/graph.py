"""Query graph: token nodes with paired directional syntax edges.

Edges come from the syntax tree (parent-child and adjacent-sibling head
pairs) plus coreference links; every forward edge has a matching backward
edge. Token pairs with no edge stand in the none-syntax relation, which is
kept implicit (no O(n^2) materialization) — consumers treat missing edges
as that relation class.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

from .coref import CorefMap
from .parser import SyntaxTree, TreeNode
from .tokens import Token


class QueryRelation(Enum):
    FORWARD_SYNTAX = "forward_syntax"
    BACKWARD_SYNTAX = "backward_syntax"
    NONE_SYNTAX = "none_syntax"


_REL_ORDER = {
    QueryRelation.FORWARD_SYNTAX: 0,
    QueryRelation.BACKWARD_SYNTAX: 1,
    QueryRelation.NONE_SYNTAX: 2,
}


@dataclass(frozen=True)
class QueryEdge:
    source: int
    target: int
    relation: QueryRelation


@dataclass(frozen=True)
class QueryGraph:
    nodes: tuple[Token, ...]
    edges: tuple[QueryEdge, ...]
    tree: SyntaxTree
    coref: CorefMap

    @property
    def size(self) -> int:
        return len(self.nodes)

    def has_edge(self, source: int, target: int) -> bool:
        return any(e.source == source and e.target == target for e in self.edges)


def head_token(tree: SyntaxTree, node: TreeNode) -> int:
    """Head of a tree node: leftmost nominal terminal in its span, else the
    leftmost terminal."""
    if node.is_terminal:
        return node.span[0]
    terminals = [
        n
        for n in tree.nodes
        if n.is_terminal
        and node.span[0] <= n.span[0] < node.span[1]
        and n.span[1] > n.span[0]
    ]
    terminals.sort(key=lambda n: n.span[0])
    for t in terminals:
        if t.symbol == "noun":
            return t.span[0]
    if not terminals:
        return node.span[0]
    return terminals[0].span[0]


def build_query_graph(tokens: list[Token], tree: SyntaxTree, coref: CorefMap) -> QueryGraph:
    if tree.covers(len(tokens)) is False:
        raise ValueError("tree and token list are inconsistent")
    pairs: set[tuple[int, int]] = set()

    heads: dict[int, int] = {}

    def head(node_id: int) -> int:
        if node_id not in heads:
            heads[node_id] = head_token(tree, tree.node(node_id))
        return heads[node_id]

    for node in tree.nodes:
        if not node.children:
            continue
        h_parent = head(node.node_id)
        for child_id in node.children:
            h_child = head(child_id)
            if h_parent != h_child:
                pairs.add((h_parent, h_child))
        for left, right in zip(node.children, node.children[1:]):
            h_left, h_right = head(left), head(right)
            if h_left != h_right:
                pairs.add((h_left, h_right))

    # coreferent mentions link back to the canonical mention's head
    for span, entity_id in coref.entries.items():
        canonical = coref.entities[entity_id]
        if span != canonical:
            pairs.add((canonical[0], span[0]))

    edges: list[QueryEdge] = []
    for i, j in pairs:
        edges.append(QueryEdge(i, j, QueryRelation.FORWARD_SYNTAX))
        edges.append(QueryEdge(j, i, QueryRelation.BACKWARD_SYNTAX))
    edges.sort(key=lambda e: (e.source, e.target, _REL_ORDER[e.relation]))
    return QueryGraph(nodes=tuple(tokens), edges=tuple(edges), tree=tree, coref=coref)
