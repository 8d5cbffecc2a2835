"""Earley chart parser producing ranked interpretations.

Parsing never hard-fails: when the grammar licenses no complete parse, a
flat fallback tree (root over all tokens) is returned with ``fallback=True``.
Interpretation score is the sum of (log-space) production weights; ties are
broken by node count, then by the lexicographically smallest preorder symbol
sequence, so results are deterministic and order-invariant.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from itertools import product

from ..errors import ValidationError
from .grammar import QueryGrammar, classes_for, default_grammar
from .tokens import Token

MAX_TREES = 64


@dataclass(frozen=True)
class TreeNode:
    node_id: int
    symbol: str
    span: tuple[int, int]  # [start, end) token indices
    children: tuple[int, ...] = ()

    @property
    def is_terminal(self) -> bool:
        return not self.children and self.span[1] - self.span[0] <= 1


@dataclass(frozen=True)
class SyntaxTree:
    nodes: tuple[TreeNode, ...]
    root_id: int
    fallback: bool = False

    def node(self, node_id: int) -> TreeNode:
        return self.nodes[node_id]

    @property
    def node_count(self) -> int:
        return len(self.nodes)

    @cached_property
    def preorder_symbols(self) -> tuple[str, ...]:
        # node ids are assigned in preorder
        return tuple(n.symbol for n in self.nodes)

    def parent_of(self, node_id: int) -> int | None:
        for n in self.nodes:
            if node_id in n.children:
                return n.node_id
        return None

    def covers(self, n_tokens: int) -> bool:
        span = self.nodes[self.root_id].span
        return span == (0, n_tokens)


@dataclass(frozen=True)
class ParseInterpretation:
    tree: SyntaxTree
    score: float


# ---------------------------------------------------------------------------
# Earley machinery. States are (prod_index, dot, origin) instanced per chart
# position; backpointers live on the full (prod, dot, origin, end) key so all
# derivations of an ambiguous span can be enumerated afterwards.
# ---------------------------------------------------------------------------


def _earley(grammar: QueryGrammar, token_classes: list[tuple[str, ...]]):
    prods = grammar.productions
    by_lhs: dict[str, list[int]] = {}
    for idx, p in enumerate(prods):
        by_lhs.setdefault(p.lhs, []).append(idx)
    nullable = grammar.nullable()
    n = len(token_classes)

    charts: list[dict[tuple[int, int, int], None]] = [dict() for _ in range(n + 1)]
    backpointers: dict[tuple[int, int, int, int], set] = {}

    def add(pos: int, state: tuple[int, int, int], bp=None):
        if state not in charts[pos]:
            charts[pos][state] = None
        if bp is not None:
            backpointers.setdefault(state + (pos,), set()).add(bp)

    for pid in by_lhs.get(grammar.start, []):
        add(0, (pid, 0, 0))

    for i in range(n + 1):
        agenda = charts[i]
        cursor = 0
        while cursor < len(agenda):
            state = list(agenda.keys())[cursor]
            cursor += 1
            pid, dot, origin = state
            rhs = prods[pid].rhs
            if dot < len(rhs):
                sym = rhs[dot]
                if sym in grammar.nonterminals:
                    for pid2 in by_lhs.get(sym, []):
                        add(i, (pid2, 0, i))
                    if sym in nullable:
                        add(i, (pid, dot + 1, origin), bp=(state + (i,), ("nul", sym, i)))
                else:
                    if i < n and sym in token_classes[i]:
                        add(i + 1, (pid, dot + 1, origin), bp=(state + (i,), ("tok", i, sym)))
            else:
                lhs = prods[pid].lhs
                for state2 in list(charts[origin].keys()):
                    pid2, dot2, origin2 = state2
                    rhs2 = prods[pid2].rhs
                    if dot2 < len(rhs2) and rhs2[dot2] == lhs:
                        add(
                            i,
                            (pid2, dot2 + 1, origin2),
                            bp=(state2 + (origin,), ("cmp", lhs, origin, i, pid)),
                        )
    return charts, backpointers


def _enumerate_trees(grammar, charts, backpointers, n_tokens, max_trees):
    """All parse sketches for the start symbol over the full span.

    A sketch is ``(symbol, span, children_tuple, weight)`` with terminal
    children carrying their token index.
    """
    prods = grammar.productions

    deriv_cache: dict = {}

    def derivations(full_state):
        if full_state in deriv_cache:
            return deriv_cache[full_state]
        pid, dot, origin, end = full_state
        if dot == 0:
            result = [()]
        else:
            result = []
            for prev, child in sorted(backpointers.get(full_state, ()), key=repr):
                for prefix in derivations(prev):
                    result.append(prefix + (child,))
                    if len(result) >= max_trees:
                        break
                if len(result) >= max_trees:
                    break
        deriv_cache[full_state] = result
        return result

    tree_cache: dict = {}

    def trees_for(symbol: str, start: int, end: int):
        key = (symbol, start, end)
        if key in tree_cache:
            return tree_cache[key]
        tree_cache[key] = []  # guard against cycles
        results = []
        for pid in range(len(prods)):
            if prods[pid].lhs != symbol:
                continue
            full = (pid, len(prods[pid].rhs), start, end)
            if full[1] == 0:
                if start == end and (pid, 0, start) in charts[start]:
                    results.append((symbol, (start, end), (), prods[pid].weight))
                continue
            if (pid, len(prods[pid].rhs), start) not in charts[end]:
                continue
            for deriv in derivations(full):
                child_options = []
                for child in deriv:
                    if child[0] == "tok":
                        _tag, tok_i, cls = child
                        child_options.append([(cls, (tok_i, tok_i + 1), (), 0.0)])
                    elif child[0] == "nul":
                        _tag, sym, pos = child
                        child_options.append([(sym, (pos, pos), (), 0.0)])
                    else:
                        _tag, sym, c_start, c_end, c_pid = child
                        child_options.append(trees_for(sym, c_start, c_end))
                if any(not opts for opts in child_options):
                    continue
                for combo in product(*child_options):
                    weight = prods[pid].weight + sum(c[3] for c in combo)
                    results.append((symbol, (start, end), tuple(combo), weight))
                    if len(results) >= max_trees:
                        break
                if len(results) >= max_trees:
                    break
            if len(results) >= max_trees:
                break
        tree_cache[key] = results
        return results

    return trees_for(grammar.start, 0, n_tokens)


def _sketch_to_tree(sketch, fallback: bool = False) -> SyntaxTree:
    nodes: list[TreeNode] = []

    def walk(item) -> int:
        symbol, span, children, _w = item
        node_id = len(nodes)
        nodes.append(TreeNode(node_id=node_id, symbol=symbol, span=span))
        child_ids = tuple(walk(c) for c in children)
        nodes[node_id] = TreeNode(node_id=node_id, symbol=symbol, span=span, children=child_ids)
        return node_id

    root = walk(sketch)
    return SyntaxTree(nodes=tuple(nodes), root_id=root, fallback=fallback)


def fallback_tree(tokens: list[Token], grammar: QueryGrammar) -> SyntaxTree:
    leaves = []
    for t in tokens:
        classes = classes_for(t)
        leaves.append((classes[0] if classes else "noun", (t.position, t.position + 1), (), 0.0))
    sketch = (grammar.start, (0, len(tokens)), tuple(leaves), 0.0)
    return _sketch_to_tree(sketch, fallback=True)


def parse(
    tokens: list[Token],
    grammar: QueryGrammar | None = None,
    max_trees: int = MAX_TREES,
) -> list[ParseInterpretation]:
    """Parse tokens into one or more ranked interpretations (never empty)."""
    if not tokens:
        raise ValidationError("cannot parse an empty token list")
    grammar = grammar or default_grammar()
    token_classes = [classes_for(t) for t in tokens]
    charts, backpointers = _earley(grammar, token_classes)
    sketches = _enumerate_trees(grammar, charts, backpointers, len(tokens), max_trees)
    if not sketches:
        return [ParseInterpretation(tree=fallback_tree(tokens, grammar), score=0.0)]
    interpretations = []
    seen = set()
    for sketch in sketches:
        tree = _sketch_to_tree(sketch)
        signature = (tree.preorder_symbols, tuple(n.span for n in tree.nodes))
        if signature in seen:
            continue
        seen.add(signature)
        interpretations.append(ParseInterpretation(tree=tree, score=sketch[3]))
    interpretations.sort(
        key=lambda it: (-it.score, it.tree.node_count, it.tree.preorder_symbols)
    )
    return interpretations


def select_interpretation(candidates: list[ParseInterpretation]) -> ParseInterpretation:
    """Argmax by score; ties broken by fewer nodes, then preorder symbols.

    A pure function of the candidate multiset: permuting the input never
    changes the winner.
    """
    if not candidates:
        raise ValidationError("no interpretations to select from")
    return min(
        candidates,
        key=lambda it: (-it.score, it.tree.node_count, it.tree.preorder_symbols),
    )
