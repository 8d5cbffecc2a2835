"""Context-free query grammar: symbol sets, production rules, lexicon.

Grammar files hold one production per line, ``LHS -> RHS1 RHS2 ... [weight]``
with ``#`` comments. Terminals are lowercase token-class names, nonterminals
are capitalized, ``<eps>`` marks an explicit empty right-hand side. Weights
are log-space and default to 0, so with the shipped grammar all parses tie
and the interpretation tie-break rules decide.

Terminal classes come from a closed-class lexicon; any alphabetic token
containing a vowel that belongs to no closed class can act as ``noun`` and
``verb`` (open classes). Vowel-less letter runs ("zzz") get no class, which
is what pushes gibberish to the fallback parse.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..errors import GrammarError
from .tokens import Token

EPSILON = "<eps>"

_CLOSED_CLASSES: dict[str, frozenset[str]] = {
    "show": frozenset("show list display give return find get tell print select".split()),
    "wh": frozenset("what which who whose".split()),
    "how": frozenset(["how"]),
    "many": frozenset(["many", "much"]),
    "count": frozenset(["count", "number"]),
    "agg": frozenset("sum average avg mean maximum minimum max min total".split()),
    "sup": frozenset(
        "highest lowest most least largest smallest biggest longest shortest "
        "oldest youngest best worst top greatest fewest".split()
    ),
    "prep": frozenset("from in with for by at on to over under during".split()),
    "of": frozenset(["of"]),
    "det": frozenset("the a an all any this".split()),
    "each": frozenset("each every per".split()),
    "conj": frozenset(["and", "or"]),
    "neg": frozenset("not no without never except".split()),
    "do": frozenset("do does did".split()),
    "rel": frozenset("that which who whose".split()),
    "be": frozenset("is are was were be been has have had".split()),
    "cmp": frozenset("than more less greater fewer equal above below".split()),
    "order": frozenset(
        "sorted ordered order sort ascending descending alphabetically alphabetical".split()
    ),
    "pron": frozenset("it they them these those their its he she him her his we us".split()),
}

_VOWELS = set("aeiouy")


def classes_for(token: Token) -> tuple[str, ...]:
    """Terminal classes a token can fill, in a fixed deterministic order."""
    classes: list[str] = []
    lemma = token.lemma
    lower = token.surface.lower()
    for name, words in _CLOSED_CLASSES.items():
        if lower in words or lemma in words:
            classes.append(name)
    if not token.surface.isalnum():
        classes.append("punct")
    elif token.surface[0].isdigit():
        classes.append("num")
    elif not classes and any(c in _VOWELS for c in lower):
        classes.append("noun")
        classes.append("verb")
    return tuple(classes)


@dataclass(frozen=True)
class Production:
    lhs: str
    rhs: tuple[str, ...]
    weight: float = 0.0


@dataclass(frozen=True)
class QueryGrammar:
    nonterminals: frozenset[str]
    terminals: frozenset[str]
    productions: tuple[Production, ...]
    start: str

    def __post_init__(self):
        if self.start not in self.nonterminals:
            raise GrammarError(f"start symbol {self.start!r} is not a nonterminal")
        for p in self.productions:
            for sym in p.rhs:
                if sym not in self.nonterminals and sym not in self.terminals:
                    raise GrammarError(
                        f"unknown symbol {sym!r} in production {p.lhs} -> {' '.join(p.rhs)}"
                    )

    def by_lhs(self) -> dict[str, list[Production]]:
        table: dict[str, list[Production]] = {}
        for p in self.productions:
            table.setdefault(p.lhs, []).append(p)
        return table

    def nullable(self) -> frozenset[str]:
        known: set[str] = {p.lhs for p in self.productions if not p.rhs}
        changed = True
        while changed:
            changed = False
            for p in self.productions:
                if p.lhs not in known and p.rhs and all(s in known for s in p.rhs):
                    known.add(p.lhs)
                    changed = True
        return frozenset(known)


def _is_nonterminal(symbol: str) -> bool:
    return symbol[:1].isupper()


def parse_grammar(text: str, start: str | None = None) -> QueryGrammar:
    productions: list[Production] = []
    first_lhs: str | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "->" not in line:
            raise GrammarError(f"line {lineno}: missing '->'")
        lhs, rhs_text = (part.strip() for part in line.split("->", 1))
        if not _is_nonterminal(lhs):
            raise GrammarError(f"line {lineno}: lhs {lhs!r} must be capitalized")
        symbols = rhs_text.split()
        weight = 0.0
        if symbols:
            tail = symbols[-1]
            if tail.startswith("[") and tail.endswith("]"):
                tail = tail[1:-1]
            try:
                weight = float(tail)
                symbols = symbols[:-1]
            except ValueError:
                pass
        if symbols == [EPSILON]:
            symbols = []
        elif not symbols:
            raise GrammarError(
                f"line {lineno}: empty rhs; use {EPSILON} for an explicit epsilon"
            )
        productions.append(Production(lhs=lhs, rhs=tuple(symbols), weight=weight))
        if first_lhs is None:
            first_lhs = lhs
    if not productions:
        raise GrammarError("grammar has no productions")
    nonterminals = frozenset(p.lhs for p in productions)
    terminals = frozenset(
        sym for p in productions for sym in p.rhs if not _is_nonterminal(sym)
    )
    return QueryGrammar(
        nonterminals=nonterminals,
        terminals=terminals,
        productions=tuple(productions),
        start=start or first_lhs,
    )


DEFAULT_GRAMMAR_TEXT = """
# SQL-oriented question patterns: selection, aggregation, comparison,
# conjunction, negation, superlatives, grouping, ordering.
Question -> Command
Question -> Command punct
Question -> Command punct Command
Question -> Command punct Command punct

Command -> show NP
Command -> show pron
Command -> wh be NP
Command -> wh NP
Command -> AggregateOp
Command -> AggregateOp VP
Command -> AggregateOp do NP be
Command -> NP

NP -> Entity
NP -> det NP
NP -> AggregateOp
NP -> Superlative
NP -> NP Condition
NP -> NP OfPP
NP -> NP Grouping
NP -> NP conj NP
NP -> pron NP
NP -> pron

Entity -> noun
Entity -> noun Entity

AggregateOp -> count NP
AggregateOp -> count OfPP
AggregateOp -> det count OfPP
AggregateOp -> agg OfPP
AggregateOp -> agg NP
AggregateOp -> how many NP

Superlative -> sup NP
Superlative -> det sup NP

OfPP -> of NP
PP -> prep NP

Condition -> PP
Condition -> rel VP
Condition -> rel Negation
Condition -> rel NP VP
Condition -> Negation
Condition -> Comparison
Condition -> Ordering

Negation -> do neg VP
Negation -> neg NP

VP -> verb
VP -> verb NP
VP -> verb PP
VP -> verb NP PP
VP -> be NP
VP -> be PP
VP -> be

Comparison -> cmp num
Comparison -> cmp NP

Grouping -> each NP
Grouping -> prep each NP

Ordering -> order prep NP
"""


def default_grammar() -> QueryGrammar:
    return parse_grammar(DEFAULT_GRAMMAR_TEXT, start="Question")
