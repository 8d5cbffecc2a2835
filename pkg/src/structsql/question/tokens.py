"""Lossless question tokenization with rule-based lemmas.

Tokens record the whitespace that preceded them, so joining
``space_before + surface`` over the token list reproduces the (trimmed)
input exactly. Lemmas are produced by a small rule set: lowercase, strip
plural endings and common verb suffixes.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from ..errors import ValidationError

_TOKEN_RE = re.compile(r"[A-Za-z]+|[0-9]+(?:\.[0-9]+)?|'s|[^\sA-Za-z0-9]")

# Function words excluded from schema linking and coreference mentions;
# includes the command verbs of this question domain (show/list/...).
STOPWORDS = frozenset(
    """
    the a an of in on at for from with without by to and or not no do does did
    is are was were be been has have had that which who whose what how many
    much all any each every per more most less least than as there please i
    you we me us it they them their its he she him her his hers this these
    those about into out up down if then so just also only show list display
    give return find get tell print select
    """.split()
)

PRONOUNS = frozenset(
    "it they them these those their its he she him her his hers".split()
)


@dataclass(frozen=True)
class Token:
    surface: str
    lemma: str
    position: int
    space_before: str = ""


def lemma_of(surface: str) -> str:
    w = surface.lower()
    if not w.isalpha() or len(w) <= 3:
        return w
    # plural endings
    if w.endswith("ies") and len(w) > 4:
        return w[:-3] + "y"
    if w.endswith("sses"):
        return w[:-2]
    if w.endswith(("xes", "ches", "shes", "zes")):
        return w[:-2]
    if w.endswith("s") and not w.endswith(("ss", "us", "is")):
        return w[:-1]
    # verb suffixes
    if w.endswith("ing") and len(w) > 5:
        stem = w[:-3]
        if len(stem) > 2 and stem[-1] == stem[-2]:
            stem = stem[:-1]
        return stem
    if w.endswith("ed") and len(w) > 4 and not w.endswith("eed"):
        return w[:-2]
    return w


def tokenize(question: str) -> list[Token]:
    """Split a question into tokens; raises ValidationError when empty.

    Possessives split off ("quarter's" -> "quarter", "'s"); numbers stay
    single tokens; punctuation tokenizes one character at a time.
    """
    trimmed = question.strip()
    if not trimmed:
        raise ValidationError("question is empty")
    tokens: list[Token] = []
    last_end = 0
    for m in _TOKEN_RE.finditer(trimmed):
        surface = m.group(0)
        tokens.append(
            Token(
                surface=surface,
                lemma=lemma_of(surface),
                position=len(tokens),
                space_before=trimmed[last_end : m.start()],
            )
        )
        last_end = m.end()
    if not tokens:
        raise ValidationError("question has no tokens")
    return tokens


def detokenize(tokens: list[Token]) -> str:
    return "".join(t.space_before + t.surface for t in tokens)


def is_content_word(token: Token) -> bool:
    """True for words worth linking to schema elements."""
    return (
        token.surface.isalpha()
        and token.lemma not in STOPWORDS
        and token.lemma not in PRONOUNS
    )
