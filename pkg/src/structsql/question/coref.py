"""Deterministic coreference resolution over question tokens.

Pronouns and definite repeats ("the singers" after an earlier "singers")
resolve to the nearest preceding entity mention by lemma match; every other
noun mention starts a fresh entity. Pronouns with no antecedent still get a
fresh entity, flagged unresolved, so resolution never hard-fails.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .parser import SyntaxTree
from .tokens import PRONOUNS, Token, is_content_word

Span = tuple[int, int]


@dataclass(frozen=True)
class CorefMap:
    entries: dict[Span, int]  # mention span -> entity id
    entities: tuple[Span, ...]  # canonical (first) mention per entity
    unresolved: frozenset[int] = frozenset()

    def entity_of(self, span: Span) -> int | None:
        return self.entries.get(span)

    def mentions_of(self, entity_id: int) -> list[Span]:
        return sorted(s for s, e in self.entries.items() if e == entity_id)


def resolve_coreference(tokens: list[Token], tree: SyntaxTree) -> CorefMap:
    if tokens and not tree.covers(len(tokens)):
        raise ValueError("syntax tree does not cover the token list")
    entries: dict[Span, int] = {}
    entities: list[Span] = []
    unresolved: set[int] = set()
    # mention token -> entity, in reading order
    last_entity_by_lemma: dict[str, int] = {}
    last_entity: int | None = None

    for tok in tokens:
        span = (tok.position, tok.position + 1)
        if tok.lemma in PRONOUNS:
            if last_entity is not None:
                entries[span] = last_entity
            else:
                entity_id = len(entities)
                entities.append(span)
                entries[span] = entity_id
                unresolved.add(entity_id)
            continue
        if not is_content_word(tok):
            continue
        preceded_by_the = (
            tok.position > 0 and tokens[tok.position - 1].lemma == "the"
        )
        prior = last_entity_by_lemma.get(tok.lemma)
        if prior is not None and preceded_by_the:
            entries[span] = prior
            last_entity = prior
        else:
            entity_id = len(entities)
            entities.append(span)
            entries[span] = entity_id
            last_entity_by_lemma[tok.lemma] = entity_id
            last_entity = entity_id

    return CorefMap(
        entries=entries, entities=tuple(entities), unresolved=frozenset(unresolved)
    )
