"""Link assembly: per-anchor argmax over candidates, model-scored when a
model is supplied, string-scored otherwise; pre-defined relations merged in."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from ..question.graph import QueryGraph
from ..question.tokens import is_content_word
from ..schema_graph import SchemaGraph, schema_label
from .candidates import (
    PredefinedTriple,
    apply_predefined_relations,
    generate_candidates,
    string_match_score,
)
from .model import LinkerModel
from .network import matching_score
from .subgraph import build_enclosing_subgraph

_EPS = 1e-6


def _clamp(score: float) -> float:
    return min(max(score, _EPS), 1.0 - _EPS)


@dataclass(frozen=True)
class Assignment:
    query_node: int
    schema_node: int
    score: float  # open interval (0, 1)


@dataclass(frozen=True)
class LinkingResult:
    assignments: tuple[Assignment, ...]
    predefined_relations: tuple[PredefinedTriple, ...]

    def schema_nodes_for(self, query_node: int) -> list[int]:
        return [a.schema_node for a in self.assignments if a.query_node == query_node]


def link(
    qg: QueryGraph,
    sg: SchemaGraph,
    model: LinkerModel | None = None,
    k: int = 8,
    db_path: str | Path | None = None,
) -> LinkingResult:
    """Assign each content-word query node its best schema element.

    With a model, candidates are ranked by the subgraph matching score;
    without one, by the deterministic string-match score (candidate order
    already encodes it). At most one assignment per query node.
    """
    assignments: list[Assignment] = []
    for token in qg.nodes:
        if not is_content_word(token):
            continue
        candidates = generate_candidates(token, sg, k)
        if not candidates:
            continue
        if model is not None:
            scored = [
                (
                    matching_score(
                        build_enclosing_subgraph(token.position, c, qg, sg), model
                    ),
                    i,
                    c,
                )
                for i, c in enumerate(candidates)
            ]
            scored.sort(key=lambda t: (-t[0], t[1]))
            best_score, _i, best = scored[0]
        else:
            best = candidates[0]
            best_score = string_match_score(token.lemma, schema_label(sg.nodes[best]))
        assignments.append(
            Assignment(
                query_node=token.position, schema_node=best, score=_clamp(best_score)
            )
        )
    predefined = tuple(apply_predefined_relations(qg, sg, db_path))
    return LinkingResult(assignments=tuple(assignments), predefined_relations=predefined)
