"""Candidate generation by string matching plus the pre-defined relations.

Match score between an anchor lemma and a schema label (underscores as
spaces) is the better of trigram Jaccard and inverse normalized Levenshtein.
Anchors scoring below 0.1 everywhere are treated as non-linkable words.
"""

from __future__ import annotations

import logging
import sqlite3
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from ..question.tokens import Token, is_content_word
from ..schema_graph import ColumnType, NodeKind, SchemaGraph, SchemaNode, schema_label

logger = logging.getLogger(__name__)

MIN_LINK_SCORE = 0.1
VALUE_PROBE_ROW_CAP = 100


def trigram_jaccard(a: str, b: str) -> float:
    if a == b:
        return 1.0
    ta = {a[i : i + 3] for i in range(len(a) - 2)}
    tb = {b[i : i + 3] for i in range(len(b) - 2)}
    if not ta or not tb:
        return 0.0
    return len(ta & tb) / len(ta | tb)


def normalized_levenshtein(a: str, b: str) -> float:
    """Levenshtein distance divided by the longer length."""
    if a == b:
        return 0.0
    if not a or not b:
        return 1.0
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1] / max(len(a), len(b))


def string_match_score(anchor_lemma: str, label: str) -> float:
    a = anchor_lemma.lower().replace("_", " ")
    b = label.lower().replace("_", " ")
    return max(trigram_jaccard(a, b), 1.0 - normalized_levenshtein(a, b))


def generate_candidates(anchor: Token, schema: SchemaGraph, k: int) -> list[int]:
    """Top-k schema node ids by string-match score, ties by node order.

    Returns [] for non-linkable anchors (stoplisted words or a best score
    under the 0.1 threshold).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if not is_content_word(anchor):
        return []
    scored = [
        (string_match_score(anchor.lemma, schema_label(node)), node.node_id)
        for node in schema.nodes
    ]
    best = max((s for s, _ in scored), default=0.0)
    if best < MIN_LINK_SCORE:
        return []
    scored.sort(key=lambda pair: (-pair[0], pair[1]))
    return [node_id for _score, node_id in scored[:k]]


class PredefinedRelation(Enum):
    EXACT_MATCH = "exact_match"
    PARTIAL_MATCH = "partial_match"
    VALUE_MATCH = "value_match"


@dataclass(frozen=True)
class PredefinedTriple:
    query_node: int
    schema_node: int
    relation: PredefinedRelation


def _is_subsequence(needle: list[str], haystack: list[str]) -> bool:
    it = iter(haystack)
    return all(tok in it for tok in needle)


def apply_predefined_relations(
    qg, sg: SchemaGraph, db_path: str | Path | None = None
) -> list[PredefinedTriple]:
    """Exact/partial name matches plus value matches against cell contents.

    exact: anchor phrase equals the label token-for-token; partial: one side
    is a token-subsequence of the other; value: the anchor surface occurs as
    a cell value of a text column (only probed when a database is supplied,
    capped at 100 rows per column).
    """
    triples: list[PredefinedTriple] = []
    tokens = list(qg.nodes)
    content = [t for t in tokens if is_content_word(t)]
    content_positions = {t.position for t in content}

    for tok in content:
        phrases = [[tok.lemma]]
        if tok.position + 1 in content_positions:
            phrases.append([tok.lemma, tokens[tok.position + 1].lemma])
        for node in sg.nodes:
            label_tokens = schema_label(node).split()
            hit: PredefinedRelation | None = None
            for phrase in phrases:
                if phrase == label_tokens:
                    hit = PredefinedRelation.EXACT_MATCH
                    break
                if _is_subsequence(phrase, label_tokens) or _is_subsequence(
                    label_tokens, phrase
                ):
                    hit = hit or PredefinedRelation.PARTIAL_MATCH
            if hit is not None:
                triples.append(PredefinedTriple(tok.position, node.node_id, hit))

    if db_path is not None:
        triples.extend(_value_matches(content, sg, db_path))
    return triples


def _value_matches(
    content: list[Token], sg: SchemaGraph, db_path: str | Path
) -> list[PredefinedTriple]:
    triples: list[PredefinedTriple] = []
    try:
        conn = sqlite3.connect(f"file:{Path(db_path)}?mode=ro", uri=True)
    except sqlite3.Error as exc:
        logger.warning("value-match probe skipped: cannot open %s (%s)", db_path, exc)
        return triples
    try:
        text_columns = [
            node
            for node in sg.column_nodes
            if node.data_type in (ColumnType.TEXT, None)
        ]
        for tok in content:
            for node in text_columns:
                table = sg.nodes[node.table_index].label
                query = (
                    f'SELECT 1 FROM (SELECT "{node.label}" AS v FROM "{table}" '
                    f"LIMIT {VALUE_PROBE_ROW_CAP}) WHERE v LIKE ? LIMIT 1"
                )
                try:
                    row = conn.execute(query, (tok.surface,)).fetchone()
                except sqlite3.Error as exc:
                    logger.warning(
                        "value-match probe failed on %s.%s: %s", table, node.label, exc
                    )
                    continue
                if row is not None:
                    triples.append(
                        PredefinedTriple(
                            tok.position, node.node_id, PredefinedRelation.VALUE_MATCH
                        )
                    )
    finally:
        conn.close()
    return triples
