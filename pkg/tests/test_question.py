from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from structsql.errors import ValidationError
from structsql.question import (
    ParseInterpretation,
    build_query_graph,
    detokenize,
    parse,
    resolve_coreference,
    select_interpretation,
    tokenize,
)
from structsql.question.graph import QueryRelation


# -- tokenize ----------------------------------------------------------------


def test_tokenize_show_tables():
    tokens = tokenize("Show tables")
    assert [t.surface for t in tokens] == ["Show", "tables"]
    assert [t.lemma for t in tokens] == ["show", "table"]


def test_tokenize_possessive_split():
    tokens = tokenize("last quarter's sales")
    assert [t.surface for t in tokens] == ["last", "quarter", "'s", "sales"]
    assert len(tokens) == 4


def test_tokenize_empty_rejected():
    with pytest.raises(ValidationError):
        tokenize("   ")


@settings(max_examples=100, deadline=None)
@given(
    st.lists(
        st.text(alphabet=st.characters(min_codepoint=33, max_codepoint=126), min_size=1, max_size=8),
        min_size=1,
        max_size=8,
    )
)
def test_tokenize_round_trip(words):
    question = " ".join(words)
    if not question.strip():
        return
    tokens = tokenize(question)
    assert detokenize(tokens) == question.strip()


# -- parse -------------------------------------------------------------------


def test_parse_count_singers_structure(analyze):
    _tokens, best, _coref, _qg = analyze("count singers")
    symbols = best.tree.preorder_symbols
    assert "AggregateOp" in symbols
    assert "Entity" in symbols
    agg = next(n for n in best.tree.nodes if n.symbol == "AggregateOp")
    entity = next(n for n in best.tree.nodes if n.symbol == "Entity")
    assert agg.span == (0, 2)
    assert entity.span == (1, 2)


def test_parse_attachment_ambiguity():
    tokens = tokenize("singers from France with awards")
    interpretations = parse(tokens)
    assert len(interpretations) >= 2


def test_parse_gibberish_falls_back():
    tokens = tokenize("zzz qqq")
    interpretations = parse(tokens)
    assert len(interpretations) == 1
    assert interpretations[0].tree.fallback
    root = interpretations[0].tree.node(interpretations[0].tree.root_id)
    assert len(root.children) == 2


def test_parse_never_empty_on_fixture_questions(toybench):
    for record in toybench:
        tokens = tokenize(record["question"])
        interpretations = parse(tokens)
        assert interpretations
        assert interpretations[0].tree.covers(len(tokens))


# -- select_interpretation ----------------------------------------------------


def _make_interp(score, n_nodes, symbol="X"):
    from structsql.question.parser import SyntaxTree, TreeNode

    nodes = [TreeNode(node_id=0, symbol=symbol, span=(0, n_nodes), children=tuple(range(1, n_nodes)))]
    for i in range(1, n_nodes):
        nodes.append(TreeNode(node_id=i, symbol="t", span=(i - 1, i)))
    return ParseInterpretation(tree=SyntaxTree(nodes=tuple(nodes), root_id=0), score=score)


def test_select_takes_argmax():
    low, high = _make_interp(0.2, 3), _make_interp(0.9, 3)
    assert select_interpretation([low, high]) is high


def test_select_tie_breaks_on_node_count():
    seven, five = _make_interp(1.0, 7), _make_interp(1.0, 5)
    assert select_interpretation([seven, five]) is five


@settings(max_examples=50, deadline=None)
@given(st.permutations(list(range(5))))
def test_select_is_order_invariant(order):
    candidates = [
        _make_interp(0.5, 4, "A"),
        _make_interp(0.5, 4, "B"),
        _make_interp(0.7, 6, "C"),
        _make_interp(0.5, 3, "D"),
        _make_interp(0.7, 6, "C2"),
    ]
    shuffled = [candidates[i] for i in order]
    baseline = select_interpretation(candidates)
    assert select_interpretation(shuffled).tree.preorder_symbols == baseline.tree.preorder_symbols


def test_select_empty_rejected():
    with pytest.raises(ValidationError):
        select_interpretation([])


# -- coreference ---------------------------------------------------------------


def test_their_maps_to_singers(analyze):
    tokens, best, coref, _qg = analyze("singers and their songs")
    entity = coref.entries[(2, 3)]  # "their"
    assert coref.entities[entity] == (0, 1)  # "singers"


def test_them_maps_to_concerts(analyze):
    tokens, best, coref, _qg = analyze("Show concerts. List them.")
    them = next(i for i, t in enumerate(tokens) if t.surface == "them")
    entity = coref.entries[(them, them + 1)]
    concerts = next(i for i, t in enumerate(tokens) if t.surface == "concerts")
    assert coref.entities[entity] == (concerts, concerts + 1)


def test_no_pronouns_identity(analyze):
    tokens, best, coref, _qg = analyze("singers from France")
    # one entity per content mention, no sharing
    assert len(set(coref.entries.values())) == len(coref.entries)
    assert not coref.unresolved


def test_unresolved_pronoun_flagged(analyze):
    tokens, best, coref, _qg = analyze("them")
    entity = coref.entries[(0, 1)]
    assert entity in coref.unresolved


def test_definite_repeat_links_back(analyze):
    tokens, best, coref, _qg = analyze("singers and the singers age")
    first = coref.entries[(0, 1)]
    repeat = next(
        eid for span, eid in coref.entries.items() if span[0] == 3
    )
    assert first == repeat


# -- query graph ----------------------------------------------------------------


def test_two_token_tree_single_pair(analyze):
    _tokens, best, coref, qg = analyze("count singers")
    forward = [e for e in qg.edges if e.relation is QueryRelation.FORWARD_SYNTAX]
    backward = [e for e in qg.edges if e.relation is QueryRelation.BACKWARD_SYNTAX]
    assert len(forward) == len(backward) >= 1


def test_coref_pair_adds_edge(analyze):
    _tokens, best, coref, qg = analyze("singers and their songs")
    assert qg.has_edge(0, 2) and qg.has_edge(2, 0)


@pytest.mark.parametrize(
    "question",
    [
        "count singers",
        "singers from France with awards",
        "How many people live in countries that do not speak English?",
        "show the oldest singer",
        "zzz qqq",
    ],
)
def test_edge_pairing_invariant(analyze, question):
    _tokens, _best, _coref, qg = analyze(question)
    forward = {(e.source, e.target) for e in qg.edges if e.relation is QueryRelation.FORWARD_SYNTAX}
    backward = {(e.source, e.target) for e in qg.edges if e.relation is QueryRelation.BACKWARD_SYNTAX}
    assert forward == {(j, i) for i, j in backward}
    positions = [t.position for t in qg.nodes]
    assert positions == list(range(len(qg.nodes)))
