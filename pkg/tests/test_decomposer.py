from __future__ import annotations

import pytest

from structsql.decomposer import (
    MetaOpKind,
    SqlComponent,
    assemble,
    components_from_gold,
    decompose,
    default_rules,
    map_nodes,
    parse_rules,
    split_gold_components,
    validate_sql,
)
from structsql.errors import AssemblyError, GrammarError, SqlSyntaxError
from structsql.question import parse, select_interpretation, tokenize
from structsql.sqlkit import normalize_sql


def plan_for(question: str, analyze):
    tokens, best, _coref, _qg = analyze(question)
    annotations = map_nodes(best.tree, tokens)
    return tokens, best.tree, annotations, decompose(best.tree, annotations)


# -- node mapper ----------------------------------------------------------------


def test_count_singers_annotations(analyze):
    tokens, tree, annotations, plan = plan_for("count singers", analyze)
    kinds = {tree.node(n).symbol: op.kind for n, op in annotations.items() if n != tree.root_id}
    assert kinds.get("AggregateOp") is MetaOpKind.AGGREGATE
    assert kinds.get("Entity") is MetaOpKind.FROM_JOIN
    assert annotations[tree.root_id].kind is MetaOpKind.SELECT
    agg = next(op for n, op in annotations.items() if tree.node(n).symbol == "AggregateOp")
    assert "count" in agg.modifiers


def test_superlative_maps_to_order_by_with_limit(analyze):
    tokens, tree, annotations, _plan = plan_for(
        "What is the code of airport that has the highest number of flights?", analyze
    )
    superlative = next(
        op for n, op in annotations.items() if tree.node(n).symbol == "Superlative"
    )
    assert superlative.kind is MetaOpKind.ORDER_BY
    assert "limit" in superlative.modifiers


def test_fallback_tree_annotates_root_only(analyze):
    tokens, tree, annotations, plan = plan_for("zzz qqq", analyze)
    assert tree.fallback
    assert list(annotations) == [tree.root_id]
    assert plan.order == (tree.root_id,)


def test_map_nodes_collects_literals(analyze):
    tokens, tree, annotations, _plan = plan_for("count singers from France", analyze)
    literals = {lit for op in annotations.values() for lit in op.literals}
    assert "France" in literals


def test_rule_file_parsing():
    rules = parse_rules("Entity => from_join\nSuperlative => order_by,limit\n")
    assert rules["Entity"][0] is MetaOpKind.FROM_JOIN
    assert rules["Superlative"] == (MetaOpKind.ORDER_BY, ("limit",))
    with pytest.raises(GrammarError):
        parse_rules("Entity -> nope")
    with pytest.raises(GrammarError):
        parse_rules("Entity => not_a_kind")


# -- decompose ----------------------------------------------------------------


def test_postorder_children_before_parents(analyze):
    for question in ("count singers", "count singers from France", "show the oldest singer"):
        _tokens, tree, _ann, plan = plan_for(question, analyze)
        seen = set()
        for node_id in plan.order:
            for child in _annotated_descendants(tree, node_id, set(plan.annotations)):
                assert child in seen, f"{question}: child {child} after parent {node_id}"
            seen.add(node_id)
        assert plan.order[-1] == plan.root_id


def _annotated_descendants(tree, node_id, annotated):
    out = []

    def walk(nid):
        for child in tree.node(nid).children:
            if child in annotated:
                out.append(child)
            walk(child)

    walk(node_id)
    return out


def test_negation_becomes_subquery_before_where(analyze):
    _tokens, tree, annotations, plan = plan_for(
        "How many people live in countries that do not speak English?", analyze
    )
    kinds = [plan.kind_of(n) for n in plan.order]
    assert MetaOpKind.SUBQUERY in kinds
    sub_pos = kinds.index(MetaOpKind.SUBQUERY)
    where_pos = next(i for i, k in enumerate(kinds) if k is MetaOpKind.WHERE)
    assert sub_pos < where_pos


def test_single_annotated_root(analyze):
    _tokens, tree, annotations, plan = plan_for("zzz qqq", analyze)
    assert plan.order == (plan.root_id,)


# -- assemble ----------------------------------------------------------------


def test_assemble_identity(analyze):
    _tokens, _tree, _ann, plan = plan_for("zzz qqq", analyze)
    component = SqlComponent(
        node_id=plan.root_id, text="SELECT count(*) FROM singer", kind=MetaOpKind.SELECT
    )
    assert assemble([component], plan) == "SELECT count(*) FROM singer"


def test_assemble_substitutes_placeholders():
    plan, components = split_gold_components(
        "SELECT name FROM singer WHERE singer_id NOT IN "
        "(SELECT singer_id FROM singer_in_concert)"
    )
    out = assemble(components, plan)
    assert "NOT IN (SELECT singer_id FROM singer_in_concert)" in out
    assert "{sub:" not in out


def test_assemble_missing_component(analyze):
    _tokens, _tree, _ann, plan = plan_for("count singers", analyze)
    root_only = [
        SqlComponent(node_id=plan.root_id, text="SELECT 1", kind=MetaOpKind.SELECT)
    ]
    with pytest.raises(AssemblyError) as err:
        assemble(root_only, plan)
    assert err.value.node_id is not None


def test_assemble_rejects_unparseable_root(analyze):
    _tokens, _tree, _ann, plan = plan_for("zzz qqq", analyze)
    bad = SqlComponent.__new__(SqlComponent)
    object.__setattr__(bad, "node_id", plan.root_id)
    object.__setattr__(bad, "text", "SELECT FROM singer")
    object.__setattr__(bad, "kind", MetaOpKind.SELECT)
    with pytest.raises(SqlSyntaxError):
        assemble([bad], plan)


def test_component_text_validated_on_construction():
    with pytest.raises(SqlSyntaxError):
        SqlComponent(node_id=0, text="this is prose", kind=MetaOpKind.SELECT)


# -- gold splitting round trip ---------------------------------------------------


def test_round_trip_corpus(corpus30):
    for record in corpus30:
        gold = record["query"]
        plan, components = split_gold_components(gold)
        assert assemble(components, plan) == normalize_sql(gold)


def test_validate_sql_accepts_corpus(corpus30):
    for record in corpus30:
        validate_sql(record["query"])


def test_components_from_gold_cover_plan(analyze):
    _tokens, _tree, _ann, plan = plan_for("show singers without concerts", analyze)
    gold = (
        "SELECT name FROM singer WHERE singer_id NOT IN "
        "(SELECT singer_id FROM singer_in_concert)"
    )
    components = components_from_gold(plan, gold)
    assert {c.node_id for c in components} == set(plan.order)
    assert assemble(components, plan) == normalize_sql(gold)
