from __future__ import annotations

import math

import numpy as np
import pytest

from structsql.errors import ModelFormatError, StructSqlError, TrainingError
from structsql.linker import (
    EnclosingSubgraph,
    GraphTensors,
    LinkExample,
    PredefinedRelation,
    TrainConfig,
    apply_predefined_relations,
    build_enclosing_subgraph,
    contrastive_loss,
    cross_aggregate,
    generate_candidates,
    init_model,
    link,
    linking_accuracy,
    load_model,
    matching_score,
    normalized_levenshtein,
    rgat_encode,
    save_model,
    string_match_score,
    train_linker,
    trigram_jaccard,
)
from structsql.linker.model import LEAKY_SLOPE, REL_INDEX, bucket_of
from structsql.linker.network import score_forward
from structsql.question import tokenize
from structsql.schema_graph import schema_label


# -- string matching / candidate generation -----------------------------------


def test_string_scores_basics():
    assert string_match_score("singer", "singer") == 1.0
    assert trigram_jaccard("abc", "xyz") == 0.0
    assert normalized_levenshtein("abc", "abc") == 0.0
    assert 0.0 < string_match_score("singers", "singer") < 1.0


def test_top1_candidate_is_singer(schemas):
    sg = schemas["concert_singer"]
    anchor = tokenize("singers")[0]
    candidates = generate_candidates(anchor, sg, 3)
    assert candidates
    assert sg.nodes[candidates[0]].label == "singer"


def test_stopword_anchor_gets_no_candidates(schemas):
    sg = schemas["concert_singer"]
    anchor = tokenize("the")[0]
    assert generate_candidates(anchor, sg, 5) == []


def test_purchases_ranking_matches_hand_scores(schemas):
    # hand-computed: score("purchase", label) for each customer_orders label
    sg = schemas["customer_orders"]
    anchor = tokenize("purchases")[0]
    assert anchor.lemma == "purchase"
    scores = {
        schema_label(n): string_match_score(anchor.lemma, schema_label(n))
        for n in sg.nodes
    }
    candidates = generate_candidates(anchor, sg, len(sg.nodes))
    labels = [schema_label(sg.nodes[c]) for c in candidates]
    assert labels.index("orders") < labels.index("customers")
    assert labels.index("orderdetails") < labels.index("customers")
    # ranking respects the hand-computed scores
    for earlier, later in zip(candidates, candidates[1:]):
        assert scores[schema_label(sg.nodes[earlier])] >= scores[
            schema_label(sg.nodes[later])
        ]


# -- pre-defined relations ------------------------------------------------------


def test_exact_and_partial_relations(schemas, analyze):
    sg = schemas["concert_singer"]
    _tokens, _best, _coref, qg = analyze("singer name")
    triples = apply_predefined_relations(qg, sg)
    singer_node = sg.node_for_table("singer").node_id
    name_node = sg.node_for_column("singer", "name").node_id
    kinds = {(t.query_node, t.schema_node): t.relation for t in triples}
    assert kinds[(0, singer_node)] is PredefinedRelation.EXACT_MATCH
    assert kinds[(1, name_node)] is PredefinedRelation.EXACT_MATCH
    # column label singer_id = tokens [singer, id]: "singer" is a subsequence
    singer_id_node = sg.node_for_column("singer", "singer_id").node_id
    assert kinds[(0, singer_id_node)] is PredefinedRelation.PARTIAL_MATCH


def test_value_match_probes_cells(schemas, analyze, dbs_dir):
    sg = schemas["concert_singer"]
    _tokens, _best, _coref, qg = analyze("singers from France")
    triples = apply_predefined_relations(qg, sg, dbs_dir / "concert_singer.sqlite")
    country_node = sg.node_for_column("singer", "country").node_id
    france = next(i for i, t in enumerate(qg.nodes) if t.surface == "France")
    assert any(
        t.query_node == france
        and t.schema_node == country_node
        and t.relation is PredefinedRelation.VALUE_MATCH
        for t in triples
    )


def test_value_probe_failure_is_not_fatal(schemas, analyze, tmp_path):
    sg = schemas["concert_singer"]
    _tokens, _best, _coref, qg = analyze("singers from France")
    bogus = tmp_path / "not_a_db.sqlite"
    bogus.write_text("junk")
    triples = apply_predefined_relations(qg, sg, bogus)
    assert isinstance(triples, list)


# -- enclosing subgraph ----------------------------------------------------------


def test_column_one_hop_is_owning_table(schemas, analyze):
    sg = schemas["gigs"]
    _tokens, _best, _coref, qg = analyze("show the genre")
    genre = sg.node_for_column("artist", "genre").node_id
    esg = build_enclosing_subgraph(2, genre, qg, sg)
    assert len(esg.schema_local_ids) == 2  # the column plus its table
    kinds = {esg.to_original[i][1] for i in esg.schema_local_ids}
    assert kinds == {genre, sg.node_for_table("artist").node_id}


def test_table_one_hop_spans_columns(schemas, analyze):
    sg = schemas["gigs"]
    _tokens, _best, _coref, qg = analyze("show the artist")
    artist = sg.node_for_table("artist").node_id
    esg = build_enclosing_subgraph(2, artist, qg, sg)
    assert len(esg.schema_local_ids) == 1 + 6


@pytest.mark.parametrize("candidate", [0, 2, 5, 9])
def test_node_count_property(schemas, analyze, candidate):
    sg = schemas["concert_singer"]
    _tokens, _best, _coref, qg = analyze("count singers from France")
    esg = build_enclosing_subgraph(1, candidate, qg, sg)
    expected = len(qg.nodes) + len(sg.neighbors(candidate)) + 1
    assert esg.n_nodes == expected
    assert esg.bridge == (1, len(qg.nodes))


# -- encoder numerics -------------------------------------------------------------


def _tiny_setup(analyze, schemas, question="show the genre", candidate_label=("artist", "genre")):
    sg = schemas["gigs"]
    _tokens, _best, _coref, qg = analyze(question)
    node = sg.node_for_column(*candidate_label)
    esg = build_enclosing_subgraph(2, node.node_id, qg, sg)
    return qg, sg, esg


def test_single_node_no_edges_is_bias_activated_transform(analyze, schemas):
    # a one-token query with an isolated schema node: the anchor row depends
    # only on its self-loop message
    model = init_model(embedding_dim=4, buckets=16, n_layers=1, rng_seed=3)
    qg, sg, esg = _tiny_setup(analyze, schemas)
    tensors = GraphTensors.from_subgraph(esg, model.buckets)
    H = rgat_encode(esg, model)
    # isolated check on a synthetic one-node graph
    tok = tokenize("genre")[0]
    h0 = model.tok_emb[bucket_of(tok.lemma, model.buckets)]
    layer = model.layers[0]
    self_rel = REL_INDEX["self_loop"]
    z = layer.b + layer.W[self_rel] @ h0 + model.rel_emb[self_rel]
    expected = np.where(z > 0, z, LEAKY_SLOPE * z)
    # one-token query graph against a keyless single-column table
    import structsql.question.graph as graph_mod
    from structsql.question.coref import resolve_coreference
    from structsql.question.parser import parse, select_interpretation
    from structsql.schema_graph import ColumnDef, SchemaCatalog, TableDef, build_schema_graph

    tokens = [tok]
    best = select_interpretation(parse(tokens))
    qg1 = graph_mod.build_query_graph(tokens, best.tree, resolve_coreference(tokens, best.tree))
    assert len(qg1.edges) == 0
    cat = SchemaCatalog(db_id="one", tables=(TableDef("t", (ColumnDef("c"),)),))
    sg1 = build_schema_graph(cat)
    esg1 = build_enclosing_subgraph(0, 1, qg1, sg1)
    H1 = rgat_encode(esg1, init_model(embedding_dim=4, buckets=16, n_layers=1, rng_seed=3))
    # anchor node (id 0) carries a bridge edge, so compare on the table node
    # (id 2): incoming = has-edge from column + self loop... instead assert
    # finiteness and the analytic value for a truly isolated variant below.
    assert np.all(np.isfinite(H1))

    # truly isolated: single node, no edges at all
    from structsql.linker.model import LinkerModel
    from structsql.linker.network import rgat_forward, ScorePath

    t = GraphTensors(
        n_nodes=1,
        src=np.array([0]),
        dst=np.array([0]),
        rel=np.array([self_rel]),
        seg_starts=np.array([0, 1]),
        emb_table=np.array([0]),
        emb_bucket=np.array([bucket_of(tok.lemma, 16)]),
        query_idx=np.array([0]),
        schema_idx=np.array([], dtype=np.int64),
        schema_adj=np.zeros((0, 0)),
    )
    model2 = init_model(embedding_dim=4, buckets=16, n_layers=1, rng_seed=3)
    path = ScorePath(tensors=t)
    out = rgat_forward(model2, t, path)
    np.testing.assert_allclose(out[0], expected, rtol=1e-12)


def test_zero_parameters_give_zero_output(analyze, schemas):
    model = init_model(embedding_dim=4, buckets=16, n_layers=2, rng_seed=1)
    for _name, arr in model.param_items():
        arr[...] = 0.0
    _qg, _sg, esg = _tiny_setup(analyze, schemas)
    H = rgat_encode(esg, model)
    np.testing.assert_allclose(H, 0.0)
    assert matching_score(esg, model) == pytest.approx(0.5)


def test_permutation_equivariance(analyze, schemas):
    model = init_model(embedding_dim=6, buckets=32, n_layers=2, rng_seed=9)
    _qg, _sg, esg = _tiny_setup(analyze, schemas, question="count the genre budget")
    tensors = GraphTensors.from_subgraph(esg, model.buckets)
    from structsql.linker.network import ScorePath, rgat_forward

    base = rgat_forward(model, tensors, ScorePath(tensors=tensors))

    rng = np.random.default_rng(4)
    perm = rng.permutation(tensors.n_nodes)
    inv = np.argsort(perm)
    # permute node ids: edge endpoints and per-node arrays move together
    edges = sorted(
        zip(perm[tensors.src], perm[tensors.dst], tensors.rel),
        key=lambda t: (t[1], t[0], t[2]),
    )
    src = np.array([e[0] for e in edges])
    dst = np.array([e[1] for e in edges])
    rel = np.array([e[2] for e in edges])
    seg = np.zeros(tensors.n_nodes + 1, dtype=np.int64)
    np.add.at(seg, dst + 1, 1)
    permuted = GraphTensors(
        n_nodes=tensors.n_nodes,
        src=src,
        dst=dst,
        rel=rel,
        seg_starts=np.cumsum(seg),
        emb_table=tensors.emb_table[inv],
        emb_bucket=tensors.emb_bucket[inv],
        query_idx=perm[tensors.query_idx],
        schema_idx=perm[tensors.schema_idx],
        schema_adj=tensors.schema_adj,
    )
    out = rgat_forward(model, permuted, ScorePath(tensors=permuted))
    np.testing.assert_allclose(out[perm], base, rtol=1e-10)


# -- cross aggregation --------------------------------------------------------------


def test_query_pooling_is_mean():
    model = init_model(embedding_dim=2, buckets=4, n_layers=1, rng_seed=0)
    model.W_g[...] = 0.0
    model.W_k[...] = np.eye(2)
    model.W_q[...] = np.eye(2)
    q = np.array([[1.0, 0.0], [0.0, 1.0]])
    cand = np.array([[2.0, 2.0]])
    out = cross_aggregate(q, cand, model)
    # W_g = 0 -> alpha = 0.5; isolated candidate: 0.5*h_j + 0.5*h_g
    h_g = np.array([0.5, 0.5])
    np.testing.assert_allclose(out[0], 0.5 * cand[0] + 0.5 * h_g)


def test_gate_is_half_when_gate_matrix_zero():
    model = init_model(embedding_dim=3, buckets=4, n_layers=1, rng_seed=0)
    model.W_g[...] = 0.0
    q = np.ones((4, 3))
    cand = np.arange(6, dtype=float).reshape(2, 3)
    out = cross_aggregate(q, cand, model)
    expected = 0.5 * cand @ model.W_k.T + 0.5 * np.tile(model.W_q @ np.ones(3), (2, 1))
    np.testing.assert_allclose(out, expected)


# -- matching score -------------------------------------------------------------------


def test_score_in_open_interval(analyze, schemas):
    _qg, _sg, esg = _tiny_setup(analyze, schemas)
    for seed in range(5):
        s = matching_score(esg, init_model(embedding_dim=8, buckets=64, n_layers=2, rng_seed=seed))
        assert 0.0 < s < 1.0


def test_score_monotone_in_logit(analyze, schemas):
    model = init_model(embedding_dim=6, buckets=32, n_layers=2, rng_seed=2)
    _qg, _sg, esg = _tiny_setup(analyze, schemas)
    tensors = GraphTensors.from_subgraph(esg, model.buckets)
    path = score_forward(model, tensors)
    doubled = 1.0 / (1.0 + math.exp(-2.0 * path.logit))
    if path.logit > 0:
        assert doubled >= path.score >= 0.5
    else:
        assert doubled <= path.score <= 0.5


def test_score_deterministic(analyze, schemas):
    model = init_model(embedding_dim=6, buckets=32, n_layers=2, rng_seed=2)
    _qg, _sg, esg = _tiny_setup(analyze, schemas)
    assert matching_score(esg, model) == matching_score(esg, model)


# -- contrastive loss ------------------------------------------------------------------


def test_uniform_ratio_gives_ln5():
    assert contrastive_loss(0.3, [0.3] * 4) == pytest.approx(math.log(5), abs=1e-12)


def test_loss_vanishes_in_confident_limit():
    assert contrastive_loss(1 - 1e-12, [1e-15, 1e-15]) == pytest.approx(0.0, abs=1e-9)


def test_loss_nonnegative_on_random_vectors():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        pos = float(rng.uniform(1e-6, 1 - 1e-6))
        negs = rng.uniform(1e-6, 1 - 1e-6, size=rng.integers(1, 8)).tolist()
        assert contrastive_loss(pos, negs) >= 0.0


def test_loss_rejects_out_of_domain():
    with pytest.raises(StructSqlError):
        contrastive_loss(1.0, [0.5])
    with pytest.raises(StructSqlError):
        contrastive_loss(0.5, [0.0])


# -- model io ------------------------------------------------------------------------


def test_model_save_load_round_trip(tmp_path):
    model = init_model(embedding_dim=6, buckets=32, n_layers=2, rng_seed=5)
    path = tmp_path / "m.sgul"
    save_model(model, path)
    back = load_model(path)
    save_model(back, tmp_path / "m2.sgul")
    assert (tmp_path / "m.sgul").read_bytes() == (tmp_path / "m2.sgul").read_bytes()
    assert back.embedding_dim == model.embedding_dim
    assert back.rng_seed == model.rng_seed


def test_model_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.sgul"
    path.write_bytes(b"NOPE" + b"\x00" * 64)
    with pytest.raises(ModelFormatError):
        load_model(path)


def test_model_rejects_bad_version(tmp_path):
    model = init_model(embedding_dim=4, buckets=8, n_layers=1, rng_seed=1)
    path = tmp_path / "v.sgul"
    save_model(model, path)
    data = bytearray(path.read_bytes())
    data[4] = 99
    path.write_bytes(bytes(data))
    with pytest.raises(ModelFormatError):
        load_model(path)


# -- training -------------------------------------------------------------------------


def _gigs_examples(schemas, analyze):
    sg = schemas["gigs"]
    examples = []
    for node in sg.column_nodes:
        label = schema_label(node)
        tokens, best, coref, qg = analyze(f"show the {label}")
        anchor = next(t.position for t in tokens if t.lemma == label)
        examples.append(LinkExample(query_graph=qg, anchor=anchor, gold=node.node_id))
    return sg, examples


def test_zero_epochs_returns_initialized_model(schemas, analyze):
    sg, examples = _gigs_examples(schemas, analyze)
    cfg = TrainConfig(epochs=0, dim=8, buckets=64, seed=13)
    result = train_linker(examples[:4], sg, cfg)
    reference = init_model(embedding_dim=8, buckets=64, n_layers=2, rng_seed=13)
    np.testing.assert_array_equal(result.model.flatten(), reference.flatten())
    assert result.epoch_losses == []


def test_examples_with_gold_outside_candidates_are_skipped(schemas, analyze):
    sg, examples = _gigs_examples(schemas, analyze)
    # anchor 'the' (stoplisted) produces no candidates at all
    tokens, best, coref, qg = analyze("show the genre")
    bad = LinkExample(query_graph=qg, anchor=1, gold=0)
    cfg = TrainConfig(epochs=1, dim=8, buckets=64, seed=13, k=4)
    result = train_linker(examples[:3] + [bad], sg, cfg)
    assert result.skipped == 1
    assert result.trained == 3


def test_training_errors_without_usable_examples(schemas, analyze):
    sg, _ = _gigs_examples(schemas, analyze)
    tokens, best, coref, qg = analyze("show the thing")
    bad = LinkExample(query_graph=qg, anchor=1, gold=0)
    with pytest.raises(TrainingError):
        train_linker([bad], sg, TrainConfig(epochs=1))


# -- link -----------------------------------------------------------------------------


def test_link_fallback_assigns_singer(schemas, analyze):
    sg = schemas["concert_singer"]
    _tokens, _best, _coref, qg = analyze("singers")
    result = link(qg, sg, model=None, k=8)
    assert len(result.assignments) == 1
    a = result.assignments[0]
    assert sg.nodes[a.schema_node].label == "singer"
    assert 0.0 < a.score < 1.0


def test_link_no_content_words(schemas, analyze):
    sg = schemas["concert_singer"]
    _tokens, _best, _coref, qg = analyze("the of and")
    result = link(qg, sg)
    assert result.assignments == ()


def test_link_zero_model_follows_candidate_order(schemas, analyze):
    sg = schemas["concert_singer"]
    _tokens, _best, _coref, qg = analyze("singers")
    model = init_model(embedding_dim=4, buckets=16, n_layers=1, rng_seed=0)
    for _name, arr in model.param_items():
        arr[...] = 0.0
    result = link(qg, sg, model=model, k=5)
    anchor_token = next(t for t in qg.nodes if t.surface == "singers")
    expected = generate_candidates(anchor_token, sg, 5)[0]
    assert result.assignments[0].schema_node == expected


def test_link_at_most_one_assignment_per_node(schemas, analyze):
    sg = schemas["concert_singer"]
    _tokens, _best, _coref, qg = analyze("singer concert stadium year")
    result = link(qg, sg)
    nodes = [a.query_node for a in result.assignments]
    assert len(nodes) == len(set(nodes))
