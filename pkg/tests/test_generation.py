from __future__ import annotations

import json

import pytest

from structsql.decomposer import MetaOpKind, SqlComponent, decompose, map_nodes
from structsql.errors import ComponentError, EndpointError, PipelineStageError
from structsql.generation import (
    CannedEndpoint,
    EchoEndpoint,
    GenerationRequest,
    OracleEndpoint,
    PipelineTrace,
    compose_context,
    generate_component,
    make_endpoint,
    render_prompt,
    render_schema_slice,
    run_pipeline,
    sanitize_response,
)
from structsql.linker import link
from structsql.sqlkit import normalize_sql


def context_for(question, schemas, analyze, db_id="concert_singer", node_index=-1):
    sg = schemas[db_id]
    tokens, best, _coref, qg = analyze(question)
    linking = link(qg, sg)
    annotations = map_nodes(best.tree, tokens, linking)
    plan = decompose(best.tree, annotations)
    prior: dict[int, SqlComponent] = {}
    target = plan.order[node_index]
    # fill children bottom-up so the target is composable
    for node_id in plan.order:
        if node_id == target:
            break
        prior[node_id] = SqlComponent(node_id=node_id, text="1", kind=MetaOpKind.LIMIT)
    return sg, qg, linking, plan, prior, target


# -- compose / render ----------------------------------------------------------


def test_root_of_single_subtask_plan_has_no_parent(schemas, analyze):
    sg, qg, linking, plan, prior, target = context_for("zzz qqq", schemas, analyze)
    ctx = compose_context(target, plan, linking, {}, qg, sg, "zzz qqq")
    assert ctx.parent_summary == ""
    assert ctx.sibling_summaries == ()
    assert ctx.kind is MetaOpKind.SELECT


def test_missing_child_component_is_ordering_error(schemas, analyze):
    from structsql.errors import OrderingError

    sg, qg, linking, plan, prior, target = context_for(
        "count singers", schemas, analyze, node_index=-1
    )
    with pytest.raises(OrderingError):
        compose_context(plan.root_id, plan, linking, {}, qg, sg, "count singers")


def test_prior_components_visible_to_parent(schemas, analyze):
    sg, qg, linking, plan, prior, target = context_for("count singers", schemas, analyze)
    ctx = compose_context(target, plan, linking, prior, qg, sg, "count singers")
    assert len(ctx.prior) == len(prior)


def test_render_prompt_deterministic(schemas, analyze):
    sg, qg, linking, plan, prior, target = context_for("count singers", schemas, analyze)
    ctx = compose_context(target, plan, linking, prior, qg, sg, "count singers")
    assert render_prompt(ctx) == render_prompt(ctx)


def test_schema_slice_single_stanza(schemas):
    sg = schemas["network_small"]
    block = render_schema_slice(sg, [sg.node_for_table("Likes").node_id])
    assert block.count("CREATE TABLE") == 1
    assert "student_id" in block and "liked_id" in block


def test_case2_prompt_contains_countrylanguage_stanza(schemas, analyze):
    question = "How many people live in countries that do not speak English?"
    sg, qg, linking, plan, prior, target = context_for(
        question, schemas, analyze, db_id="world_small"
    )
    ctx = compose_context(target, plan, linking, prior, qg, sg, question)
    prompt = render_prompt(ctx)
    assert "CREATE TABLE countrylanguage (" in prompt


def test_schema_slice_expands_one_fk_hop(schemas, analyze):
    question = "What is the code of airport that has the highest number of flights?"
    sg, qg, linking, plan, prior, target = context_for(
        question, schemas, analyze, db_id="flight_small"
    )
    ctx = compose_context(target, plan, linking, prior, qg, sg, question)
    assert "CREATE TABLE flights (" in ctx.schema_slice
    assert "CREATE TABLE airports (" in ctx.schema_slice


# -- sanitization / component generation ------------------------------------------


def test_fences_stripped():
    assert sanitize_response("here is your SQL: ```sql SELECT 1```") == "SELECT 1"
    assert sanitize_response("```\nSELECT 2\n```") == "SELECT 2"
    assert sanitize_response("SELECT 3;") == "SELECT 3"


def test_component_accepted_from_mock(schemas, analyze):
    sg, qg, linking, plan, prior, target = context_for("zzz qqq", schemas, analyze)
    ctx = compose_context(target, plan, linking, {}, qg, sg, "zzz qqq")
    endpoint = CannedEndpoint(["SELECT count(*) FROM singer"])
    component, attempts = generate_component(endpoint, ctx)
    assert component.text == "SELECT count(*) FROM singer"
    assert attempts[0]["accepted"]


def test_prose_twice_collects_two_diagnostics(schemas, analyze):
    sg, qg, linking, plan, prior, target = context_for("zzz qqq", schemas, analyze)
    ctx = compose_context(target, plan, linking, {}, qg, sg, "zzz qqq")
    endpoint = CannedEndpoint(["sorry, I cannot help", "still just prose"])
    with pytest.raises(ComponentError) as err:
        generate_component(endpoint, ctx)
    assert len(err.value.diagnostics) == 2


def test_transport_failures_retry_then_raise(schemas, analyze):
    sg, qg, linking, plan, prior, target = context_for("zzz qqq", schemas, analyze)
    ctx = compose_context(target, plan, linking, {}, qg, sg, "zzz qqq")

    class Flaky:
        def __init__(self):
            self.calls = 0

        def complete(self, request):
            self.calls += 1
            raise EndpointError("down")

    flaky = Flaky()
    with pytest.raises(EndpointError):
        generate_component(flaky, ctx, transport_retries=3, backoff_s=0.0)
    assert flaky.calls == 3


def test_echo_endpoint_returns_instruction_line():
    request = GenerationRequest(
        model="m", prompt="-- Schema:\nx\n-- Subtask [node 0] kind=select: write it"
    )
    response = EchoEndpoint().complete(request)
    assert response.text.startswith("-- Subtask [node 0]")


def test_make_endpoint_modes():
    assert isinstance(make_endpoint("mock:echo"), EchoEndpoint)
    assert isinstance(make_endpoint("mock:oracle", gold_by_question={}), OracleEndpoint)
    assert isinstance(
        make_endpoint("mock:canned", responses=["SELECT 1"]), CannedEndpoint
    )
    with pytest.raises(Exception):
        make_endpoint("bogus")


# -- pipeline -----------------------------------------------------------------------


def test_pipeline_oracle_reproduces_gold(schemas, analyze, toybench):
    for record in toybench:
        endpoint = OracleEndpoint({record["question"]: record["query"]})
        result = run_pipeline(record["question"], schemas[record["db_id"]], endpoint)
        assert result.sql == normalize_sql(record["query"]), record["id"]


def test_pipeline_trace_is_deterministic(schemas, toybench):
    record = toybench[4]  # the nested NOT IN question
    def once():
        endpoint = OracleEndpoint({record["question"]: record["query"]})
        return run_pipeline(record["question"], schemas[record["db_id"]], endpoint)

    a, b = once(), once()
    assert a.trace.to_json() == b.trace.to_json()
    assert a.sql == b.sql


def test_pipeline_error_carries_stage_and_partial_trace(schemas):
    # canned endpoint emits one valid fragment then prose twice -> second
    # subtask fails; the trace keeps the completed component
    question = "count singers"
    endpoint = CannedEndpoint(["singer", "prose", "prose"])
    with pytest.raises(PipelineStageError) as err:
        run_pipeline(question, schemas["concert_singer"], endpoint)
    assert err.value.stage.startswith("generate_component")
    trace = err.value.trace
    assert trace is not None
    assert len(trace.subtasks) >= 1
    assert trace.error is not None


def test_pipeline_trace_records_each_subtask(schemas, toybench):
    record = toybench[0]
    endpoint = OracleEndpoint({record["question"]: record["query"]})
    result = run_pipeline(record["question"], schemas[record["db_id"]], endpoint)
    assert len(result.trace.subtasks) == len(result.trace.plan)
    for entry in result.trace.subtasks:
        assert entry["attempts"][0]["prompt"]
        assert entry["text"]


def test_pipeline_bottom_up_contract(schemas, toybench):
    record = toybench[9]  # negation question with a subquery subtask
    endpoint = OracleEndpoint({record["question"]: record["query"]})
    result = run_pipeline(record["question"], schemas[record["db_id"]], endpoint)
    kinds = [entry["kind"] for entry in result.trace.subtasks]
    assert "subquery" in kinds
    assert kinds.index("subquery") < kinds.index("where")
    assert kinds[-1] == "select"
