"""Per-subtask prompt composition, endpoint clients, and the full pipeline.

Each subtask gets a deterministic prompt: a CREATE TABLE-style schema slice
restricted to linked tables (expanded one foreign-key hop), the linked
elements with their relation tags, the subtask instruction, prior components,
and the placeholder protocol. Generation is one endpoint call per subtask,
bottom-up, temperature 0, with a single retry carrying the parse diagnostic.

Offline endpoint modes make the pipeline testable without a live model:
``echo`` returns the instruction line, ``oracle`` returns components derived
from a fixture gold SQL, ``canned`` replays scripted responses.
"""

from __future__ import annotations

import json
import logging
import os
import re
import time
from dataclasses import dataclass, field

from .decomposer import (
    MetaOpKind,
    SqlComponent,
    SubtaskPlan,
    _clause_fragment,
    assemble,
    decompose,
    map_nodes,
    split_gold_components,
)
from .errors import (
    ComponentError,
    EndpointError,
    OrderingError,
    PipelineStageError,
    SqlSyntaxError,
    ValidationError,
)
from .linker import LinkerModel, LinkingResult, link
from .question import (
    build_query_graph,
    parse,
    resolve_coreference,
    select_interpretation,
    tokenize,
)
from .schema_graph import NodeKind, SchemaGraph
from .sqlkit import parse_sql

logger = logging.getLogger(__name__)

API_KEY_ENV = "SGU_SQL_API_KEY"


@dataclass(frozen=True)
class PromptContext:
    question: str
    node_id: int
    kind: MetaOpKind
    parent_summary: str
    sibling_summaries: tuple[str, ...]
    linked_elements: tuple[str, ...]
    schema_slice: str
    prior: tuple[SqlComponent, ...]  # generation order


@dataclass
class GenerationRequest:
    model: str
    prompt: str
    temperature: float = 0.0
    max_tokens: int = 256
    stop: tuple[str, ...] = ()
    context: PromptContext | None = None  # consumed by offline mocks only


@dataclass
class GenerationResponse:
    text: str
    prompt_tokens: int = 0
    completion_tokens: int = 0
    latency_ms: float = 0.0


class HttpEndpoint:
    """Chat-completion client; base URL from config, bearer token from the
    environment."""

    def __init__(self, base_url: str, model: str = "default", timeout_s: float = 60.0):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.timeout_s = timeout_s

    def complete(self, request: GenerationRequest) -> GenerationResponse:
        import requests

        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get(API_KEY_ENV)
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        body = {
            "model": request.model or self.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        if request.stop:
            body["stop"] = list(request.stop)
        started = time.perf_counter()
        try:
            resp = requests.post(
                f"{self.base_url}/chat/completions",
                headers=headers,
                json=body,
                timeout=self.timeout_s,
            )
            resp.raise_for_status()
            payload = resp.json()
        except Exception as exc:  # transport errors surface as EndpointError
            raise EndpointError(f"endpoint request failed: {exc}")
        latency = (time.perf_counter() - started) * 1000.0
        try:
            text = payload["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise EndpointError(f"malformed endpoint response: {payload!r}")
        usage = payload.get("usage", {})
        return GenerationResponse(
            text=text,
            prompt_tokens=int(usage.get("prompt_tokens", 0)),
            completion_tokens=int(usage.get("completion_tokens", 0)),
            latency_ms=latency,
        )


class EchoEndpoint:
    """Returns the prompt's subtask instruction line; plumbing tests only."""

    def complete(self, request: GenerationRequest) -> GenerationResponse:
        for line in request.prompt.splitlines():
            if line.startswith("-- Subtask"):
                return GenerationResponse(text=line)
        return GenerationResponse(text=request.prompt.splitlines()[0] if request.prompt else "")


class OracleEndpoint:
    """Returns gold components keyed by question, split per subtask kind.

    Subquery subtasks receive the gold's extracted subqueries bottom-up; the
    root receives the gold with placeholders referencing the subquery node
    ids already generated; clause subtasks receive matching fragments.
    """

    def __init__(self, gold_by_question: dict[str, str]):
        self.gold_by_question = dict(gold_by_question)

    def complete(self, request: GenerationRequest) -> GenerationResponse:
        ctx = request.context
        if ctx is None:
            raise EndpointError("oracle endpoint needs the prompt context")
        gold = self.gold_by_question.get(ctx.question)
        if gold is None:
            raise EndpointError(f"no oracle entry for question {ctx.question!r}")
        prior_subquery_ids = [
            c.node_id for c in ctx.prior if c.kind is MetaOpKind.SUBQUERY
        ]
        _plan, parts = split_gold_components(gold, root_id=-1)
        gold_subqueries = [c for c in parts if c.kind is MetaOpKind.SUBQUERY]
        if ctx.kind is MetaOpKind.SUBQUERY:
            index = len(prior_subquery_ids)
            if index < len(gold_subqueries):
                return GenerationResponse(text=gold_subqueries[index].text)
            return GenerationResponse(text=_clause_fragment(parse_sql(gold), MetaOpKind.SELECT))
        if ctx.kind is MetaOpKind.SELECT:
            if prior_subquery_ids and len(prior_subquery_ids) == len(gold_subqueries):
                _sp, comps = split_gold_components(gold, node_ids=prior_subquery_ids, root_id=ctx.node_id)
                root = next(c for c in comps if c.node_id == ctx.node_id)
                return GenerationResponse(text=root.text)
            return GenerationResponse(text=_clause_fragment(parse_sql(gold), MetaOpKind.SET_OP))
        return GenerationResponse(text=_clause_fragment(parse_sql(gold), ctx.kind))


class CannedEndpoint:
    """Replays scripted responses in order (repeats the last when exhausted)."""

    def __init__(self, responses: list[str]):
        if not responses:
            raise ValidationError("canned endpoint needs at least one response")
        self.responses = list(responses)
        self.cursor = 0

    def complete(self, request: GenerationRequest) -> GenerationResponse:
        text = self.responses[min(self.cursor, len(self.responses) - 1)]
        self.cursor += 1
        return GenerationResponse(text=text)


def make_endpoint(mode: str, base_url: str = "", model: str = "default", **kwargs):
    """Endpoint factory for the mode strings used in config files."""
    if mode == "http":
        if not base_url:
            raise ValidationError("http endpoint requires endpoint.base_url")
        return HttpEndpoint(base_url=base_url, model=model)
    if mode == "mock:echo":
        return EchoEndpoint()
    if mode == "mock:oracle":
        return OracleEndpoint(kwargs.get("gold_by_question", {}))
    if mode.startswith("mock:canned"):
        return CannedEndpoint(kwargs.get("responses", []))
    raise ValidationError(f"unknown endpoint mode {mode!r}")


# --------------------------------------------------------------------------
# Context composition and prompt rendering
# --------------------------------------------------------------------------


def _schema_slice_tables(
    node_ids: tuple[int, ...], sg: SchemaGraph, fallback_nodes: tuple[int, ...]
) -> list[int]:
    """Table indices for the slice: tables of the linked nodes expanded one
    foreign-key hop; the whole schema when nothing is linked."""
    seeds = node_ids or fallback_nodes
    tables: set[int] = set()
    for nid in seeds:
        node = sg.nodes[nid]
        tables.add(node.node_id if node.kind is NodeKind.TABLE else node.table_index)
    if not tables:
        return [n.node_id for n in sg.table_nodes]
    for edge in sg.edges:
        if edge.relation.value != "foreign_key":
            continue
        src_t = sg.nodes[edge.source].table_index
        dst_t = sg.nodes[edge.target].table_index
        if src_t in tables or dst_t in tables:
            tables.add(src_t)
            tables.add(dst_t)
    return sorted(tables)


def render_schema_slice(sg: SchemaGraph, table_ids: list[int]) -> str:
    """CREATE TABLE-style stanzas with key comments."""
    pk_cols = {
        e.source for e in sg.edges if e.relation.value == "primary_key"
    }
    fk_pairs = [
        (e.source, e.target) for e in sg.edges if e.relation.value == "foreign_key"
    ]
    blocks = []
    for tid in table_ids:
        table = sg.nodes[tid]
        lines = [f"CREATE TABLE {table.label} ("]
        cols = [n for n in sg.column_nodes if n.table_index == tid]
        decls = []
        for col in cols:
            dtype = col.data_type.value if col.data_type else "text"
            suffix = " PRIMARY KEY" if col.node_id in pk_cols else ""
            decls.append(f"  {col.label} {dtype}{suffix}")
        for src, dst in fk_pairs:
            if sg.nodes[src].table_index == tid:
                ref = sg.nodes[dst]
                ref_table = sg.nodes[ref.table_index].label
                decls.append(
                    f"  FOREIGN KEY ({sg.nodes[src].label}) REFERENCES {ref_table} ({ref.label})"
                )
        lines.append(",\n".join(decls))
        lines.append(");")
        blocks.append("\n".join(lines))
    return "\n".join(blocks)


def compose_context(
    node_id: int,
    plan: SubtaskPlan,
    linking: LinkingResult | None,
    prior: dict[int, SqlComponent],
    qg,
    sg: SchemaGraph,
    question: str,
) -> PromptContext:
    """Deterministic subtask context; children must already be generated."""
    tree = plan.tree
    op = plan.annotations[node_id]
    if tree is not None:
        for child in _annotated_descendants(tree, node_id, plan):
            if child not in prior:
                raise OrderingError(
                    f"component for child node {child} missing when composing node {node_id}"
                )

    parent_summary = ""
    sibling_summaries: list[str] = []
    if tree is not None and node_id != plan.root_id:
        parent = _annotated_ancestor(tree, node_id, plan)
        if parent is not None:
            kind = plan.annotations[parent].kind.value
            text = prior[parent].text if parent in prior else "(pending)"
            parent_summary = f"{kind}: {text}"
            for sibling in _annotated_children(tree, parent, plan):
                if sibling == node_id:
                    continue
                s_kind = plan.annotations[sibling].kind.value
                s_text = prior[sibling].text if sibling in prior else "(pending)"
                sibling_summaries.append(f"node {sibling} {s_kind}: {s_text}")

    assignments = list(linking.assignments) if linking is not None else []
    tagged: dict[int, str] = {}
    for a in assignments:
        tagged.setdefault(a.schema_node, f"{_qualified(sg, a.schema_node)} (linked)")
    if linking is not None:
        for triple in linking.predefined_relations:
            key = triple.schema_node
            label = f"{_qualified(sg, key)} ({triple.relation.value})"
            tagged.setdefault(key, label)
    linked_for_node = tuple(
        tagged[nid] for nid in op.schema_nodes if nid in tagged
    ) or tuple(sorted(tagged.values()))

    slice_tables = _schema_slice_tables(
        op.schema_nodes or tuple(a.schema_node for a in assignments), sg, ()
    )
    if not slice_tables:
        slice_tables = [n.node_id for n in sg.table_nodes]
    schema_slice = render_schema_slice(sg, slice_tables)

    prior_components = tuple(prior[nid] for nid in plan.order if nid in prior)
    return PromptContext(
        question=question,
        node_id=node_id,
        kind=op.kind,
        parent_summary=parent_summary,
        sibling_summaries=tuple(sibling_summaries),
        linked_elements=linked_for_node,
        schema_slice=schema_slice,
        prior=prior_components,
    )


def _qualified(sg: SchemaGraph, node_id: int) -> str:
    node = sg.nodes[node_id]
    if node.kind is NodeKind.TABLE:
        return node.label
    return f"{sg.nodes[node.table_index].label}.{node.label}"


def _annotated_ancestor(tree, node_id: int, plan: SubtaskPlan) -> int | None:
    current = tree.parent_of(node_id)
    while current is not None:
        if current in plan.annotations:
            return current
        current = tree.parent_of(current)
    return None


def _annotated_children(tree, node_id: int, plan: SubtaskPlan) -> list[int]:
    found: list[int] = []

    def walk(nid: int):
        for child in tree.node(nid).children:
            if child in plan.annotations:
                found.append(child)
            else:
                walk(child)

    walk(node_id)
    return found


def _annotated_descendants(tree, node_id: int, plan: SubtaskPlan) -> list[int]:
    found: list[int] = []

    def walk(nid: int):
        for child in tree.node(nid).children:
            if child in plan.annotations:
                found.append(child)
            walk(child)

    walk(node_id)
    return found


PLACEHOLDER_INSTRUCTION = (
    "-- Reference child subtasks as {sub:<node-id>} where a nested query belongs."
)


def render_prompt(ctx: PromptContext) -> str:
    """Byte-identical for identical contexts."""
    lines = ["-- Schema:", ctx.schema_slice, ""]
    if ctx.linked_elements:
        lines.append("-- Linked schema elements:")
        for element in ctx.linked_elements:
            lines.append(f"--   {element}")
        lines.append("")
    lines.append(f"-- Question: {ctx.question}")
    lines.append("")
    lines.append(
        f"-- Subtask [node {ctx.node_id}] kind={ctx.kind.value}: "
        f"write the SQL {_KIND_BLURB[ctx.kind]}"
    )
    if ctx.parent_summary:
        lines.append(f"-- Parent subtask: {ctx.parent_summary}")
    for sibling in ctx.sibling_summaries:
        lines.append(f"-- Sibling subtask: {sibling}")
    if ctx.prior:
        lines.append("-- Prior components:")
        for comp in ctx.prior:
            lines.append(f"--   node {comp.node_id} ({comp.kind.value}): {comp.text}")
    lines.append(PLACEHOLDER_INSTRUCTION)
    lines.append("Respond with only the SQL fragment.")
    return "\n".join(lines)


_KIND_BLURB = {
    MetaOpKind.SELECT: "statement answering the question.",
    MetaOpKind.FROM_JOIN: "FROM clause body (tables and joins).",
    MetaOpKind.WHERE: "WHERE clause condition.",
    MetaOpKind.GROUP_BY: "GROUP BY expression list.",
    MetaOpKind.HAVING: "HAVING condition.",
    MetaOpKind.ORDER_BY: "ORDER BY items (with LIMIT if needed).",
    MetaOpKind.LIMIT: "LIMIT value.",
    MetaOpKind.AGGREGATE: "aggregate expression.",
    MetaOpKind.SUBQUERY: "nested subquery statement.",
    MetaOpKind.SET_OP: "compound statement.",
}

_FENCE_RE = re.compile(r"```(?:sql)?\s*(.*?)```", re.DOTALL | re.IGNORECASE)


def sanitize_response(text: str) -> str:
    """Strip markdown fences and surrounding prose."""
    match = _FENCE_RE.search(text)
    if match:
        text = match.group(1)
    return text.strip().rstrip(";").strip()


def generate_component(
    endpoint,
    ctx: PromptContext,
    model: str = "default",
    max_tokens: int = 256,
    transport_retries: int = 3,
    backoff_s: float = 0.2,
) -> tuple[SqlComponent, list[dict]]:
    """One component via the endpoint, with a single validation retry.

    Returns the component plus per-attempt trace entries (prompt, raw
    response, diagnostic).
    """
    prompt = render_prompt(ctx)
    attempts: list[dict] = []
    diagnostics: list[str] = []
    for attempt in range(2):
        response = _call_with_retries(
            endpoint,
            GenerationRequest(
                model=model, prompt=prompt, max_tokens=max_tokens, context=ctx
            ),
            transport_retries,
            backoff_s,
        )
        text = sanitize_response(response.text)
        entry = {
            "attempt": attempt + 1,
            "prompt": prompt,
            "response": response.text,
            "sanitized": text,
            "latency_ms": response.latency_ms,
        }
        try:
            component = SqlComponent(node_id=ctx.node_id, text=text, kind=ctx.kind)
            entry["accepted"] = True
            attempts.append(entry)
            return component, attempts
        except SqlSyntaxError as exc:
            diagnostics.append(str(exc))
            entry["accepted"] = False
            entry["diagnostic"] = str(exc)
            attempts.append(entry)
            prompt = (
                f"{prompt}\n-- Previous attempt was rejected: {exc}\n"
                "Respond with only the corrected SQL fragment."
            )
    raise ComponentError(
        f"no valid {ctx.kind.value} fragment for node {ctx.node_id}",
        diagnostics=diagnostics,
    )


def _call_with_retries(endpoint, request, retries: int, backoff_s: float):
    last: Exception | None = None
    for i in range(max(1, retries)):
        try:
            return endpoint.complete(request)
        except EndpointError as exc:
            last = exc
            if i + 1 < retries:
                time.sleep(backoff_s * (2 ** i))
    raise EndpointError(f"endpoint unreachable after {retries} attempts: {last}")


# --------------------------------------------------------------------------
# Pipeline
# --------------------------------------------------------------------------


@dataclass
class PipelineTrace:
    question: str
    tokens: list[str] = field(default_factory=list)
    n_interpretations: int = 0
    fallback_parse: bool = False
    tree_symbols: list[str] = field(default_factory=list)
    coref_entities: int = 0
    query_edges: int = 0
    assignments: list[dict] = field(default_factory=list)
    predefined: list[dict] = field(default_factory=list)
    plan: list[dict] = field(default_factory=list)
    subtasks: list[dict] = field(default_factory=list)
    sql: str = ""
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "question": self.question,
            "tokens": self.tokens,
            "n_interpretations": self.n_interpretations,
            "fallback_parse": self.fallback_parse,
            "tree_symbols": self.tree_symbols,
            "coref_entities": self.coref_entities,
            "query_edges": self.query_edges,
            "assignments": self.assignments,
            "predefined": self.predefined,
            "plan": self.plan,
            "subtasks": self.subtasks,
            "sql": self.sql,
            "error": self.error,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


@dataclass
class PipelineResult:
    sql: str
    trace: PipelineTrace


def run_pipeline(
    question: str,
    sg: SchemaGraph,
    endpoint,
    linker_model: LinkerModel | None = None,
    grammar=None,
    rules=None,
    db_path=None,
    k: int = 8,
    endpoint_model: str = "default",
    max_tokens: int = 256,
) -> PipelineResult:
    """tokenize -> parse -> select -> coref -> graph -> link -> map ->
    decompose -> generate per subtask -> assemble, tracing every stage."""
    trace = PipelineTrace(question=question)

    def stage(name: str, fn):
        try:
            return fn()
        except Exception as exc:
            trace.error = f"{name}: {exc}"
            raise PipelineStageError(name, exc, trace)

    tokens = stage("tokenize", lambda: tokenize(question))
    trace.tokens = [t.surface for t in tokens]

    interpretations = stage("parse", lambda: parse(tokens, grammar))
    trace.n_interpretations = len(interpretations)
    best = stage("select_interpretation", lambda: select_interpretation(interpretations))
    trace.fallback_parse = best.tree.fallback
    trace.tree_symbols = list(best.tree.preorder_symbols)

    coref = stage("coreference", lambda: resolve_coreference(tokens, best.tree))
    trace.coref_entities = len(coref.entities)

    qg = stage("query_graph", lambda: build_query_graph(tokens, best.tree, coref))
    trace.query_edges = len(qg.edges)

    linking = stage("link", lambda: link(qg, sg, model=linker_model, k=k, db_path=db_path))
    trace.assignments = [
        {"query_node": a.query_node, "schema_node": a.schema_node, "score": round(a.score, 6)}
        for a in linking.assignments
    ]
    trace.predefined = [
        {"query_node": t.query_node, "schema_node": t.schema_node, "relation": t.relation.value}
        for t in linking.predefined_relations
    ]

    annotations = stage("map_nodes", lambda: map_nodes(best.tree, tokens, linking, rules))
    plan = stage("decompose", lambda: decompose(best.tree, annotations))
    trace.plan = [
        {"node": nid, "kind": plan.kind_of(nid).value} for nid in plan.order
    ]

    prior: dict[int, SqlComponent] = {}
    components: list[SqlComponent] = []
    for node_id in plan.order:
        ctx = stage(
            f"compose_context[{node_id}]",
            lambda nid=node_id: compose_context(nid, plan, linking, prior, qg, sg, question),
        )
        component, attempts = stage(
            f"generate_component[{node_id}]",
            lambda c=ctx: generate_component(
                endpoint, c, model=endpoint_model, max_tokens=max_tokens
            ),
        )
        trace.subtasks.append(
            {"node": node_id, "kind": ctx.kind.value, "attempts": attempts, "text": component.text}
        )
        prior[node_id] = component
        components.append(component)

    sql = stage("assemble", lambda: assemble(components, plan))
    trace.sql = sql
    return PipelineResult(sql=sql, trace=trace)
