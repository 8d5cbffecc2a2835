"""Enclosing subgraph: the full query graph, a candidate schema node with
its one-hop neighborhood, and a single bridge edge joining anchor to
candidate. Node ids are remapped contiguously (query tokens keep their
positions, schema nodes follow) with a translation table back to the
originals."""

from __future__ import annotations

from dataclasses import dataclass

from ..question.graph import QueryGraph
from ..schema_graph import SchemaEdge, SchemaGraph


@dataclass(frozen=True)
class EnclosingSubgraph:
    query_graph: QueryGraph
    schema_graph: SchemaGraph
    anchor: int  # local id (== token position)
    candidate: int  # local id of the candidate schema node
    schema_local_ids: tuple[int, ...]  # local ids of the schema part
    to_original: dict[int, tuple[str, int]]  # local id -> ("query"|"schema", original)
    schema_edges: tuple[SchemaEdge, ...]  # induced, endpoints as local ids

    @property
    def n_nodes(self) -> int:
        return len(self.query_graph.nodes) + len(self.schema_local_ids)

    @property
    def bridge(self) -> tuple[int, int]:
        """The single bridge edge (anchor, candidate)."""
        return (self.anchor, self.candidate)


def build_enclosing_subgraph(
    anchor: int, schema_node: int, qg: QueryGraph, sg: SchemaGraph
) -> EnclosingSubgraph:
    if not 0 <= anchor < len(qg.nodes):
        raise ValueError(f"anchor {anchor} outside query graph")
    if not 0 <= schema_node < len(sg.nodes):
        raise ValueError(f"schema node {schema_node} outside schema graph")
    m = len(qg.nodes)
    part = [schema_node] + sg.neighbors(schema_node)
    local_of = {orig: m + i for i, orig in enumerate(part)}
    to_original = {i: ("query", i) for i in range(m)}
    to_original.update({m + i: ("schema", orig) for i, orig in enumerate(part)})
    induced = tuple(
        SchemaEdge(local_of[e.source], local_of[e.target], e.relation)
        for e in sg.edges
        if e.source in local_of and e.target in local_of
    )
    return EnclosingSubgraph(
        query_graph=qg,
        schema_graph=sg,
        anchor=anchor,
        candidate=m,
        schema_local_ids=tuple(range(m, m + len(part))),
        to_original=to_original,
        schema_edges=induced,
    )
