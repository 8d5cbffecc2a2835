"""Contrastive training of the linking scorer.

Full-batch descent over per-anchor contrastive losses; negatives are the
non-gold string-match candidates. Steps use Adagrad scaling (momentum-free,
per-parameter): plain gradient steps at this loss's scale converge onto the
uniform-score saddle and stall, while the adaptive denominator amplifies the
small consistent interaction gradients that separate candidates. Subgraph
tensors are precompiled once, so epochs are purely numeric. Training is
deterministic for a fixed seed and returns the parameters of the best-loss
epoch.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..errors import TrainingError
from ..question.graph import QueryGraph
from ..schema_graph import SchemaGraph
from .candidates import generate_candidates
from .model import LinkerModel, init_model
from .network import (
    GraphTensors,
    contrastive_loss_grad,
    score_backward,
    score_forward,
)
from .subgraph import build_enclosing_subgraph

logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    epochs: int = 200
    lr: float = 0.05
    k: int = 8
    dim: int = 32
    layers: int = 2
    buckets: int = 4096
    seed: int = 42


@dataclass(frozen=True)
class LinkExample:
    query_graph: QueryGraph
    anchor: int  # query node id
    gold: int  # schema node id


@dataclass
class TrainResult:
    model: LinkerModel
    epoch_losses: list[float] = field(default_factory=list)
    skipped: int = 0
    trained: int = 0


@dataclass
class _Compiled:
    tensors: list[GraphTensors]
    gold_index: int


def _compile_examples(
    examples: list[LinkExample], sg: SchemaGraph, cfg: TrainConfig, buckets: int
) -> tuple[list[_Compiled], int]:
    compiled: list[_Compiled] = []
    skipped = 0
    for ex in examples:
        anchor_token = ex.query_graph.nodes[ex.anchor]
        candidates = generate_candidates(anchor_token, sg, cfg.k)
        if ex.gold not in candidates or len(candidates) < 2:
            skipped += 1
            continue
        tensors = [
            GraphTensors.from_subgraph(
                build_enclosing_subgraph(ex.anchor, c, ex.query_graph, sg), buckets
            )
            for c in candidates
        ]
        compiled.append(_Compiled(tensors=tensors, gold_index=candidates.index(ex.gold)))
    return compiled, skipped


def train_linker(
    examples: list[LinkExample], sg: SchemaGraph, cfg: TrainConfig | None = None
) -> TrainResult:
    cfg = cfg or TrainConfig()
    model = init_model(
        embedding_dim=cfg.dim,
        buckets=cfg.buckets,
        n_layers=cfg.layers,
        rng_seed=cfg.seed,
    )
    compiled, skipped = _compile_examples(examples, sg, cfg, model.buckets)
    if not compiled:
        raise TrainingError(
            f"no trainable examples ({skipped} skipped: gold absent from candidates)"
        )
    if skipped:
        logger.info("skipped %d examples with gold outside candidate set", skipped)

    result = TrainResult(model=model, skipped=skipped, trained=len(compiled))
    if cfg.epochs == 0:
        return result

    best_loss = float("inf")
    best_model = model.copy()
    adagrad_state = {name: np.zeros_like(arr) for name, arr in model.param_items()}
    clamp = lambda s: min(max(s, 1e-9), 1.0 - 1e-9)
    for epoch in range(cfg.epochs):
        grads = model.zero_grads()
        total = 0.0
        for item in compiled:
            paths = [score_forward(model, t) for t in item.tensors]
            scores = [clamp(p.score) for p in paths]
            pos = scores[item.gold_index]
            negs = [s for i, s in enumerate(scores) if i != item.gold_index]
            loss, dpos, dnegs = contrastive_loss_grad(pos, negs)
            total += loss
            score_backward(model, paths[item.gold_index], dpos, grads)
            neg_iter = iter(dnegs)
            for i, path in enumerate(paths):
                if i != item.gold_index:
                    score_backward(model, path, next(neg_iter), grads)
        result.epoch_losses.append(total)
        if total < best_loss:
            best_loss = total
            best_model = model.copy()
        logger.info("epoch %d loss %.6f", epoch, total)
        for name, arr in model.param_items():
            g = grads[name]
            adagrad_state[name] += g * g
            arr -= cfg.lr * g / np.sqrt(adagrad_state[name] + 1e-10)

    result.model = best_model
    return result


def linking_accuracy(
    model: LinkerModel, examples: list[LinkExample], sg: SchemaGraph, k: int = 8
) -> float:
    """Top-1 accuracy over examples whose gold is among the candidates."""
    cfg = TrainConfig(k=k)
    compiled, _skipped = _compile_examples(examples, sg, cfg, model.buckets)
    if not compiled:
        return 0.0
    hits = 0
    for item in compiled:
        scores = [score_forward(model, t).score for t in item.tensors]
        if max(range(len(scores)), key=lambda i: (scores[i], -i)) == item.gold_index:
            hits += 1
    return hits / len(compiled)
