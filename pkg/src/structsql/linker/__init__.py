"""Structure linking: string-match candidates, enclosing subgraphs, the
relational graph-attention scorer, contrastive training, and link assembly."""

from .candidates import (
    string_match_score,
    trigram_jaccard,
    normalized_levenshtein,
    generate_candidates,
    apply_predefined_relations,
    PredefinedRelation,
    PredefinedTriple,
)
from .subgraph import EnclosingSubgraph, build_enclosing_subgraph
from .model import LinkerModel, init_model, save_model, load_model, RELATIONS
from .network import (
    GraphTensors,
    ScorePath,
    rgat_encode,
    cross_aggregate,
    cross_aggregate_query_side,
    matching_score,
    contrastive_loss,
    contrastive_loss_grad,
)
from .training import TrainConfig, TrainResult, train_linker, linking_accuracy, LinkExample
from .linking import Assignment, LinkingResult, link

__all__ = [
    "string_match_score",
    "trigram_jaccard",
    "normalized_levenshtein",
    "generate_candidates",
    "apply_predefined_relations",
    "PredefinedRelation",
    "PredefinedTriple",
    "EnclosingSubgraph",
    "build_enclosing_subgraph",
    "LinkerModel",
    "init_model",
    "save_model",
    "load_model",
    "RELATIONS",
    "GraphTensors",
    "ScorePath",
    "rgat_encode",
    "cross_aggregate",
    "cross_aggregate_query_side",
    "matching_score",
    "contrastive_loss",
    "contrastive_loss_grad",
    "TrainConfig",
    "TrainResult",
    "train_linker",
    "linking_accuracy",
    "LinkExample",
    "Assignment",
    "LinkingResult",
    "link",
]
