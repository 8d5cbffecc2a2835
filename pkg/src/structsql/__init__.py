"""structsql: a structure-guided text-to-SQL engine.

Builds graph representations of questions and database schemas, links them
with a trainable relational graph-attention scorer, decomposes questions
along their syntax trees into SQL subtasks, drives a language-model endpoint
(or offline mock) to generate and assemble SQL, and scores predictions with
exact-match, execution, and efficiency metrics.
"""

from .schema_graph import (
    SchemaCatalog,
    SchemaGraph,
    build_schema_graph,
    introspect_sqlite,
    load_spider_catalog,
    load_spider_catalogs,
)
from .question import (
    tokenize,
    parse,
    select_interpretation,
    resolve_coreference,
    build_query_graph,
)
from .linker import (
    LinkerModel,
    TrainConfig,
    generate_candidates,
    link,
    matching_score,
    contrastive_loss,
    train_linker,
)
from .decomposer import map_nodes, decompose, assemble, validate_sql
from .generation import run_pipeline, make_endpoint
from .evaluation import evaluate, exact_match, execution_match, execute_sql, ves

__version__ = "0.1.0"

__all__ = [
    "SchemaCatalog",
    "SchemaGraph",
    "build_schema_graph",
    "introspect_sqlite",
    "load_spider_catalog",
    "load_spider_catalogs",
    "tokenize",
    "parse",
    "select_interpretation",
    "resolve_coreference",
    "build_query_graph",
    "LinkerModel",
    "TrainConfig",
    "generate_candidates",
    "link",
    "matching_score",
    "contrastive_loss",
    "train_linker",
    "map_nodes",
    "decompose",
    "assemble",
    "validate_sql",
    "run_pipeline",
    "make_endpoint",
    "evaluate",
    "exact_match",
    "execution_match",
    "execute_sql",
    "ves",
    "__version__",
]
