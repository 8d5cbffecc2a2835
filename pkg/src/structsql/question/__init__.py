"""Natural-language question understanding: tokens, parsing, coreference, graph."""

from .tokens import Token, tokenize, detokenize, lemma_of, is_content_word, STOPWORDS
from .grammar import QueryGrammar, Production, parse_grammar, default_grammar, classes_for
from .parser import SyntaxTree, TreeNode, ParseInterpretation, parse, select_interpretation
from .coref import CorefMap, resolve_coreference
from .graph import QueryGraph, QueryEdge, QueryRelation, build_query_graph

__all__ = [
    "Token",
    "tokenize",
    "detokenize",
    "lemma_of",
    "is_content_word",
    "STOPWORDS",
    "QueryGrammar",
    "Production",
    "parse_grammar",
    "default_grammar",
    "classes_for",
    "SyntaxTree",
    "TreeNode",
    "ParseInterpretation",
    "parse",
    "select_interpretation",
    "CorefMap",
    "resolve_coreference",
    "QueryGraph",
    "QueryEdge",
    "QueryRelation",
    "build_query_graph",
]
