"""Exception hierarchy shared across the package.

Exit-code mapping used by the CLI: ValidationError and subclasses map to
exit 2, IO problems to exit 1, pipeline/endpoint failures to exit 3.
"""

from __future__ import annotations


class StructSqlError(Exception):
    """Base class for all package errors."""


class ValidationError(StructSqlError):
    """Bad user input: malformed files, empty questions, out-of-range config."""


class CatalogParseError(ValidationError):
    """Catalog document could not be decoded."""

    def __init__(self, message: str, byte_offset: int | None = None):
        super().__init__(message)
        self.byte_offset = byte_offset


class CatalogIntegrityError(ValidationError):
    """Catalog violates an invariant (dangling index, duplicate name, ...)."""

    def __init__(self, message: str, db_id: str | None = None, index: int | None = None):
        super().__init__(message)
        self.db_id = db_id
        self.index = index


class EmptySchemaError(ValidationError):
    """A live database contains no user tables."""


class GrammarError(ValidationError):
    """Grammar file is malformed or violates grammar invariants."""


class SqlSyntaxError(ValidationError):
    """SQL text rejected by the SQL subset parser.

    ``position`` is the 1-based token index of the offending token.
    """

    def __init__(self, message: str, position: int, token: str | None = None):
        super().__init__(f"{message} (at token {position}{': ' + token if token else ''})")
        self.position = position
        self.token = token


class ConfigError(ValidationError):
    """Run configuration is missing, malformed, or out of range."""


class ModelFormatError(StructSqlError):
    """Linker model file has a bad magic/version or truncated payload."""


class TrainingError(StructSqlError):
    """Linker training cannot proceed (e.g. no usable examples)."""


class AssemblyError(StructSqlError):
    """SQL assembly failed; ``node_id`` names the missing/offending subtask."""

    def __init__(self, message: str, node_id: int | None = None):
        super().__init__(message)
        self.node_id = node_id


class OrderingError(StructSqlError):
    """Bottom-up generation contract violated (child component missing)."""


class ComponentError(StructSqlError):
    """Endpoint produced no valid SQL fragment after retrying.

    Carries one diagnostic per failed attempt.
    """

    def __init__(self, message: str, diagnostics: list[str] | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or []


class EndpointError(StructSqlError):
    """Transport-level endpoint failure after retries."""


class PipelineStageError(StructSqlError):
    """A pipeline stage failed; carries the stage name and the trace so far."""

    def __init__(self, stage: str, cause: Exception, trace=None):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
        self.trace = trace


class EvaluationError(StructSqlError):
    """Evaluation cannot proceed (bad gold SQL, missing predictions, ...)."""
