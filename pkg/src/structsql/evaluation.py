"""SQL execution and scoring: exact set match, execution accuracy, valid
efficiency score, difficulty buckets, and error categories.

Predicted SQL is untrusted text: every execution uses a fresh read-only
connection and an interrupt timer. Result rows compare as multisets unless
either side carries a top-level ORDER BY (then order-sensitively), with
integer-valued reals coerced to integers.

Error categories follow a first-match rule chain over flattened clause
views: schema_link (table sets or outer select columns differ), join
(join-condition sets differ), group_by (group-by/having sets differ), nested
(subquery count/location or set-operation shape differs), condition_value
(all remaining differences confined to literal-valued WHERE predicates),
else other. Unparseable predictions classify as other.
"""

from __future__ import annotations

import json
import logging
import sqlite3
import statistics
import threading
import time
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .errors import EvaluationError, SqlSyntaxError
from .sqlkit import clause_sets, flatten_view, parse_sql

logger = logging.getLogger(__name__)

VES_RATIO_FLOOR = 1.0 / 100.0
VES_RATIO_CEIL = 100.0
DEFAULT_TIMEOUT_S = 30.0


class ExecStatus(Enum):
    OK = "ok"
    SQL_ERROR = "sql_error"
    TIMEOUT = "timeout"


class Difficulty(Enum):
    EASY = "easy"
    MEDIUM = "medium"
    HARD = "hard"
    EXTRA = "extra"
    UNKNOWN = "unknown"


class ErrorCategory(Enum):
    SCHEMA_LINK = "schema_link"
    JOIN = "join"
    GROUP_BY = "group_by"
    NESTED = "nested"
    CONDITION_VALUE = "condition_value"
    OTHER = "other"


@dataclass
class ExecutionOutcome:
    status: ExecStatus
    rows: list[tuple] | None = None
    wall_time_s: float = 0.0
    ordered: bool = False
    message: str = ""


def _normalize_value(value):
    if isinstance(value, float) and value.is_integer():
        return int(value)
    return value


def _normalize_rows(rows) -> list[tuple]:
    return [tuple(_normalize_value(v) for v in row) for row in rows]


def _db_uri(db_path: str | Path) -> str:
    return f"file:{Path(db_path)}?mode=ro"


def execute_sql(
    db_path: str | Path, sql: str, timeout_s: float = DEFAULT_TIMEOUT_S
) -> ExecutionOutcome:
    """Run one statement read-only with an interrupt at the timeout."""
    if not Path(db_path).is_file():
        return ExecutionOutcome(
            status=ExecStatus.SQL_ERROR, message=f"database file missing: {db_path}"
        )
    try:
        conn = sqlite3.connect(_db_uri(db_path), uri=True, check_same_thread=False)
    except sqlite3.Error as exc:
        return ExecutionOutcome(status=ExecStatus.SQL_ERROR, message=str(exc))
    timer = threading.Timer(timeout_s, conn.interrupt)
    started = time.perf_counter()
    try:
        timer.start()
        cursor = conn.execute(sql)
        rows = cursor.fetchall()
        elapsed = time.perf_counter() - started
        ordered = "order by" in sql.lower()
        return ExecutionOutcome(
            status=ExecStatus.OK,
            rows=_normalize_rows(rows),
            wall_time_s=elapsed,
            ordered=ordered,
        )
    except sqlite3.OperationalError as exc:
        elapsed = time.perf_counter() - started
        if "interrupt" in str(exc).lower():
            return ExecutionOutcome(
                status=ExecStatus.TIMEOUT, wall_time_s=elapsed, message=str(exc)
            )
        return ExecutionOutcome(
            status=ExecStatus.SQL_ERROR, wall_time_s=elapsed, message=str(exc)
        )
    except sqlite3.Error as exc:
        elapsed = time.perf_counter() - started
        return ExecutionOutcome(
            status=ExecStatus.SQL_ERROR, wall_time_s=elapsed, message=str(exc)
        )
    finally:
        timer.cancel()
        conn.close()


def exact_match(pred: str, gold: str) -> bool:
    """Structural clause-set equality; raises EvaluationError on bad input."""
    try:
        pred_sets = clause_sets(parse_sql(pred))
        gold_sets = clause_sets(parse_sql(gold))
    except SqlSyntaxError as exc:
        raise EvaluationError(f"exact_match input does not parse: {exc}")
    return pred_sets == gold_sets


def execution_match(
    pred: str, gold: str, db_path: str | Path, timeout_s: float = DEFAULT_TIMEOUT_S
) -> bool:
    """Result-set equality on the target database.

    Order-sensitive iff either statement has a top-level ORDER BY (keeps the
    comparison symmetric in its two arguments).
    """
    gold_out = execute_sql(db_path, gold, timeout_s)
    if gold_out.status is not ExecStatus.OK:
        raise EvaluationError(f"gold SQL failed to execute: {gold_out.message}")
    pred_out = execute_sql(db_path, pred, timeout_s)
    if pred_out.status is not ExecStatus.OK:
        return False
    order_sensitive = gold_out.ordered or pred_out.ordered
    if order_sensitive:
        return pred_out.rows == gold_out.rows
    return Counter(pred_out.rows) == Counter(gold_out.rows)


def classify_error(pred: str, gold: str, db_path: str | Path | None = None) -> ErrorCategory:
    """First-match rule chain; total and deterministic on execution failures."""
    try:
        pv = flatten_view(pred)
    except SqlSyntaxError:
        return ErrorCategory.OTHER
    gv = flatten_view(gold)
    if pv.tables != gv.tables or pv.outer_select_columns != gv.outer_select_columns:
        return ErrorCategory.SCHEMA_LINK
    if pv.join_conditions != gv.join_conditions:
        return ErrorCategory.JOIN
    if pv.group_by != gv.group_by or pv.having != gv.having:
        return ErrorCategory.GROUP_BY
    if pv.subquery_shape != gv.subquery_shape:
        return ErrorCategory.NESTED
    if pv.where_structural == gv.where_structural and pv.where_literal != gv.where_literal:
        return ErrorCategory.CONDITION_VALUE
    return ErrorCategory.OTHER


@dataclass
class EvalRecord:
    example_id: str
    predicted_sql: str
    gold_sql: str
    db_id: str
    em: bool = False
    ex: bool = False
    ves_contribution: float = 0.0
    difficulty: Difficulty = Difficulty.UNKNOWN
    error_category: ErrorCategory | None = None
    pred_time_s: float | None = None
    gold_time_s: float | None = None
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "id": self.example_id,
            "db_id": self.db_id,
            "predicted_sql": self.predicted_sql,
            "gold_sql": self.gold_sql,
            "em": self.em,
            "ex": self.ex,
            "ves_contribution": self.ves_contribution,
            "difficulty": self.difficulty.value,
            "error_category": self.error_category.value if self.error_category else None,
            "pred_time_s": self.pred_time_s,
            "gold_time_s": self.gold_time_s,
            "error": self.error,
        }


@dataclass
class EvalReport:
    records: list[EvalRecord]

    @property
    def em_acc(self) -> float:
        return sum(r.em for r in self.records) / len(self.records)

    @property
    def exec_acc(self) -> float:
        return sum(r.ex for r in self.records) / len(self.records)

    @property
    def ves(self) -> float:
        return sum(r.ves_contribution for r in self.records) / len(self.records)

    def per_difficulty_exec(self) -> dict[str, float]:
        buckets: dict[str, list[bool]] = {}
        for r in self.records:
            buckets.setdefault(r.difficulty.value, []).append(r.ex)
        return {k: sum(v) / len(v) for k, v in sorted(buckets.items())}

    def error_histogram(self) -> dict[str, int]:
        counts: Counter = Counter(
            r.error_category.value for r in self.records if r.error_category is not None
        )
        return dict(sorted(counts.items()))

    def to_dict(self) -> dict:
        return {
            "em_acc": self.em_acc,
            "exec_acc": self.exec_acc,
            "ves": self.ves,
            "per_difficulty_exec": self.per_difficulty_exec(),
            "error_histogram": self.error_histogram(),
            "records": [r.to_dict() for r in self.records],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_tsv(self) -> str:
        lines = ["metric\tvalue"]
        lines.append(f"em_acc\t{self.em_acc:.4f}")
        lines.append(f"exec_acc\t{self.exec_acc:.4f}")
        lines.append(f"ves\t{self.ves:.4f}")
        for bucket, acc in self.per_difficulty_exec().items():
            lines.append(f"exec_acc[{bucket}]\t{acc:.4f}")
        for cat, count in self.error_histogram().items():
            lines.append(f"errors[{cat}]\t{count}")
        return "\n".join(lines)


def ves(records: list[EvalRecord]) -> float:
    """Mean of execution-gated sqrt time ratios, clamped to [1/100, 100]."""
    if not records:
        return 0.0
    total = 0.0
    for r in records:
        total += _ves_contribution(r)
    return total / len(records)


def _ves_contribution(record: EvalRecord) -> float:
    if not record.ex:
        return 0.0
    tg = record.gold_time_s
    tp = record.pred_time_s
    if tg is None or tp is None:
        raise EvaluationError(f"record {record.example_id} lacks timing for VES")
    if tp <= 0.0:
        ratio = VES_RATIO_CEIL if tg > 0.0 else 1.0
    else:
        ratio = tg / tp
    ratio = min(max(ratio, VES_RATIO_FLOOR), VES_RATIO_CEIL)
    return ratio ** 0.5


@dataclass(frozen=True)
class ExampleRecord:
    example_id: str
    question: str
    gold_sql: str
    db_id: str
    difficulty: Difficulty = Difficulty.UNKNOWN


@dataclass
class EvalConfig:
    timeout_s: float = DEFAULT_TIMEOUT_S
    timing_runs: int = 3
    jobs: int = 1


def load_dataset(path: str | Path) -> list[ExampleRecord]:
    """Dataset file: array of {question, query, db_id, difficulty?, id?}."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(doc, list):
        raise EvaluationError("dataset must be a JSON array")
    records = []
    for i, entry in enumerate(doc):
        difficulty = Difficulty.UNKNOWN
        raw = str(entry.get("difficulty", "")).lower()
        for d in Difficulty:
            if raw == d.value:
                difficulty = d
        records.append(
            ExampleRecord(
                example_id=str(entry.get("id", i)),
                question=entry["question"],
                gold_sql=entry["query"],
                db_id=entry["db_id"],
                difficulty=difficulty,
            )
        )
    return records


def load_predictions(path: str | Path) -> dict[str, str]:
    """Predictions file: one JSON record per line, {id, sql}."""
    preds: dict[str, str] = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line:
            continue
        entry = json.loads(line)
        preds[str(entry["id"])] = entry["sql"]
    return preds


def resolve_db_path(db_root: str | Path, db_id: str) -> Path:
    root = Path(db_root)
    flat = root / f"{db_id}.sqlite"
    nested = root / db_id / f"{db_id}.sqlite"
    return flat if flat.is_file() else nested


def _median_time(db_path, sql, runs: int, timeout_s: float) -> float | None:
    times = []
    for _ in range(max(1, runs)):
        out = execute_sql(db_path, sql, timeout_s)
        if out.status is not ExecStatus.OK:
            return None
        times.append(out.wall_time_s)
    return statistics.median(times)


def evaluate(
    examples: list[ExampleRecord],
    predictions: dict[str, str],
    db_root: str | Path,
    cfg: EvalConfig | None = None,
) -> EvalReport:
    """Score predictions against gold; per-record failures never abort the run."""
    cfg = cfg or EvalConfig()
    if not predictions:
        raise EvaluationError("empty prediction set")
    missing = [e.example_id for e in examples if e.example_id not in predictions]
    if len(missing) == len(examples):
        raise EvaluationError("no prediction matches any example id")

    records: list[EvalRecord | None] = [None] * len(examples)
    if cfg.jobs <= 1:
        for i, example in enumerate(examples):
            records[i] = _evaluate_one(
                example, predictions.get(example.example_id, ""), db_root, cfg
            )
    else:
        from concurrent.futures import ThreadPoolExecutor

        db_locks: dict[str, threading.Lock] = {}
        guard = threading.Lock()

        def lock_for(db_id: str) -> threading.Lock:
            with guard:
                return db_locks.setdefault(db_id, threading.Lock())

        def work(i: int, example: ExampleRecord):
            # records sharing a database serialize; timing runs stay unskewed
            with lock_for(example.db_id):
                records[i] = _evaluate_one(
                    example, predictions.get(example.example_id, ""), db_root, cfg
                )

        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            futures = [pool.submit(work, i, ex) for i, ex in enumerate(examples)]
            for f in futures:
                f.result()
    return EvalReport(records=records)


def _evaluate_one(
    example: ExampleRecord, pred_sql: str, db_root, cfg: EvalConfig
) -> EvalRecord:
    record = EvalRecord(
        example_id=example.example_id,
        predicted_sql=pred_sql,
        gold_sql=example.gold_sql,
        db_id=example.db_id,
        difficulty=example.difficulty,
    )
    db_path = resolve_db_path(db_root, example.db_id)
    if not db_path.is_file():
        record.error = f"database file missing for {example.db_id}"
        record.error_category = ErrorCategory.OTHER
        return record

    try:
        record.em = exact_match(pred_sql, example.gold_sql)
    except EvaluationError:
        # unparseable prediction: a scoring outcome, not an evaluation failure
        record.em = False

    try:
        record.ex = execution_match(pred_sql, example.gold_sql, db_path, cfg.timeout_s)
    except EvaluationError as exc:
        record.ex = False
        record.error = str(exc)
        record.error_category = ErrorCategory.OTHER
        return record

    if record.ex:
        record.gold_time_s = _median_time(db_path, example.gold_sql, cfg.timing_runs, cfg.timeout_s)
        record.pred_time_s = _median_time(db_path, pred_sql, cfg.timing_runs, cfg.timeout_s)
        if record.gold_time_s is None or record.pred_time_s is None:
            record.error = "timing rerun failed; VES ratio defaulted to 1"
            record.ves_contribution = 1.0
        else:
            record.ves_contribution = _ves_contribution(record)
    else:
        record.error_category = classify_error(pred_sql, example.gold_sql, db_path)
    return record
