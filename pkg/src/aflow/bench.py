"""Task-suite harness: Pass@1 for compilation and execution, resolve rates, error histograms."""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Sequence, Union

from .diagnostics import ErrorCategory, is_executable
from .executor.core import ExecutionTrace, execute
from .frontends import SyntaxStyle, parse, style_for_path
from .inference.lm import LmBackend
from .inference.pipeline import (
    DEFAULT_LIMIT,
    InferenceSession,
    TaskInput,
    TaskSpec,
    run_pipeline,
    sim_runner,
)
from .inference.store import ReferenceStore
from .ir import Workflow, canonical_equal
from .registry import Registry
from .validator import check


class MismatchedCaseSets(ValueError):
    pass


class CaseFormatError(ValueError):
    pass


class OracleKind(str, Enum):
    VALIDATES_CLEANLY = "ValidatesCleanly"
    EXECUTES_WITH_SIM = "ExecutesWithSim"
    GOLDEN_EQUIVALENCE = "GoldenEquivalence"


@dataclass
class Oracle:
    kind: OracleKind
    golden: Workflow | None = None

    def __post_init__(self) -> None:
        if (self.kind is OracleKind.GOLDEN_EQUIVALENCE) != (self.golden is not None):
            raise CaseFormatError("a golden workflow goes with, and only with, GoldenEquivalence")


@dataclass
class TaskCase:
    id: str
    category: str
    spec: TaskSpec
    oracle: Oracle

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any], registry: Registry | None = None,
                  base_dir: Path | None = None) -> TaskCase:
        try:
            spec = TaskSpec(
                description=str(doc["description"]),
                inputs=[TaskInput.from_dict(i) for i in doc.get("inputs", [])],
                syntax=SyntaxStyle.parse(doc.get("syntax", "declarative")),
                key_functions=doc.get("key_functions"),
            )
            oracle_doc = doc["oracle"]
            kind = OracleKind(oracle_doc["kind"])
            golden = None
            if kind is OracleKind.GOLDEN_EQUIVALENCE:
                golden = _golden(oracle_doc, base_dir)
                if registry is not None and not is_executable(check(golden, registry)):
                    raise CaseFormatError("golden workflow does not validate")
            elif {"workflow", "program", "file"} & set(oracle_doc):
                raise CaseFormatError(f"a {kind.value} oracle takes no golden workflow")
            return cls(str(doc["id"]), str(doc["category"]), spec, Oracle(kind, golden))
        except CaseFormatError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise CaseFormatError(f"{type(exc).__name__}: {exc}") from exc


def _golden(oracle_doc: Mapping[str, Any], base_dir: Path | None) -> Workflow:
    if "workflow" in oracle_doc:
        return Workflow.from_dict(oracle_doc["workflow"])
    if "program" in oracle_doc:
        text, style = oracle_doc["program"], SyntaxStyle.parse(oracle_doc.get("syntax", "declarative"))
    elif "file" in oracle_doc:
        path = (base_dir or Path(".")) / oracle_doc["file"]
        text, style = path.read_text(encoding="utf-8"), style_for_path(path)
        if style is None:
            raise CaseFormatError(f"unknown program extension: {path.name}")
    else:
        raise CaseFormatError("GoldenEquivalence needs 'workflow', 'program' or 'file'")
    outcome = parse(text, style)
    if outcome.workflow is None:
        raise CaseFormatError("golden program does not parse: " + "; ".join(map(str, outcome.errors)))
    return outcome.workflow


@dataclass
class CaseLoadFailure:
    id: str
    message: str


def load_suite(directory: str | Path, registry: Registry | None = None) -> list[TaskCase | CaseLoadFailure]:
    """Every ``*.json`` file in the directory is one case; unreadable ones come back as failures."""
    entries: list[TaskCase | CaseLoadFailure] = []
    directory = Path(directory)
    for path in sorted(directory.glob("*.json")):
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
            if not isinstance(doc, dict):
                raise CaseFormatError("case file must hold a JSON object")
            entries.append(TaskCase.from_dict(doc, registry, directory))
        except (OSError, json.JSONDecodeError, CaseFormatError) as exc:
            entries.append(CaseLoadFailure(path.stem, str(exc)))
    return entries


@dataclass
class CaseResult:
    id: str
    category: str
    syntax: str
    compiled: bool = False
    executed: bool = False
    resolved: bool = False
    iterations: int = 0
    error_counts: dict[str, int] = field(default_factory=dict)
    error: str | None = None

    @property
    def error_categories(self) -> list[str]:
        return sorted(self.error_counts, key=lambda c: ErrorCategory(c).rank)

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "category": self.category,
            "syntax": self.syntax,
            "compiled": self.compiled,
            "executed": self.executed,
            "resolved": self.resolved,
            "iterations": self.iterations,
            "error_categories": self.error_categories,
            "error_counts": dict(sorted(self.error_counts.items())),
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> CaseResult:
        return cls(doc["id"], doc["category"], doc["syntax"], doc["compiled"], doc["executed"], doc["resolved"],
                   doc["iterations"], dict(doc["error_counts"]), doc.get("error"))


def _rate(hits: int, n: int) -> float | None:
    return hits / n if n else None


def aggregate(rows: Sequence[CaseResult]) -> dict[str, Any]:
    """Suite-level metrics; every rate is None for an empty suite. Errored cases count as failures."""
    n = len(rows)
    by_cat: dict[str, list[CaseResult]] = {}
    for row in rows:
        by_cat.setdefault(row.category, []).append(row)
    return {
        "cases": n,
        "errored": sum(r.error is not None for r in rows),
        "pass1_compile": _rate(sum(r.compiled for r in rows), n),
        "pass1_execute": _rate(sum(r.executed for r in rows), n),
        "resolve_rate": _rate(sum(r.resolved for r in rows), n),
        "resolve_by_category": {c: _rate(sum(r.resolved for r in rs), len(rs)) for c, rs in sorted(by_cat.items())},
    }


@dataclass
class SuiteReport:
    rows: list[CaseResult]
    aggregates: dict[str, Any]
    syntax: str | None = None

    @classmethod
    def from_rows(cls, rows: Iterable[CaseResult], syntax: str | None = None) -> SuiteReport:
        rows = sorted(rows, key=lambda r: r.id)
        return cls(rows, aggregate(rows), syntax)

    def consistent(self) -> bool:
        return aggregate(self.rows) == self.aggregates

    def to_dict(self) -> dict[str, Any]:
        return {"syntax": self.syntax, "aggregates": self.aggregates, "cases": [r.to_dict() for r in self.rows]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False) + "\n"

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> SuiteReport:
        return cls([CaseResult.from_dict(r) for r in doc["cases"]], doc["aggregates"], doc.get("syntax"))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["id", "category", "syntax", "compiled", "executed", "resolved", "iterations",
                         "error_categories", "error"])
        for r in self.rows:
            writer.writerow([r.id, r.category, r.syntax, int(r.compiled), int(r.executed), int(r.resolved),
                             r.iterations, " ".join(r.error_categories), r.error or ""])
        return buf.getvalue()

    def render(self) -> str:
        lines = [f"{'case':<28} {'category':<14} {'comp':>4} {'exec':>4} {'res':>4} {'iter':>4}  errors"]
        for r in self.rows:
            mark = lambda b: "yes" if b else "no"  # noqa: E731
            errs = r.error or ", ".join(f"{c}x{r.error_counts[c]}" for c in r.error_categories)
            lines.append(f"{r.id:<28} {r.category:<14} {mark(r.compiled):>4} {mark(r.executed):>4} "
                         f"{mark(r.resolved):>4} {r.iterations:>4}  {errs}")
        agg = self.aggregates
        fmt = lambda v: "n/a" if v is None else f"{v:.3f}"  # noqa: E731
        lines.append("")
        lines.append(f"cases {agg['cases']}  pass@1 compile {fmt(agg['pass1_compile'])}  "
                     f"pass@1 execute {fmt(agg['pass1_execute'])}  resolve {fmt(agg['resolve_rate'])}")
        for cat, rate in agg["resolve_by_category"].items():
            lines.append(f"  resolve[{cat}] {fmt(rate)}")
        return "\n".join(lines) + "\n"


LmSource = Union[LmBackend, Callable[[TaskCase, SyntaxStyle], LmBackend]]
ExecBackend = Union[Any, Callable[[Workflow], ExecutionTrace], None]


def _resolve(case: TaskCase, session: InferenceSession, registry: Registry) -> bool:
    final = session.final
    if final is None:
        return False
    kind = case.oracle.kind
    if kind is OracleKind.VALIDATES_CLEANLY:
        return True
    if kind is OracleKind.EXECUTES_WITH_SIM:
        return execute(final, registry).ok
    return canonical_equal(final, case.oracle.golden)


def _count_errors(session: InferenceSession) -> dict[str, int]:
    counts: dict[str, int] = {}
    for it in session.iterations:
        for d in it.diagnostics:
            if d.is_error:
                counts[d.category.value] = counts.get(d.category.value, 0) + 1
    return counts


def run_case(case: TaskCase, registry: Registry, store: ReferenceStore | None, lm: LmSource,
             backend: ExecBackend = None, syntax: SyntaxStyle | str | None = None, *,
             limit: int = DEFAULT_LIMIT, two_stage: bool = True) -> CaseResult:
    style = SyntaxStyle.parse(syntax) if syntax is not None else case.spec.syntax
    row = CaseResult(case.id, case.category, style.value)
    try:
        model = lm if hasattr(lm, "complete") else lm(case, style)
        if backend is None or hasattr(backend, "run_node"):
            runner = sim_runner(registry, backend=backend)
        else:
            runner = backend
        spec = TaskSpec(case.spec.description, list(case.spec.inputs), style, case.spec.key_functions)
        session = run_pipeline(spec, registry, store, model, limit, two_stage=two_stage, runner=runner)
    except Exception as exc:  # one bad case must not sink the suite
        row.error = f"{type(exc).__name__}: {exc}"
        return row
    last = session.last
    row.iterations = len(session.iterations)
    row.error_counts = _count_errors(session)
    row.compiled = last is not None and last.compiled
    row.executed = session.trace is not None and session.trace.ok
    row.resolved = _resolve(case, session, registry)
    return row


def run_suite(cases: Iterable[TaskCase | CaseLoadFailure], registry: Registry, store: ReferenceStore | None,
              lm: LmSource, backend: ExecBackend = None, syntax: SyntaxStyle | str | None = None, *,
              limit: int = DEFAULT_LIMIT, two_stage: bool = True, workers: int = 1) -> SuiteReport:
    """One pipeline run per case. ``lm`` is either a backend or a factory ``(case, syntax) -> backend``."""
    cases = list(cases)

    def one(case: TaskCase | CaseLoadFailure) -> CaseResult:
        if isinstance(case, CaseLoadFailure):
            label = SyntaxStyle.parse(syntax).value if syntax is not None else ""
            return CaseResult(case.id, "", label, error=f"CaseFormatError: {case.message}")
        return run_case(case, registry, store, lm, backend, syntax, limit=limit, two_stage=two_stage)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(one, cases))
    else:
        rows = [one(c) for c in cases]
    label = SyntaxStyle.parse(syntax).value if syntax is not None else None
    return SuiteReport.from_rows(rows, label)


def error_histogram(reports: Mapping[str, SuiteReport]) -> dict[str, dict[str, int]]:
    """Error counts as ``{category: {syntax: n}}`` over every category and every given syntax."""
    id_sets = {name: sorted(r.id for r in rep.rows) for name, rep in reports.items()}
    if len({tuple(ids) for ids in id_sets.values()}) > 1:
        raise MismatchedCaseSets("reports cover different case sets")
    table = {c.value: {name: 0 for name in reports} for c in ErrorCategory}
    for name, rep in reports.items():
        for row in rep.rows:
            for cat, n in row.error_counts.items():
                table[cat][name] += n
    return table


def render_histogram(table: Mapping[str, Mapping[str, int]]) -> str:
    columns = sorted({s for row in table.values() for s in row})
    width = max([len(c) for c in columns] + [5])
    out = [f"{'category':<20}" + "".join(f" {c:>{width}}" for c in columns) + f" {'total':>{width}}"]
    for cat, row in table.items():
        out.append(f"{cat:<20}" + "".join(f" {row[c]:>{width}}" for c in columns) + f" {sum(row.values()):>{width}}")
    totals = [sum(table[cat][c] for cat in table) for c in columns]
    out.append(f"{'total':<20}" + "".join(f" {t:>{width}}" for t in totals) + f" {sum(totals):>{width}}")
    return "\n".join(out) + "\n"
