"""Command-line entry point: ``aflow <verb> ...``.

Exit codes: 0 ok, 1 task-level failure (invalid program, failed session),
2 usage or configuration error, 3 runtime/backend failure, 4 language-model error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Sequence

from .bench import error_histogram, load_suite, render_histogram, run_suite
from .config import CliConfig, ConfigError, load_config
from .diagnostics import Diagnostic, is_executable
from .executor import (
    ExportUnsupported,
    LiveTimeout,
    NetworkError,
    PreconditionViolated,
    execute,
    export_comfy,
    import_comfy,
    submit_live,
)
from .executor.comfy import fetch_object_info
from .frontends import SyntaxStyle, emit, parse, style_for_path
from .frontends.common import UnrepresentableWorkflow
from .inference import (
    LmError,
    OpenAICompatibleLm,
    ReferenceStore,
    ScriptBook,
    StubEmbedder,
    TaskInput,
    TaskSpec,
    bundled_references_dir,
    run_pipeline,
    sim_runner,
)
from .inference.store import StoreError
from .ir import Modality, NodeInstance, Workflow
from .registry import CatalogError, Registry, bundled_catalog, load_catalog_file, registry_from_object_info, save_catalog
from .validator import check

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_RUNTIME, EXIT_LM = 0, 1, 2, 3, 4


class UsageError(Exception):
    pass


# -- helpers --------------------------------------------------------------------


def _registry(cfg: CliConfig) -> Registry:
    if cfg.catalog is None:
        return bundled_catalog()
    try:
        return load_catalog_file(cfg.catalog)
    except OSError as exc:
        raise UsageError(f"cannot read catalog {cfg.catalog}: {exc.strerror or exc}") from exc
    except CatalogError as exc:
        raise UsageError(f"bad catalog {cfg.catalog}: {exc}") from exc


def _read(path: str) -> str:
    try:
        return sys.stdin.read() if path == "-" else Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror or exc}") from exc


def _style(path: str, explicit: str | None, cfg: CliConfig) -> SyntaxStyle:
    if explicit:
        return SyntaxStyle.parse(explicit)
    return style_for_path(path) or SyntaxStyle.parse(cfg.syntax)


def _write(text: str, out: str | None) -> None:
    if out and out != "-":
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _emit_json(doc: Any) -> None:
    sys.stdout.write(json.dumps(doc, indent=2, ensure_ascii=False) + "\n")


def _report_diags(diags: Sequence[Diagnostic], cfg: CliConfig, path: str = "") -> None:
    if cfg.format == "json":
        return
    for d in diags:
        print(f"{path}: {d}" if path else str(d), file=sys.stderr)


def _load_program(path: str, syntax: str | None, cfg: CliConfig) -> tuple[Workflow | None, list[Diagnostic], SyntaxStyle]:
    style = _style(path, syntax, cfg)
    outcome = parse(_read(path), style)
    return outcome.workflow, list(outcome.diagnostics), style


def _parse_value(raw: str) -> Any:
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        return raw
    if isinstance(value, (list, dict)) or value is None:
        return raw
    return value


# -- verbs ------------------------------------------------------------------------


def cmd_validate(args, cfg: CliConfig) -> int:
    registry = _registry(cfg)
    w, diags, _ = _load_program(args.file, args.syntax, cfg)
    if w is not None:
        diags = diags + check(w, registry)
    ok = w is not None and is_executable(diags)
    if cfg.format == "json":
        _emit_json({"file": args.file, "executable": ok, "diagnostics": [d.to_dict() for d in diags]})
    else:
        _report_diags(diags, cfg, args.file)
        print(f"{args.file}: {'ok' if ok else 'invalid'}", file=sys.stderr)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_convert(args, cfg: CliConfig) -> int:
    w, diags, src = _load_program(args.file, args.source, cfg)
    if w is None:
        _report_diags(diags, cfg, args.file)
        if cfg.format == "json":
            _emit_json({"file": args.file, "program": None, "diagnostics": [d.to_dict() for d in diags]})
        return EXIT_FAIL
    target = SyntaxStyle.parse(args.to) if args.to else (style_for_path(args.output or "") or src)
    try:
        text = emit(w, target)
    except UnrepresentableWorkflow as exc:
        print(f"{args.file}: cannot express in {target.value}: {exc}", file=sys.stderr)
        return EXIT_FAIL
    if cfg.format == "json":
        _emit_json({"file": args.file, "syntax": target.value, "program": text,
                    "diagnostics": [d.to_dict() for d in diags]})
    else:
        _report_diags(diags, cfg, args.file)
        _write(text, args.output)
    return EXIT_OK


def _seeds(pairs: Sequence[str]) -> dict[str, int]:
    seeds = {}
    for pair in pairs or ():
        node, sep, value = pair.partition("=")
        if not sep:
            raise UsageError(f"--seed expects NODE=INT, got {pair!r}")
        try:
            seeds[node] = int(value)
        except ValueError as exc:
            raise UsageError(f"--seed expects NODE=INT, got {pair!r}") from exc
    return seeds


def cmd_run(args, cfg: CliConfig) -> int:
    registry = _registry(cfg)
    w, diags, _ = _load_program(args.file, args.syntax, cfg)
    if w is None:
        _report_diags(diags, cfg, args.file)
        return EXIT_FAIL
    try:
        if args.backend == "sim":
            trace = execute(w, registry, seeds=_seeds(args.seed))
        else:
            problems = check(w, registry)
            if not is_executable(problems):
                raise PreconditionViolated("workflow does not validate", problems)
            doc = export_comfy(w, registry, fill_defaults=True)
            trace = submit_live(doc, args.endpoint or cfg.comfy_url, timeout=args.timeout)
    except PreconditionViolated as exc:
        _report_diags(diags + exc.diagnostics, cfg, args.file)
        if cfg.format == "json":
            _emit_json({"file": args.file, "trace": None,
                        "diagnostics": [d.to_dict() for d in diags + exc.diagnostics]})
        return EXIT_FAIL
    except (NetworkError, LiveTimeout, ExportUnsupported) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    _write(trace.to_json(), args.output)
    if not trace.ok:
        node, message = trace.failure or ("?", "failed")
        print(f"execution failed at {node}: {message}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def _task_inputs(specs: Sequence[str]) -> list[TaskInput]:
    inputs = []
    for spec in specs or ():
        parts = spec.split(":", 2)
        if len(parts) < 2:
            raise UsageError(f"--input expects NAME:MODALITY[:URI], got {spec!r}")
        try:
            inputs.append(TaskInput(parts[0], Modality(parts[1]), parts[2] if len(parts) > 2 else ""))
        except ValueError as exc:
            raise UsageError(f"--input {spec!r}: unknown modality {parts[1]!r}") from exc
    return inputs


def _lm(args, cfg: CliConfig, case_id: str = ""):
    if getattr(args, "lm_script", None):
        book = _script_book(args.lm_script)
        if book.shared is None and len(book.per_case) == 1 and not case_id:
            case_id = next(iter(book.per_case))
        return book.lm_for(case_id)
    if not cfg.lm_url or not cfg.lm_model:
        raise UsageError("no language model configured: pass --lm-script or set AFLOW_LM_URL and AFLOW_LM_MODEL")
    return OpenAICompatibleLm(cfg.lm_url, cfg.lm_model, cfg.lm_key, cfg.embed_model)


def _script_book(path: str) -> ScriptBook:
    try:
        return ScriptBook.load(path)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror or exc}") from exc
    except ValueError as exc:
        raise UsageError(f"bad script file {path}: {exc}") from exc


def _store(cfg: CliConfig, lm, registry: Registry) -> ReferenceStore:
    directory = cfg.references or str(bundled_references_dir())
    try:
        # the bundled references are written against the bundled catalog
        return ReferenceStore.load(directory, lm.embed, registry if cfg.references else None)
    except (OSError, StoreError) as exc:
        raise UsageError(f"reference store {directory}: {exc}") from exc


def cmd_infer(args, cfg: CliConfig) -> int:
    if args.task_file:
        description = _read(args.task_file).strip()
    else:
        description = (args.task or "").strip()
    if not description:
        raise UsageError("a task description is required (--task or --task-file)")
    registry = _registry(cfg)
    task = TaskSpec(description, _task_inputs(args.input), SyntaxStyle.parse(args.syntax or cfg.syntax),
                    args.key_function or None)
    lm = _lm(args, cfg)
    store = _store(cfg, lm, registry)
    runner = sim_runner(registry) if args.execute else None
    session = run_pipeline(task, registry, store, lm, cfg.limit, two_stage=not args.single_stage, runner=runner)
    if args.transcript:
        Path(args.transcript).write_text(session.to_json(), encoding="utf-8")
    if cfg.format == "json":
        _emit_json(session.to_dict())
    else:
        last = session.last
        for d in last.diagnostics if last else ():
            print(str(d), file=sys.stderr)
        if session.final is not None:
            _write(emit(session.final, task.syntax), args.output)
        print(f"{'succeeded' if session.succeeded else 'failed'} after {len(session.iterations)} candidate(s)",
              file=sys.stderr)
    return EXIT_OK if session.succeeded else EXIT_FAIL


def cmd_bench(args, cfg: CliConfig) -> int:
    registry = _registry(cfg)
    suite_dir = Path(args.suite) if args.suite else _bundled_suite()
    if not suite_dir.is_dir():
        raise UsageError(f"suite directory {suite_dir} does not exist")
    cases = load_suite(suite_dir, registry)
    if args.lm_script:
        book = _script_book(args.lm_script)
        lm: Any = lambda case, style: book.lm_for(case.id, style)  # noqa: E731
        embedder = book.lm_for() if book.shared is not None else StubEmbedder()
    else:
        lm = embedder = _lm(args, cfg)
    store = _store(cfg, embedder, registry)
    styles = args.syntax or [None]
    reports = {}
    for style in styles:
        reports[style or "as-written"] = run_suite(cases, registry, store, lm, syntax=style, limit=cfg.limit,
                                                   two_stage=not args.single_stage, workers=args.workers)
    doc: dict[str, Any] = {name: rep.to_dict() for name, rep in reports.items()}
    histogram = error_histogram(reports) if len(reports) > 1 or args.histogram else None
    if histogram is not None:
        doc = {"reports": doc, "histogram": histogram}
    elif len(reports) == 1:
        doc = next(iter(reports.values())).to_dict()
    if args.output:
        Path(args.output).write_text(json.dumps(doc, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    if args.csv:
        Path(args.csv).write_text("".join(rep.to_csv() for rep in reports.values()), encoding="utf-8")
    if cfg.format == "json":
        _emit_json(doc)
    else:
        for name, rep in reports.items():
            if len(reports) > 1:
                print(f"== {name}")
            sys.stdout.write(rep.render())
        if histogram is not None:
            sys.stdout.write("\n" + render_histogram(histogram))
    return EXIT_OK


def _bundled_suite() -> Path:
    from importlib import resources

    return Path(str(resources.files("aflow").joinpath("data/suite")))


def cmd_export_comfy(args, cfg: CliConfig) -> int:
    registry = _registry(cfg)
    w, diags, _ = _load_program(args.file, args.syntax, cfg)
    if w is None:
        _report_diags(diags, cfg, args.file)
        return EXIT_FAIL
    try:
        data = export_comfy(w, registry, fill_defaults=args.fill_defaults)
    except ExportUnsupported as exc:
        print(f"{args.file}: {exc}", file=sys.stderr)
        return EXIT_FAIL
    _write(data.decode(), args.output)
    return EXIT_OK


def cmd_import_comfy(args, cfg: CliConfig) -> int:
    registry = _registry(cfg)
    try:
        w, diags = import_comfy(_read(args.file), registry)
    except ValueError as exc:
        print(f"{args.file}: {exc}", file=sys.stderr)
        return EXIT_FAIL
    style = SyntaxStyle.parse(args.to or cfg.syntax)
    text = emit(w, style)
    if cfg.format == "json":
        _emit_json({"file": args.file, "syntax": style.value, "program": text,
                    "diagnostics": [d.to_dict() for d in diags]})
    else:
        _report_diags(diags, cfg, args.file)
        _write(text, args.output)
    return EXIT_OK


def cmd_sync_catalog(args, cfg: CliConfig) -> int:
    base = (args.endpoint or cfg.comfy_url).rstrip("/")
    try:
        info = fetch_object_info(base)
    except NetworkError as exc:
        print(f"NetworkError: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    if not isinstance(info, dict):
        print(f"{base}/object_info: unexpected response", file=sys.stderr)
        return EXIT_RUNTIME
    registry, notes = registry_from_object_info(info, args.version)
    for note in notes:
        print(note, file=sys.stderr)
    _write(save_catalog(registry).decode(), args.output)
    if cfg.format == "text":
        print(f"{len(registry)} functions", file=sys.stderr)
    return EXIT_OK


def cmd_edit(args, cfg: CliConfig) -> int:
    registry = _registry(cfg)
    w, diags, style = _load_program(args.file, args.syntax, cfg)
    if w is None:
        _report_diags(diags, cfg, args.file)
        return EXIT_FAIL
    for spec in args.type or ():
        node, sep, type_name = spec.partition("=")
        if not sep or node not in w.nodes:
            raise UsageError(f"--type expects an existing NODE=Type, got {spec!r}")
        w.nodes[node] = NodeInstance(node, type_name, w.nodes[node].params)
    for spec in args.set or ():
        target, sep, raw = spec.partition("=")
        node, dot, name = target.partition(".")
        if not sep or not dot or node not in w.nodes:
            raise UsageError(f"--set expects NODE.PARAM=VALUE on an existing node, got {spec!r}")
        w.set_param(node, name, _parse_value(raw))
    for node in args.remove or ():
        if node not in w.nodes:
            raise UsageError(f"--remove: no node {node!r}")
        w.remove_node(node)
    problems = check(w, registry)
    _report_diags(problems, cfg, args.file)
    text = emit(w, style)
    if cfg.format == "json":
        _emit_json({"file": args.file, "program": text, "diagnostics": [d.to_dict() for d in problems]})
    else:
        _write(text, args.output or (args.file if args.in_place else None))
    return EXIT_OK if is_executable(problems) else EXIT_FAIL


def cmd_catalog(args, cfg: CliConfig) -> int:
    registry = _registry(cfg)
    if cfg.format == "json":
        _emit_json(json.loads(save_catalog(registry)))
    else:
        sys.stdout.write(registry.summary() + "\n")
    return EXIT_OK


# -- argument parsing -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="path to aflow.toml (default: ./aflow.toml if present)")
    common.add_argument("--catalog", help="function catalog JSON (default: bundled test catalog)")
    common.add_argument("--format", choices=["text", "json"], default=None, help="output format")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="aflow", description="Compile, check, run and infer generative workflows.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def verb(name: str, func, help: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, parents=[common], help=help, description=help)
        p.set_defaults(func=func)
        return p

    syntaxes = ["declarative", "dataflow", "pseudo-natural", "pseudo_natural"]

    p = verb("validate", cmd_validate, "check a program against the catalog")
    p.add_argument("file")
    p.add_argument("--syntax", choices=syntaxes, help="override the syntax implied by the extension")

    p = verb("convert", cmd_convert, "re-express a program in another syntax")
    p.add_argument("file")
    p.add_argument("--from", dest="source", choices=syntaxes)
    p.add_argument("--to", choices=syntaxes)
    p.add_argument("-o", "--output")

    p = verb("run", cmd_run, "validate then execute a program")
    p.add_argument("file")
    p.add_argument("--syntax", choices=syntaxes)
    p.add_argument("--backend", choices=["sim", "comfy"], default="sim")
    p.add_argument("--endpoint", help="ComfyUI base URL (default: AFLOW_COMFY_URL or config)")
    p.add_argument("--seed", action="append", metavar="NODE=INT", help="override a sampler seed (sim backend)")
    p.add_argument("--timeout", type=float, default=600.0)
    p.add_argument("-o", "--output")

    p = verb("infer", cmd_infer, "generate a program from a task description")
    p.add_argument("--task")
    p.add_argument("--task-file")
    p.add_argument("--input", action="append", metavar="NAME:MODALITY[:URI]")
    p.add_argument("--key-function", action="append")
    p.add_argument("--syntax", choices=syntaxes)
    p.add_argument("--limit", type=int, help="maximum refinement iterations (default 3)")
    p.add_argument("--single-stage", action="store_true", help="ask for the whole program in one request")
    p.add_argument("--execute", action="store_true", help="also run candidates on the simulated backend")
    p.add_argument("--lm-script", help="JSON response script; no network access is made")
    p.add_argument("--references", help="reference program directory")
    p.add_argument("--transcript", help="write the session transcript JSON here")
    p.add_argument("-o", "--output")

    p = verb("bench", cmd_bench, "run a task suite and report Pass@1 and resolve rates")
    p.add_argument("--suite", help="directory of case JSON files (default: bundled synthetic suite)")
    p.add_argument("--syntax", action="append", choices=syntaxes,
                   help="run every case in this syntax; repeat for a per-syntax error histogram")
    p.add_argument("--lm-script")
    p.add_argument("--references")
    p.add_argument("--limit", type=int)
    p.add_argument("--single-stage", action="store_true")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--histogram", action="store_true", help="include the error histogram for a single run")
    p.add_argument("-o", "--output", help="write the JSON report here")
    p.add_argument("--csv", help="write per-case rows as CSV here")

    p = verb("export-comfy", cmd_export_comfy, "write a ComfyUI API prompt")
    p.add_argument("file")
    p.add_argument("--syntax", choices=syntaxes)
    p.add_argument("--fill-defaults", action="store_true")
    p.add_argument("-o", "--output")

    p = verb("import-comfy", cmd_import_comfy, "read a ComfyUI API prompt")
    p.add_argument("file")
    p.add_argument("--to", choices=syntaxes)
    p.add_argument("-o", "--output")

    p = verb("sync-catalog", cmd_sync_catalog, "build a catalog from a ComfyUI server's /object_info")
    p.add_argument("--endpoint")
    p.add_argument("--version", default="comfyui")
    p.add_argument("-o", "--output")

    p = verb("edit", cmd_edit, "change parameters or function types in a program")
    p.add_argument("file")
    p.add_argument("--syntax", choices=syntaxes)
    p.add_argument("--set", action="append", metavar="NODE.PARAM=VALUE")
    p.add_argument("--type", action="append", metavar="NODE=TYPE")
    p.add_argument("--remove", action="append", metavar="NODE")
    p.add_argument("-i", "--in-place", action="store_true")
    p.add_argument("-o", "--output")

    verb("catalog", cmd_catalog, "list the catalog's functions")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    flags = {"catalog": args.catalog, "format": args.format, "limit": getattr(args, "limit", None),
             "references": getattr(args, "references", None)}
    try:
        cfg = load_config(args.config, flags=flags)
        return args.func(args, cfg)
    except (UsageError, ConfigError) as exc:
        print(f"aflow: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except LmError as exc:
        print(f"aflow: language model error: {exc}", file=sys.stderr)
        return EXIT_LM
    except (NetworkError, LiveTimeout) as exc:
        print(f"aflow: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
