"""Prompt templates for the component, topology, refinement and single-stage requests."""

from __future__ import annotations

from typing import TYPE_CHECKING, Iterable, Sequence

from ..diagnostics import Diagnostic
from ..frontends import SyntaxStyle, emit, extension_for, grammar
from ..registry import Registry

if TYPE_CHECKING:
    from .pipeline import TaskSpec
    from .store import Reference

PROMPT_VERSION = "aflow-prompts/1"


def fence(text: str, style: SyntaxStyle) -> str:
    return f"```{extension_for(style)[1:]}\n{text}\n```"


def system_prompt(style: SyntaxStyle, registry: Registry, refs: Sequence[Reference]) -> str:
    parts = [
        "You write programs in a workflow language for generative tasks. A program names functions, "
        "binds their parameters, and connects output ports to input ports.",
        "## Syntax\n" + grammar(style),
        "## Available functions\nUse only these types, ports and parameter ranges.\n" + registry.summary(),
    ]
    if refs:
        shown = []
        for i, ref in enumerate(refs, 1):
            shown.append(f"### Reference {i}: {ref.task}\n" + fence(emit(ref.workflow, style), style))
        parts.append("## Reference programs\n" + "\n\n".join(shown))
    parts.append("Answer with exactly one fenced code block and nothing else.")
    return "\n\n".join(parts)


def task_block(task: TaskSpec) -> str:
    lines = [f"Task: {task.description}"]
    if task.inputs:
        lines.append("Inputs:")
        lines.extend(f"- {i.name} ({i.modality.value}): {i.uri}" for i in task.inputs)
    if task.key_functions:
        lines.append("Key functions: " + ", ".join(task.key_functions))
    return "\n".join(lines)


def components_prompt(task: TaskSpec) -> str:
    return (
        task_block(task)
        + "\n\nStep 1 of 2: list only the functions this task needs, as node declarations with their "
        "parameters. Do not write any connections yet."
    )


def topology_prompt(task: TaskSpec, draft_text: str) -> str:
    style = task.syntax
    if style is SyntaxStyle.DATAFLOW:
        ask = ("Rewrite these statements in execution order, adding port arguments that connect them. "
               "Do not add, remove or rename functions and do not change parameters.")
    else:
        ask = ("Write only the connections between these functions' ports. "
               "Do not declare new functions or change parameters.")
    return (
        task_block(task)
        + "\n\nStep 2 of 2: the functions are fixed:\n"
        + fence(draft_text, style)
        + "\n"
        + ask
    )


def refine_prompt(task: TaskSpec, candidate: str, diagnostics: Iterable[Diagnostic]) -> str:
    problems = "\n".join(f"- {d}" for d in diagnostics) or "- (no diagnostics)"
    return (
        task_block(task)
        + "\n\nThis program failed to compile or run:\n"
        + fence(candidate, task.syntax)
        + "\nProblems:\n"
        + problems
        + "\n\nReturn the complete corrected program."
    )


def single_stage_prompt(task: TaskSpec) -> str:
    return task_block(task) + "\n\nWrite the complete program: functions, parameters and connections."
