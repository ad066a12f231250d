"""Hand-built scripted suites with outcomes that can be counted by eye."""

from __future__ import annotations

from aflow.bench import Oracle, OracleKind, TaskCase
from aflow.executor import ExecutionTrace, Status
from aflow.frontends import SyntaxStyle
from aflow.inference import ScriptedLm, TaskSpec, inject_fault, program_answer, sim_runner, two_stage_answers
from aflow.ir import canonical_equal

JUNK = "```\n@@@\n```"
TEN_CASE_NAMES = ["blend_images", "text_to_image", "image_to_image", "inpaint", "outpaint", "upscale",
                  "image_merge", "image_to_video", "text_to_audio", "image_to_3d"]
LIMIT = 3


def ten_case_suite(registry, goldens):
    """Ten cases; by construction 9 compile, 8 execute and 8 resolve.

    c00-c06 are clean first shots. c07 compiles but its execution always
    fails. c08 never produces a parseable program. c09 has one gap that the
    first refinement repairs.
    """
    cases, scripts = [], {}
    names = [n for n in TEN_CASE_NAMES if n in goldens]
    names += [n for n in sorted(goldens) if n not in names]
    for i, name in enumerate(names[:10]):
        golden = goldens[name]
        cid = f"c{i:02d}"
        cases.append(TaskCase(cid, f"group{i % 3}", TaskSpec(f"task {name.replace('_', ' ')}"),
                              Oracle(OracleKind.GOLDEN_EQUIVALENCE, golden)))

        def script(style, i=i, golden=golden):
            if i == 7:
                return two_stage_answers(golden, style) + [program_answer(golden, style)] * LIMIT
            if i == 8:
                return [JUNK] * (1 + LIMIT)
            if i == 9:
                return two_stage_answers(inject_fault(golden, registry, "gap"), style) + [program_answer(golden, style)]
            return two_stage_answers(golden, style)

        scripts[cid] = script
    doomed = cases[7].oracle.golden
    sim = sim_runner(registry)

    def runner(w):
        if canonical_equal(w, doomed):
            return ExecutionTrace([], status=Status.FAILED, failure=(sorted(w.nodes)[0], "device lost"))
        return sim(w)

    def lm_factory(case, style):
        return ScriptedLm(scripts[case.id](SyntaxStyle.parse(style)))

    return cases, lm_factory, runner


EXPECTED_TEN = {"cases": 10, "compiled": 9, "executed": 8, "resolved": 8}


def drop_edge(w, index):
    """A copy of ``w`` without its ``index``-th canonical edge (cyclic)."""
    from aflow.ir import canonicalize

    edges = canonicalize(w).edges
    e = edges[index % len(edges)]
    return w.copy().disconnect(e.dst.node_id, e.dst.port_name)


def ablation_suite(registry, goldens, n=20):
    """``n`` cases, each whose first answer carries exactly one repairable fault.

    Two-stage scripts answer components and topology with the fault present,
    then return the corrected program when shown the diagnostics. Single-stage
    scripts stand for a model asked for everything at once: every answer, the
    first included, loses one connection (a different one each time), and the
    first also carries the injected fault.
    """
    from aflow.inference.scripts import FAULTS

    names = sorted(goldens)
    cases, two_stage, single = [], {}, {}
    for i in range(n):
        golden = goldens[names[i % len(names)]]
        fault = FAULTS[i % len(FAULTS)]
        cid = f"a{i:02d}"
        broken = inject_fault(golden, registry, fault)
        cases.append(TaskCase(cid, fault, TaskSpec(f"task {names[i % len(names)].replace('_', ' ')}"),
                              Oracle(OracleKind.GOLDEN_EQUIVALENCE, golden)))
        two_stage[cid] = lambda style, b=broken, g=golden: two_stage_answers(b, style) + [program_answer(g, style)]
        single[cid] = lambda style, b=broken, g=golden: (
            [program_answer(drop_edge(b, 0), style)] + [program_answer(drop_edge(g, j), style) for j in range(1, 8)])

    def factory(scripts):
        return lambda case, style: ScriptedLm(scripts[case.id](SyntaxStyle.parse(style)))

    return cases, factory(two_stage), factory(single)
