"""Regenerate the bundled synthetic task suite and its response scripts.

Two cases per task category. The first reuses a reference program; the
second is a parameter variant with its own description. Scripts replay a
two-stage answer per syntax, with one repairable fault in most cases so the
refinement loop is exercised. Run from the repository root:

    python tools/make_suite.py
"""

from __future__ import annotations

import json
from pathlib import Path

from aflow.frontends import SyntaxStyle, emit, parse
from aflow.inference.scripts import inject_fault, program_answer, two_stage_answers
from aflow.registry import bundled_catalog

ROOT = Path(__file__).resolve().parents[1]
REFS = ROOT / "src/aflow/data/references"
SUITE = ROOT / "src/aflow/data/suite"
SCRIPTS = ROOT / "src/aflow/data/suite_scripts.json"

# (category, reference, variant description, variant edits, input list)
CATEGORIES = [
    ("Inpaint", "inpaint", "Fill the masked area of a kitchen photo with a bowl of lemons.",
     {"photo.path": "kitchen.png", "positive.text": "a bowl of lemons"}, [("photo", "image", "kitchen.png")]),
    ("Outpaint", "outpaint", "Widen a beach photo by 128 pixels on each side.",
     {"photo.path": "beach.png", "pad.left": 128, "pad.right": 128, "positive.text": "sandy beach, calm sea"},
     [("photo", "image", "beach.png")]),
    ("Img merge", "image_merge", "Blend a cat photo and a tiger photo into one creature, then overlay it on the cat photo.",
     {"img_a.path": "cat.png", "img_b.path": "tiger.png", "blend.conditioning_to_strength": 0.6},
     [("img_a", "image", "cat.png"), ("img_b", "image", "tiger.png")]),
    ("NVS", "novel_view", "Show the chair in the photo from directly behind.",
     {"photo.path": "chair.png", "view.azimuth": 180.0, "view.elevation": 0.0}, [("photo", "image", "chair.png")]),
    ("Merge model", "merge_model", "Merge two checkpoints half and half and render a test landscape.",
     {"merge.ratio": 0.5, "positive.text": "mountain lake at dawn"}, []),
    ("I-2-3D", "image_to_3d", "Reconstruct a 3D mesh of a toy robot from one photo at high resolution.",
     {"photo.path": "robot.png", "mesh.resolution": 1024}, [("photo", "image", "robot.png")]),
    ("T2I", "text_to_image", "Paint a snowy cabin in a pine forest at night.",
     {"positive.text": "a snowy cabin in a pine forest at night", "sampler.seed": 3}, []),
    ("T2A", "text_to_audio", "Generate five seconds of birdsong in a quiet forest.",
     {"audio.prompt": "birdsong in a quiet forest", "audio.seconds": 5.0}, []),
    ("Multi-view img", "multi_view", "Render a vase from the left, right and behind using one photo.",
     {"photo.path": "vase.png"}, [("photo", "image", "vase.png")]),
    ("I2V", "image_to_video", "Turn a photo of a campfire into a slow looping clip.",
     {"photo.path": "campfire.png", "video.motion": 0.3}, [("photo", "image", "campfire.png")]),
    ("T2M", "text_to_mesh", "Create a 3D model of a wooden chess knight.",
     {"positive.text": "a wooden chess knight, studio lighting, white background"}, []),
    ("T2V", "text_to_video", "Make a clip of fireflies over a meadow at dusk.",
     {"positive.text": "fireflies over a meadow at dusk", "sampler.seed": 4}, []),
]

SYNTAXES = [SyntaxStyle.DECLARATIVE, SyntaxStyle.DATAFLOW, SyntaxStyle.PSEUDO_NATURAL]
FAULT_CYCLE = [None, "gap", "bad_param", "unknown_type"]
NEVER_FIXED = "t2v-2"
WRONG_ANSWER = "t2i-1"
MALFORMED = "Sure! Here is the program you asked for, in prose rather than code."


def slug(category: str) -> str:
    return category.lower().replace(" ", "-").replace("i-2-3d", "i23d")


def main() -> None:
    registry = bundled_catalog()
    SUITE.mkdir(parents=True, exist_ok=True)
    for old in SUITE.glob("*.json"):
        old.unlink()
    scripts: dict[str, list[str]] = {}
    index = 0
    for c_idx, (category, ref, variant_text, edits, inputs) in enumerate(CATEGORIES):
        base = parse((REFS / f"{ref}.adl").read_text(), SyntaxStyle.DECLARATIVE).workflow
        variant = base.copy()
        for target, value in edits.items():
            node, name = target.split(".")
            variant.set_param(node, name, value)
        pairs = [
            (base, (REFS / f"{ref}.task.txt").read_text().strip(), "GoldenEquivalence"),
            (variant, variant_text, "ExecutesWithSim" if c_idx % 2 == 0 else "ValidatesCleanly"),
        ]
        for n, (golden, description, oracle) in enumerate(pairs, 1):
            case_id = f"{slug(category)}-{n}"
            style = SYNTAXES[index % 3]
            case = {
                "id": case_id,
                "category": category,
                "description": description,
                "inputs": [{"name": a, "modality": m, "uri": u} for a, m, u in (inputs if n == 2 else [])],
                "syntax": style.value,
                "oracle": {"kind": oracle},
            }
            if oracle == "GoldenEquivalence":
                case["oracle"].update({"syntax": "declarative", "program": emit(golden, SyntaxStyle.DECLARATIVE)})
            (SUITE / f"{case_id}.json").write_text(json.dumps(case, indent=2, ensure_ascii=False) + "\n")
            fault = FAULT_CYCLE[index % len(FAULT_CYCLE)]
            for s in SYNTAXES:
                if case_id == NEVER_FIXED:
                    script = [MALFORMED] * 5
                elif case_id == WRONG_ANSWER:
                    wrong = golden.copy().set_param("sampler", "seed", 8)
                    script = two_stage_answers(wrong, s)
                elif fault is None:
                    script = two_stage_answers(golden, s)
                else:
                    script = two_stage_answers(inject_fault(golden, registry, fault), s) + [program_answer(golden, s)]
                scripts[f"{case_id}@{s.value}"] = script
            index += 1
    SCRIPTS.write_text(json.dumps({"scripts": dict(sorted(scripts.items()))}, indent=1, ensure_ascii=False) + "\n")
    print(f"wrote {index} cases to {SUITE} and {len(scripts)} scripts to {SCRIPTS}")


if __name__ == "__main__":
    main()
