"""Catalog of function types: ports, parameter specs, and parameter resolution."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

from .diagnostics import Diagnostic, ErrorCategory, Location
from .ir import Modality, ParamValue, is_identifier


class CatalogError(Exception):
    pass


class CatalogSyntaxError(CatalogError):
    pass


class DuplicateTypeName(CatalogError):
    pass


class InvalidSpec(CatalogError):
    pass


class UnknownFunction(KeyError):
    def __str__(self) -> str:
        return f"unknown function type {self.args[0]!r}"


class ParamKind(str, Enum):
    INT = "int"
    REAL = "real"
    STRING = "string"
    BOOL = "bool"
    CHOICE = "choice"


def _kind_accepts(kind: ParamKind, value: object) -> bool:
    if kind is ParamKind.BOOL:
        return isinstance(value, bool)
    if isinstance(value, bool):
        return False
    if kind is ParamKind.INT:
        return isinstance(value, int)
    if kind is ParamKind.REAL:
        return isinstance(value, (int, float)) and math.isfinite(value)
    return isinstance(value, str)


@dataclass(frozen=True)
class ParamSpec:
    name: str
    kind: ParamKind
    default: ParamValue | None = None
    range: tuple[float, float] | None = None
    choices: tuple[str, ...] | None = None
    required: bool = False

    def __post_init__(self) -> None:
        if not is_identifier(self.name):
            raise InvalidSpec(f"invalid parameter name {self.name!r}")
        if self.range is not None:
            if self.kind not in (ParamKind.INT, ParamKind.REAL):
                raise InvalidSpec(f"{self.name}: range only applies to numeric kinds")
            lo, hi = self.range
            if lo > hi:
                raise InvalidSpec(f"{self.name}: range min {lo} exceeds max {hi}")
        if self.kind is ParamKind.CHOICE and not self.choices:
            raise InvalidSpec(f"{self.name}: choice parameter needs choices")
        if self.default is not None:
            problem = self.problem(self.default)
            if problem:
                raise InvalidSpec(f"{self.name}: default {self.default!r} {problem}")

    def problem(self, value: object) -> str | None:
        """Why ``value`` is not acceptable for this parameter, or None."""
        if not _kind_accepts(self.kind, value):
            return f"is not of kind {self.kind.value}"
        if self.range is not None and not (self.range[0] <= value <= self.range[1]):  # type: ignore[operator]
            return f"is out of range [{self.range[0]}, {self.range[1]}]"
        if self.kind is ParamKind.CHOICE and value not in (self.choices or ()):
            return f"is not one of {list(self.choices or ())}"
        return None

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"name": self.name, "kind": self.kind.value}
        if self.default is not None:
            d["default"] = self.default
        if self.range is not None:
            d["range"] = list(self.range)
        if self.choices is not None:
            d["choices"] = list(self.choices)
        d["required"] = self.required
        return d


@dataclass(frozen=True)
class PortSpec:
    name: str
    modality: Modality
    required: bool = True

    def __post_init__(self) -> None:
        if not is_identifier(self.name):
            raise InvalidSpec(f"invalid port name {self.name!r}")


@dataclass(frozen=True)
class FunctionSchema:
    type_name: str
    inputs: tuple[PortSpec, ...]
    outputs: tuple[PortSpec, ...]
    params: tuple[ParamSpec, ...] = ()
    doc: str = ""
    terminal: bool = False

    def __post_init__(self) -> None:
        if not is_identifier(self.type_name):
            raise InvalidSpec(f"invalid type name {self.type_name!r}")
        if not self.outputs:
            raise InvalidSpec(f"{self.type_name}: needs at least one output")
        for group, label in ((self.inputs, "input"), (self.outputs, "output"), (self.params, "parameter")):
            names = [p.name for p in group]
            if len(set(names)) != len(names):
                raise InvalidSpec(f"{self.type_name}: duplicate {label} names")

    def input(self, name: str) -> PortSpec | None:
        return next((p for p in self.inputs if p.name == name), None)

    def output(self, name: str) -> PortSpec | None:
        return next((p for p in self.outputs if p.name == name), None)

    def output_index(self, name: str) -> int:
        for i, p in enumerate(self.outputs):
            if p.name == name:
                return i
        raise KeyError(name)

    def param(self, name: str) -> ParamSpec | None:
        return next((p for p in self.params if p.name == name), None)

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {
            "type": self.type_name,
            "doc": self.doc,
            "inputs": [{"name": p.name, "modality": p.modality.value, "required": p.required} for p in self.inputs],
            "outputs": [{"name": p.name, "modality": p.modality.value} for p in self.outputs],
            "params": [p.to_dict() for p in self.params],
        }
        if self.terminal:
            d["terminal"] = True
        return d


@dataclass(frozen=True)
class Registry:
    schemas: Mapping[str, FunctionSchema] = field(default_factory=dict)
    version: str = ""

    def __len__(self) -> int:
        return len(self.schemas)

    def __contains__(self, type_name: object) -> bool:
        return type_name in self.schemas

    def lookup(self, type_name: str) -> FunctionSchema:
        try:
            return self.schemas[type_name]
        except KeyError:
            raise UnknownFunction(type_name) from None

    def get(self, type_name: str) -> FunctionSchema | None:
        return self.schemas.get(type_name)

    def names(self) -> list[str]:
        return list(self.schemas)

    def summary(self) -> str:
        """One line per function; used in LM prompts."""
        lines = []
        for s in self.schemas.values():
            ins = ", ".join(f"{p.name}:{p.modality.value}{'' if p.required else '?'}" for p in s.inputs)
            outs = ", ".join(f"{p.name}:{p.modality.value}" for p in s.outputs)
            params = ", ".join(_param_summary(p) for p in s.params)
            line = f"- {s.type_name}({ins}) -> ({outs})"
            if params:
                line += f" params: {params}"
            if s.doc:
                line += f"  # {s.doc}"
            lines.append(line)
        return "\n".join(lines)


def _param_summary(p: ParamSpec) -> str:
    text = f"{p.name}:{p.kind.value}"
    if p.range is not None:
        text += f"[{p.range[0]},{p.range[1]}]"
    if p.choices:
        text += "{" + "|".join(p.choices) + "}"
    if p.required:
        text += " required"
    elif p.default is not None:
        text += f"={json.dumps(p.default)}"
    return text


def lookup(r: Registry, type_name: str) -> FunctionSchema:
    return r.lookup(type_name)


# -- catalog documents ------------------------------------------------------


def _parse_param(doc: Mapping[str, Any], where: str) -> ParamSpec:
    try:
        kind = ParamKind(doc["kind"])
    except (KeyError, ValueError) as exc:
        raise CatalogSyntaxError(f"{where}: bad parameter kind") from exc
    rng = doc.get("range")
    if rng is not None:
        if not (isinstance(rng, list) and len(rng) == 2):
            raise CatalogSyntaxError(f"{where}: range must be [min, max]")
        rng = (rng[0], rng[1])
    choices = doc.get("choices")
    return ParamSpec(
        name=doc["name"],
        kind=kind,
        default=doc.get("default"),
        range=rng,
        choices=tuple(choices) if choices is not None else None,
        required=bool(doc.get("required", False)),
    )


def _parse_port(doc: Mapping[str, Any], where: str, is_input: bool) -> PortSpec:
    try:
        modality = Modality(doc["modality"])
    except (KeyError, ValueError) as exc:
        raise CatalogSyntaxError(f"{where}: bad modality") from exc
    return PortSpec(doc["name"], modality, bool(doc.get("required", True)) if is_input else True)


def load_catalog(document: bytes | str) -> Registry:
    try:
        doc = json.loads(document)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CatalogSyntaxError(f"catalog is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("functions"), list):
        raise CatalogSyntaxError('catalog needs a "functions" list')
    schemas: dict[str, FunctionSchema] = {}
    for i, fn in enumerate(doc["functions"]):
        where = f"functions[{i}]"
        try:
            name = fn["type"]
            schema = FunctionSchema(
                type_name=name,
                inputs=tuple(_parse_port(p, f"{where}.inputs", True) for p in fn.get("inputs", [])),
                outputs=tuple(_parse_port(p, f"{where}.outputs", False) for p in fn.get("outputs", [])),
                params=tuple(_parse_param(p, f"{where}.params") for p in fn.get("params", [])),
                doc=fn.get("doc", ""),
                terminal=bool(fn.get("terminal", False)),
            )
        except (KeyError, TypeError) as exc:
            raise CatalogSyntaxError(f"{where}: malformed entry ({exc})") from exc
        if name in schemas:
            raise DuplicateTypeName(name)
        schemas[name] = schema
    return Registry(schemas, str(doc.get("version", "")))


def save_catalog(r: Registry) -> bytes:
    doc = {"version": r.version, "functions": [s.to_dict() for s in r.schemas.values()]}
    return (json.dumps(doc, indent=2, ensure_ascii=False) + "\n").encode()


def load_catalog_file(path: str | Path) -> Registry:
    return load_catalog(Path(path).read_bytes())


def bundled_catalog() -> Registry:
    return load_catalog(resources.files("aflow").joinpath("data/catalog/test.json").read_bytes())


# -- parameter resolution ---------------------------------------------------


def resolve_params(
    schema: FunctionSchema, given: Mapping[str, Any]
) -> tuple[dict[str, ParamValue], list[Diagnostic]]:
    """Bind every declared parameter; report invalid, unknown and missing ones.

    Diagnostics carry only the parameter name; the validator attaches the node.
    """
    resolved: dict[str, ParamValue] = {}
    diags: list[Diagnostic] = []
    for name in given:
        if schema.param(name) is None:
            diags.append(
                Diagnostic(
                    ErrorCategory.INVALID_PARAMETER,
                    f"unknown name {name!r} for {schema.type_name}",
                    Location(param=name),
                )
            )
    for spec in schema.params:
        if spec.name in given:
            value = given[spec.name]
            problem = spec.problem(value)
            if problem is None:
                resolved[spec.name] = value
                continue
            diags.append(
                Diagnostic(
                    ErrorCategory.INVALID_PARAMETER,
                    f"{spec.name}={value!r} {problem}",
                    Location(param=spec.name),
                )
            )
        if spec.default is not None:
            resolved.setdefault(spec.name, spec.default)
        elif spec.name not in given:
            if spec.required:
                diags.append(
                    Diagnostic(
                        ErrorCategory.INVALID_PARAMETER,
                        f"missing required parameter {spec.name!r}",
                        Location(param=spec.name),
                    )
                )
            else:
                resolved[spec.name] = _zero(spec)
    return resolved, diags


def _zero(spec: ParamSpec) -> ParamValue:
    # Optional parameter without a default: bind the kind's neutral value so
    # the resolved map is always complete.
    if spec.kind is ParamKind.CHOICE:
        return (spec.choices or ("",))[0]
    if spec.kind in (ParamKind.INT, ParamKind.REAL):
        zero: int | float = 0 if spec.kind is ParamKind.INT else 0.0
        if spec.range is not None and not (spec.range[0] <= zero <= spec.range[1]):
            zero = spec.range[0]
        return zero
    return {ParamKind.STRING: "", ParamKind.BOOL: False}[spec.kind]


# -- ComfyUI /object_info mapping -------------------------------------------

_COMFY_MODALITY = {
    "IMAGE": Modality.IMAGE,
    "LATENT": Modality.LATENT,
    "CONDITIONING": Modality.CONDITIONING,
    "MASK": Modality.MASK,
    "AUDIO": Modality.AUDIO,
    "VIDEO": Modality.VIDEO,
    "MESH": Modality.MESH,
    "MODEL": Modality.MODEL,
    "CLIP": Modality.MODEL,
    "VAE": Modality.MODEL,
    "CLIP_VISION": Modality.MODEL,
    "CONTROL_NET": Modality.MODEL,
    "UPSCALE_MODEL": Modality.MODEL,
    "STYLE_MODEL": Modality.MODEL,
    "CLIP_VISION_OUTPUT": Modality.CONDITIONING,
    "STRING": Modality.TEXT,
    "INT": Modality.NUMBER,
    "FLOAT": Modality.NUMBER,
}
_WIDGET_KINDS = {"INT": ParamKind.INT, "FLOAT": ParamKind.REAL, "STRING": ParamKind.STRING, "BOOLEAN": ParamKind.BOOL}


def _sanitize(name: str, taken: set[str]) -> str:
    base = "".join(ch if ch.isalnum() or ch == "_" else "_" for ch in name) or "OUT"
    if base[0].isdigit():
        base = "_" + base
    candidate, n = base, 1
    while candidate in taken:
        n += 1
        candidate = f"{base}_{n}"
    taken.add(candidate)
    return candidate


def registry_from_object_info(info: Mapping[str, Any], version: str = "comfyui") -> tuple[Registry, list[str]]:
    """Map a ComfyUI ``/object_info`` response onto a Registry.

    Returns the registry plus a list of human-readable notes about skipped
    classes. Output-only classes without outputs get a synthetic ``RESULT``
    port of modality ``any`` because every schema needs an output.
    """
    schemas: dict[str, FunctionSchema] = {}
    notes: list[str] = []
    for class_name, entry in info.items():
        if not is_identifier(class_name):
            notes.append(f"skipped {class_name!r}: class name is not an identifier")
            continue
        try:
            schemas[class_name] = _schema_from_object_info(class_name, entry)
        except (InvalidSpec, KeyError, TypeError, ValueError) as exc:
            notes.append(f"skipped {class_name}: {exc}")
    return Registry(schemas, version), notes


def _schema_from_object_info(class_name: str, entry: Mapping[str, Any]) -> FunctionSchema:
    inputs: list[PortSpec] = []
    params: list[ParamSpec] = []
    groups = entry.get("input", {})
    for group in ("required", "optional"):
        for name, spec in (groups.get(group) or {}).items():
            required = group == "required"
            if not is_identifier(name):
                raise InvalidSpec(f"input {name!r} is not an identifier")
            type_tag, opts = spec[0], (spec[1] if len(spec) > 1 and isinstance(spec[1], dict) else {})
            if isinstance(type_tag, list):
                choices = tuple(str(c) for c in type_tag)
                if not choices:
                    continue
                default = opts.get("default", choices[0])
                params.append(ParamSpec(name, ParamKind.CHOICE, default if default in choices else choices[0],
                                        choices=choices, required=False))
            elif type_tag in _WIDGET_KINDS and not opts.get("forceInput"):
                kind = _WIDGET_KINDS[type_tag]
                rng = None
                if kind in (ParamKind.INT, ParamKind.REAL) and "min" in opts and "max" in opts:
                    rng = (opts["min"], opts["max"])
                default = opts.get("default")
                if default is not None and not _kind_accepts(kind, default):
                    default = None
                if default is not None and rng is not None and not (rng[0] <= default <= rng[1]):
                    default = None
                params.append(ParamSpec(name, kind, default, range=rng, required=required and default is None))
            else:
                modality = Modality.ANY if type_tag == "*" else _COMFY_MODALITY.get(str(type_tag), Modality.ANY)
                inputs.append(PortSpec(name, modality, required))
    taken: set[str] = set()
    names = entry.get("output_name") or entry.get("output") or []
    outputs = [
        PortSpec(_sanitize(str(label), taken), _COMFY_MODALITY.get(str(tag), Modality.ANY))
        for label, tag in zip(names, entry.get("output") or [])
    ]
    if not outputs:
        outputs = [PortSpec("RESULT", Modality.ANY)]
    return FunctionSchema(
        class_name,
        tuple(inputs),
        tuple(outputs),
        tuple(params),
        doc=str(entry.get("description") or entry.get("display_name") or ""),
        terminal=bool(entry.get("output_node", False)),
    )
