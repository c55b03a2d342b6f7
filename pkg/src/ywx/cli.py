"""The ywx command line: extract, model, graph, query, validate.

Each subcommand starts from script files or from a serialized intermediate
(an annotation listing or a model, both JSON), so any stage can be replayed
from the previous stage's output file. Results are deterministic: running a
pipeline in stages through files yields byte-identical output to running the
final stage straight from the scripts.

Exit status: 0 on success, 1 when validate reports errors, 2 for usage or
input problems.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .annotations import (
    Annotation,
    AnnotationDocument,
    parse_annotation_file,
    parse_annotations,
    serialize_annotations,
)
from .comments import detect_language, extract_comments
from .errors import FormatMismatch, UsageError, YwxError
from .model import (
    WorkflowModel,
    build_model,
    ensure_balanced,
    parse_model,
    serialize_model,
)
from .queries import (
    blocks_affected_by_input,
    containing_blocks,
    derivation,
    deriving_blocks,
    downstream_blocks,
    infer_file_lineage,
    list_blocks,
    nested_blocks,
    parse_manifest,
    step_input_sources,
    upstream_inputs,
)
from .render import (
    DEFAULT_STYLE,
    RANKDIRS,
    VIEWS,
    RenderOptions,
    load_style_file,
    render,
)
from .validate import (
    diagnostics_as_dicts,
    format_diagnostics,
    has_errors,
    validate_scripts,
)

QUERY_NAMES = (
    "blocks",
    "nested",
    "containers",
    "downstream",
    "affected-by",
    "upstream-inputs",
    "deriving-blocks",
    "derivation",
    "sources",
    "lineage",
    "invoking-blocks",
)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ywx",
        description="Recover and inspect workflow structure from annotated scripts.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_io(sp: argparse.ArgumentParser, multi: bool = True) -> None:
        if multi:
            sp.add_argument("inputs", nargs="+", metavar="INPUT")
        else:
            sp.add_argument("input", metavar="SCRIPT")
        sp.add_argument("-l", "--language", help="comment syntax override")
        sp.add_argument("-o", "--output", help="write output to FILE instead of stdout")

    sp = sub.add_parser("extract", help="list a script's annotations as JSON")
    add_io(sp, multi=False)

    sp = sub.add_parser("model", help="build the workflow model as JSON")
    add_io(sp)

    sp = sub.add_parser("graph", help="render a DOT graph view of the model")
    add_io(sp)
    sp.add_argument("--view", choices=VIEWS, default="process")
    sp.add_argument("--rankdir", choices=RANKDIRS, default="LR")
    sp.add_argument("--focus", help="qualified name of the workflow to draw")
    sp.add_argument(
        "--nested",
        action="store_true",
        help="draw sub-workflows as nested clusters",
    )
    sp.add_argument(
        "--de-emphasize-params",
        dest="de_emphasize_params",
        action="store_true",
        help="draw parameter channels and nodes in a muted style",
    )

    sp = sub.add_parser("query", help="answer structure and provenance questions")
    sp.add_argument("subquery", choices=QUERY_NAMES)
    add_io(sp)
    sp.add_argument("--block", help="block name (qualified, or simple if unique)")
    sp.add_argument("--name", help="data, port, or file name")
    sp.add_argument("--manifest", help="run manifest JSON file (lineage)")
    sp.add_argument(
        "--direction", choices=("upstream", "downstream"), default="upstream"
    )
    sp.add_argument("--json", action="store_true", help="machine-readable output")

    sp = sub.add_parser("validate", help="check annotations for consistency")
    add_io(sp)
    sp.add_argument("--json", action="store_true", help="machine-readable output")
    return parser


# -- input handling -----------------------------------------------------------

def _is_intermediate(path: str) -> bool:
    return Path(path).suffix.lower() == ".json"


def _read_script(path: str, language: str | None) -> list[Annotation]:
    syntax = detect_language(path, language)
    text = Path(path).read_text()
    return parse_annotations(extract_comments(text, syntax, file=path))


def _load_intermediate(path: str) -> AnnotationDocument | WorkflowModel:
    text = Path(path).read_text()
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatMismatch(
            f"{path} is not valid JSON: {exc.msg}", file=path, line=exc.lineno
        ) from exc
    if isinstance(payload, dict) and "annotations" in payload:
        return parse_annotation_file(text)
    if isinstance(payload, dict) and "root" in payload and "channels" in payload:
        return parse_model(text)
    raise FormatMismatch(
        f"{path} is neither an annotation listing nor a model file", file=path
    )


def _model_from_inputs(
    paths: list[str], language: str | None, allow_model: bool = True
) -> WorkflowModel:
    json_inputs = [p for p in paths if _is_intermediate(p)]
    if json_inputs:
        if len(paths) > 1:
            raise FormatMismatch(
                "an intermediate JSON file must be the only input",
                file=json_inputs[0],
            )
        loaded = _load_intermediate(paths[0])
        if isinstance(loaded, WorkflowModel):
            if not allow_model:
                raise FormatMismatch(
                    f"{paths[0]} already holds a model; pass scripts or an "
                    "annotation listing",
                    file=paths[0],
                )
            return loaded
        return build_model(
            loaded.annotations,
            root_name=Path(loaded.source_file).stem,
            source_files=[loaded.source_file],
        )
    merged: list[Annotation] = []
    for path in paths:
        annotations = _read_script(path, language)
        ensure_balanced(annotations)
        merged.extend(annotations)
    return build_model(
        merged, root_name=Path(paths[0]).stem, source_files=list(paths)
    )


def _write(text: str, output: str | None) -> None:
    if output:
        Path(output).write_text(text)
    else:
        sys.stdout.write(text)


def _as_lines(items: list[str]) -> str:
    return "".join(item + "\n" for item in items)


def _as_json(payload: object) -> str:
    return json.dumps(payload, indent=2) + "\n"


# -- subcommands ---------------------------------------------------------------

def _cmd_extract(args: argparse.Namespace) -> int:
    if _is_intermediate(args.input):
        raise FormatMismatch(
            "extract starts from a script, not an intermediate file",
            file=args.input,
        )
    syntax = detect_language(args.input, args.language)
    text = Path(args.input).read_text()
    annotations = parse_annotations(extract_comments(text, syntax, file=args.input))
    doc = AnnotationDocument(args.input, syntax.language_name, tuple(annotations))
    _write(serialize_annotations(doc), args.output)
    return 0


def _cmd_model(args: argparse.Namespace) -> int:
    model = _model_from_inputs(args.inputs, args.language, allow_model=False)
    _write(serialize_model(model), args.output)
    return 0


def _cmd_graph(args: argparse.Namespace) -> int:
    model = _model_from_inputs(args.inputs, args.language)
    style = DEFAULT_STYLE
    style_path = os.environ.get("YWX_STYLE")
    if style_path:
        style = load_style_file(style_path)
    options = RenderOptions(
        view=args.view,
        rankdir=args.rankdir,
        focus=args.focus,
        nested=args.nested,
        de_emphasize_params=args.de_emphasize_params,
    )
    _write(render(model, options, style), args.output)
    return 0


def _require(value: str | None, flag: str, subquery: str) -> str:
    if value is None:
        raise UsageError(f"query {subquery} requires {flag}")
    return value


def _cmd_query(args: argparse.Namespace) -> int:
    sub = args.subquery
    if sub == "invoking-blocks":
        raise UsageError(
            "query invoking-blocks is unsupported: requires function annotations"
        )
    model = _model_from_inputs(args.inputs, args.language)
    if sub == "blocks":
        rows = list_blocks(model)
        payload = [
            {"qualified_name": name, "description": description}
            for name, description in rows
        ]
        lines = [
            f"{name}: {description}" if description else name
            for name, description in rows
        ]
    elif sub == "nested":
        names = nested_blocks(model, _require(args.block, "--block", sub))
        payload, lines = names, names
    elif sub == "containers":
        names = containing_blocks(model, _require(args.block, "--block", sub))
        payload, lines = names, names
    elif sub == "downstream":
        names = sorted(downstream_blocks(model, _require(args.block, "--block", sub)))
        payload, lines = names, names
    elif sub == "affected-by":
        names = sorted(
            blocks_affected_by_input(model, _require(args.name, "--name", sub))
        )
        payload, lines = names, names
    elif sub == "upstream-inputs":
        names = sorted(upstream_inputs(model, _require(args.name, "--name", sub)))
        payload, lines = names, names
    elif sub == "deriving-blocks":
        names = sorted(deriving_blocks(model, _require(args.name, "--name", sub)))
        payload, lines = names, names
    elif sub == "derivation":
        result = derivation(model, _require(args.name, "--name", sub))
        payload = {
            "target": result.target,
            "steps": [
                {
                    "block": step.block,
                    "consumed": list(step.consumed),
                    "produced": step.produced,
                }
                for step in result.steps
            ],
        }
        lines = [
            f"{i}. {step.block} ({', '.join(step.consumed)}) -> {step.produced}"
            for i, step in enumerate(result.steps, start=1)
        ]
    elif sub == "sources":
        found = step_input_sources(model, _require(args.block, "--block", sub))
        payload = [
            {"port": s.port, "kind": s.kind, "block": s.block} for s in found
        ]
        lines = []
        for s in found:
            suffix = f" {s.block}" if s.block else ""
            lines.append(f"{s.port}: {s.kind}{suffix}")
    else:  # lineage
        manifest_path = _require(args.manifest, "--manifest", sub)
        manifest = parse_manifest(Path(manifest_path).read_text(), model)
        records = infer_file_lineage(
            model, manifest, args.direction, _require(args.name, "--name", sub)
        )
        payload = [
            {"file": r.file, "port": r.port, "role": r.role} for r in records
        ]
        lines = [f"{r.file} (via {r.port}, {r.role})" for r in records]
    _write(_as_json(payload) if args.json else _as_lines(lines), args.output)
    return 0


def _cmd_validate(args: argparse.Namespace) -> int:
    for path in args.inputs:
        if _is_intermediate(path):
            raise FormatMismatch(
                "validate needs the scripts themselves, not intermediates",
                file=path,
            )
    diagnostics = validate_scripts(args.inputs, args.language)
    if args.json:
        text = _as_json(diagnostics_as_dicts(diagnostics))
    else:
        text = format_diagnostics(diagnostics)
        if text:
            text += "\n"
    _write(text, args.output)
    return 1 if has_errors(diagnostics) else 0


_COMMANDS = {
    "extract": _cmd_extract,
    "model": _cmd_model,
    "graph": _cmd_graph,
    "query": _cmd_query,
    "validate": _cmd_validate,
}


def run(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        return _COMMANDS[args.command](args)
    except YwxError as exc:
        print(f"ywx: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"ywx: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(run())
