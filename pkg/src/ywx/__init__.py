"""Recover workflow structure from scripts annotated with structured comments.

Scripts declare computational blocks with ``@begin``/``@end`` comment pairs
and their dataflow with ``@in``/``@out``/``@param``. This package reads those
annotations, builds a nested workflow model, renders DOT graph views, answers
provenance queries, and checks the annotations for consistency. The ``ywx``
command exposes the same stages as a pipeline over JSON intermediates.
"""

from .annotations import (
    Annotation,
    AnnotationDocument,
    Tag,
    parse_annotation_file,
    parse_annotations,
    serialize_annotations,
)
from .comments import (
    LANGUAGES,
    CommentSyntax,
    SourceComment,
    detect_language,
    extract_comments,
    strip_comments,
)
from .errors import YwxError
from .model import (
    Block,
    Channel,
    Direction,
    Endpoint,
    Port,
    Role,
    WorkflowModel,
    build_blocks,
    build_model,
    infer_channels,
    parse_model,
    serialize_model,
)
from .queries import (
    Derivation,
    RunManifest,
    blocks_affected_by_input,
    build_dependency_graph,
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
    RenderOptions,
    load_style_file,
    render,
    render_combined_view,
    render_data_view,
    render_process_view,
)
from .validate import Diagnostic, validate_scripts, validate_sources

__version__ = "0.1.0"

__all__ = [
    "Annotation",
    "AnnotationDocument",
    "Block",
    "Channel",
    "CommentSyntax",
    "DEFAULT_STYLE",
    "Derivation",
    "Diagnostic",
    "Direction",
    "Endpoint",
    "LANGUAGES",
    "Port",
    "RenderOptions",
    "Role",
    "RunManifest",
    "SourceComment",
    "Tag",
    "WorkflowModel",
    "YwxError",
    "blocks_affected_by_input",
    "build_blocks",
    "build_dependency_graph",
    "build_model",
    "containing_blocks",
    "derivation",
    "deriving_blocks",
    "detect_language",
    "downstream_blocks",
    "extract_comments",
    "infer_channels",
    "infer_file_lineage",
    "list_blocks",
    "nested_blocks",
    "parse_annotation_file",
    "parse_annotations",
    "parse_manifest",
    "parse_model",
    "render",
    "render_combined_view",
    "render_data_view",
    "render_process_view",
    "serialize_annotations",
    "serialize_model",
    "step_input_sources",
    "strip_comments",
    "upstream_inputs",
    "validate_scripts",
    "validate_sources",
    "load_style_file",
    "__version__",
]
