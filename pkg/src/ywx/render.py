"""DOT rendering of workflow models.

Three views of one model: the process view draws blocks as boxes joined by
edges labeled with data names; the data view promotes the data to nodes and
pushes block names onto edge labels; the combined view shows both as a
bipartite graph. Output is plain DOT text, byte-deterministic for a given
model and option set: nodes appear in source-document order, edges sorted
by (source, sink, label), and every identifier is quoted.

With ``nested=True`` each sub-workflow of the focus becomes a cluster
subgraph. Channels whose endpoint is a sub-workflow boundary port are then
flattened through that boundary to the producing and consuming blocks on
either side; a boundary port with nothing on the far side renders as a
stub terminal inside its cluster.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .errors import StyleError, UnknownFocus
from .model import (
    Block,
    Channel,
    Direction,
    Endpoint,
    Port,
    Role,
    WorkflowModel,
    find_block,
    iter_blocks,
    parent_map,
)

DEFAULT_STYLE: dict[str, str] = {
    "shape.program": "box",
    "shape.data": "oval",
    "shape.input": "circle",
    "shape.output": "circle",
    "param.edge.style": "dashed",
    "param.edge.color": "gray",
    "param.node.color": "gray",
    "param.node.fontcolor": "gray",
}

VIEWS = ("process", "data", "combined")
RANKDIRS = ("LR", "TB")


def load_style_file(path: str | Path) -> dict[str, str]:
    """Read a key=value style file; unknown keys are rejected."""
    style = dict(DEFAULT_STYLE)
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not sep or not value:
            raise StyleError(
                f"expected key=value, got {line!r}", file=str(path), line=lineno
            )
        if key not in DEFAULT_STYLE:
            raise StyleError(f"unknown style key {key!r}", file=str(path), line=lineno)
        style[key] = value
    return style


@dataclass(frozen=True)
class RenderOptions:
    view: str = "process"
    rankdir: str = "LR"
    focus: str | None = None
    nested: bool = False
    de_emphasize_params: bool = False


def _q(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


@dataclass
class _Node:
    id: str
    attrs: tuple[tuple[str, str], ...]
    anchor: tuple
    cluster: str | None


@dataclass
class _ClusterDef:
    qname: str
    label: str
    parent: str | None
    anchor: tuple


class _Sheet:
    """Accumulates nodes, clusters, and edges before text emission."""

    def __init__(self, ctx: "_Ctx") -> None:
        self.ctx = ctx
        self.nodes: dict[str, _Node] = {}
        self.clusters: dict[str, _ClusterDef] = {}
        self.edges: dict[tuple[str, str, str], bool] = {}

    def add_node(self, node: _Node) -> None:
        self.nodes.setdefault(node.id, node)

    def add_edge(self, src: str, dst: str, label: str, param: bool) -> None:
        key = (src, dst, label)
        self.edges[key] = self.edges.get(key, False) or param

    def add_clusters_for_subworkflows(self) -> None:
        ctx = self.ctx
        for wf in iter_blocks(ctx.focus):
            if not wf.is_workflow or wf is ctx.focus:
                continue
            parent = ctx.parents[wf.qualified_name]
            self.clusters[wf.qualified_name] = _ClusterDef(
                wf.qualified_name,
                wf.name,
                None if parent == ctx.focus.qualified_name else parent,
                ctx.anchor(wf.file, wf.span[0], "cluster_" + wf.qualified_name),
            )

    def emit(self, rankdir: str) -> str:
        lines = [
            f"digraph {_q(self.ctx.focus.qualified_name)} {{",
            f"  rankdir={_q(rankdir)}",
        ]
        by_cluster: dict[str | None, list] = {}
        for node in self.nodes.values():
            by_cluster.setdefault(node.cluster, []).append(node)
        for cluster in self.clusters.values():
            by_cluster.setdefault(cluster.parent, []).append(cluster)

        def emit_level(owner: str | None, indent: str) -> None:
            for item in sorted(by_cluster.get(owner, []), key=lambda x: x.anchor):
                if isinstance(item, _ClusterDef):
                    lines.append(f"{indent}subgraph {_q('cluster_' + item.qname)} {{")
                    lines.append(f"{indent}  label={_q(item.label)}")
                    emit_level(item.qname, indent + "  ")
                    lines.append(f"{indent}}}")
                else:
                    rendered = ", ".join(f"{k}={_q(v)}" for k, v in item.attrs)
                    lines.append(f"{indent}{_q(item.id)} [{rendered}]")

        emit_level(None, "  ")
        style = self.ctx.style
        for (src, dst, label), param in sorted(self.edges.items()):
            attrs: list[tuple[str, str]] = []
            if label:
                attrs.append(("label", label))
            if param and self.ctx.de_emphasize_params:
                attrs.append(("style", style["param.edge.style"]))
                attrs.append(("color", style["param.edge.color"]))
            if attrs:
                rendered = ", ".join(f"{k}={_q(v)}" for k, v in attrs)
                lines.append(f"  {_q(src)} -> {_q(dst)} [{rendered}]")
            else:
                lines.append(f"  {_q(src)} -> {_q(dst)}")
        lines.append("}")
        return "\n".join(lines) + "\n"


class _Ctx:
    def __init__(self, model: WorkflowModel, options: RenderOptions, style: dict) -> None:
        self.model = model
        self.style = style
        self.nested = options.nested
        self.de_emphasize_params = options.de_emphasize_params
        focus_q = options.focus or model.root.qualified_name
        focus = find_block(model.root, focus_q)
        if focus is None or not focus.is_workflow:
            raise UnknownFocus(f"{focus_q!r} does not name a workflow")
        self.focus = focus
        self.blocks = {b.qualified_name: b for b in iter_blocks(model.root)}
        self.parents = parent_map(model.root)
        self.depth = {
            q: (0 if p is None else -1) for q, p in self.parents.items()
        }
        for q in sorted(self.parents, key=lambda q: q.count(".")):
            parent = self.parents[q]
            if parent is not None:
                self.depth[q] = self.depth[parent] + 1
        self.file_idx = {path: i for i, path in enumerate(model.source_files)}
        self.chan: dict[tuple[str, str], Channel] = {
            (ch.scope, ch.data): ch for ch in model.channels
        }

    def anchor(self, file: str, line: int, node_id: str) -> tuple:
        return (self.file_idx.get(file, len(self.file_idx)), line, node_id)

    def port_of(self, block_q: str, name: str, direction: Direction) -> Port | None:
        for port in self.blocks[block_q].ports:
            if port.name == name and port.direction == direction:
                return port
        return None

    def in_subtree(self, scope_q: str) -> bool:
        focus_q = self.focus.qualified_name
        return scope_q == focus_q or scope_q.startswith(focus_q + ".")

    def scoped_channels(self) -> list[Channel]:
        """Channels drawn by the current options: focus scope, or its subtree."""
        if self.nested:
            return [ch for ch in self.model.channels if self.in_subtree(ch.scope)]
        return [ch for ch in self.model.channels if ch.scope == self.focus.qualified_name]

    def drawn_blocks(self) -> list[Block]:
        """Blocks that appear as boxes: children of focus, or subtree programs."""
        if self.nested:
            return [b for b in iter_blocks(self.focus) if not b.is_workflow]
        return list(self.focus.children)

    def cluster_of(self, block_q: str) -> str | None:
        if not self.nested:
            return None
        parent = self.parents[block_q]
        return None if parent == self.focus.qualified_name or parent is None else parent


def _block_node(ctx: _Ctx, sheet: _Sheet, block: Block) -> str:
    node_id = block.qualified_name
    sheet.add_node(
        _Node(
            node_id,
            (("shape", ctx.style["shape.program"]), ("label", block.name)),
            ctx.anchor(block.file, block.span[0], node_id),
            ctx.cluster_of(block.qualified_name),
        )
    )
    return node_id


def _terminal_node(ctx: _Ctx, sheet: _Sheet, owner_q: str, port: Port) -> str:
    kind = port.direction.value
    node_id = f"port:{kind}:{owner_q}:{port.name}"
    shape_key = "shape.input" if port.direction is Direction.IN else "shape.output"
    attrs: list[tuple[str, str]] = [
        ("shape", ctx.style[shape_key]),
        ("label", port.name),
    ]
    if port.role is Role.PARAMETER and ctx.de_emphasize_params:
        attrs.append(("color", ctx.style["param.node.color"]))
        attrs.append(("fontcolor", ctx.style["param.node.fontcolor"]))
    cluster = None
    if ctx.nested and owner_q != ctx.focus.qualified_name:
        cluster = owner_q
    sheet.add_node(
        _Node(node_id, tuple(attrs), ctx.anchor(port.file, port.line, node_id), cluster)
    )
    return node_id


# -- process view -----------------------------------------------------------

def _resolve_producers(ctx: _Ctx, sheet: _Sheet, ch: Channel, seen: frozenset) -> set[str]:
    src = ch.source
    data = ch.data
    if src.block == ch.scope:  # fed by the scope workflow's own in port
        if ch.scope == ctx.focus.qualified_name:
            port = ctx.port_of(ch.scope, data, Direction.IN)
            return {_terminal_node(ctx, sheet, ch.scope, port)}
        outer_key = (ctx.parents[ch.scope], data)
        outer = ctx.chan.get(outer_key)
        if outer is None or outer_key in seen:
            port = ctx.port_of(ch.scope, data, Direction.IN)
            return {_terminal_node(ctx, sheet, ch.scope, port)}
        return _resolve_producers(ctx, sheet, outer, seen | {outer_key})
    block = ctx.blocks[src.block]
    if not block.is_workflow:
        return {_block_node(ctx, sheet, block)}
    inner_key = (src.block, data)
    inner = ctx.chan.get(inner_key)
    if inner is None or inner_key in seen:
        port = ctx.port_of(src.block, data, Direction.OUT)
        return {_terminal_node(ctx, sheet, src.block, port)}
    return _resolve_producers(ctx, sheet, inner, seen | {inner_key})


def _resolve_consumers(ctx: _Ctx, sheet: _Sheet, ch: Channel, seen: frozenset) -> set[str]:
    found: set[str] = set()
    data = ch.data
    for sink in ch.sinks:
        if sink.block == ch.scope:  # drains into the scope workflow's own out port
            if ch.scope == ctx.focus.qualified_name:
                port = ctx.port_of(ch.scope, data, Direction.OUT)
                found.add(_terminal_node(ctx, sheet, ch.scope, port))
                continue
            outer_key = (ctx.parents[ch.scope], data)
            outer = ctx.chan.get(outer_key)
            if (
                outer is None
                or outer_key in seen
                or outer.source.block != ch.scope
                or outer.source.direction is not Direction.OUT
            ):
                port = ctx.port_of(ch.scope, data, Direction.OUT)
                found.add(_terminal_node(ctx, sheet, ch.scope, port))
                continue
            found |= _resolve_consumers(ctx, sheet, outer, seen | {outer_key})
            continue
        block = ctx.blocks[sink.block]
        if not block.is_workflow:
            found.add(_block_node(ctx, sheet, block))
            continue
        inner_key = (sink.block, data)
        inner = ctx.chan.get(inner_key)
        if inner is None or inner_key in seen or inner.source.block != sink.block:
            port = ctx.port_of(sink.block, data, Direction.IN)
            found.add(_terminal_node(ctx, sheet, sink.block, port))
            continue
        found |= _resolve_consumers(ctx, sheet, inner, seen | {inner_key})
    return found


def render_process_view(
    model: WorkflowModel,
    options: RenderOptions | None = None,
    style: dict[str, str] | None = None,
) -> str:
    options = _with_view(options, "process")
    ctx = _Ctx(model, options, style or DEFAULT_STYLE)
    sheet = _Sheet(ctx)
    if ctx.nested:
        sheet.add_clusters_for_subworkflows()
    for block in ctx.drawn_blocks():
        _block_node(ctx, sheet, block)
    for port in ctx.focus.ports:
        _terminal_node(ctx, sheet, ctx.focus.qualified_name, port)
    focus_q = ctx.focus.qualified_name
    for ch in ctx.scoped_channels():
        if not ctx.nested:
            if ch.source.block == focus_q:
                port = ctx.port_of(focus_q, ch.data, Direction.IN)
                sources = {_terminal_node(ctx, sheet, focus_q, port)}
            else:
                sources = {ch.source.block}
            sinks = set()
            for sink in ch.sinks:
                if sink.block == focus_q:
                    port = ctx.port_of(focus_q, ch.data, Direction.OUT)
                    sinks.add(_terminal_node(ctx, sheet, focus_q, port))
                else:
                    sinks.add(sink.block)
        else:
            start = frozenset({(ch.scope, ch.data)})
            sources = _resolve_producers(ctx, sheet, ch, start)
            sinks = _resolve_consumers(ctx, sheet, ch, start)
        param = ch.role is Role.PARAMETER
        for src in sources:
            for dst in sinks:
                sheet.add_edge(src, dst, ch.data, param)
    return sheet.emit(options.rankdir)


# -- data grouping (shared by data and combined views) ------------------------

@dataclass
class _DataGroup:
    name: str
    keys: set = field(default_factory=set)
    param: bool = False

    rep_scope: str = ""


def _data_groups(ctx: _Ctx) -> dict[tuple[str, str], _DataGroup]:
    """Map every in-scope (scope, data-name) key to its display group.

    Non-nested: one group per focus-scope name. Nested: groups across the
    focus subtree, with keys on either side of a workflow boundary merged
    when a channel actually crosses it; the display scope is the outermost
    member.
    """
    focus_q = ctx.focus.qualified_name
    keys: set[tuple[str, str]] = set()
    for ch in ctx.scoped_channels():
        keys.add((ch.scope, ch.data))
    for port in ctx.focus.ports:
        keys.add((focus_q, port.name))

    parent_of: dict[tuple[str, str], tuple[str, str]] = {k: k for k in keys}

    def find(k: tuple[str, str]) -> tuple[str, str]:
        while parent_of[k] != k:
            parent_of[k] = parent_of[parent_of[k]]
            k = parent_of[k]
        return k

    def union(a: tuple[str, str], b: tuple[str, str]) -> None:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent_of[ra] = rb

    if ctx.nested:
        for ch in ctx.scoped_channels():
            scope = ch.scope
            if scope == focus_q:
                continue
            key = (scope, ch.data)
            outer_key = (ctx.parents[scope], ch.data)
            outer = ctx.chan.get(outer_key)
            if outer is None or outer_key not in keys:
                continue
            feeds_in = (
                ch.source == Endpoint(scope, Direction.IN)
                and Endpoint(scope, Direction.IN) in outer.sinks
            )
            drains_out = (
                Endpoint(scope, Direction.OUT) in ch.sinks
                and outer.source == Endpoint(scope, Direction.OUT)
            )
            if feeds_in or drains_out:
                union(key, outer_key)

    groups: dict[tuple[str, str], _DataGroup] = {}
    for key in keys:
        root_key = find(key)
        group = groups.get(root_key)
        if group is None:
            group = _DataGroup(name=key[1])
            groups[root_key] = group
        group.keys.add(key)
    for group in groups.values():
        group.rep_scope = min(
            (scope for scope, _ in group.keys),
            key=lambda s: (ctx.depth[s], s),
        )
        for key in group.keys:
            ch = ctx.chan.get(key)
            if ch is not None and ch.role is Role.PARAMETER:
                group.param = True
        if not group.param:
            for port in ctx.focus.ports:
                if (focus_q, port.name) in group.keys and port.role is Role.PARAMETER:
                    group.param = True
    return {key: groups[find(key)] for key in keys}


def _data_node(ctx: _Ctx, sheet: _Sheet, group: _DataGroup) -> str:
    node_id = f"data:{group.rep_scope}:{group.name}"
    attrs: list[tuple[str, str]] = [
        ("shape", ctx.style["shape.data"]),
        ("label", group.name),
    ]
    if group.param and ctx.de_emphasize_params:
        attrs.append(("color", ctx.style["param.node.color"]))
        attrs.append(("fontcolor", ctx.style["param.node.fontcolor"]))
    anchors = []
    for scope, name in group.keys:
        ch = ctx.chan.get((scope, name))
        if ch is not None:
            for endpoint in [ch.source, *ch.sinks]:
                port = ctx.port_of(endpoint.block, name, endpoint.direction)
                if port is not None:
                    anchors.append(ctx.anchor(port.file, port.line, node_id))
        if scope == ctx.focus.qualified_name:
            for port in ctx.focus.ports:
                if port.name == name:
                    anchors.append(ctx.anchor(port.file, port.line, node_id))
    cluster = None
    if ctx.nested and group.rep_scope != ctx.focus.qualified_name:
        cluster = group.rep_scope
    sheet.add_node(_Node(node_id, tuple(attrs), min(anchors), cluster))
    return node_id


def _block_flows(
    ctx: _Ctx, groups: dict[tuple[str, str], _DataGroup], block: Block
) -> tuple[list[_DataGroup], list[_DataGroup]]:
    """The data groups a drawn block reads and writes, per its scope channels."""
    scope = ctx.parents[block.qualified_name]
    reads: list[_DataGroup] = []
    writes: list[_DataGroup] = []
    seen_read: set[int] = set()
    seen_write: set[int] = set()
    for port in block.ports:
        key = (scope, port.name)
        ch = ctx.chan.get(key)
        if ch is None or key not in groups:
            continue
        group = groups[key]
        endpoint = Endpoint(block.qualified_name, port.direction)
        if port.direction is Direction.IN:
            if endpoint in ch.sinks and id(group) not in seen_read:
                seen_read.add(id(group))
                reads.append(group)
        elif ch.source == endpoint and id(group) not in seen_write:
            seen_write.add(id(group))
            writes.append(group)
    return reads, writes


def render_data_view(
    model: WorkflowModel,
    options: RenderOptions | None = None,
    style: dict[str, str] | None = None,
) -> str:
    options = _with_view(options, "data")
    ctx = _Ctx(model, options, style or DEFAULT_STYLE)
    sheet = _Sheet(ctx)
    if ctx.nested:
        sheet.add_clusters_for_subworkflows()
    groups = _data_groups(ctx)
    for group in groups.values():
        _data_node(ctx, sheet, group)
    for block in ctx.drawn_blocks():
        reads, writes = _block_flows(ctx, groups, block)
        for read in reads:
            for write in writes:
                sheet.add_edge(
                    f"data:{read.rep_scope}:{read.name}",
                    f"data:{write.rep_scope}:{write.name}",
                    block.name,
                    read.param,
                )
    return sheet.emit(options.rankdir)


def render_combined_view(
    model: WorkflowModel,
    options: RenderOptions | None = None,
    style: dict[str, str] | None = None,
) -> str:
    options = _with_view(options, "combined")
    ctx = _Ctx(model, options, style or DEFAULT_STYLE)
    sheet = _Sheet(ctx)
    if ctx.nested:
        sheet.add_clusters_for_subworkflows()
    groups = _data_groups(ctx)
    for group in groups.values():
        _data_node(ctx, sheet, group)
    for block in ctx.drawn_blocks():
        node_id = _block_node(ctx, sheet, block)
        reads, writes = _block_flows(ctx, groups, block)
        for read in reads:
            sheet.add_edge(f"data:{read.rep_scope}:{read.name}", node_id, "", read.param)
        for write in writes:
            sheet.add_edge(node_id, f"data:{write.rep_scope}:{write.name}", "", write.param)
    return sheet.emit(options.rankdir)


_VIEW_RENDERERS = {
    "process": render_process_view,
    "data": render_data_view,
    "combined": render_combined_view,
}


def _with_view(options: RenderOptions | None, view: str) -> RenderOptions:
    if options is None:
        options = RenderOptions(view=view)
    if options.view != view:
        options = RenderOptions(
            view,
            options.rankdir,
            options.focus,
            options.nested,
            options.de_emphasize_params,
        )
    if options.rankdir not in RANKDIRS:
        raise ValueError(f"rankdir must be one of {RANKDIRS}, got {options.rankdir!r}")
    return options


def render(
    model: WorkflowModel,
    options: RenderOptions | None = None,
    style: dict[str, str] | None = None,
) -> str:
    """Render the view named by ``options.view`` (default: process)."""
    options = options or RenderOptions()
    if options.view not in _VIEW_RENDERERS:
        raise ValueError(f"view must be one of {VIEWS}, got {options.view!r}")
    return _VIEW_RENDERERS[options.view](model, options, style)
