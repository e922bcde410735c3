"""Declarative architecture specs, their text format, and the builders.

An :class:`ArchSpec` is a flat list of :class:`Node` objects.  Structure is
expressed with bracket nodes:

* ``residual`` ... ``shortcut`` ... ``end`` -- body, then shortcut path
  (empty shortcut = identity), summed at ``end``
* ``branch`` ... ``next`` ... ``concat`` -- parallel towers concatenated
  along channels

Parametrized nodes declare their input width (``in=`` / ``channels=``) so a
spec is self-checking: :func:`infer_shapes` propagates shapes and rejects
any disagreement before a model is ever instantiated.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import conv as K
from .errors import ConfigError, GeometryError, ParameterError, ShapeError
from .params import ParamStore

CONV_KINDS = ("conv", "sepconv", "depthwise", "groupconv")
OPEN = {"residual": "end", "branch": "concat"}
SEPARATOR = {"residual": "shortcut", "branch": "next"}


@dataclass
class Node:
    kind: str
    attrs: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.attrs[key]

    def get(self, key, default=None):
        return self.attrs.get(key, default)


@dataclass
class ArchSpec:
    nodes: list

    @property
    def name(self) -> str:
        return self.nodes[0].get("name", "custom")

    @property
    def input_shape(self) -> tuple[int, int, int]:
        return tuple(self.nodes[0]["shape"])

    @property
    def num_classes(self) -> int:
        dense = [n for n in self.nodes if n.kind == "dense"]
        return dense[-1]["units"] if dense else self.output_shape()[0]

    @property
    def task(self) -> str:
        losses = [n for n in self.nodes if n.kind == "loss"]
        if not losses:
            return "none"
        return "multi-label" if losses[-1]["fn"] == "sigmoid" else "single-label"

    def output_shape(self) -> tuple:
        return infer_shapes(self)[-1]

    def to_text(self) -> str:
        return dumps(self)


# ---------------------------------------------------------------------------
# text format


def _fmt(value) -> str:
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, tuple):
        body = ",".join(str(int(v)) for v in value)
        return body + "," if len(value) == 1 else body
    if isinstance(value, float):
        return repr(value)
    return str(value)


_INT = re.compile(r"^-?\d+$")
_FLOAT = re.compile(r"^-?(\d+\.\d*|\.\d+|\d+)([eE][-+]?\d+)?$|^-?\d+\.?\d*[eE][-+]?\d+$")


def _parse_value(text: str):
    if "," in text:
        return tuple(int(v) for v in text.split(",") if v != "")
    if _INT.match(text):
        return int(text)
    if _FLOAT.match(text) or text in ("inf", "-inf"):
        return float(text)
    return text


def dumps(spec: ArchSpec) -> str:
    lines = ["# xsep archspec v1"]
    for i, node in enumerate(spec.nodes):
        parts = [str(i), node.kind] + [f"{k}={_fmt(v)}" for k, v in node.attrs.items()]
        lines.append(" ".join(parts))
    return "\n".join(lines) + "\n"


def loads(text: str) -> ArchSpec:
    nodes = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        if len(tokens) < 2 or not _INT.match(tokens[0]):
            raise ConfigError(f"line {lineno}: expected '<index> <kind> key=value ...'")
        if int(tokens[0]) != len(nodes):
            raise ConfigError(f"line {lineno}: node index {tokens[0]} out of sequence")
        attrs = {}
        for tok in tokens[2:]:
            if "=" not in tok:
                raise ConfigError(f"line {lineno}: attribute {tok!r} is not key=value")
            key, val = tok.split("=", 1)
            attrs[key] = _parse_value(val)
        nodes.append(Node(tokens[1], attrs))
    spec = ArchSpec(nodes)
    infer_shapes(spec)
    return spec


def load(path) -> ArchSpec:
    with open(path) as fh:
        return loads(fh.read())


def save(spec: ArchSpec, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps(spec))


# ---------------------------------------------------------------------------
# structure and shapes


@dataclass
class Block:
    """Parsed structure item: leaf (index) or bracketed group."""
    kind: str
    index: int
    paths: list = field(default_factory=list)


def parse_tree(spec: ArchSpec) -> list:
    """Nest the flat node list. Leaves are node indices; groups are Blocks."""
    stack: list = [[]]
    groups: list = []
    for i, node in enumerate(spec.nodes):
        if node.kind in OPEN:
            block = Block(node.kind, i, [[]])
            stack[-1].append(block)
            groups.append(block)
            stack.append(block.paths[0])
        elif node.kind in SEPARATOR.values():
            if not groups or SEPARATOR[groups[-1].kind] != node.kind:
                raise ShapeError(f"node {i}: '{node.kind}' outside a matching group")
            block = groups[-1]
            if block.kind == "residual" and len(block.paths) > 1:
                raise ShapeError(f"node {i}: residual has more than one shortcut")
            stack.pop()
            block.paths.append([])
            stack.append(block.paths[-1])
        elif node.kind in OPEN.values():
            if not groups or OPEN[groups[-1].kind] != node.kind:
                raise ShapeError(f"node {i}: unmatched '{node.kind}'")
            stack.pop()
            groups.pop()
        else:
            stack[-1].append(i)
    if groups:
        raise ShapeError(f"unterminated '{groups[-1].kind}' opened at node {groups[-1].index}")
    return stack[0]


def _geom(node: Node) -> K.ConvGeometry:
    k = node.get("kernel", node.get("size", 1))
    return K.ConvGeometry.square(int(k), int(node.get("stride", 1)), node.get("padding", K.SAME))


def _expect(i: int, node: Node, key: str, actual: int) -> None:
    if node[key] != actual:
        raise ShapeError(f"node {i} ({node.kind}): declares {key}={node[key]} but receives {actual}")


def node_output_shape(i: int, node: Node, shape: tuple) -> tuple:
    """Output shape (batch axis excluded) of a leaf node given its input."""
    kind = node.kind
    if kind in ("conv", "sepconv", "depthwise", "groupconv", "maxpool"):
        if len(shape) != 3:
            raise ShapeError(f"node {i} ({kind}) needs a (c, h, w) input, got {shape}")
        c, h, w = shape
        try:
            oh, ow = _geom(node).output_hw(h, w)
        except GeometryError as exc:
            raise GeometryError(f"node {i} ({kind}): {exc}") from None
        if kind == "maxpool":
            return (c, oh, ow)
        _expect(i, node, "in", c)
        if kind == "groupconv":
            if sum(node["splits"]) != c:
                raise ShapeError(f"node {i}: splits sum to {sum(node['splits'])}, input has {c}")
            return (c, oh, ow)
        if kind == "depthwise":
            return (c * node.get("multiplier", 1), oh, ow)
        return (node["filters"], oh, ow)
    if kind == "bn":
        _expect(i, node, "channels", shape[0])
        return shape
    if kind in ("relu", "elu", "dropout", "loss"):
        return shape
    if kind == "gap":
        if len(shape) != 3:
            raise ShapeError(f"node {i}: global pooling needs a (c, h, w) input")
        return (shape[0],)
    if kind == "dense":
        flat = 1
        for d in shape:
            flat *= d
        _expect(i, node, "in", flat)
        return (node["units"],)
    raise ShapeError(f"node {i}: unknown node kind {kind!r}")


def infer_shapes(spec: ArchSpec) -> list:
    """Output shape of every node (brackets get the shape at that point).

    Raises ShapeError/GeometryError on the first inconsistency.
    """
    if not spec.nodes or spec.nodes[0].kind != "input":
        raise ShapeError("spec must start with an input node")
    shapes: list = [None] * len(spec.nodes)
    shapes[0] = tuple(spec.nodes[0]["shape"])
    tree = parse_tree(spec)

    def run(items, shape):
        for item in items:
            if isinstance(item, int):
                if item == 0:
                    continue
                shape = node_output_shape(item, spec.nodes[item], shape)
                shapes[item] = shape
            else:
                shapes[item.index] = shape
                outs = [run(p, shape) for p in item.paths]
                if item.kind == "residual":
                    body = outs[0]
                    short = outs[1] if len(outs) > 1 else shape
                    if body != short:
                        raise ShapeError(f"residual at node {item.index}: body gives {body}, "
                                         f"shortcut gives {short}")
                    shape = body
                else:
                    if any(len(o) != 3 or o[1:] != outs[0][1:] for o in outs):
                        raise ShapeError(f"branch at node {item.index}: spatial dims differ {outs}")
                    shape = (sum(o[0] for o in outs),) + outs[0][1:]
                closer = _closing_index(spec, item.index)
                shapes[closer] = shape
                for j in range(item.index + 1, closer):
                    if spec.nodes[j].kind in SEPARATOR.values() and shapes[j] is None:
                        shapes[j] = shapes[item.index]
        return shape

    run(tree, shapes[0])
    return shapes


def _closing_index(spec: ArchSpec, open_index: int) -> int:
    depth = 0
    for j in range(open_index, len(spec.nodes)):
        kind = spec.nodes[j].kind
        if kind in OPEN:
            depth += 1
        elif kind in OPEN.values():
            depth -= 1
            if depth == 0:
                return j
    raise ShapeError(f"unterminated group at node {open_index}")


def validate(spec: ArchSpec) -> ArchSpec:
    infer_shapes(spec)
    return spec


def shortcut_indices(spec: ArchSpec) -> set:
    """Indices of nodes that live on a residual shortcut path."""
    out = set()
    for item in _walk_blocks(parse_tree(spec)):
        if item.kind == "residual" and len(item.paths) > 1:
            out.update(_leaves(item.paths[1]))
    return out


def _walk_blocks(items):
    for item in items:
        if isinstance(item, Block):
            yield item
            for p in item.paths:
                yield from _walk_blocks(p)


def _leaves(items):
    for item in items:
        if isinstance(item, int):
            yield item
        else:
            for p in item.paths:
                yield from _leaves(p)


@dataclass(frozen=True)
class Structure:
    conv_layers: int
    modules: int
    residual_connections: int
    projection_shortcuts: int


def structure(spec: ArchSpec) -> Structure:
    """Main-path convolution count (separable = 1), modules, residual joins."""
    skip = shortcut_indices(spec)
    convs = [n for i, n in enumerate(spec.nodes) if n.kind in CONV_KINDS and i not in skip]
    modules = {n.get("module") for n in convs if n.get("module") is not None}
    blocks = [b for b in _walk_blocks(parse_tree(spec)) if b.kind == "residual"]
    return Structure(len(convs), len(modules), len(blocks),
                     sum(1 for b in blocks if len(b.paths) > 1 and b.paths[1]))


# ---------------------------------------------------------------------------
# costs


@dataclass(frozen=True)
class CostReport:
    trainable_params: int
    non_trainable_params: int
    macs_per_example: int
    activation_peak: int

    @property
    def total_params(self) -> int:
        return self.trainable_params + self.non_trainable_params

    def lines(self) -> list[str]:
        return [f"trainable_params={self.trainable_params}",
                f"non_trainable_params={self.non_trainable_params}",
                f"total_params={self.total_params}",
                f"macs_per_example={self.macs_per_example}",
                f"activation_peak={self.activation_peak}"]


def node_params(node: Node) -> tuple[int, int]:
    """(trainable, non-trainable) parameter counts of one node."""
    kind = node.kind
    k = int(node.get("kernel", 1))
    if kind == "conv":
        return node["in"] * node["filters"] * k * k, 0
    if kind == "sepconv":
        return K.separable_param_count(node["in"], node["filters"], k, k, node.get("multiplier", 1)), 0
    if kind == "depthwise":
        return node["in"] * node.get("multiplier", 1) * k * k, 0
    if kind == "groupconv":
        return sum(s * s * k * k for s in node["splits"]), 0
    if kind == "bn":
        return 2 * node["channels"], 2 * node["channels"]
    if kind == "dense":
        return node["in"] * node["units"] + (node["units"] if node.get("bias", 1) else 0), 0
    return 0, 0


def node_macs(node: Node, out_shape: tuple) -> int:
    kind = node.kind
    k = int(node.get("kernel", 1))
    if kind in ("conv", "sepconv", "depthwise", "groupconv"):
        _, oh, ow = out_shape
        cin = node["in"]
        if kind == "conv":
            return K.conv_macs(cin, node["filters"], k, k, oh, ow)
        m = node.get("multiplier", 1)
        if kind == "depthwise":
            return oh * ow * cin * m * k * k
        if kind == "groupconv":
            return sum(oh * ow * s * s * k * k for s in node["splits"])
        return oh * ow * cin * m * k * k + oh * ow * cin * m * node["filters"]
    if kind == "dense":
        return node["in"] * node["units"]
    return 0


def count_params(spec: ArchSpec) -> CostReport:
    return report_costs(spec)


def report_costs(spec: ArchSpec) -> CostReport:
    shapes = infer_shapes(spec)
    trainable = non_trainable = macs = 0
    peak = 0
    for node, shape in zip(spec.nodes, shapes):
        t, nt = node_params(node)
        trainable += t
        non_trainable += nt
        macs += node_macs(node, shape)
        size = 1
        for d in shape:
            size *= d
        peak = max(peak, size)
    return CostReport(trainable, non_trainable, macs, peak)


# ---------------------------------------------------------------------------
# builders


class _Builder:
    def __init__(self, input_shape: Sequence[int], name: str):
        self.nodes = [Node("input", {"name": name, "shape": tuple(int(d) for d in input_shape)})]
        self.channels = int(input_shape[0])
        self.module: int | None = None

    def add(self, kind: str, **attrs) -> "_Builder":
        self.nodes.append(Node(kind, attrs))
        return self

    def _mod(self, attrs: dict) -> dict:
        if self.module is not None:
            attrs["module"] = self.module
        return attrs

    def conv(self, filters: int, kernel: int = 3, stride: int = 1, padding: str = K.SAME, module=True):
        attrs = {"in": self.channels, "filters": filters, "kernel": kernel, "stride": stride,
                 "padding": padding}
        self.add("conv", **(self._mod(attrs) if module else attrs))
        self.channels = filters
        return self

    def sepconv(self, filters: int, kernel: int = 3, stride: int = 1, padding: str = K.SAME,
                multiplier: int = 1, act: str = "none"):
        attrs = {"in": self.channels, "filters": filters, "kernel": kernel, "stride": stride,
                 "padding": padding, "multiplier": multiplier, "act": act}
        self.add("sepconv", **self._mod(attrs))
        self.channels = filters
        return self

    def depthwise(self, kernel: int = 3, stride: int = 1, padding: str = K.SAME, multiplier: int = 1):
        attrs = {"in": self.channels, "kernel": kernel, "stride": stride, "padding": padding,
                 "multiplier": multiplier}
        self.add("depthwise", **self._mod(attrs))
        self.channels *= multiplier
        return self

    def groupconv(self, splits: Sequence[int], kernel: int = 3, stride: int = 1, padding: str = K.SAME):
        attrs = {"in": self.channels, "splits": tuple(splits), "kernel": kernel, "stride": stride,
                 "padding": padding}
        self.add("groupconv", **self._mod(attrs))
        return self

    def bn(self):
        return self.add("bn", channels=self.channels)

    def act(self, name: str):
        return self.add(name)

    def maxpool(self, size: int = 3, stride: int = 2, padding: str = K.SAME):
        return self.add("maxpool", size=size, stride=stride, padding=padding)

    def head(self, num_classes: int, fc_layers: Sequence[int] = (), dropout: float = 0.0,
             task: str = "single-label"):
        self.add("gap")
        width = self.channels
        for units in fc_layers:
            self.add("dense", **{"in": width, "units": int(units), "bias": 1})
            self.add("relu")
            width = int(units)
        if dropout > 0:
            self.add("dropout", rate=float(dropout))
        self.add("dense", **{"in": width, "units": int(num_classes), "bias": 1})
        if task not in ("single-label", "multi-label"):
            raise ParameterError(f"unknown task {task!r}")
        self.add("loss", fn="softmax" if task == "single-label" else "sigmoid")
        return self

    def spec(self) -> ArchSpec:
        return validate(ArchSpec(self.nodes))


def _scaled(width: int, divisor: int) -> int:
    return max(1, width // divisor)


def build_xception(input_shape: Sequence[int] = (3, 299, 299), num_classes: int = 1000, *,
                   residuals: bool = True, intermediate_activation: str = "none",
                   fc_layers: Sequence[int] = (), dropout: float = 0.5,
                   task: str = "single-label", width_divisor: int = 1,
                   middle_repeats: int = 8, name: str = "xception") -> ArchSpec:
    """Entry flow, middle flow repeated ``middle_repeats`` times, exit flow.

    The first two convolutions use valid padding; every separable
    convolution and pooling uses same padding.  Every convolution is
    followed by batch norm.  ``width_divisor``/``middle_repeats`` produce
    the scaled-down variants used for desk-scale training.
    """
    if intermediate_activation not in K.ACTIVATIONS:
        raise ParameterError(f"unknown intermediate activation {intermediate_activation!r}")
    if middle_repeats < 0:
        raise ParameterError("middle_repeats must be >= 0")
    w = lambda c: _scaled(c, width_divisor)  # noqa: E731
    act = intermediate_activation
    b = _Builder(input_shape, name)

    b.module = 1
    b.conv(w(32), 3, 2, K.VALID).bn().act("relu")
    b.conv(w(64), 3, 1, K.VALID).bn().act("relu")

    def downsampling_module(widths, leading_relu: bool):
        if residuals:
            b.add("residual")
        start = b.channels
        if leading_relu:
            b.act("relu")
        b.sepconv(widths[0], act=act).bn().act("relu")
        b.sepconv(widths[1], act=act).bn()
        b.maxpool(3, 2, K.SAME)
        if residuals:
            out = b.channels
            b.add("shortcut")
            b.channels = start
            b.conv(out, 1, 2, K.SAME, module=False).bn()
            b.add("end")

    b.module = 2
    downsampling_module((w(128), w(128)), leading_relu=False)
    b.module = 3
    downsampling_module((w(256), w(256)), leading_relu=True)
    b.module = 4
    downsampling_module((w(728), w(728)), leading_relu=True)

    for r in range(middle_repeats):
        b.module = 5 + r
        if residuals:
            b.add("residual")
        for _ in range(3):
            b.act("relu").sepconv(w(728), act=act).bn()
        if residuals:
            b.add("shortcut").add("end")

    b.module = 5 + middle_repeats
    downsampling_module((w(728), w(1024)), leading_relu=True)

    b.module = 6 + middle_repeats
    b.sepconv(w(1536), act=act).bn().act("relu")
    b.sepconv(w(2048), act=act).bn().act("relu")
    b.module = None
    b.head(num_classes, fc_layers, dropout, task)
    return b.spec()


def toy_xception(num_classes: int = 10, input_hw: int = 32, **kw) -> ArchSpec:
    """Xception topology with widths / 4 and two middle-flow modules."""
    kw.setdefault("width_divisor", 4)
    kw.setdefault("middle_repeats", 2)
    kw.setdefault("name", "toy_xception")
    return build_xception((3, input_hw, input_hw), num_classes, **kw)


def projection_shortcut_params(spec: ArchSpec) -> int:
    return sum(node_params(spec.nodes[i])[0] for i in shortcut_indices(spec))


def strip_residuals(spec: ArchSpec) -> ArchSpec:
    """Drop residual brackets and shortcut paths, keeping every body."""
    skip = shortcut_indices(spec)
    nodes = [Node(n.kind, dict(n.attrs)) for i, n in enumerate(spec.nodes)
             if i not in skip and n.kind not in ("residual", "shortcut", "end")]
    return validate(ArchSpec(nodes))


def build_simplified_inception(m_in: int, tower_widths: Sequence[int], hw: int = 8,
                               kernel: int = 3, activation: bool = False) -> ArchSpec:
    """Parallel towers of (1x1 conv -> kxk conv), concatenated."""
    widths = [int(t) for t in tower_widths]
    if not widths or min(widths) < 1:
        raise ParameterError("tower widths must be a non-empty list of positive ints")
    b = _Builder((m_in, hw, hw), "simplified_inception")
    b.module = 1
    b.add("branch")
    for i, t in enumerate(widths):
        if i:
            b.add("next")
        b.channels = m_in
        b.conv(t, 1)
        if activation:
            b.act("relu")
        b.conv(t, kernel)
        if activation:
            b.act("relu")
    b.add("concat")
    return b.spec()


def reformulate_inception(spec: ArchSpec, store=None):
    """Single 1x1 conv to sum(widths) channels, then per-segment spatial convs.

    With a ParamStore the tower weights are copied block-wise so both forms
    compute the same function; returns ``(spec, store)`` in that case.
    """
    tree = parse_tree(spec)
    branch = next(item for item in tree if isinstance(item, Block) and item.kind == "branch")
    towers = []
    for path in branch.paths:
        convs = [i for i in path if spec.nodes[i].kind == "conv"]
        towers.append(convs)
    activation = any(spec.nodes[i].kind == "relu" for i in _leaves([branch]))
    m_in = spec.input_shape[0]
    widths = [spec.nodes[t[0]]["filters"] for t in towers]
    kernel = spec.nodes[towers[0][1]]["kernel"]
    hw = spec.input_shape[1:]
    b = _Builder((m_in,) + tuple(hw), "inception_reformulated")
    b.module = 1
    b.conv(sum(widths), 1)
    if activation:
        b.act("relu")
    if len(widths) == 1:
        b.conv(widths[0], kernel)
    else:
        b.groupconv(widths, kernel)
    if activation:
        b.act("relu")
    new = b.spec()
    if store is None:
        return new
    out = ParamStore()
    pw = np.concatenate([store[param_name(t[0], "kernel")] for t in towers], axis=0)
    out.add(param_name(1, "kernel"), pw)
    spatial_idx = 3 if activation else 2
    if len(widths) == 1:
        out.add(param_name(spatial_idx, "kernel"), store[param_name(towers[0][1], "kernel")].copy())
    else:
        for g, t in enumerate(towers):
            out.add(param_name(spatial_idx, f"kernel{g}"), store[param_name(t[1], "kernel")].copy())
    return new, out


def build_extreme_inception(m_in: int, m_out: int, hw: int = 8, kernel: int = 3,
                            activation: bool = False) -> ArchSpec:
    """1x1 conv to ``m_out`` channels, then one spatial filter per channel."""
    if m_out < 1:
        raise ParameterError("m_out must be >= 1")
    b = _Builder((m_in, hw, hw), "extreme_inception")
    b.module = 1
    b.conv(m_out, 1)
    if activation:
        b.act("relu")
    b.depthwise(kernel)
    if activation:
        b.act("relu")
    return b.spec()


def build_spectrum_module(m_in: int, m: int, segments: int, hw: int = 8, kernel: int = 3) -> ArchSpec:
    if segments < 1 or m % segments:
        raise ParameterError(f"segments={segments} must divide {m}")
    b = _Builder((m_in, hw, hw), f"spectrum_g{segments}")
    b.module = 1
    b.conv(m, 1)
    b.groupconv([m // segments] * segments, kernel)
    return b.spec()


def build_sepconv_vgg(widths: Sequence[int], input_shape: Sequence[int] = (3, 32, 32),
                      num_classes: int = 10, pool_every: int = 2, dropout: float = 0.0,
                      intermediate_activation: str = "none",
                      task: str = "single-label") -> ArchSpec:
    """Linear stack of sepconv+BN+ReLU with max-pooling every ``pool_every`` blocks."""
    widths = [int(c) for c in widths]
    if not widths:
        raise ParameterError("widths must be non-empty")
    b = _Builder(input_shape, "sepconv_vgg")
    h, w = input_shape[1:]
    for i, c in enumerate(widths):
        b.module = i + 1
        b.sepconv(c, act=intermediate_activation).bn().act("relu")
        if (i + 1) % pool_every == 0:
            if h <= 1 and w <= 1:
                raise GeometryError(f"spatial dims exhausted before pooling stage after block {i + 1}")
            b.maxpool(3, 2, K.SAME)
            h, w = -(-h // 2), -(-w // 2)
    b.module = None
    b.head(num_classes, (), dropout, task)
    return b.spec()


def param_name(index: int, suffix: str) -> str:
    return f"n{index:03d}.{suffix}"


PRESETS = {
    "xception": lambda **kw: build_xception(**kw),
    "toy_xception": lambda **kw: toy_xception(**kw),
}


def build_named(name: str, num_classes: int | None = None, fc_layers: Sequence[int] = (),
                residuals: bool = True, intermediate_activation: str = "none",
                task: str = "single-label", dropout: float = 0.5) -> ArchSpec:
    kw = {"fc_layers": tuple(fc_layers), "residuals": residuals,
          "intermediate_activation": intermediate_activation, "task": task, "dropout": dropout}
    if num_classes is not None:
        kw["num_classes"] = num_classes
    if name == "sepconv_vgg":
        return build_sepconv_vgg([32, 64, 128, 256], num_classes=num_classes or 10,
                                 intermediate_activation=intermediate_activation,
                                 dropout=dropout, task=task)
    if name not in PRESETS:
        raise ConfigError(f"unknown architecture {name!r}; known: {sorted(PRESETS) + ['sepconv_vgg']}")
    return PRESETS[name](**kw)
