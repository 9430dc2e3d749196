"""Architecture graphs: layers, taps, tie groups, spatial sizes and resource cost.

A graph is bipartite: every layer reads one input tap and writes one output
tap. Taps carry channel widths; layers carry kernel size and stride. Costs
follow the usual conv/fc accounting, ``I * O * K^2 * W * H`` for MACs and
``I * O * K^2`` for parameters, with biases, normalization and activations
contributing nothing.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from graphlib import CycleError, TopologicalSorter
from typing import Any, Iterable, Mapping

LAYER_KINDS = ("conv", "fc", "transposed-conv")
TIE_RULES = ("max", "geomean", "fixed")
METRICS = ("macs", "params")


class ArchError(ValueError):
    """Raised for malformed architecture documents or invalid width assignments."""


@dataclass(frozen=True)
class LayerSpec:
    id: str
    kind: str
    kernel: int
    stride: int
    input_tap: str
    output_tap: str
    out_spatial: tuple[int, int] | None = None  # (W, H)

    def __post_init__(self) -> None:
        if self.kind not in LAYER_KINDS:
            raise ArchError(f"layer {self.id!r}: unknown kind {self.kind!r}")
        if not _is_pos_int(self.kernel):
            raise ArchError(f"layer {self.id!r}: kernel must be a positive integer")
        if not _is_pos_int(self.stride):
            raise ArchError(f"layer {self.id!r}: stride must be a positive integer")
        if self.kind == "fc" and self.kernel != 1:
            raise ArchError(f"layer {self.id!r}: fc layers must have kernel 1")
        if self.out_spatial is not None:
            w, h = self.out_spatial
            if not (_is_pos_int(w) and _is_pos_int(h)):
                raise ArchError(f"layer {self.id!r}: out_spatial must be positive integers")


@dataclass(frozen=True)
class Tap:
    id: str
    width: int
    tie_group: str | None = None
    stage: str | None = None
    fixed: bool = False

    def __post_init__(self) -> None:
        if not _is_pos_int(self.width):
            raise ArchError(f"tap {self.id!r}: width must be a positive integer")


@dataclass(frozen=True)
class TieGroup:
    id: str
    rule: str
    members: tuple[str, ...]
    stage: str | None = None

    def __post_init__(self) -> None:
        if self.rule not in TIE_RULES:
            raise ArchError(f"tie group {self.id!r}: unknown rule {self.rule!r}")
        if not self.members:
            raise ArchError(f"tie group {self.id!r}: members must be nonempty")


@dataclass(frozen=True)
class ArchitectureGraph:
    layers: tuple[LayerSpec, ...]
    taps: Mapping[str, Tap]
    tie_groups: Mapping[str, TieGroup]
    input_resolution: tuple[int, int]  # (W, H)
    input_channels: int
    _spatial: dict[str, tuple[int, int]] = field(
        default_factory=dict, init=False, repr=False, compare=False
    )

    def __post_init__(self) -> None:
        _validate(self)
        self._spatial.update(_resolve_spatial(self))

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    def layer(self, layer_id: str) -> LayerSpec:
        for layer in self.layers:
            if layer.id == layer_id:
                return layer
        raise ArchError(f"unknown layer {layer_id!r}")

    def is_frozen(self, tap_id: str) -> bool:
        """True for taps whose width never changes during search."""
        tap = self.taps[tap_id]
        if tap.fixed:
            return True
        return tap.tie_group is not None and self.tie_groups[tap.tie_group].rule == "fixed"

    def searchable_taps(self) -> list[str]:
        return [t for t in self.taps if not self.is_frozen(t)]

    def widths(self) -> dict[str, int]:
        return {t.id: t.width for t in self.taps.values()}

    def tap_spatial(self, tap_id: str) -> tuple[int, int]:
        return self._spatial["tap:" + tap_id]


def _is_pos_int(x: Any) -> bool:
    return isinstance(x, int) and not isinstance(x, bool) and x >= 1


def _validate(g: ArchitectureGraph) -> None:
    if not g.layers:
        raise ArchError("architecture has no layers")
    w, h = g.input_resolution
    if not (_is_pos_int(w) and _is_pos_int(h)):
        raise ArchError("input resolution must be positive integers")
    if not _is_pos_int(g.input_channels):
        raise ArchError("input channels must be a positive integer")

    for key, tap in g.taps.items():
        if key != tap.id:
            raise ArchError(f"tap key {key!r} does not match tap id {tap.id!r}")
    seen: set[str] = set()
    for layer in g.layers:
        if layer.id in seen:
            raise ArchError(f"duplicate layer id {layer.id!r}")
        seen.add(layer.id)
        for ref in (layer.input_tap, layer.output_tap):
            if ref not in g.taps:
                raise ArchError(f"layer {layer.id!r} references undefined tap {ref!r}")
        if layer.input_tap == layer.output_tap:
            raise ArchError(f"cycle detected: layer {layer.id!r} reads and writes {layer.input_tap!r}")

    for gid, group in g.tie_groups.items():
        if gid != group.id:
            raise ArchError(f"tie group key {gid!r} does not match id {group.id!r}")
        if len(set(group.members)) != len(group.members):
            raise ArchError(f"tie group {gid!r} lists a member twice")
        for m in group.members:
            if m not in g.taps:
                raise ArchError(f"tie group {gid!r} references undefined tap {m!r}")
            if g.taps[m].tie_group != gid:
                raise ArchError(f"tap {m!r} is a member of tie group {gid!r} but names {g.taps[m].tie_group!r}")
        fixed = {g.taps[m].fixed for m in group.members}
        if len(fixed) > 1:
            raise ArchError(f"tie group {gid!r} mixes fixed and non-fixed taps")
        widths = {g.taps[m].width for m in group.members}
        if len(widths) > 1:
            raise ArchError(f"tie group {gid!r} has unequal widths {sorted(widths)}")
    for tap in g.taps.values():
        if tap.tie_group is not None:
            group = g.tie_groups.get(tap.tie_group)
            if group is None or tap.id not in group.members:
                raise ArchError(f"tap {tap.id!r} names tie group {tap.tie_group!r} which does not list it")

    ts: TopologicalSorter[str] = TopologicalSorter()
    for layer in g.layers:
        ts.add("layer:" + layer.id, "tap:" + layer.input_tap)
        ts.add("tap:" + layer.output_tap, "layer:" + layer.id)
    try:
        ts.prepare()
    except CycleError as exc:
        nodes = [n.split(":", 1)[1] for n in exc.args[1]]
        raise ArchError(f"cycle detected through {nodes}") from None


def _resolve_spatial(g: ArchitectureGraph) -> dict[str, tuple[int, int]]:
    producers: dict[str, list[LayerSpec]] = {}
    for layer in g.layers:
        producers.setdefault(layer.output_tap, []).append(layer)
    for tap in g.taps.values():
        if tap.id not in producers and not tap.fixed:
            raise ArchError(f"tap {tap.id!r} has no producer layer and is not a fixed input tap")

    ts: TopologicalSorter[str] = TopologicalSorter()
    for tap_id in g.taps:
        ts.add("tap:" + tap_id)
    for layer in g.layers:
        ts.add("layer:" + layer.id, "tap:" + layer.input_tap)
        ts.add("tap:" + layer.output_tap, "layer:" + layer.id)
    by_id = {layer.id: layer for layer in g.layers}

    sizes: dict[str, tuple[int, int]] = {}
    for node in ts.static_order():
        kind, name = node.split(":", 1)
        if kind == "tap":
            prods = producers.get(name)
            if not prods:
                sizes[node] = g.input_resolution
                continue
            shapes = {sizes["layer:" + p.id] for p in prods}
            if len(shapes) > 1:
                raise ArchError(f"tap {name!r} has producers with different spatial sizes {sorted(shapes)}")
            sizes[node] = shapes.pop()
        else:
            layer = by_id[name]
            if layer.kind == "fc":
                sizes[node] = (1, 1)
            elif layer.out_spatial is not None:
                sizes[node] = layer.out_spatial
            else:
                w, h = sizes["tap:" + layer.input_tap]
                sizes[node] = (-(-w // layer.stride), -(-h // layer.stride))
    return sizes


def spatial_dims(graph: ArchitectureGraph, layer_id: str) -> tuple[int, int]:
    """Output (W, H) of a layer at the graph's reference input resolution."""
    graph.layer(layer_id)
    return graph._spatial["layer:" + layer_id]


def effective_widths(graph: ArchitectureGraph, widths: Mapping[str, int] | None = None) -> dict[str, int]:
    """Graph widths overlaid with ``widths``; checks positivity, fixed taps and tie groups."""
    out = graph.widths()
    if widths:
        for tap_id, w in widths.items():
            if tap_id not in graph.taps:
                raise ArchError(f"width assigned to unknown tap {tap_id!r}")
            if isinstance(w, bool) or not isinstance(w, int) or w <= 0:
                raise ArchError(f"tap {tap_id!r}: width must be a positive integer, got {w!r}")
            if graph.is_frozen(tap_id) and w != out[tap_id]:
                raise ArchError(f"tap {tap_id!r} is fixed at width {out[tap_id]}, cannot assign {w}")
            out[tap_id] = w
    for group in graph.tie_groups.values():
        vals = {out[m] for m in group.members}
        if len(vals) > 1:
            raise ArchError(f"tie group {group.id!r} violated: widths {sorted(vals)}")
    return out


def layer_cost(graph: ArchitectureGraph, layer: LayerSpec, widths: Mapping[str, int], metric: str) -> int:
    cost = widths[layer.input_tap] * widths[layer.output_tap] * layer.kernel * layer.kernel
    if metric == "macs":
        w, h = graph._spatial["layer:" + layer.id]
        cost *= w * h
    return cost


def compute_cost(graph: ArchitectureGraph, widths: Mapping[str, int] | None = None, metric: str = "macs") -> int:
    """Total MACs or parameter count of ``graph`` under ``widths``.

    Arithmetic is on Python integers, so the result is exact at any scale.
    """
    if metric not in METRICS:
        raise ArchError(f"unknown metric {metric!r}")
    eff = effective_widths(graph, widths)
    return sum(layer_cost(graph, layer, eff, metric) for layer in graph.layers)


def apply_widths(graph: ArchitectureGraph, widths: Mapping[str, int]) -> ArchitectureGraph:
    eff = effective_widths(graph, widths)
    taps = {tid: replace(tap, width=eff[tid]) for tid, tap in graph.taps.items()}
    return ArchitectureGraph(
        layers=graph.layers,
        taps=taps,
        tie_groups=graph.tie_groups,
        input_resolution=graph.input_resolution,
        input_channels=graph.input_channels,
    )


# -- (de)serialization -------------------------------------------------------


def _require(obj: Mapping[str, Any], key: str, where: str) -> Any:
    if not isinstance(obj, Mapping) or key not in obj:
        raise ArchError(f"{where}: missing key {key!r}")
    return obj[key]


def from_dict(doc: Mapping[str, Any]) -> ArchitectureGraph:
    if not isinstance(doc, Mapping):
        raise ArchError("architecture document must be a JSON object")
    inp = _require(doc, "input", "document")
    resolution = (_require(inp, "width", "input"), _require(inp, "height", "input"))
    channels = _require(inp, "channels", "input")

    taps: dict[str, Tap] = {}
    for i, t in enumerate(_require(doc, "taps", "document")):
        tid = _require(t, "id", f"taps[{i}]")
        if tid in taps:
            raise ArchError(f"duplicate tap id {tid!r}")
        taps[tid] = Tap(
            id=tid,
            width=_require(t, "width", f"tap {tid!r}"),
            tie_group=t.get("tie_group"),
            stage=t.get("stage"),
            fixed=bool(t.get("fixed", False)),
        )

    groups: dict[str, TieGroup] = {}
    for i, grp in enumerate(doc.get("tie_groups", [])):
        gid = _require(grp, "id", f"tie_groups[{i}]")
        if gid in groups:
            raise ArchError(f"duplicate tie group id {gid!r}")
        groups[gid] = TieGroup(
            id=gid,
            rule=_require(grp, "rule", f"tie group {gid!r}"),
            members=tuple(_require(grp, "members", f"tie group {gid!r}")),
            stage=grp.get("stage"),
        )

    layers = []
    for i, lay in enumerate(_require(doc, "layers", "document")):
        lid = _require(lay, "id", f"layers[{i}]")
        out_spatial = lay.get("out_spatial")
        if out_spatial is not None:
            if not isinstance(out_spatial, (list, tuple)) or len(out_spatial) != 2:
                raise ArchError(f"layer {lid!r}: out_spatial must be a [width, height] pair")
            out_spatial = tuple(out_spatial)
        kind = _require(lay, "kind", f"layer {lid!r}")
        layers.append(
            LayerSpec(
                id=lid,
                kind=kind,
                kernel=lay.get("kernel", 1) if kind == "fc" else _require(lay, "kernel", f"layer {lid!r}"),
                stride=lay.get("stride", 1),
                input_tap=_require(lay, "input_tap", f"layer {lid!r}"),
                output_tap=_require(lay, "output_tap", f"layer {lid!r}"),
                out_spatial=out_spatial,
            )
        )
    return ArchitectureGraph(
        layers=tuple(layers),
        taps=taps,
        tie_groups=groups,
        input_resolution=resolution,
        input_channels=channels,
    )


def to_dict(graph: ArchitectureGraph) -> dict[str, Any]:
    """Canonical document form; optional keys are omitted when unset."""
    w, h = graph.input_resolution
    taps = []
    for tap in graph.taps.values():
        d: dict[str, Any] = {"id": tap.id, "width": tap.width}
        if tap.tie_group is not None:
            d["tie_group"] = tap.tie_group
        if tap.stage is not None:
            d["stage"] = tap.stage
        if tap.fixed:
            d["fixed"] = True
        taps.append(d)
    groups = []
    for grp in graph.tie_groups.values():
        d = {"id": grp.id, "rule": grp.rule, "members": list(grp.members)}
        if grp.stage is not None:
            d["stage"] = grp.stage
        groups.append(d)
    layers = []
    for lay in graph.layers:
        d = {
            "id": lay.id,
            "kind": lay.kind,
            "kernel": lay.kernel,
            "stride": lay.stride,
            "input_tap": lay.input_tap,
            "output_tap": lay.output_tap,
        }
        if lay.out_spatial is not None:
            d["out_spatial"] = list(lay.out_spatial)
        layers.append(d)
    return {
        "input": {"width": w, "height": h, "channels": graph.input_channels},
        "taps": taps,
        "tie_groups": groups,
        "layers": layers,
    }


def parse_arch(config_text: str) -> ArchitectureGraph:
    try:
        doc = json.loads(config_text)
    except json.JSONDecodeError as exc:
        raise ArchError(f"invalid JSON: {exc}") from None
    try:
        return from_dict(doc)
    except TypeError as exc:
        raise ArchError(f"malformed architecture document: {exc}") from None


def serialize(graph: ArchitectureGraph) -> str:
    return json.dumps(to_dict(graph), indent=2) + "\n"


def tie_units(graph: ArchitectureGraph) -> dict[str, tuple[str, ...]]:
    """Independent width units of the search: one per tie group, one per ungrouped tap.

    Frozen taps are excluded. Units are keyed by their smallest member tap id,
    so iterating in sorted key order gives the lexicographic tie-break order.
    """
    units: dict[str, tuple[str, ...]] = {}
    done: set[str] = set()
    for tap_id in graph.searchable_taps():
        if tap_id in done:
            continue
        tap = graph.taps[tap_id]
        members: Iterable[str] = graph.tie_groups[tap.tie_group].members if tap.tie_group else (tap_id,)
        members = tuple(sorted(members))
        done.update(members)
        units[members[0]] = members
    return dict(sorted(units.items()))


def format_si(value: float) -> str:
    """Human-readable cost, 3 significant figures with decimal G/M suffixes."""
    for scale, suffix in ((1e9, "G"), (1e6, "M"), (1e3, "K")):
        if abs(value) >= scale:
            return f"{value / scale:.3g} {suffix}"
    return f"{value:.3g}"

