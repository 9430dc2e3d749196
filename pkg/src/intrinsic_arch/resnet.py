"""Reference ResNet-50 architecture graph.

Bottleneck blocks downsample in the 3x3 conv (conv3_1, conv4_1, conv5_1),
matching the GN models in Detectron. Each layer writes its own output tap,
named after the layer. Per stage there are two tie groups:

* ``convN_shortcut`` (max rule): the projection shortcut and every block's
  last 1x1 conv, i.e. the feature maps that flow through shortcuts;
* ``convN_inner`` (geomean rule): the first and second conv of every block.

The stem conv, the RGB input and the 1000-way classifier output are fixed.
"""

from __future__ import annotations

from typing import Sequence

from .archgraph import ArchitectureGraph, LayerSpec, Tap, TieGroup

# (stage, blocks, inner width, output width)
RESNET50_STAGES = (
    ("conv2", 3, 64, 256),
    ("conv3", 4, 128, 512),
    ("conv4", 6, 256, 1024),
    ("conv5", 3, 512, 2048),
)
STEM_WIDTH = 64
NUM_CLASSES = 1000


def resnet50(resolution: tuple[int, int] = (224, 224), num_classes: int = NUM_CLASSES) -> ArchitectureGraph:
    w, h = resolution
    taps: dict[str, Tap] = {"input": Tap("input", 3, stage="input", fixed=True)}
    layers: list[LayerSpec] = []
    groups: dict[str, TieGroup] = {}

    taps["conv1"] = Tap("conv1", STEM_WIDTH, stage="conv1", fixed=True)
    layers.append(LayerSpec("conv1", "conv", 7, 2, "input", "conv1"))
    # 3x3/2 max pool after the stem
    pooled = (-(-w // 4), -(-h // 4))

    prev = "conv1"
    for stage, blocks, inner, out in RESNET50_STAGES:
        inner_g, short_g = f"{stage}_inner", f"{stage}_shortcut"
        inner_members, short_members = [], []
        first_stride = 1 if stage == "conv2" else 2
        for b in range(1, blocks + 1):
            name = f"{stage}_{b}"
            stride = first_stride if b == 1 else 1
            override = pooled if stage == "conv2" and b == 1 else None
            if b == 1:
                sc = f"{name}_sc"
                taps[sc] = Tap(sc, out, tie_group=short_g, stage=stage)
                layers.append(LayerSpec(sc, "conv", 1, stride, prev, sc, override))
                short_members.append(sc)
            for k, (kernel, width, s) in enumerate(((1, inner, 1), (3, inner, stride), (1, out, 1)), start=1):
                lid = f"{name}_{k}"
                group = short_g if k == 3 else inner_g
                taps[lid] = Tap(lid, width, tie_group=group, stage=stage)
                src = prev if k == 1 else f"{name}_{k - 1}"
                layers.append(LayerSpec(lid, "conv", kernel, s, src, lid, override if k == 1 else None))
                (short_members if k == 3 else inner_members).append(lid)
            prev = f"{name}_3"
        groups[inner_g] = TieGroup(inner_g, "geomean", tuple(inner_members), stage)
        groups[short_g] = TieGroup(short_g, "max", tuple(short_members), stage)

    taps["fc"] = Tap("fc", num_classes, stage="fc", fixed=True)
    layers.append(LayerSpec("fc", "fc", 1, 1, prev, "fc"))
    return ArchitectureGraph(tuple(layers), taps, groups, (w, h), 3)


def width_vector(graph: ArchitectureGraph) -> tuple[int, ...]:
    """Widths listed bottom-up: stem, then (inner, shortcut) for each stage."""
    out = [graph.taps["conv1"].width]
    for stage, *_ in RESNET50_STAGES:
        for kind in ("inner", "shortcut"):
            member = graph.tie_groups[f"{stage}_{kind}"].members[0]
            out.append(graph.taps[member].width)
    return tuple(out)


def widths_from_vector(graph: ArchitectureGraph, vector: Sequence[int]) -> dict[str, int]:
    """Inverse of :func:`width_vector`, as an assignment over searchable taps."""
    if len(vector) != 1 + 2 * len(RESNET50_STAGES):
        raise ValueError(f"expected {1 + 2 * len(RESNET50_STAGES)} widths, got {len(vector)}")
    if vector[0] != graph.taps["conv1"].width:
        raise ValueError(f"stem width is fixed at {graph.taps['conv1'].width}")
    out = {}
    it = iter(vector[1:])
    for stage, *_ in RESNET50_STAGES:
        for kind in ("inner", "shortcut"):
            width = next(it)
            for m in graph.tie_groups[f"{stage}_{kind}"].members:
                out[m] = width
    return out
