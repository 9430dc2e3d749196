from __future__ import annotations

import numpy as np
import pytest

from intrinsic_arch.archgraph import ArchitectureGraph, LayerSpec, Tap, TieGroup
from intrinsic_arch.resnet import resnet50
from intrinsic_arch.spectra import Eigenspectrum


def chain_graph(widths, kernels=None, strides=None, resolution=(8, 8), in_ch=3, out_ch=None):
    """input -> t1 -> t2 -> ... [-> fc head into a fixed ``out`` tap of width ``out_ch``]."""
    kernels = kernels or [3] * len(widths)
    strides = strides or [1] * len(widths)
    taps = {"input": Tap("input", in_ch, fixed=True)}
    layers = []
    prev = "input"
    for i, w in enumerate(widths):
        tid = f"t{i + 1}"
        taps[tid] = Tap(tid, w)
        layers.append(LayerSpec(f"l{i + 1}", "conv", kernels[i], strides[i], prev, tid))
        prev = tid
    if out_ch is not None:
        taps["out"] = Tap("out", out_ch, fixed=True)
        layers.append(LayerSpec("head", "fc", 1, 1, prev, "out"))
    return ArchitectureGraph(tuple(layers), taps, {}, resolution, in_ch)


def make_spectrum(tap_id: str, channels: int, dim: int, tail: float = 1e-5, raw_max: float = 1.0) -> Eigenspectrum:
    """Spectrum with exactly ``dim`` values above any threshold in (tail, 0.1)."""
    if dim == 0:
        return Eigenspectrum(tap_id, (0.0,) * channels, 0.0)
    head = [1.0] + list(np.geomspace(0.5, 0.2, dim - 1)) if dim > 1 else [1.0]
    return Eigenspectrum(tap_id, tuple(head) + (tail,) * (channels - dim), raw_max)


def divisors(n: int) -> list[int]:
    return [d for d in range(1, n + 1) if n % d == 0]


def random_toy_graph(rng: np.random.Generator, multiple: int, grid_aligned: bool = True):
    """Random graph with <= 5 taps and <= 6 layers, plus an adjusted assignment.

    With ``grid_aligned`` every adjusted width divides ``50 * multiple``, which
    puts every rounding breakpoint ``(k + 1/2) * multiple / width`` on the
    0.01 grid of multipliers.
    """
    n_mid = int(rng.integers(2, 4))  # searchable taps
    res = int(rng.choice([4, 8, 16]))
    taps = {"input": Tap("input", int(rng.choice([1, 3])), fixed=True)}
    layers = []
    names = [f"t{i + 1}" for i in range(n_mid)]
    tie = n_mid >= 3 and rng.random() < 0.5
    groups = {}
    if tie:
        groups["g"] = TieGroup("g", "max", (names[0], names[2]))
    prev = "input"
    for i, name in enumerate(names):
        taps[name] = Tap(name, 8, tie_group="g" if tie and i in (0, 2) else None)
        layers.append(LayerSpec(f"l{i + 1}", "conv", int(rng.choice([1, 3])), int(rng.choice([1, 2])), prev, name))
        prev = name
    taps["out"] = Tap("out", int(rng.choice([4, 10])), fixed=True)
    layers.append(LayerSpec("head", "fc", 1, 1, prev, "out"))
    if len(layers) < 6 and n_mid >= 2:
        layers.append(LayerSpec("aux", "fc", 1, 1, names[0], "out"))
    graph = ArchitectureGraph(tuple(layers), taps, groups, (res, res), taps["input"].width)

    pool = [d for d in divisors(50 * multiple) if 4 <= d <= 200] if grid_aligned else list(range(4, 201))
    adjusted = {}
    shared = int(rng.choice(pool))
    for name in names:
        adjusted[name] = shared if tie and name in ("t1", "t3") else int(rng.choice(pool))
    return graph, adjusted


@pytest.fixture(scope="session")
def r50() -> ArchitectureGraph:
    return resnet50()


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
