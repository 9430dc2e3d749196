"""Width search: shrink to intrinsic dimensionalities, adjust for tie groups,
expand uniformly under a resource budget, round, and greedily fill slack."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Mapping

from .archgraph import ArchitectureGraph, compute_cost, effective_widths, layer_cost, tie_units
from .spectra import DEFAULT_THRESHOLD, Eigenspectrum, intrinsic_dim

WidthAssignment = dict[str, int]

_MAX_DOUBLINGS = 64


class SearchError(ValueError):
    pass


class InfeasibleBudget(SearchError):
    pass


@dataclass(frozen=True)
class SearchConfig:
    threshold: float = DEFAULT_THRESHOLD
    metric: str = "macs"
    budget: float = 0.0
    multiple: int = 32
    min_width: int | None = None  # defaults to ``multiple``
    omega_precision: float = 1e-4
    greedy_fill: bool = True

    def __post_init__(self) -> None:
        if self.metric not in ("macs", "params"):
            raise SearchError(f"unknown metric {self.metric!r}")
        if not 0.0 < self.threshold < 1.0:
            raise SearchError(f"threshold must lie in (0, 1), got {self.threshold}")
        if not self.budget > 0:
            raise SearchError("budget must be positive")
        if self.multiple < 1:
            raise SearchError("multiple must be at least 1")
        if self.min_width is None:
            object.__setattr__(self, "min_width", self.multiple)
        elif self.min_width < 1:
            raise SearchError("min_width must be at least 1")
        if not self.omega_precision > 0:
            raise SearchError("omega_precision must be positive")


def shrink(graph: ArchitectureGraph, spectra: Mapping[str, Eigenspectrum], threshold: float = DEFAULT_THRESHOLD) -> dict[str, int]:
    """Intrinsic dimensionality of every searchable tap."""
    dims = {}
    for tap_id in graph.searchable_taps():
        if tap_id not in spectra:
            raise SearchError(f"missing spectrum for tap {tap_id!r}")
        dims[tap_id] = intrinsic_dim(spectra[tap_id], threshold)
    return dims


def _geomean(values: list[int]) -> float:
    if any(v == 0 for v in values):
        return 0.0
    return math.exp(sum(math.log(v) for v in values) / len(values))


def adjust(graph: ArchitectureGraph, dims: Mapping[str, int], min_width: int | None = 32) -> WidthAssignment:
    """Turn per-tap dimensionalities into tie-consistent widths.

    ``max`` groups take the largest member dim, ``geomean`` groups the rounded
    geometric mean; results are floored at ``min_width`` (``None`` disables
    the floor, in which case a zero width is an error).
    """
    out: WidthAssignment = {}
    for members in tie_units(graph).values():
        missing = [m for m in members if m not in dims]
        if missing:
            raise SearchError(f"no intrinsic dimensionality for tap {missing[0]!r}")
        vals = [int(dims[m]) for m in members]
        group_id = graph.taps[members[0]].tie_group
        rule = graph.tie_groups[group_id].rule if group_id else "max"
        if rule == "geomean":
            value = int(math.floor(_geomean(vals) + 0.5))
        else:
            value = max(vals)
        if min_width is not None:
            value = max(value, min_width)
        elif value <= 0:
            where = f"tie group {group_id!r}" if group_id else f"tap {members[0]!r}"
            raise SearchError(f"{where}: zero width with flooring disabled")
        for m in members:
            out[m] = value
    return out


def round_half_up(x: float, multiple: int) -> int:
    return int(math.floor(x / multiple + 0.5)) * multiple


def round_to_multiple(widths: Mapping[str, float], multiple: int, min_width: int | None = None) -> WidthAssignment:
    """Round to the nearest positive multiple (ties up), then floor at ``min_width``."""
    floor = multiple if min_width is None else min_width
    out = {}
    for tap_id, w in widths.items():
        r = max(round_half_up(w, multiple), multiple)
        out[tap_id] = max(r, floor)
    return out


def _scaled(adjusted: Mapping[str, int], omega: float) -> dict[str, float]:
    return {t: omega * w for t, w in adjusted.items()}


def expand(graph: ArchitectureGraph, adjusted: Mapping[str, int], cfg: SearchConfig) -> tuple[float, WidthAssignment]:
    """Largest uniform multiplier whose rounded widths fit the budget.

    Feasibility is judged on the rounded widths, which are monotone in the
    multiplier, so bisection on ``[lo, hi]`` keeps ``lo`` certified feasible.
    """
    effective_widths(graph, dict(adjusted))
    if any(w <= 0 for w in adjusted.values()):
        raise SearchError("adjusted widths must be positive")

    def rounded(omega: float) -> WidthAssignment:
        return round_to_multiple(_scaled(adjusted, omega), cfg.multiple, cfg.min_width)

    def feasible(omega: float) -> bool:
        return compute_cost(graph, rounded(omega), cfg.metric) <= cfg.budget

    if not feasible(0.0):
        floor_cost = compute_cost(graph, rounded(0.0), cfg.metric)
        raise InfeasibleBudget(
            f"budget {cfg.budget:g} is below the cost {floor_cost} of the minimum-width network"
        )
    lo, hi = 0.0, 1.0
    for _ in range(_MAX_DOUBLINGS):
        if not feasible(hi):
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise SearchError("cost does not grow with the width multiplier; nothing to expand")
    while hi - lo > cfg.omega_precision:
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            lo = mid
        else:
            hi = mid
    return lo, rounded(lo)


def greedy_fill(graph: ArchitectureGraph, widths: Mapping[str, int], cfg: SearchConfig) -> WidthAssignment:
    """Spend leftover budget one ``multiple`` at a time, cheapest unit first.

    A unit is a tie group or an ungrouped searchable tap. Ties in cost
    increase go to the unit with the lexicographically smallest tap id; units
    whose increase is free are skipped since they would never terminate.
    """
    current = effective_widths(graph, dict(widths))
    total = compute_cost(graph, current, cfg.metric)
    if total > cfg.budget:
        raise SearchError(f"starting cost {total} already exceeds budget {cfg.budget:g}")
    units = tie_units(graph)
    touching: dict[str, list] = {}
    for key, members in units.items():
        ms = set(members)
        touching[key] = [lay for lay in graph.layers if lay.input_tap in ms or lay.output_tap in ms]

    while True:
        best: tuple[int, str] | None = None
        for key, members in units.items():
            before = sum(layer_cost(graph, lay, current, cfg.metric) for lay in touching[key])
            trial = dict(current)
            for m in members:
                trial[m] += cfg.multiple
            after = sum(layer_cost(graph, lay, trial, cfg.metric) for lay in touching[key])
            delta = after - before
            if delta <= 0 or total + delta > cfg.budget:
                continue
            if best is None or delta < best[0]:
                best = (delta, key)
        if best is None:
            break
        delta, key = best
        for m in units[key]:
            current[m] += cfg.multiple
        total += delta
    return {t: current[t] for t in widths}


@dataclass
class TapRecord:
    tap_id: str
    original: int
    intrinsic_dim: int
    adjusted: int
    expanded: float
    rounded: int
    final: int


@dataclass
class SearchReport:
    metric: str
    budget: float
    threshold: float
    multiple: int
    min_width: int
    omega: float
    original_cost: int
    rounded_cost: int
    achieved_cost: int
    taps: list[TapRecord] = field(default_factory=list)

    def final_widths(self) -> WidthAssignment:
        return {r.tap_id: r.final for r in self.taps}

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        cols = ["tap_id", "original", "intrinsic_dim", "adjusted", "expanded", "rounded", "final"]
        writer = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
        writer.writeheader()
        for rec in self.taps:
            writer.writerow(asdict(rec))
        return buf.getvalue()


def run_pipeline(graph: ArchitectureGraph, spectra: Mapping[str, Eigenspectrum], cfg: SearchConfig) -> SearchReport:
    dims = shrink(graph, spectra, cfg.threshold)
    adjusted = adjust(graph, dims, cfg.min_width)
    omega, rounded = expand(graph, adjusted, cfg)
    final = greedy_fill(graph, rounded, cfg) if cfg.greedy_fill else dict(rounded)
    achieved = compute_cost(graph, final, cfg.metric)
    if achieved > cfg.budget:
        raise SearchError(f"internal error: achieved cost {achieved} exceeds budget {cfg.budget:g}")
    records = [
        TapRecord(
            tap_id=t,
            original=graph.taps[t].width,
            intrinsic_dim=dims[t],
            adjusted=adjusted[t],
            expanded=omega * adjusted[t],
            rounded=rounded[t],
            final=final[t],
        )
        for t in graph.searchable_taps()
    ]
    return SearchReport(
        metric=cfg.metric,
        budget=cfg.budget,
        threshold=cfg.threshold,
        multiple=cfg.multiple,
        min_width=cfg.min_width,
        omega=omega,
        original_cost=compute_cost(graph, None, cfg.metric),
        rounded_cost=compute_cost(graph, rounded, cfg.metric),
        achieved_cost=achieved,
        taps=records,
    )
