"""Intrinsic-dimensionality time series across training checkpoints, with
drop and rebound event detection."""

from __future__ import annotations

import csv
import io
import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple, Sequence

from .spectra import DEFAULT_THRESHOLD, Eigenspectrum, SpectraError, intrinsic_dim

DEFAULT_WINDOW = 10_000
DEFAULT_FRACTION = 0.5
DEFAULT_HORIZON = 10_000

_SERIES_FILE = re.compile(r"^(\d+)\.spectra\.json$")


class DynamicsError(ValueError):
    pass


@dataclass(frozen=True)
class CheckpointSpectra:
    iteration: int
    spectra: Mapping[str, Eigenspectrum]


@dataclass(frozen=True)
class DynamicsSeries:
    tap_id: str
    points: tuple[tuple[int, int], ...]  # (iteration, dim)
    threshold: float = DEFAULT_THRESHOLD

    @property
    def iterations(self) -> list[int]:
        return [it for it, _ in self.points]

    @property
    def dims(self) -> list[int]:
        return [d for _, d in self.points]


class DropEvent(NamedTuple):
    tap_id: str
    start_iter: int
    end_iter: int
    dim_before: int
    dim_after: int


class ReboundEvent(NamedTuple):
    tap_id: str
    decay_iter: int
    dim_before: int
    dim_after: int


def dim_series(checkpoints: Sequence[CheckpointSpectra], threshold: float = DEFAULT_THRESHOLD) -> dict[str, DynamicsSeries]:
    if not checkpoints:
        raise DynamicsError("no checkpoints given")
    taps = set(checkpoints[0].spectra)
    for prev, cur in zip(checkpoints, checkpoints[1:]):
        if cur.iteration <= prev.iteration:
            raise DynamicsError(f"iterations not strictly increasing at {cur.iteration}")
    for ck in checkpoints:
        if set(ck.spectra) != taps:
            diff = sorted(taps.symmetric_difference(ck.spectra))
            raise DynamicsError(f"checkpoint {ck.iteration}: tap set differs (e.g. {diff[0]!r})")
    return {
        tap: DynamicsSeries(
            tap_id=tap,
            points=tuple((ck.iteration, intrinsic_dim(ck.spectra[tap], threshold)) for ck in checkpoints),
            threshold=threshold,
        )
        for tap in sorted(taps)
    }


def _as_series(series: DynamicsSeries | Mapping[str, DynamicsSeries] | Iterable[DynamicsSeries]) -> list[DynamicsSeries]:
    if isinstance(series, DynamicsSeries):
        return [series]
    if isinstance(series, Mapping):
        return list(series.values())
    return list(series)


def detect_drops(series, window_iters: int = DEFAULT_WINDOW, min_fraction: float = DEFAULT_FRACTION) -> list[DropEvent]:
    """Non-overlapping intervals of length <= ``window_iters`` where the dim
    falls by at least ``min_fraction`` of its starting value.

    From each start point the deepest qualifying end point within the window
    is taken, and scanning resumes from that end point.
    """
    if window_iters <= 0:
        raise DynamicsError("window_iters must be positive")
    if not 0.0 < min_fraction <= 1.0:
        raise DynamicsError("min_fraction must lie in (0, 1]")
    events = []
    for s in _as_series(series):
        pts = s.points
        i = 0
        while i < len(pts):
            it0, d0 = pts[i]
            best = None
            j = i + 1
            while j < len(pts) and pts[j][0] - it0 <= window_iters:
                d = pts[j][1]
                if d0 > 0 and d0 - d >= min_fraction * d0 and (best is None or d < pts[best][1]):
                    best = j
                j += 1
            if best is None:
                i += 1
                continue
            events.append(DropEvent(s.tap_id, it0, pts[best][0], d0, pts[best][1]))
            i = best
    return sorted(events, key=lambda e: (e.start_iter, e.tap_id))


def detect_rebounds(series, decay_iters: Iterable[int], horizon: int = DEFAULT_HORIZON) -> list[ReboundEvent]:
    """Taps whose dim rises right after a learning-rate decay.

    Compares the last sample at or before each decay with the first sample
    within ``horizon`` after it. Decays outside a series' range are skipped.
    """
    events = []
    decays = sorted(decay_iters)
    for s in _as_series(series):
        for decay in decays:
            before = [p for p in s.points if p[0] <= decay]
            after = [p for p in s.points if decay < p[0] <= decay + horizon]
            if not before or not after:
                continue
            d_before, d_after = before[-1][1], after[0][1]
            if d_after > d_before:
                events.append(ReboundEvent(s.tap_id, decay, d_before, d_after))
    return sorted(events, key=lambda e: (e.decay_iter, e.tap_id))


@dataclass(frozen=True)
class ArchComparison:
    diffs: dict[str, int]
    greater: tuple[str, ...]
    less: tuple[str, ...]
    equal: tuple[str, ...]
    by_stage: dict[str, dict[str, int]] | None = None

    def __neg__(self) -> ArchComparison:
        by_stage = None
        if self.by_stage is not None:
            by_stage = {k: {"greater": v["less"], "less": v["greater"], "equal": v["equal"]} for k, v in self.by_stage.items()}
        return ArchComparison({t: -d for t, d in self.diffs.items()}, self.less, self.greater, self.equal, by_stage)


def compare_architectures(a: Mapping[str, int], b: Mapping[str, int], stages: Mapping[str, str] | None = None) -> ArchComparison:
    """Signed per-tap differences ``a - b`` with summary counts, optionally per stage."""
    if set(a) != set(b):
        diff = sorted(set(a).symmetric_difference(b))
        raise DynamicsError(f"tap sets differ (e.g. {diff[0]!r})")
    diffs = {t: int(a[t]) - int(b[t]) for t in sorted(a)}
    by_stage = None
    if stages is not None:
        by_stage = {}
        for t, d in diffs.items():
            bucket = by_stage.setdefault(stages.get(t, ""), {"greater": 0, "less": 0, "equal": 0})
            bucket["greater" if d > 0 else "less" if d < 0 else "equal"] += 1
    return ArchComparison(
        diffs=diffs,
        greater=tuple(t for t, d in diffs.items() if d > 0),
        less=tuple(t for t, d in diffs.items() if d < 0),
        equal=tuple(t for t, d in diffs.items() if d == 0),
        by_stage=by_stage,
    )


# -- files -------------------------------------------------------------------


def load_spectra_file(path: Path) -> dict[str, Eigenspectrum]:
    """A spectra file is a JSON list of ``{tap_id, raw_max, values}`` records."""
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise DynamicsError(f"{path}: invalid JSON ({exc})") from None
    records = doc if isinstance(doc, list) else [doc]
    try:
        out = {}
        for rec in records:
            spec = Eigenspectrum.from_dict(rec)
            out[spec.tap_id] = spec
        return out
    except SpectraError as exc:
        raise DynamicsError(f"{path}: {exc}") from None


def save_spectra_file(path: Path, spectra: Iterable[Eigenspectrum]) -> None:
    Path(path).write_text(json.dumps([s.to_dict() for s in spectra], indent=2) + "\n")


def load_checkpoints(directory: Path) -> list[CheckpointSpectra]:
    """Read every ``<iteration>.spectra.json`` in ``directory``, ordered by iteration."""
    found = []
    for path in Path(directory).iterdir():
        m = _SERIES_FILE.match(path.name)
        if m:
            found.append((int(m.group(1)), path))
    if not found:
        raise DynamicsError(f"{directory}: no <iteration>.spectra.json files")
    found.sort()
    return [CheckpointSpectra(it, load_spectra_file(p)) for it, p in found]


def series_csv(series: Mapping[str, DynamicsSeries]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["iteration", "tap_id", "dim"])
    rows = sorted((it, s.tap_id, d) for s in series.values() for it, d in s.points)
    writer.writerows(rows)
    return buf.getvalue()


def events_dict(drops: Sequence[DropEvent], rebounds: Sequence[ReboundEvent]) -> dict:
    return {
        "drops": [e._asdict() for e in drops],
        "rebounds": [e._asdict() for e in rebounds],
    }
