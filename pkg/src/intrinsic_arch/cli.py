"""Command-line entry point: ``intrinsic-arch {cost,spectra,search,dynamics,synth}``.

Exit codes: 0 success, 2 input or validation error, 3 infeasible budget.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .archgraph import METRICS, ArchError, compute_cost, format_si, parse_arch, serialize, apply_widths
from .dynamics import (
    DEFAULT_FRACTION,
    DEFAULT_HORIZON,
    DEFAULT_WINDOW,
    DynamicsError,
    detect_drops,
    detect_rebounds,
    dim_series,
    events_dict,
    load_checkpoints,
    series_csv,
)
from .fmap import FmapError, accumulate_tap, read_manifest, tap_files
from .search import InfeasibleBudget, SearchConfig, SearchError, run_pipeline
from .spectra import DEFAULT_THRESHOLD, Eigenspectrum, SpectraError, eigenspectrum, finalize
from .synth import SynthError, generate, load_specs

log = logging.getLogger("intrinsic_arch")

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE = 0, 2, 3
MANIFEST_NAME = "run_manifest.json"


class InputError(Exception):
    pass


def _hash_inputs(args: argparse.Namespace, paths: Sequence[Path]) -> str:
    h = hashlib.sha256()
    opts = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    h.update(json.dumps(opts, sort_keys=True, default=str).encode())
    for p in paths:
        p = Path(p)
        files = sorted(q for q in p.rglob("*") if q.is_file()) if p.is_dir() else [p]
        for f in files:
            h.update(str(f.relative_to(p) if p.is_dir() else f.name).encode())
            h.update(f.read_bytes())
    return h.hexdigest()


def _manifest(args: argparse.Namespace, inputs: Sequence[Path], started: float) -> dict[str, Any]:
    return {
        "subcommand": args.command,
        "inputs": [str(p) for p in inputs],
        "config_hash": _hash_inputs(args, inputs),
        "tool_version": __version__,
        "duration_s": time.perf_counter() - started,
    }


def _write_manifest(directory: Path, manifest: dict[str, Any]) -> None:
    (directory / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2) + "\n")


def _read_arch(path: Path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    return parse_arch(text)


def _read_json(path: Path) -> Any:
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from None


def cmd_cost(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    graph = _read_arch(args.arch)
    widths = None
    if args.widths:
        raw = _read_json(args.widths)
        if not isinstance(raw, dict):
            raise InputError(f"{args.widths}: expected an object mapping tap id to width")
        widths = raw
    cost = compute_cost(graph, widths, args.metric)
    inputs = [args.arch] + ([args.widths] if args.widths else [])
    result = {"metric": args.metric, "cost": cost, "human": format_si(cost)}
    print(f"{args.metric}: {format_si(cost)}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "cost.json").write_text(json.dumps(result, indent=2) + "\n")
        _write_manifest(out, _manifest(args, inputs, started))
    else:
        result["manifest"] = _manifest(args, inputs, started)
        print(json.dumps(result))
    return EXIT_OK


def compute_archive_spectra(archive: Path, threads: int = 1) -> list[Eigenspectrum]:
    spectra = []
    for entry in read_manifest(archive):
        n_files = len(tap_files(archive, entry["id"]))
        if n_files != entry["images"]:
            raise FmapError(f"{archive / entry['id']}: manifest lists {entry['images']} images, found {n_files}")
        acc = accumulate_tap(archive, entry["id"], entry["channels"], threads)
        spectra.append(eigenspectrum(finalize(acc), entry["id"]))
    return spectra


def cmd_spectra(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    if args.threads < 1:
        raise InputError("--threads must be at least 1")
    spectra = compute_archive_spectra(Path(args.archive), args.threads)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for spec in spectra:
        (out / f"{spec.tap_id}.spectrum.json").write_text(json.dumps(spec.to_dict(), indent=2) + "\n")
        log.info("%s: raw_max=%.3g", spec.tap_id, spec.raw_max)
    _write_manifest(out, _manifest(args, [args.archive], started))
    print(f"wrote {len(spectra)} spectra to {out}")
    return EXIT_OK


def load_spectra_dir(directory: Path) -> dict[str, Eigenspectrum]:
    directory = Path(directory)
    if not directory.is_dir():
        raise InputError(f"{directory}: not a directory")
    out = {}
    for path in sorted(directory.glob("*.spectrum.json")):
        spec = Eigenspectrum.from_dict(_read_json(path))
        out[spec.tap_id] = spec
    return out


def cmd_search(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    graph = _read_arch(args.arch)
    spectra = load_spectra_dir(args.spectra)
    budget = args.budget if args.budget is not None else float(compute_cost(graph, None, args.metric))
    cfg = SearchConfig(
        threshold=args.threshold,
        metric=args.metric,
        budget=budget,
        multiple=args.multiple,
        min_width=args.min_width,
        greedy_fill=not args.no_fill,
    )
    report = run_pipeline(graph, spectra, cfg)
    searched = apply_widths(graph, report.final_widths())
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(report.to_json())
    (out / "report.csv").write_text(report.to_csv())
    (out / "arch.json").write_text(serialize(searched))
    _write_manifest(out, _manifest(args, [args.arch, args.spectra], started))
    print(
        f"omega={report.omega:.3g} {cfg.metric}: {format_si(report.achieved_cost)}"
        f" (budget {format_si(budget)})"
    )
    return EXIT_OK


def cmd_dynamics(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    if not Path(args.series).is_dir():
        raise InputError(f"{args.series}: not a directory")
    checkpoints = load_checkpoints(Path(args.series))
    series = dim_series(checkpoints, args.threshold)
    lo, hi = checkpoints[0].iteration, checkpoints[-1].iteration
    decays = []
    for d in args.decay_iters:
        if lo <= d <= hi:
            decays.append(d)
        else:
            log.warning("decay iteration %d outside checkpoint range [%d, %d]; ignored", d, lo, hi)
    drops = detect_drops(series, args.window, args.fraction)
    rebounds = detect_rebounds(series, decays, args.horizon)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "series.csv").write_text(series_csv(series))
    (out / "events.json").write_text(json.dumps(events_dict(drops, rebounds), indent=2) + "\n")
    _write_manifest(out, _manifest(args, [args.series], started))
    print(f"{len(checkpoints)} checkpoints, {len(series)} taps: {len(drops)} drops, {len(rebounds)} rebounds")
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    specs = load_specs(_read_json(args.spec))
    out = Path(args.out)
    generate(specs, out, args.seed)
    _write_manifest(out, _manifest(args, [args.spec], started))
    print(f"wrote {len(specs)} taps to {out}")
    return EXIT_OK


def _int_list(text: str) -> list[int]:
    try:
        return [int(float(x)) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated iterations, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="intrinsic-arch", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("cost", help="MACs or parameter count of an architecture")
    p.add_argument("--arch", required=True, type=Path)
    p.add_argument("--metric", choices=METRICS, default="macs")
    p.add_argument("--widths", type=Path, help="JSON object of tap id -> width overriding the config")
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_cost)

    p = sub.add_parser("spectra", help="eigenspectra of every tap in an activation archive")
    p.add_argument("--archive", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_spectra)

    p = sub.add_parser("search", help="shrink/adjust/expand width search under a budget")
    p.add_argument("--arch", required=True, type=Path)
    p.add_argument("--spectra", required=True, type=Path, help="directory of <tap>.spectrum.json files")
    p.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)
    p.add_argument("--metric", choices=METRICS, default="macs")
    p.add_argument("--budget", type=float, help="defaults to the cost of the input architecture")
    p.add_argument("--multiple", type=int, default=32)
    p.add_argument("--min-width", type=int)
    p.add_argument("--no-fill", action="store_true", help="skip greedy filling of leftover budget")
    p.add_argument("--out", required=True, type=Path)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("dynamics", help="intrinsic-dimensionality series and drop/rebound events")
    p.add_argument("--series", required=True, type=Path, help="directory of <iteration>.spectra.json files")
    p.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)
    p.add_argument("--decay-iters", type=_int_list, default=[])
    p.add_argument("--window", type=int, default=DEFAULT_WINDOW)
    p.add_argument("--fraction", type=float, default=DEFAULT_FRACTION)
    p.add_argument("--horizon", type=int, default=DEFAULT_HORIZON)
    p.add_argument("--out", required=True, type=Path)
    p.set_defaults(func=cmd_dynamics)

    p = sub.add_parser("synth", help="generate a synthetic activation archive")
    p.add_argument("--spec", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except InfeasibleBudget as exc:
        print(f"error: infeasible budget: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (InputError, ArchError, SearchError, SpectraError, DynamicsError, SynthError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
