"""Independent reference implementations used as test oracles.

None of these share code paths with the package beyond the graph data
structure itself.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction

import numpy as np


def jacobi_eigenvalues(a: np.ndarray, tol: float = 1e-14, max_sweeps: int = 100) -> np.ndarray:
    """Cyclic Jacobi rotations on a symmetric matrix; eigenvalues descending."""
    a = np.array(a, dtype=np.float64)
    n = a.shape[0]
    scale = np.abs(a).max() or 1.0
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.triu(a, 1) ** 2))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                rp, rq = a[p, :].copy(), a[q, :].copy()
                a[p, :], a[q, :] = c * rp - s * rq, s * rp + c * rq
                cp, cq = a[:, p].copy(), a[:, q].copy()
                a[:, p], a[:, q] = c * cp - s * cq, s * cp + c * cq
    return np.sort(np.diag(a))[::-1]


def reference_normalized_spectrum(cov: np.ndarray) -> np.ndarray:
    eig = np.clip(jacobi_eigenvalues(cov), 0.0, None)
    return eig / eig[0] if eig[0] > 0 else np.zeros_like(eig)


def brute_cost(graph, widths: dict[str, int], metric: str) -> int:
    """Per-layer MAC/param count written out as explicit loops over the kernel window."""
    total = 0
    for layer in graph.layers:
        i_w, o_w = widths[layer.input_tap], widths[layer.output_tap]
        per_position = 0
        for _ky in range(layer.kernel):
            for _kx in range(layer.kernel):
                per_position += i_w * o_w
        if metric == "macs":
            w, h = graph._spatial["layer:" + layer.id]
            per_position *= w * h
        total += per_position
    return total


def exact_round(x: Fraction, multiple: int, min_width: int) -> int:
    r = math.floor(x / multiple + Fraction(1, 2)) * multiple
    return max(r, multiple, min_width)


def grid_scan_expand(graph, adjusted: dict[str, int], metric: str, budget: float, multiple: int,
                     min_width: int, steps_per_unit: int = 100, top: int = 800):
    """Largest grid multiplier ``k / steps_per_unit`` (k = 1..top) whose rounded widths fit.

    Rounding is done in exact integer arithmetic:
    ``floor(k*v/(s*m) + 1/2) = (2*k*v + s*m) // (2*s*m)``.
    Returns (Fraction omega, widths) or None when no grid point is feasible.
    """
    s, m = steps_per_unit, multiple
    best = None
    seen: dict[tuple[int, ...], bool] = {}
    for k in range(1, top + 1):
        w = {t: max((2 * k * v + s * m) // (2 * s * m) * m, m, min_width) for t, v in adjusted.items()}
        key = tuple(w.values())
        if key not in seen:
            full = graph.widths()
            full.update(w)
            seen[key] = brute_cost(graph, full, metric) <= budget
        if seen[key]:
            best = (Fraction(k, s), w)
    return best


def greedy_replay(graph, start: dict[str, int], budget: float, multiple: int, metric: str = "params") -> dict[str, int]:
    """Cheapest-increment-first filling over ungrouped taps, re-costing the whole graph each step."""
    w = {**graph.widths(), **start}
    while True:
        base = brute_cost(graph, w, metric)
        options = []
        for t in sorted(start):
            trial = {**w, t: w[t] + multiple}
            c = brute_cost(graph, trial, metric)
            if base < c <= budget:
                options.append((c - base, t))
        if not options:
            return {t: w[t] for t in start}
        _, t = min(options)
        w[t] += multiple
