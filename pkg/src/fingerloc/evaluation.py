"""Batch evaluation: error statistics, ablations, confusion and density sweeps."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .matching import (
    LocationEstimate,
    MatcherConfig,
    PipelineToggles,
    Query,
    dorfin_localize,
    localize,
    score_candidates,
)
from .model import Location, RadioMap, location_error, moving_average

__all__ = [
    "ErrorSummary",
    "ABLATION_VARIANTS",
    "prepare_queries",
    "nearest_rank",
    "evaluate",
    "run_queries",
    "ablation_suite",
    "confusion_matrix",
    "decimate_map",
    "density_sweep",
]


@dataclass(frozen=True)
class ErrorSummary:
    """Error statistics of one method over one query set.

    Percentiles use the nearest-rank definition: the ceil(p*n)-th order
    statistic, no interpolation.
    """

    method: str
    mean_m: float
    p50_m: float
    p95_m: float
    max_m: float
    n: int
    errors: tuple[float, ...]


# Ablation rows: label plus which pipeline stages are active. All-off is the
# basic scheme; the phantom-only row applies to mobile workloads.
ABLATION_VARIANTS: tuple[tuple[str, PipelineToggles], ...] = (
    ("basic", PipelineToggles(False, False, False, False)),
    ("basic+df", PipelineToggles(True, False, False, False)),
    ("basic+rr", PipelineToggles(False, True, False, False)),
    ("basic+ca", PipelineToggles(False, False, True, False)),
    ("basic+pf", PipelineToggles(False, False, False, True)),
    ("dorfin", PipelineToggles(True, True, True, True)),
)


def nearest_rank(sorted_errors: Sequence[float], pct: float) -> float:
    """Nearest-rank percentile of an ascending sequence."""
    n = len(sorted_errors)
    if n == 0:
        raise ValueError("Need at least one value")
    rank = max(1, math.ceil(pct * n))
    return float(sorted_errors[min(rank, n) - 1])


def prepare_queries(queries: Sequence[Query], window: int) -> list[Query]:
    """Moving-average filter each trace's scan stream, preserving order."""
    if window <= 1:
        return list(queries)
    by_trace: dict[str, list[int]] = {}
    for i, q in enumerate(queries):
        by_trace.setdefault(q.trace_id, []).append(i)
    out = list(queries)
    for indices in by_trace.values():
        filtered = moving_average([queries[i].fingerprint for i in indices], window)
        for i, fp in zip(indices, filtered):
            out[i] = replace(queries[i], fingerprint=fp)
    return out


def summarize(errors: Sequence[float], method: str) -> ErrorSummary:
    if not errors:
        raise ValueError("Cannot summarize an empty error list")
    ordered = sorted(errors)
    return ErrorSummary(
        method=method,
        mean_m=float(np.mean(ordered)),
        p50_m=nearest_rank(ordered, 0.50),
        p95_m=nearest_rank(ordered, 0.95),
        max_m=ordered[-1],
        n=len(ordered),
        errors=tuple(errors),
    )


def run_queries(
    radio_map: RadioMap,
    queries: Sequence[Query],
    method: str | PipelineToggles,
    config: MatcherConfig = MatcherConfig(),
    label: str | None = None,
) -> tuple[list[LocationEstimate], ErrorSummary]:
    """Localize every query and summarize errors against ground truth.

    `method` is one of the named matchers, or a PipelineToggles to run the
    pipeline in an ablation configuration.
    """
    if not queries:
        raise ValueError("Query set is empty")
    if any(q.truth is None for q in queries):
        raise ValueError("Every query needs ground truth for evaluation")
    prepared = prepare_queries(queries, config.window)
    estimates: list[LocationEstimate] = []
    errors: list[float] = []
    if isinstance(method, PipelineToggles):
        cfg = config.with_toggles(method)
        tag = label if label is not None else _toggles_label(method)
        for q in prepared:
            est = dorfin_localize(q, radio_map, cfg)
            estimates.append(replace(est, method=tag))
    else:
        tag = label if label is not None else method
        for q in prepared:
            estimates.append(localize(q, radio_map, method, config))
    for q, est in zip(prepared, estimates):
        errors.append(location_error(q.truth, est.location))
    return estimates, summarize(errors, tag)


def _toggles_label(toggles: PipelineToggles) -> str:
    parts = [
        name
        for name, on in (
            ("df", toggles.use_df),
            ("rr", toggles.use_rr),
            ("ca", toggles.use_ca),
            ("pf", toggles.use_pf),
        )
        if on
    ]
    if not parts:
        return "basic"
    if len(parts) == 4:
        return "dorfin"
    return "basic+" + "+".join(parts)


def evaluate(
    radio_map: RadioMap,
    queries: Sequence[Query],
    method: str | PipelineToggles = "dorfin",
    config: MatcherConfig = MatcherConfig(),
) -> ErrorSummary:
    """Error summary of one method over a query set."""
    _, summary = run_queries(radio_map, queries, method, config)
    return summary


def ablation_suite(
    radio_map: RadioMap,
    queries: Sequence[Query],
    config: MatcherConfig = MatcherConfig(),
) -> list[ErrorSummary]:
    """Run the basic scheme, each single pipeline stage, and the full stack.

    The phantom-only row needs mobile queries; on a static workload it would
    be a no-op, so it is skipped with a warning.
    """
    mobile = any(q.motion for q in queries)
    rows: list[ErrorSummary] = []
    for label, toggles in ABLATION_VARIANTS:
        if toggles == PipelineToggles(False, False, False, True) and not mobile:
            warnings.warn("Phantom substitution is a no-op on static queries; skipping row")
            continue
        rows.append(evaluate(radio_map, queries, toggles, config))
    return rows


def confusion_matrix(
    radio_map: RadioMap,
    queries: Sequence[Query],
    toggles: PipelineToggles = PipelineToggles(False, False, False, False),
    config: MatcherConfig = MatcherConfig(),
) -> tuple[list[Location], list[Location], np.ndarray]:
    """Mean dissimilarity of each true location's queries vs every candidate.

    Rows are the distinct query truth locations (sorted), columns the map
    locations; entries average the selected metric, which is infinite for
    disjoint AP sets when the common-AP ratio is active.
    """
    if any(q.truth is None for q in queries):
        raise ValueError("Confusion matrix needs ground-truth locations")
    prepared = prepare_queries(queries, config.window)
    cfg = config.with_toggles(toggles)
    groups: dict[Location, list[Query]] = {}
    for q in prepared:
        groups.setdefault(q.truth, []).append(q)
    row_locs = sorted(groups, key=lambda l: (l.x, l.y))
    col_locs = radio_map.locations
    matrix = np.zeros((len(row_locs), len(col_locs)))
    for i, loc in enumerate(row_locs):
        acc = np.zeros(len(col_locs))
        for q in groups[loc]:
            acc += score_candidates(q, radio_map, cfg).selection_key
        matrix[i] = acc / len(groups[loc])
    return row_locs, col_locs, matrix


def decimate_map(radio_map: RadioMap, spacing: float) -> RadioMap:
    """Sift the map down to a coarser grid anchored at its minimum corner.

    The target spacing must be an integer multiple of the base spacing.
    """
    base = radio_map.grid_spacing
    ratio = spacing / base
    if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
        raise ValueError(f"Spacing {spacing} is not a multiple of the base {base}")
    ratio = int(round(ratio))
    if ratio == 1:
        return radio_map
    locs = radio_map.locations
    x0 = min(l.x for l in locs)
    y0 = min(l.y for l in locs)
    kept: dict[Location, tuple] = {}
    for loc in locs:
        ix = (loc.x - x0) / base
        iy = (loc.y - y0) / base
        if abs(ix - round(ix)) > 1e-6 or abs(iy - round(iy)) > 1e-6:
            continue
        if round(ix) % ratio == 0 and round(iy) % ratio == 0:
            kept[loc] = radio_map.samples(loc)
    if not kept:
        raise ValueError("Decimation removed every location")
    return RadioMap(spacing, kept)


def density_sweep(
    radio_map: RadioMap,
    queries: Sequence[Query],
    spacings: Sequence[float],
    method: str | PipelineToggles = "dorfin",
    config: MatcherConfig = MatcherConfig(),
) -> list[tuple[float, ErrorSummary]]:
    """Evaluate the same queries against progressively sparser maps."""
    out = []
    for spacing in spacings:
        sparse = decimate_map(radio_map, spacing)
        summary = evaluate(sparse, queries, method, config)
        out.append((spacing, summary))
    return out
