"""File formats: radio-map JSON, query/trace CSV, config and environment files.

Both data formats are versioned with format_version 1. RSS values are
rounded to 0.1 dB on write. The query CSV has one row per AP reading with
that reading's own detection timestamp (stale readings keep their original
time); rows of one scan are grouped by the `scan` column, since per-AP
timestamps inside a scan legitimately differ. Dead-reckoning increments ride
along as rows with an empty ap_id carrying the step columns.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

from .discrimination import PropagationParams
from .matching import LocationEstimate, MatcherConfig, PipelineToggles, Query
from .model import Fingerprint, Location, RadioMap, Reading, location_error
from .phantom import MotionStep, PhantomConfig
from .robust import LmsConfig
from .simulate import ApPlacement, Environment, ScanModel, TrajectorySpec

__all__ = [
    "FORMAT_VERSION",
    "save_radio_map",
    "load_radio_map",
    "save_queries",
    "load_queries",
    "write_localization_csv",
    "load_matcher_config",
    "load_environment",
    "SimulationSpec",
]

FORMAT_VERSION = 1

QUERY_COLUMNS = [
    "trace_id",
    "scan",
    "t",
    "ap_id",
    "rss",
    "truth_x",
    "truth_y",
    "step_len_m",
    "heading_rad",
]


def _check_version(doc: dict, what: str) -> None:
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ValueError(f"Unsupported {what} format_version {version!r}; expected {FORMAT_VERSION}")


# ---------------------------------------------------------------------------
# Radio map JSON
# ---------------------------------------------------------------------------


def save_radio_map(radio_map: RadioMap, path: str | Path) -> None:
    doc = {
        "format_version": FORMAT_VERSION,
        "grid_spacing": radio_map.grid_spacing,
        "locations": [
            {
                "x": loc.x,
                "y": loc.y,
                "samples": [
                    {
                        "readings": {
                            ap: {"rss": round(r.rss, 1), "t": r.t}
                            for ap, r in sorted(fp.readings.items())
                        }
                    }
                    for fp in radio_map.samples(loc)
                ],
            }
            for loc in radio_map.locations
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=1))


def load_radio_map(path: str | Path) -> RadioMap:
    doc = json.loads(Path(path).read_text())
    _check_version(doc, "radio map")
    entries: dict[Location, list[Fingerprint]] = {}
    for entry in doc["locations"]:
        loc = Location(float(entry["x"]), float(entry["y"]))
        samples = [
            Fingerprint(
                {ap: Reading(float(r["rss"]), float(r["t"])) for ap, r in s["readings"].items()},
                location_hint=loc,
            )
            for s in entry["samples"]
        ]
        entries[loc] = samples
    return RadioMap(float(doc["grid_spacing"]), entries)


# ---------------------------------------------------------------------------
# Query / trace CSV
# ---------------------------------------------------------------------------


def save_queries(queries: Sequence[Query], path: str | Path) -> None:
    """One reading row per AP, one motion row per dead-reckoning step."""
    with open(path, "w", newline="") as f:
        f.write(f"# format_version: {FORMAT_VERSION}\n")
        writer = csv.writer(f)
        writer.writerow(QUERY_COLUMNS)
        written_steps: dict[str, set[float]] = {}
        for q in queries:
            truth_x = f"{q.truth.x:.6f}" if q.truth is not None else ""
            truth_y = f"{q.truth.y:.6f}" if q.truth is not None else ""
            seen = written_steps.setdefault(q.trace_id, set())
            for step in q.motion:
                if step.t in seen:
                    continue
                seen.add(step.t)
                writer.writerow(
                    [q.trace_id, q.scan, f"{step.t:.3f}", "", "", truth_x, truth_y,
                     f"{step.length:.6f}", f"{step.heading:.6f}"]
                )
            for ap, reading in sorted(q.fingerprint.readings.items()):
                writer.writerow(
                    [q.trace_id, q.scan, f"{reading.t:.3f}", ap, f"{reading.rss:.1f}",
                     truth_x, truth_y, "", ""]
                )


def load_queries(path: str | Path) -> list[Query]:
    """Rebuild Query objects; each query carries its whole trace's motion."""
    rows: list[dict[str, str]] = []
    with open(path) as f:
        first = f.readline()
        if not first.startswith("# format_version:"):
            raise ValueError("Query CSV is missing its format_version header line")
        version = int(first.split(":", 1)[1].strip())
        if version != FORMAT_VERSION:
            raise ValueError(f"Unsupported query CSV format_version {version}")
        rows = list(csv.DictReader(f))

    motion_by_trace: dict[str, list[MotionStep]] = {}
    scans: dict[tuple[str, int], dict] = {}
    order: list[tuple[str, int]] = []
    for row in rows:
        trace = row["trace_id"]
        if row["ap_id"]:
            key = (trace, int(row["scan"]))
            if key not in scans:
                scans[key] = {"readings": {}, "truth": None}
                order.append(key)
            scans[key]["readings"][row["ap_id"]] = Reading(float(row["rss"]), float(row["t"]))
            if row["truth_x"] and row["truth_y"]:
                scans[key]["truth"] = Location(float(row["truth_x"]), float(row["truth_y"]))
        elif row["step_len_m"]:
            motion_by_trace.setdefault(trace, []).append(
                MotionStep(
                    t=float(row["t"]),
                    length=float(row["step_len_m"]),
                    heading=float(row["heading_rad"]),
                )
            )

    queries = []
    for trace, scan_idx in order:
        data = scans[(trace, scan_idx)]
        queries.append(
            Query(
                fingerprint=Fingerprint(data["readings"]),
                motion=tuple(motion_by_trace.get(trace, ())),
                trace_id=trace,
                scan=scan_idx,
                truth=data["truth"],
            )
        )
    return queries


def write_localization_csv(
    queries: Sequence[Query], estimates: Sequence[LocationEstimate], path
) -> None:
    """Per-query results: estimate, truth, error and the final dissimilarity."""
    if hasattr(path, "write"):
        _write_localization_rows(csv.writer(path), queries, estimates)
    else:
        with open(path, "w", newline="") as f:
            _write_localization_rows(csv.writer(f), queries, estimates)


def _write_localization_rows(writer, queries, estimates) -> None:
    writer.writerow(["trace_id", "t", "est_x", "est_y", "truth_x", "truth_y", "error_m", "phi"])
    for q, est in zip(queries, estimates):
        if q.truth is not None:
            truth_x, truth_y = f"{q.truth.x:.6f}", f"{q.truth.y:.6f}"
            err = f"{location_error(q.truth, est.location):.6f}"
        else:
            truth_x = truth_y = err = ""
        phi_val = est.score.phi
        writer.writerow(
            [
                q.trace_id,
                f"{q.t:.3f}",
                f"{est.location.x:.6f}",
                f"{est.location.y:.6f}",
                truth_x,
                truth_y,
                err,
                "inf" if math.isinf(phi_val) else f"{phi_val:.6f}",
            ]
        )


# ---------------------------------------------------------------------------
# Config and environment files
# ---------------------------------------------------------------------------


def load_matcher_config(path: str | Path | None) -> MatcherConfig:
    """Global config JSON; every key optional, missing ones take defaults."""
    if path is None:
        return MatcherConfig()
    doc = json.loads(Path(path).read_text())
    propagation = PropagationParams(**doc.get("propagation", {}))
    lms = LmsConfig(**doc.get("lms", {}))
    phantom = PhantomConfig(**doc.get("phantom", {}))
    toggles = PipelineToggles(**doc.get("toggles", {}))
    matching = doc.get("matching", {})
    return MatcherConfig(
        propagation=propagation,
        lms=lms,
        phantom=phantom,
        toggles=toggles,
        window=int(matching.get("window", 3)),
        radar_k=int(matching.get("radar_k", 1)),
        horus_std_floor=float(matching.get("horus_std_floor", 1.0)),
    )


class SimulationSpec:
    """Parsed environment file: the world plus what to generate from it."""

    def __init__(
        self,
        env: Environment,
        scan_model: ScanModel,
        trajectories: list[TrajectorySpec],
        grid_spacing: float,
        samples_per_location: int,
        body_blockage: bool,
        step_noise: float,
    ):
        self.env = env
        self.scan_model = scan_model
        self.trajectories = trajectories
        self.grid_spacing = grid_spacing
        self.samples_per_location = samples_per_location
        self.body_blockage = body_blockage
        self.step_noise = step_noise


def load_environment(path: str | Path, seed: int | None = None) -> SimulationSpec:
    doc = json.loads(Path(path).read_text())
    _check_version(doc, "environment")
    aps = tuple(
        ApPlacement(
            ap_id=str(a["id"]),
            location=Location(float(a["x"]), float(a["y"])),
            p_d0=float(a.get("p_d0", -30.0)),
            gamma=float(a.get("gamma", 3.0)),
        )
        for a in doc["aps"]
    )
    env = Environment(
        width=float(doc["width"]),
        height=float(doc["height"]),
        aps=aps,
        noise_std=float(doc.get("noise_std", 0.0)),
        seed=int(doc.get("seed", 0)) if seed is None else seed,
        scan_jitter_std=float(doc.get("scan_jitter_std", 0.0)),
    )
    scan_doc = doc.get("scan", {})
    miss = scan_doc.get("miss_rates", 0.0)
    scan_model = ScanModel(
        period_s=float(scan_doc.get("period_s", 1.4)),
        miss_rates=miss if isinstance(miss, (int, float)) else {str(k): float(v) for k, v in miss.items()},
        detection_floor=float(scan_doc.get("detection_floor", -100.0)),
        max_staleness_s=float(scan_doc.get("max_staleness_s", 5.0)),
    )
    trajectories = [
        TrajectorySpec(
            waypoints=tuple(Location(float(x), float(y)) for x, y in t["waypoints"]),
            speed=float(t.get("speed", 1.0)),
            duration_s=t.get("duration_s"),
        )
        for t in doc.get("trajectories", [])
    ]
    survey_doc = doc.get("survey", {})
    return SimulationSpec(
        env=env,
        scan_model=scan_model,
        trajectories=trajectories,
        grid_spacing=float(survey_doc.get("grid_spacing", 1.0)),
        samples_per_location=int(survey_doc.get("samples_per_location", 4)),
        body_blockage=bool(doc.get("body_blockage", True)),
        step_noise=float(doc.get("step_noise", 1.0)),
    )
