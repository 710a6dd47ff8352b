"""Canned simulation workloads used by the demos and the acceptance suite.

Three scenarios:

* closed-loop: a noise-free world where matching must be exact;
* static: standing users holding a phone (shadowing noise plus body
  blockage, fresh timestamps) against a dense survey;
* mobile: walking users with per-AP beacon miss rates in the measured
  2-25% range, so scans mix readings from multiple true positions.

The static environment mixes full-coverage backbone APs with low-power
pocket APs whose small audible bubbles make AP sets location-dependent;
that is what gives the common-AP ratio its signal.
"""

from __future__ import annotations

import math

import numpy as np

from .matching import Query
from .model import Location, RadioMap
from .simulate import ApPlacement, Environment, ScanModel, TrajectorySpec, survey, walk

__all__ = [
    "closed_loop_workload",
    "static_workload",
    "mobile_workload",
    "STATIC_SIZE",
    "MOBILE_SIZE",
]

STATIC_SIZE = 12.0
MOBILE_SIZE = 12.0
DETECTION_FLOOR = -70.0
SAMPLES_PER_LOCATION = 2
SCAN_JITTER_STD = 1.0


def _pocket_environment(size: float, noise_std: float, seed: int) -> Environment:
    """Five strong backbone APs plus twelve low-power pocket APs.

    Pocket APs are audible only inside ~4-5 m bubbles at the -70 dBm floor,
    so the detectable AP set varies strongly across the floor.
    """
    s = size
    backbone = [
        ApPlacement("bb0", Location(0.13 * s, 0.17 * s), p_d0=-30.0),
        ApPlacement("bb1", Location(0.88 * s, 0.21 * s), p_d0=-31.0),
        ApPlacement("bb2", Location(0.52 * s, 0.46 * s), p_d0=-29.0),
        ApPlacement("bb3", Location(0.16 * s, 0.84 * s), p_d0=-30.5),
        ApPlacement("bb4", Location(0.82 * s, 0.88 * s), p_d0=-29.5),
    ]
    pocket_xy = [
        (0.14, 0.07), (0.46, 0.11), (0.82, 0.06), (0.07, 0.38), (0.38, 0.41),
        (0.72, 0.35), (0.97, 0.44), (0.22, 0.63), (0.58, 0.68), (0.91, 0.72),
        (0.09, 0.93), (0.47, 0.95),
    ]
    pockets = [
        ApPlacement(f"pk{i:02d}", Location(x * s, y * s), p_d0=-49.0 - (i % 4))
        for i, (x, y) in enumerate(pocket_xy)
    ]
    return Environment(
        width=s,
        height=s,
        aps=tuple(backbone + pockets),
        noise_std=noise_std,
        seed=seed,
        scan_jitter_std=SCAN_JITTER_STD,
    )


def closed_loop_workload(seed: int = 0) -> tuple[RadioMap, list[Query]]:
    """Noise-free 20x20 m world, 8 APs, 1 m grid, no misses, no body.

    Returns the survey map and one fresh scan per grid point; any sane
    matcher must place every query exactly on its own cell.
    """
    s = 20.0
    aps = tuple(
        ApPlacement(f"ap{i}", Location(x * s, y * s))
        for i, (x, y) in enumerate(
            [(0.07, 0.11), (0.46, 0.08), (0.91, 0.17), (0.13, 0.53),
             (0.57, 0.44), (0.94, 0.61), (0.28, 0.92), (0.77, 0.87)]
        )
    )
    env = Environment(width=s, height=s, aps=aps, noise_std=0.0, seed=seed)
    radio_map = survey(env, grid_spacing=1.0, samples_per_location=2)
    model = ScanModel()
    queries = [
        Query(
            fingerprint=_fresh_scan(env, model, loc),
            trace_id=f"cl{i:04d}",
            scan=0,
            truth=loc,
        )
        for i, loc in enumerate(radio_map.locations)
    ]
    return radio_map, queries


def _fresh_scan(env: Environment, model: ScanModel, loc: Location):
    from .simulate import scan

    fp = scan(env, model, loc, t=100.0, history={})
    if fp is None:
        raise RuntimeError(f"No detectable AP at ({loc.x}, {loc.y})")
    return fp


def static_workload(seed: int, n_queries: int = 500) -> tuple[RadioMap, list[Query]]:
    """Standing users: 3 dB shadowing, body blockage on, fresh timestamps.

    One scan per query position, positions uniform over the floor, body
    facing a random direction. The survey is a 1 m grid, body-free.
    """
    env = _pocket_environment(STATIC_SIZE, noise_std=3.0, seed=seed)
    survey_model = ScanModel(detection_floor=DETECTION_FLOOR)
    rng = np.random.default_rng((seed, 0))
    radio_map = survey(env, 1.0, SAMPLES_PER_LOCATION, survey_model, rng)
    queries: list[Query] = []
    i = 0
    while len(queries) < n_queries:
        trace_rng = np.random.default_rng((seed, 1, i))
        pos = Location(
            float(trace_rng.uniform(0.3, STATIC_SIZE - 0.3)),
            float(trace_rng.uniform(0.3, STATIC_SIZE - 0.3)),
        )
        spec = TrajectorySpec(waypoints=(pos,), duration_s=0.0)
        qs = walk(env, spec, survey_model, trace_rng, trace_id=f"st{i:04d}")
        queries.extend(q for q in qs if q.truth is not None)
        i += 1
    return radio_map, queries[:n_queries]


def mobile_workload(seed: int, n_queries: int = 500) -> tuple[RadioMap, list[Query]]:
    """Walking users with paper-range beacon miss rates.

    Speeds draw uniformly from the measured 0.6-1.5 m/s range, per-AP miss
    rates from 2-25%, and the body faces the travel direction. Missed
    beacons re-report stale readings, so queries mix several positions.
    """
    env = _pocket_environment(MOBILE_SIZE, noise_std=3.0, seed=seed)
    rng = np.random.default_rng((seed, 0))
    survey_model = ScanModel(detection_floor=DETECTION_FLOOR)
    radio_map = survey(env, 1.0, SAMPLES_PER_LOCATION, survey_model, rng)

    rates_rng = np.random.default_rng((seed, 2))
    miss_rates = {
        ap.ap_id: float(rates_rng.uniform(0.02, 0.25)) for ap in env.sorted_aps()
    }
    scan_model = ScanModel(miss_rates=miss_rates, detection_floor=DETECTION_FLOOR)

    queries: list[Query] = []
    i = 0
    margin = 0.4
    while len(queries) < n_queries:
        trace_rng = np.random.default_rng((seed, 3, i))
        waypoints = []
        for _ in range(3):
            waypoints.append(
                Location(
                    float(trace_rng.uniform(margin, MOBILE_SIZE - margin)),
                    float(trace_rng.uniform(margin, MOBILE_SIZE - margin)),
                )
            )
        # Reject short hops; a trace should cross a useful stretch of floor.
        length = sum(a.distance_to(b) for a, b in zip(waypoints, waypoints[1:]))
        if length < 8.0:
            i += 1
            continue
        spec = TrajectorySpec(
            waypoints=tuple(waypoints), speed=float(trace_rng.uniform(0.6, 1.5))
        )
        qs = walk(env, spec, scan_model, trace_rng, trace_id=f"mb{i:04d}")
        queries.extend(qs)
        i += 1
    return radio_map, queries[:n_queries]
