"""Synthetic radio environment: propagation, scanning quirks and mobility.

The generator reproduces the phenomenology the matching stack is built for:
log-distance path loss with Gaussian shadowing, a 5-10 dB body-blockage
penalty for APs behind the user, and a passive-scan model in which a missed
beacon is papered over by re-reporting the previous detection with its stale
timestamp (dropped entirely once it is older than the reporting horizon).

All randomness flows from explicit numpy Generators seeded by the caller;
identical seeds give bit-identical streams. Generation is sequential within
a trace (scan history carries over) while independent traces use their own
child seeds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .discrimination import ldpl_rss, PropagationParams
from .matching import Query
from .model import RSS_CEIL, RSS_FLOOR, Fingerprint, Location, RadioMap, Reading
from .phantom import MotionStep

__all__ = [
    "ApPlacement",
    "Environment",
    "ScanModel",
    "TrajectorySpec",
    "true_rss",
    "scan",
    "survey",
    "walk",
    "grid_locations",
]

SCAN_PERIOD_S = 1.4  # one passive scan across the 2.4 GHz channels
BLOCKAGE_RANGE_DB = (5.0, 10.0)  # body attenuation for APs behind the user
STEP_LENGTH_ERR_FRAC = 0.02  # dead-reckoned displacement length error bound
STEP_HEADING_ERR_RAD = math.pi / 24  # dead-reckoned heading error bound


@dataclass(frozen=True)
class ApPlacement:
    """One access point: identity, position and its propagation constants."""

    ap_id: str
    location: Location
    p_d0: float = -30.0
    gamma: float = 3.0

    @property
    def propagation(self) -> PropagationParams:
        return PropagationParams(p_d0=self.p_d0, gamma=self.gamma)


# Sinusoid count for the spatial shadowing field; wavelengths in this range
# keep the field nearly constant across one grid step but distinct between
# rooms (correlation ~0.9 at 0.5 m, ~0.5 at 3 m).
_FIELD_COMPONENTS = 24
_FIELD_WAVELENGTHS = (5.0, 10.0)


@dataclass(frozen=True)
class Environment:
    """Rectangular area with APs, static shadowing and a master seed.

    noise_std is the standard deviation of a frozen per-AP spatial shadowing
    field: a smooth function of position, the same at survey and query time,
    which is what makes positions distinguishable beyond pure path loss.
    scan_jitter_std adds the small per-scan measurement scatter on top.
    """

    width: float
    height: float
    aps: tuple[ApPlacement, ...]
    noise_std: float = 3.0
    seed: int = 0
    scan_jitter_std: float = 0.0

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise ValueError("Environment dimensions must be positive")
        if self.noise_std < 0 or self.scan_jitter_std < 0:
            raise ValueError("Noise levels must be >= 0")
        for ap in self.aps:
            if not self.contains(ap.location):
                raise ValueError(f"AP {ap.ap_id} at ({ap.location.x}, {ap.location.y}) "
                                 "is outside the environment")
        object.__setattr__(self, "_shadow_params", self._build_shadow_fields())

    def _build_shadow_fields(self) -> dict[str, np.ndarray]:
        """Random-phase sinusoid parameters per AP, fixed by the seed."""
        params: dict[str, np.ndarray] = {}
        for i, ap in enumerate(sorted(self.aps, key=lambda a: a.ap_id)):
            rng = np.random.default_rng((self.seed, 7700 + i))
            wavelength = rng.uniform(*_FIELD_WAVELENGTHS, size=_FIELD_COMPONENTS)
            angle = rng.uniform(0.0, 2.0 * math.pi, size=_FIELD_COMPONENTS)
            phase = rng.uniform(0.0, 2.0 * math.pi, size=_FIELD_COMPONENTS)
            k = 2.0 * math.pi / wavelength
            params[ap.ap_id] = np.stack([k * np.cos(angle), k * np.sin(angle), phase])
        return params

    def shadowing(self, ap_id: str, position: Location) -> float:
        """Static shadowing offset in dB for one AP at one position."""
        if self.noise_std == 0.0:
            return 0.0
        kx, ky, phase = self._shadow_params[ap_id]
        amp = self.noise_std * math.sqrt(2.0 / _FIELD_COMPONENTS)
        return float(amp * np.sum(np.cos(kx * position.x + ky * position.y + phase)))

    def contains(self, p: Location) -> bool:
        return 0.0 <= p.x <= self.width and 0.0 <= p.y <= self.height

    def sorted_aps(self) -> list[ApPlacement]:
        return sorted(self.aps, key=lambda a: a.ap_id)


@dataclass(frozen=True)
class ScanModel:
    """Passive-scan behavior: period, per-AP miss rates, reporting horizon.

    transient_rate adds ambient-dynamics fades: with that probability per
    reading, an extra uniform fade from transient_fade_db is subtracted,
    modeling the occasional large single-AP swings that doors, elevators
    and passers-by cause. Off by default.
    """

    period_s: float = SCAN_PERIOD_S
    miss_rates: Mapping[str, float] | float = 0.0
    detection_floor: float = RSS_FLOOR
    max_staleness_s: float = 5.0
    transient_rate: float = 0.0
    transient_fade_db: tuple[float, float] = (4.0, 12.0)

    def miss_rate(self, ap_id: str) -> float:
        if isinstance(self.miss_rates, (int, float)):
            return float(self.miss_rates)
        return float(self.miss_rates.get(ap_id, 0.0))


@dataclass(frozen=True)
class TrajectorySpec:
    """Waypoint path walked at constant speed; a single waypoint stands still.

    Speeds default into the regular walking range; `duration_s` only matters
    for stationary specs (it fixes how many scans are taken in place).
    """

    waypoints: tuple[Location, ...]
    speed: float = 1.0
    duration_s: float | None = None

    def __post_init__(self) -> None:
        if not self.waypoints:
            raise ValueError("Trajectory needs at least one waypoint")
        if len(self.waypoints) > 1 and self.speed <= 0:
            raise ValueError("Moving trajectory needs a positive speed")


def true_rss(
    env: Environment,
    ap: ApPlacement,
    position: Location,
    rng: np.random.Generator | None = None,
    body_heading: float | None = None,
    detection_floor: float = RSS_FLOOR,
) -> float | None:
    """Ground-truth RSS at a position, or None when below the detection floor.

    Path loss plus the frozen shadowing field, per-scan jitter, minus a
    uniform 5-10 dB penalty when the AP sits in the back half-plane of the
    body heading. Distances clamp at the 1 m model reference so an AP
    directly overhead stays finite.
    """
    if not env.contains(position):
        raise ValueError(f"Position ({position.x}, {position.y}) outside the environment")
    d = max(position.distance_to(ap.location), 1.0)
    rss = ldpl_rss(d, ap.propagation) + env.shadowing(ap.ap_id, position)
    if env.scan_jitter_std > 0:
        if rng is None:
            raise ValueError("scan_jitter_std > 0 requires an rng")
        rss += rng.normal(0.0, env.scan_jitter_std)
    if body_heading is not None:
        bearing = math.atan2(ap.location.y - position.y, ap.location.x - position.x)
        diff = math.atan2(math.sin(bearing - body_heading), math.cos(bearing - body_heading))
        if abs(diff) > math.pi / 2:
            if rng is None:
                raise ValueError("Body blockage requires an rng")
            rss -= rng.uniform(*BLOCKAGE_RANGE_DB)
    rss = min(rss, RSS_CEIL)
    if rss < detection_floor:
        return None
    return rss


def scan(
    env: Environment,
    scan_model: ScanModel,
    position: Location,
    t: float,
    history: dict[str, Reading],
    rng: np.random.Generator | None = None,
    body_heading: float | None = None,
) -> Fingerprint | None:
    """One passive scan at time t; updates `history` with fresh detections.

    An in-range AP is missed with its miss rate. The scanner cannot tell a
    collided beacon from an AP that has gone out of range, so any AP not
    detected this scan is re-reported from history while its last detection
    is at most max_staleness_s old, after which it drops out until detected
    again. Fresh detections carry timestamp t. Returns None when nothing at
    all is reportable.
    """
    readings: dict[str, Reading] = {}
    for ap in env.sorted_aps():
        rss = true_rss(env, ap, position, rng, body_heading, scan_model.detection_floor)
        if rss is not None and scan_model.transient_rate > 0.0 and rng is not None:
            if rng.random() < scan_model.transient_rate:
                rss -= rng.uniform(*scan_model.transient_fade_db)
                if rss < scan_model.detection_floor:
                    rss = None
        missed = rss is None
        if not missed:
            miss = scan_model.miss_rate(ap.ap_id)
            missed = miss > 0.0 and rng is not None and rng.random() < miss
        if missed:
            last = history.get(ap.ap_id)
            if last is not None and t - last.t <= scan_model.max_staleness_s:
                readings[ap.ap_id] = last
            continue
        reading = Reading(rss, t)
        readings[ap.ap_id] = reading
        history[ap.ap_id] = reading
    if not readings:
        return None
    return Fingerprint(readings, location_hint=position)


def grid_locations(env: Environment, grid_spacing: float) -> list[Location]:
    """Survey grid covering the environment, origin-anchored, (x, y) sorted."""
    if grid_spacing <= 0:
        raise ValueError("grid_spacing must be positive")
    nx = int(math.floor(env.width / grid_spacing + 1e-9))
    ny = int(math.floor(env.height / grid_spacing + 1e-9))
    return [
        Location(i * grid_spacing, j * grid_spacing)
        for i in range(nx + 1)
        for j in range(ny + 1)
    ]


def survey(
    env: Environment,
    grid_spacing: float,
    samples_per_location: int,
    scan_model: ScanModel | None = None,
    rng: np.random.Generator | None = None,
) -> RadioMap:
    """Build the radio map: static, body-free scans at every grid point.

    The default scan model never misses, so survey samples are all fresh;
    timestamps advance by one scan period per sample. Grid points where no
    AP is detectable at all are left out of the map.
    """
    if samples_per_location < 1:
        raise ValueError("samples_per_location must be >= 1")
    model = scan_model if scan_model is not None else ScanModel()
    if rng is None:
        rng = np.random.default_rng((env.seed, 0))
    entries: dict[Location, list[Fingerprint]] = {}
    for loc in grid_locations(env, grid_spacing):
        samples = []
        history: dict[str, Reading] = {}
        for k in range(samples_per_location):
            fp = scan(env, model, loc, k * model.period_s, history, rng, body_heading=None)
            if fp is not None:
                samples.append(fp)
        if samples:
            entries[loc] = samples
    return RadioMap(grid_spacing, entries)


def _path_position(waypoints: tuple[Location, ...], distance: float) -> tuple[Location, float]:
    """Position and segment heading after walking `distance` along the path."""
    remaining = distance
    heading = 0.0
    for a, b in zip(waypoints, waypoints[1:]):
        seg = a.distance_to(b)
        if seg <= 0:
            continue
        heading = math.atan2(b.y - a.y, b.x - a.x)
        if remaining <= seg:
            frac = remaining / seg
            return Location(a.x + frac * (b.x - a.x), a.y + frac * (b.y - a.y)), heading
        remaining -= seg
    return waypoints[-1], heading


def walk(
    env: Environment,
    trajectory: TrajectorySpec,
    scan_model: ScanModel,
    rng: np.random.Generator,
    step_noise: float = 1.0,
    trace_id: str = "trace",
    body_blockage: bool = True,
) -> list[Query]:
    """Scan stream along a trajectory: fingerprints, motion chords, truth.

    Scans fire every period starting at t = 0; ground truth is the position
    at each scan instant and the body faces the travel direction (a random
    fixed direction for a stationary trace). Motion rows are the per-interval
    displacement chords with bounded length/heading noise scaled by
    `step_noise`; zero noise makes their integration exact.
    """
    path_len = sum(a.distance_to(b) for a, b in zip(trajectory.waypoints, trajectory.waypoints[1:]))
    if path_len > 0:
        duration = path_len / trajectory.speed
    else:
        duration = trajectory.duration_s if trajectory.duration_s is not None else 0.0
    n_scans = int(math.floor(duration / scan_model.period_s + 1e-9)) + 1

    static_heading = rng.uniform(-math.pi, math.pi)
    history: dict[str, Reading] = {}
    steps: list[MotionStep] = []
    queries: list[Query] = []
    prev_pos: Location | None = None
    for i in range(n_scans):
        t = i * scan_model.period_s
        if path_len > 0:
            pos, heading = _path_position(trajectory.waypoints, trajectory.speed * t)
        else:
            pos, heading = trajectory.waypoints[0], static_heading
        if prev_pos is not None:
            dx, dy = pos.x - prev_pos.x, pos.y - prev_pos.y
            length = math.hypot(dx, dy)
            if length > 0:
                chord = math.atan2(dy, dx)
                length *= 1.0 + step_noise * rng.uniform(-STEP_LENGTH_ERR_FRAC, STEP_LENGTH_ERR_FRAC)
                chord += step_noise * rng.uniform(-STEP_HEADING_ERR_RAD, STEP_HEADING_ERR_RAD)
                steps.append(MotionStep(t=t, length=length, heading=chord))
        fp = scan(env, scan_model, pos, t, history, rng,
                  body_heading=heading if body_blockage else None)
        if fp is not None:
            queries.append(
                Query(
                    fingerprint=fp,
                    motion=tuple(steps),
                    trace_id=trace_id,
                    scan=i,
                    truth=pos,
                )
            )
        prev_pos = pos
    return queries
