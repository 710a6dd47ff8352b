"""Outdated-reading detection and phantom fingerprint assembly.

Passive WiFi scanning on phones misses beacons; the OS papers over a miss by
re-reporting the AP's last seen RSS with its old detection timestamp. For a
moving user such a reading was really measured at an earlier position, the
bequeathal location (BL). Comparing the per-AP timestamps inside one scan
exposes these stale readings, and dead-reckoned displacement bounds where the
BL can be: an annular sector behind the hypothesized current position. A
phantom fingerprint is a candidate location's fingerprint with each stale
AP's value borrowed from the BL's stored fingerprint, so that a query mixing
several true positions is matched against database data mixed the same way.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Sequence

from .model import RSS_FLOOR, Fingerprint, Location, RadioMap, Reading

__all__ = [
    "PhantomConfig",
    "MotionStep",
    "MotionEstimate",
    "OutdatedReport",
    "SuspiciousArea",
    "PhantomFingerprint",
    "detect_outdated",
    "drop_stale",
    "integrate_motion",
    "suspicious_area",
    "select_bl",
    "assemble_phantom",
]


@dataclass(frozen=True)
class PhantomConfig:
    """Staleness thresholds and default dead-reckoning error bounds."""

    staleness_s: float = 0.5  # per-AP timestamp lag that marks a reading outdated
    max_staleness_s: float = 5.0  # readings older than this are dropped outright
    dl_m: float = 1.0  # displacement error bound
    dtheta_rad: float = 0.1309  # heading error bound (pi/24)


class MotionStep(NamedTuple):
    """One dead-reckoning increment: displacement chord ending at time t."""

    t: float
    length: float
    heading: float


@dataclass(frozen=True)
class MotionEstimate:
    """Displacement from the BL to the current position, with error bounds."""

    ell: float
    theta: float
    d_ell: float
    d_theta: float

    def __post_init__(self) -> None:
        if self.ell < 0 or self.d_ell < 0:
            raise ValueError("Displacement and its error bound must be >= 0")
        if not (0.0 <= self.d_theta < math.pi):
            raise ValueError(f"Heading error bound must be in [0, pi), got {self.d_theta}")


@dataclass(frozen=True)
class OutdatedReport:
    """Per-AP outdated durations of one scan plus the flagging threshold."""

    ages: Mapping[str, float]
    threshold: float

    def is_outdated(self, ap: str) -> bool:
        return self.ages[ap] > self.threshold

    @property
    def outdated_aps(self) -> list[str]:
        return sorted(ap for ap in self.ages if self.is_outdated(ap))


@dataclass(frozen=True)
class SuspiciousArea:
    """Annular sector of possible BLs behind a candidate location.

    Membership: distance to the candidate within [ell - d_ell, ell + d_ell]
    (inner radius clamped at zero) and bearing towards the candidate within
    theta +/- d_theta.
    """

    candidate: Location
    ell: float
    theta: float
    d_ell: float
    d_theta: float

    @property
    def r_inner(self) -> float:
        return max(self.ell - self.d_ell, 0.0)

    @property
    def r_outer(self) -> float:
        return self.ell + self.d_ell

    @property
    def area(self) -> float:
        return 4.0 * self.d_theta * self.ell * self.d_ell

    @property
    def center(self) -> Location:
        return Location(
            self.candidate.x - self.ell * math.cos(self.theta),
            self.candidate.y - self.ell * math.sin(self.theta),
        )

    def contains(self, point: Location, tol: float = 1e-9) -> bool:
        dx = self.candidate.x - point.x
        dy = self.candidate.y - point.y
        dist = math.hypot(dx, dy)
        if not (self.r_inner - tol <= dist <= self.r_outer + tol):
            return False
        if dist <= tol:
            # The candidate itself; bearing is undefined but the point lies
            # in the sector whenever the inner radius has clamped to zero.
            return self.r_inner <= tol
        bearing = math.atan2(dy, dx)
        return abs(_wrap_angle(bearing - self.theta)) <= self.d_theta + tol


@dataclass(frozen=True)
class PhantomFingerprint:
    """Candidate fingerprint with stale APs substituted from their BLs."""

    base_location: Location
    fingerprint: Fingerprint
    substitutions: Mapping[str, Location] = field(default_factory=dict)

    @property
    def readings(self) -> dict[str, float]:
        return {ap: r.rss for ap, r in self.fingerprint.readings.items()}


def _wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]."""
    return math.atan2(math.sin(a), math.cos(a))


def detect_outdated(query: Fingerprint, threshold: float = 0.5) -> OutdatedReport:
    """Per-AP outdated durations relative to the scan's newest timestamp."""
    t_now = query.latest_t
    ages = {ap: t_now - r.t for ap, r in query.readings.items()}
    return OutdatedReport(ages=ages, threshold=threshold)


def drop_stale(query: Fingerprint, max_staleness: float = 5.0) -> Fingerprint:
    """Remove readings older than the honored staleness horizon.

    The reading with the newest timestamp has age zero, so the result is
    never empty.
    """
    t_now = query.latest_t
    kept = {ap: r for ap, r in query.readings.items() if t_now - r.t <= max_staleness}
    if len(kept) == len(query.readings):
        return query
    return Fingerprint(kept, location_hint=query.location_hint)


def integrate_motion(
    steps: Sequence[MotionStep],
    t_now: float,
    dt: float,
    config: PhantomConfig = PhantomConfig(),
) -> MotionEstimate:
    """Vector-sum the displacement chords inside the window (t_now - dt, t_now].

    Yields the displacement from where the user was dt seconds ago to the
    current position; an empty window means a static user (ell = 0).
    """
    vx = vy = 0.0
    for step in steps:
        if t_now - dt < step.t <= t_now:
            vx += step.length * math.cos(step.heading)
            vy += step.length * math.sin(step.heading)
    ell = math.hypot(vx, vy)
    theta = math.atan2(vy, vx) if ell > 0 else 0.0
    return MotionEstimate(ell=ell, theta=theta, d_ell=config.dl_m, d_theta=config.dtheta_rad)


def suspicious_area(candidate: Location, motion: MotionEstimate) -> SuspiciousArea:
    """The annular sector of BL positions consistent with the motion estimate."""
    if motion.ell <= 0:
        raise ValueError("Suspicious area needs a positive displacement")
    return SuspiciousArea(
        candidate=candidate,
        ell=motion.ell,
        theta=motion.theta,
        d_ell=motion.d_ell,
        d_theta=motion.d_theta,
    )


def select_bl(candidate: Location, motion: MotionEstimate, radio_map: RadioMap) -> Location | None:
    """The surveyed location inside the suspicious area nearest its center.

    Ties break on (distance, x, y) so selection is deterministic; returns
    None when no surveyed location falls inside the area.
    """
    area = suspicious_area(candidate, motion)
    center = area.center
    best: tuple[float, float, float] | None = None
    best_loc: Location | None = None
    for loc in radio_map.locations:
        if not area.contains(loc):
            continue
        key = (center.distance_to(loc), loc.x, loc.y)
        if best is None or key < best:
            best = key
            best_loc = loc
    return best_loc


def assemble_phantom(
    candidate: Location,
    candidate_mean: Fingerprint,
    report: OutdatedReport,
    motions: Mapping[str, MotionEstimate],
    radio_map: RadioMap,
) -> PhantomFingerprint:
    """Substitute each outdated AP's reading from its bequeathal location.

    Substitution happens only when the displacement exceeds half the survey
    grid spacing (below that the BL and the candidate share a grid cell) and
    a BL actually exists in the map. A BL that never heard the AP contributes
    the -100 dBm floor. APs not flagged outdated are never touched.
    """
    if candidate not in radio_map:
        raise ValueError(f"Candidate ({candidate.x}, {candidate.y}) is not a map location")
    half_grid = radio_map.grid_spacing / 2.0
    readings: dict[str, Reading] = dict(candidate_mean.readings)
    substitutions: dict[str, Location] = {}
    for ap in report.outdated_aps:
        motion = motions.get(ap)
        if motion is None or motion.ell <= half_grid:
            continue
        bl = select_bl(candidate, motion, radio_map)
        if bl is None:
            continue
        bl_mean = radio_map.mean_fingerprint(bl)
        reading = bl_mean.readings.get(ap)
        if reading is not None:
            readings[ap] = Reading(reading.rss, reading.t)
        else:
            readings[ap] = Reading(RSS_FLOOR, 0.0)
        substitutions[ap] = bl
    return PhantomFingerprint(
        base_location=candidate,
        fingerprint=Fingerprint(readings, location_hint=candidate),
        substitutions=substitutions,
    )
