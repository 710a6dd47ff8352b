"""Core data model: fingerprints, locations, radio maps and RSS-difference vectors.

A fingerprint is one WiFi scan: a map from AP identifier to (RSS in dBm,
detection timestamp in seconds). RSS values live in [-100, -20] dBm; -100 is
both the hard floor of valid readings and the substitute used when comparing
fingerprints whose AP sets differ. Timestamps carry the staleness information
that the phantom-fingerprint stage consumes: a reading duplicated from an
earlier scan keeps its original detection time.

All types are immutable values after construction. A RadioMap is built once
and then shared read-only across any number of concurrent queries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple

__all__ = [
    "RSS_FLOOR",
    "RSS_CEIL",
    "Reading",
    "Fingerprint",
    "Location",
    "RadioMap",
    "RsdVector",
    "union_rsd",
    "euclidean_dissimilarity",
    "moving_average",
    "location_error",
]

# Valid RSS range in dBm. -100 doubles as the absent-AP substitute; readings
# below it are clamped on ingest, readings above -20 are rejected.
RSS_FLOOR = -100.0
RSS_CEIL = -20.0


class Reading(NamedTuple):
    """One AP observation inside a scan: RSS in dBm plus detection time."""

    rss: float
    t: float


def _validate_rss(rss: float) -> float:
    if not math.isfinite(rss):
        raise ValueError(f"RSS must be finite, got {rss}")
    if rss > RSS_CEIL:
        raise ValueError(f"RSS {rss} dBm above valid ceiling {RSS_CEIL} dBm")
    # Below-floor values are clamped, not rejected: -100 is the defined minimum.
    return max(rss, RSS_FLOOR)


@dataclass(frozen=True)
class Location:
    """2-D position in meters."""

    x: float
    y: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"Location coordinates must be finite, got ({self.x}, {self.y})")

    def distance_to(self, other: "Location") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


@dataclass(frozen=True)
class Fingerprint:
    """One scan: per-AP readings, optionally tagged with where it was taken.

    Invariants enforced at construction: at least one reading, RSS within
    [-100, -20] dBm (below-floor clamped), timestamps non-negative.
    """

    readings: Mapping[str, Reading]
    location_hint: Location | None = None

    def __post_init__(self) -> None:
        if not self.readings:
            raise ValueError("Fingerprint needs at least one reading")
        clean: dict[str, Reading] = {}
        for ap, reading in self.readings.items():
            if not ap:
                raise ValueError("AP identifier must be non-empty")
            rss, t = float(reading[0]), float(reading[1])
            if t < 0 or not math.isfinite(t):
                raise ValueError(f"Timestamp for {ap} must be >= 0, got {t}")
            clean[ap] = Reading(_validate_rss(rss), t)
        object.__setattr__(self, "readings", clean)

    @property
    def ap_ids(self) -> frozenset[str]:
        return frozenset(self.readings)

    def rss(self, ap: str, default: float = RSS_FLOOR) -> float:
        """RSS of `ap`, or the -100 dBm substitute when absent."""
        reading = self.readings.get(ap)
        return reading.rss if reading is not None else default

    @property
    def latest_t(self) -> float:
        return max(r.t for r in self.readings.values())


@dataclass(frozen=True)
class RsdVector:
    """Per-AP absolute RSS differences over the union of two AP sets.

    `p` counts the union APs, `q` the common ones; entries for APs present on
    only one side were computed against the -100 dBm substitute.
    """

    delta: Mapping[str, float]
    p: int
    q: int

    def __post_init__(self) -> None:
        if not (self.p >= self.q >= 0):
            raise ValueError(f"Need p >= q >= 0, got p={self.p}, q={self.q}")
        if self.p != len(self.delta):
            raise ValueError("p must equal the number of union APs")
        if any(d < 0 for d in self.delta.values()):
            raise ValueError("RSD entries must be non-negative")

    def norm(self) -> float:
        return math.sqrt(sum(d * d for d in self.delta.values()))


class RadioMap:
    """Survey database: grid locations, each holding its sample fingerprints.

    Built once from survey data and then treated as read-only. Derived per-
    location statistics (the mean fingerprint used by matching) are computed
    eagerly so concurrent queries never mutate shared state.

    The mean fingerprint averages, per AP, over the samples that contain that
    AP; an AP belongs to a location iff at least one sample heard it.
    """

    def __init__(self, grid_spacing: float, entries: Mapping[Location, Iterable[Fingerprint]]):
        if grid_spacing <= 0:
            raise ValueError(f"grid_spacing must be > 0, got {grid_spacing}")
        if not entries:
            raise ValueError("RadioMap needs at least one location")
        self._grid_spacing = float(grid_spacing)
        self._entries: dict[Location, tuple[Fingerprint, ...]] = {}
        registry: set[str] = set()
        for loc, samples in entries.items():
            samples = tuple(samples)
            if not samples:
                raise ValueError(f"Location ({loc.x}, {loc.y}) has no samples")
            self._entries[loc] = samples
            for fp in samples:
                registry.update(fp.ap_ids)
        self._ap_registry = frozenset(registry)
        self._means = {loc: _mean_fingerprint(samples, loc) for loc, samples in self._entries.items()}

    @property
    def grid_spacing(self) -> float:
        return self._grid_spacing

    @property
    def ap_registry(self) -> frozenset[str]:
        return self._ap_registry

    @property
    def locations(self) -> list[Location]:
        """Map locations in deterministic (x, y) order."""
        return sorted(self._entries, key=lambda l: (l.x, l.y))

    def samples(self, loc: Location) -> tuple[Fingerprint, ...]:
        return self._entries[loc]

    def mean_fingerprint(self, loc: Location) -> Fingerprint:
        return self._means[loc]

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, loc: Location) -> bool:
        return loc in self._entries


def _mean_fingerprint(samples: tuple[Fingerprint, ...], loc: Location) -> Fingerprint:
    """Per-AP mean over the samples containing each AP; timestamps averaged."""
    sums: dict[str, list[float]] = {}
    for fp in samples:
        for ap, reading in fp.readings.items():
            acc = sums.setdefault(ap, [0.0, 0.0, 0.0])
            acc[0] += reading.rss
            acc[1] += reading.t
            acc[2] += 1.0
    readings = {ap: Reading(s / n, t / n) for ap, (s, t, n) in sums.items()}
    return Fingerprint(readings, location_hint=loc)


def union_rsd(a: Fingerprint, b: Fingerprint) -> RsdVector:
    """RSS-difference vector over the AP union, -100 substituted for absences."""
    union = a.ap_ids | b.ap_ids
    common = a.ap_ids & b.ap_ids
    delta = {ap: abs(a.rss(ap) - b.rss(ap)) for ap in union}
    return RsdVector(delta=delta, p=len(union), q=len(common))


def euclidean_dissimilarity(a: Fingerprint, b: Fingerprint) -> float:
    """Plain Euclidean norm of the union RSD vector."""
    return union_rsd(a, b).norm()


def location_error(truth: Location, estimate: Location) -> float:
    """Euclidean distance between true and estimated position, in meters."""
    return truth.distance_to(estimate)


def moving_average(scans: list[Fingerprint], window: int = 3) -> list[Fingerprint]:
    """Trailing per-AP mean over up to `window` most recent scans.

    For each scan, every AP it contains gets the mean RSS over the scans in
    the trailing window that also contain that AP. Timestamps (and the AP
    set) of each output scan come from the corresponding input scan, so the
    staleness structure survives filtering.
    """
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    out: list[Fingerprint] = []
    for j, fp in enumerate(scans):
        tail = scans[max(0, j - window + 1) : j + 1]
        readings = {}
        for ap, reading in fp.readings.items():
            values = [s.readings[ap].rss for s in tail if ap in s.readings]
            readings[ap] = Reading(sum(values) / len(values), reading.t)
        out.append(Fingerprint(readings, location_hint=fp.location_hint))
    return out
