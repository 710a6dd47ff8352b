"""Fingerprint matching: the combined pipeline and the baseline matchers.

The combined matcher scores every map location in four stages: phantom
substitution first (stale readings redefine what the candidate's "true"
values are), robust regression second (on the phantom-adjusted samples),
then discrimination weighting and the common-AP ratio as pure scoring. The
per-candidate dissimilarity is

    h = sqrt(sum_i (rho_i * delta_i)^2),    phi = h * p / q

with rho_i the larger of the two fingerprints' discrimination weights,
delta_i the robust-adjusted RSS differences, p the union and q the common AP
count. q = 0 sends phi to infinity, which removes candidates sharing no AP
with the query from consideration entirely.

Three reference matchers are implemented independently of the pipeline:
plain nearest-neighbor on Euclidean dissimilarity, k-nearest-neighbor signal
space averaging, and a per-AP Gaussian maximum-likelihood matcher.

Candidate scoring is embarrassingly parallel and fully deterministic: ties
break on (score, h, x, y) so results do not depend on evaluation order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Mapping

import numpy as np

from .discrimination import PropagationParams, _raw_factor_array
from .model import (
    RSS_CEIL,
    RSS_FLOOR,
    Fingerprint,
    Location,
    RadioMap,
    RsdVector,
    euclidean_dissimilarity,
    union_rsd,
)
from .phantom import (
    MotionStep,
    PhantomConfig,
    detect_outdated,
    drop_stale,
    integrate_motion,
)
from .robust import LmsConfig, fit_line_lms_batch

__all__ = [
    "NoCommonApError",
    "PipelineToggles",
    "MatcherConfig",
    "Query",
    "MatchScore",
    "LocationEstimate",
    "CandidateScores",
    "weighted_h",
    "phi",
    "score_candidates",
    "dorfin_localize",
    "basic_localize",
    "radar_localize",
    "horus_localize",
    "localize",
    "METHODS",
]


class NoCommonApError(ValueError):
    """Raised when no candidate location shares a single AP with the query."""


@dataclass(frozen=True)
class PipelineToggles:
    """Stage switches; all off reduces the pipeline to the basic matcher."""

    use_df: bool = True  # discrimination-factor weighting
    use_rr: bool = True  # robust regression adjustment
    use_ca: bool = True  # common-AP ratio on the final score
    use_pf: bool = True  # phantom-fingerprint substitution

    @property
    def all_off(self) -> bool:
        return not (self.use_df or self.use_rr or self.use_ca or self.use_pf)


@dataclass(frozen=True)
class MatcherConfig:
    """Everything the matching stack needs, in one immutable bundle."""

    propagation: PropagationParams = PropagationParams()
    lms: LmsConfig = LmsConfig()
    phantom: PhantomConfig = PhantomConfig()
    toggles: PipelineToggles = PipelineToggles()
    window: int = 3  # moving-average window applied to query streams
    radar_k: int = 1
    horus_std_floor: float = 1.0

    def with_toggles(self, toggles: PipelineToggles) -> "MatcherConfig":
        return replace(self, toggles=toggles)


@dataclass(frozen=True)
class Query:
    """One localization request: a scan plus its dead-reckoning history."""

    fingerprint: Fingerprint
    motion: tuple[MotionStep, ...] = ()
    trace_id: str = ""
    scan: int = 0
    truth: Location | None = None

    @property
    def t(self) -> float:
        return self.fingerprint.latest_t


@dataclass(frozen=True)
class MatchScore:
    """Score breakdown for one candidate: phi = h * p / q (inf when q = 0)."""

    location: Location
    h: float
    phi: float
    p: int
    q: int
    outlier_count: int = 0
    substitution_count: int = 0


@dataclass(frozen=True)
class LocationEstimate:
    """Chosen position with the winning candidate's score and the method tag."""

    location: Location
    score: MatchScore
    method: str


def weighted_h(delta: RsdVector, weights: Mapping[str, float]) -> float:
    """Weighted dissimilarity: sqrt of the sum of squared weighted RSDs.

    Weights absent from the mapping count as zero.
    """
    return math.sqrt(sum((weights.get(ap, 0.0) * d) ** 2 for ap, d in delta.delta.items()))


def phi(h: float, p: int, q: int) -> float:
    """Common-AP-ratio dissimilarity; infinite when there is no common AP."""
    if not p >= q >= 0:
        raise ValueError(f"Need p >= q >= 0, got p={p}, q={q}")
    if q == 0:
        return math.inf
    return h * p / q


# ---------------------------------------------------------------------------
# Compiled map arrays
# ---------------------------------------------------------------------------


class _CompiledMap:
    """Dense read-only array view of a RadioMap, built once per map.

    Locations are ordered by (x, y) and APs lexicographically, which fixes
    every downstream tie-break. Absent readings hold the -100 dBm floor.
    """

    def __init__(self, radio_map: RadioMap):
        self.radio_map = radio_map
        self.locations: list[Location] = radio_map.locations
        self.loc_xy = np.array([[l.x, l.y] for l in self.locations])
        self.loc_index = {loc: i for i, loc in enumerate(self.locations)}
        self.ap_ids: list[str] = sorted(radio_map.ap_registry)
        self.ap_index = {ap: i for i, ap in enumerate(self.ap_ids)}
        n_loc, n_ap = len(self.locations), len(self.ap_ids)
        self.m_counts = np.array([len(radio_map.samples(l)) for l in self.locations])
        m_max = int(self.m_counts.max())
        self.sample_rss = np.full((n_loc, m_max, n_ap), RSS_FLOOR)
        self.mean_rss = np.full((n_loc, n_ap), RSS_FLOOR)
        self.present = np.zeros((n_loc, n_ap), dtype=bool)
        for li, loc in enumerate(self.locations):
            for k, fp in enumerate(radio_map.samples(loc)):
                for ap, reading in fp.readings.items():
                    self.sample_rss[li, k, self.ap_index[ap]] = reading.rss
            mean = radio_map.mean_fingerprint(loc)
            for ap, reading in mean.readings.items():
                ai = self.ap_index[ap]
                self.mean_rss[li, ai] = reading.rss
                self.present[li, ai] = True


def _compiled(radio_map: RadioMap) -> _CompiledMap:
    cached = getattr(radio_map, "_compiled_arrays", None)
    if cached is None:
        cached = _CompiledMap(radio_map)
        setattr(radio_map, "_compiled_arrays", cached)
    return cached


# ---------------------------------------------------------------------------
# Pipeline scoring engine
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CandidateScores:
    """Per-candidate score arrays for one query, in map location order.

    selection_key is what the argmin runs on: phi when the common-AP ratio
    is enabled, h otherwise. phi always carries the ratio form so diagnostic
    output is comparable across pipeline variants.
    """

    locations: list[Location]
    h: np.ndarray
    phi: np.ndarray
    selection_key: np.ndarray
    p: np.ndarray
    q: np.ndarray
    outlier_counts: np.ndarray
    substitution_counts: np.ndarray

    def best_index(self) -> int:
        xs = np.array([l.x for l in self.locations])
        ys = np.array([l.y for l in self.locations])
        order = np.lexsort((ys, xs, self.h, self.selection_key))
        return int(order[0])

    def score_at(self, index: int) -> MatchScore:
        return MatchScore(
            location=self.locations[index],
            h=float(self.h[index]),
            phi=float(self.phi[index]),
            p=int(self.p[index]),
            q=int(self.q[index]),
            outlier_count=int(self.outlier_counts[index]),
            substitution_count=int(self.substitution_counts[index]),
        )


def _select_bl_indices(
    compiled: _CompiledMap, ell: float, theta: float, d_ell: float, d_theta: float
) -> np.ndarray:
    """Vectorized BL choice for every candidate at once; -1 where none exists.

    Mirrors phantom.select_bl: membership in the annular sector behind each
    candidate, nearest to the sector center, ties on (distance, x, y).
    """
    xy = compiled.loc_xy
    tol = 1e-9
    # u[c, g] = candidate_c - location_g; bearing of u is the direction from g
    # towards the candidate, which must match the travel heading.
    u = xy[:, None, :] - xy[None, :, :]
    dist = np.hypot(u[..., 0], u[..., 1])
    r_inner = max(ell - d_ell, 0.0)
    r_outer = ell + d_ell
    in_ring = (dist >= r_inner - tol) & (dist <= r_outer + tol)
    bearing = np.arctan2(u[..., 1], u[..., 0])
    diff = np.arctan2(np.sin(bearing - theta), np.cos(bearing - theta))
    in_wedge = np.abs(diff) <= d_theta + tol
    at_candidate = dist <= tol
    ok = in_ring & np.where(at_candidate, r_inner <= tol, in_wedge)

    centers = xy - ell * np.array([math.cos(theta), math.sin(theta)])
    dc = np.hypot(xy[None, :, 0] - centers[:, None, 0], xy[None, :, 1] - centers[:, None, 1])
    dc = np.where(ok, dc, np.inf)
    # Locations are sorted by (x, y), so the first argmin among equal
    # distances is also the (x, y) tie-break winner.
    best = np.argmin(dc, axis=1)
    best[~ok.any(axis=1)] = -1
    return best


def score_candidates(
    query: Query, radio_map: RadioMap, config: MatcherConfig = MatcherConfig()
) -> CandidateScores:
    """Run the pipeline for one query against every map location."""
    compiled = _compiled(radio_map)
    toggles = config.toggles
    fp = drop_stale(query.fingerprint, config.phantom.max_staleness_s)

    # Query vector over the map registry extended by any query-only APs.
    extra_aps = sorted(set(fp.ap_ids) - set(compiled.ap_index))
    ap_ids = compiled.ap_ids + extra_aps
    n_loc, m_max, n_map_ap = compiled.sample_rss.shape
    n_ap = len(ap_ids)
    ap_pos = dict(compiled.ap_index)
    for ap in extra_aps:
        ap_pos[ap] = len(ap_pos)

    q_rss = np.full(n_ap, RSS_FLOOR)
    q_mask = np.zeros(n_ap, dtype=bool)
    for ap, reading in fp.readings.items():
        q_rss[ap_pos[ap]] = reading.rss
        q_mask[ap_pos[ap]] = True

    if extra_aps:
        pad = len(extra_aps)
        sample_rss = np.concatenate(
            [compiled.sample_rss, np.full((n_loc, m_max, pad), RSS_FLOOR)], axis=2
        )
        mean_rss = np.concatenate([compiled.mean_rss, np.full((n_loc, pad), RSS_FLOOR)], axis=1)
        present = np.concatenate([compiled.present, np.zeros((n_loc, pad), dtype=bool)], axis=1)
    else:
        sample_rss = compiled.sample_rss
        mean_rss = compiled.mean_rss
        present = compiled.present

    # Phantom substitution: rewrite stale APs from their bequeathal locations.
    substitution_counts = np.zeros(n_loc, dtype=np.intp)
    if toggles.use_pf:
        report = detect_outdated(fp, config.phantom.staleness_s)
        half_grid = radio_map.grid_spacing / 2.0
        copied = False
        for ap in report.outdated_aps:
            motion = integrate_motion(query.motion, fp.latest_t, report.ages[ap], config.phantom)
            if motion.ell <= half_grid:
                continue
            bl = _select_bl_indices(
                compiled, motion.ell, motion.theta, motion.d_ell, motion.d_theta
            )
            has_bl = bl >= 0
            if not has_bl.any():
                continue
            if not copied:
                sample_rss = sample_rss.copy()
                mean_rss = mean_rss.copy()
                present = present.copy()
                copied = True
            ai = ap_pos[ap]
            if ai < n_map_ap:
                values = np.where(
                    compiled.present[:, ai][bl], compiled.mean_rss[:, ai][bl], RSS_FLOOR
                )
            else:
                values = np.full(n_loc, RSS_FLOOR)
            mean_rss[has_bl, ai] = values[has_bl]
            present[has_bl, ai] = True
            sample_rss[has_bl, :, ai] = values[has_bl, None]
            substitution_counts[has_bl] += 1

    union = q_mask[None, :] | present
    p_counts = union.sum(axis=1)
    q_counts = (q_mask[None, :] & present).sum(axis=1)

    h = np.zeros(n_loc)
    outlier_counts = np.zeros(n_loc, dtype=np.intp)

    # Group candidates sharing (m, union size) so the regression batches.
    union_sizes = p_counts
    groups: dict[tuple[int, int], list[int]] = {}
    for li in range(n_loc):
        groups.setdefault((int(compiled.m_counts[li]), int(union_sizes[li])), []).append(li)

    for (m, p_g), members in sorted(groups.items()):
        idx = np.array(members)
        cols = np.zeros((len(idx), p_g), dtype=np.intp)
        for row, li in enumerate(idx):
            cols[row] = np.flatnonzero(union[li])
        y_vals = q_rss[cols]  # (C, p_g) query values over each union
        mean_vals = np.take_along_axis(mean_rss[idx], cols, axis=1)
        mean_vals = np.where(np.take_along_axis(present[idx], cols, axis=1), mean_vals, RSS_FLOOR)

        if toggles.use_rr and m * p_g >= 2:
            x = np.take_along_axis(sample_rss[idx][:, :m, :], cols[:, None, :], axis=2)
            x = x.reshape(len(idx), m * p_g)
            y = np.tile(y_vals, (1, m))
            t1, t2, _, scale = fit_line_lms_batch(x, y, config.lms)
            fitted = t1[:, None] * x + t2[:, None]
            resid = y - fitted
            cutoff = np.where(scale > 0.0, config.lms.outlier_cutoff * scale, 1e-9)
            outlier = np.abs(resid) > cutoff[:, None]
            adjusted = np.where(outlier, fitted, y)
            ftil = adjusted.reshape(len(idx), m, p_g).mean(axis=1)
            outlier_counts[idx] = outlier.sum(axis=1)
        else:
            ftil = y_vals

        delta = np.abs(ftil - mean_vals)

        if toggles.use_df:
            q_side = q_mask[cols]
            t_side = np.take_along_axis(present[idx], cols, axis=1)
            ftil_clamped = np.clip(ftil, RSS_FLOOR, RSS_CEIL)
            rho_s = np.where(q_side, _raw_factor_array(ftil_clamped, config.propagation), 0.0)
            rho_s /= rho_s.sum(axis=1, keepdims=True)
            rho_t = np.where(t_side, _raw_factor_array(mean_vals, config.propagation), 0.0)
            rho_t /= rho_t.sum(axis=1, keepdims=True)
            weights = np.maximum(rho_s, rho_t)
        else:
            weights = np.ones_like(delta)

        h[idx] = np.sqrt(((weights * delta) ** 2).sum(axis=1))

    with np.errstate(divide="ignore"):
        phi_vals = np.where(q_counts > 0, h * p_counts / np.maximum(q_counts, 1), np.inf)
    selection = phi_vals if toggles.use_ca else h

    return CandidateScores(
        locations=compiled.locations,
        h=h,
        phi=phi_vals,
        selection_key=selection,
        p=p_counts,
        q=q_counts,
        outlier_counts=outlier_counts,
        substitution_counts=substitution_counts,
    )


def dorfin_localize(
    query: Query, radio_map: RadioMap, config: MatcherConfig = MatcherConfig()
) -> LocationEstimate:
    """Full-pipeline position estimate: argmin of phi over all candidates."""
    scores = score_candidates(query, radio_map, config)
    if np.isinf(scores.selection_key).all():
        raise NoCommonApError("No common AP with any candidate location")
    best = scores.best_index()
    return LocationEstimate(scores.locations[best], scores.score_at(best), method="dorfin")


# ---------------------------------------------------------------------------
# Reference matchers (independent of the pipeline engine)
# ---------------------------------------------------------------------------


def _as_fingerprint(query: Query | Fingerprint) -> Fingerprint:
    return query.fingerprint if isinstance(query, Query) else query


def _basic_scores(fp: Fingerprint, radio_map: RadioMap) -> list[tuple[float, Location]]:
    out = []
    for loc in radio_map.locations:
        out.append((euclidean_dissimilarity(fp, radio_map.mean_fingerprint(loc)), loc))
    return out


def _score_for(fp: Fingerprint, radio_map: RadioMap, loc: Location, h: float) -> MatchScore:
    rsd = union_rsd(fp, radio_map.mean_fingerprint(loc))
    return MatchScore(location=loc, h=h, phi=phi(h, rsd.p, rsd.q), p=rsd.p, q=rsd.q)


def basic_localize(query: Query | Fingerprint, radio_map: RadioMap) -> LocationEstimate:
    """Nearest neighbor on the plain Euclidean dissimilarity vs mean
    fingerprints; disjoint AP sets still score finitely via the -100 rule."""
    fp = _as_fingerprint(query)
    d, loc = min(_basic_scores(fp, radio_map), key=lambda s: (s[0], s[1].x, s[1].y))
    return LocationEstimate(loc, _score_for(fp, radio_map, loc, d), method="basic")


def radar_localize(query: Query | Fingerprint, radio_map: RadioMap, k: int = 1) -> LocationEstimate:
    """Centroid of the k signal-space nearest locations."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if k > len(radio_map):
        raise ValueError(f"k={k} exceeds the {len(radio_map)} map locations")
    fp = _as_fingerprint(query)
    ranked = sorted(_basic_scores(fp, radio_map), key=lambda s: (s[0], s[1].x, s[1].y))
    top = ranked[:k]
    centroid = Location(
        sum(loc.x for _, loc in top) / k,
        sum(loc.y for _, loc in top) / k,
    )
    d_best, loc_best = top[0]
    best = _score_for(fp, radio_map, loc_best, d_best)
    return LocationEstimate(centroid, replace(best, location=centroid), method="radar")


def horus_localize(
    query: Query | Fingerprint, radio_map: RadioMap, std_floor: float = 1.0
) -> LocationEstimate:
    """Maximum-likelihood matcher with a per-AP Gaussian signal model.

    Each location's per-AP mean and standard deviation come from its samples
    with -100 substituted for APs a sample did not hear; the query side uses
    the same substitution. The reported h is the negative log-likelihood,
    positive for any std floor >= 1 dB.
    """
    fp = _as_fingerprint(query)
    best_key: tuple[float, float, float] | None = None
    best_loc: Location | None = None
    best_h = 0.0
    for loc in radio_map.locations:
        samples = radio_map.samples(loc)
        if len(samples) < 2:
            raise ValueError(
                f"Location ({loc.x}, {loc.y}) has {len(samples)} sample(s); "
                "the Gaussian matcher needs at least 2 for variance estimation"
            )
        aps = sorted(fp.ap_ids | radio_map.mean_fingerprint(loc).ap_ids)
        values = np.array([[s.rss(ap) for ap in aps] for s in samples])
        mean = values.mean(axis=0)
        std = np.maximum(values.std(axis=0), std_floor)
        obs = np.array([fp.rss(ap) for ap in aps])
        loglik = float(
            np.sum(-0.5 * ((obs - mean) / std) ** 2 - np.log(std) - 0.5 * math.log(2 * math.pi))
        )
        key = (-loglik, loc.x, loc.y)
        if best_key is None or key < best_key:
            best_key, best_loc, best_h = key, loc, -loglik
    assert best_loc is not None
    return LocationEstimate(best_loc, _score_for(fp, radio_map, best_loc, best_h), method="horus")


METHODS = ("dorfin", "basic", "radar", "horus")


def localize(
    query: Query, radio_map: RadioMap, method: str, config: MatcherConfig = MatcherConfig()
) -> LocationEstimate:
    """Dispatch a query to one of the named matching methods."""
    if method == "dorfin":
        return dorfin_localize(query, radio_map, config)
    if method == "basic":
        return basic_localize(query, radio_map)
    if method == "radar":
        return radar_localize(query, radio_map, config.radar_k)
    if method == "horus":
        return horus_localize(query, radio_map, config.horus_std_floor)
    raise ValueError(f"Unknown method {method!r}; expected one of {METHODS}")
