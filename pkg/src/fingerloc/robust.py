"""Least-median-of-squares matching of a query against a location's samples.

A query fingerprint is regressed linearly against every sample fingerprint of
a candidate location at once: with m samples and p union APs that gives m*p
(x, y) observations, enough for a robust fit even when p is small. The LMS
criterion (minimize the median squared residual, breakdown point 0.5) finds
the line the consistent majority of APs agrees on; readings dragged away by
body blockage or fading land far from it, get flagged by the 2.5-sigma rule
and are replaced by their fitted values before dissimilarities are computed.

The solver is the two-point elemental-set search: every pair of observations
defines a candidate line, the line with the smallest median squared residual
wins. It runs exhaustively up to `exact_threshold` observations and on a
seeded random subset of pairs beyond that.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .model import RSS_FLOOR, Fingerprint, RsdVector

__all__ = [
    "LmsConfig",
    "RegressionData",
    "LmsFit",
    "AdjustedQuery",
    "build_regression",
    "lms_fit",
    "fit_line_lms",
    "fit_line_lms_batch",
    "adjust_query",
    "adjusted_rsd",
]

# Consistency constant relating the median absolute residual of a Gaussian
# sample to its standard deviation.
_MAD_SCALE = 1.4826


@dataclass(frozen=True)
class LmsConfig:
    """Solver knobs: exact-search cutoff, subsample size, outlier threshold."""

    exact_threshold: int = 200
    subsample_pairs: int = 3000
    outlier_cutoff: float = 2.5
    rng_seed: int = 0


@dataclass(frozen=True)
class RegressionData:
    """The m*p paired observations for one (query, candidate) match.

    x holds candidate-sample RSS values, y the repeated query values; -100 is
    substituted wherever an AP is absent. ap_index / sample_index say which
    union AP and which sample each pair came from.
    """

    x: np.ndarray
    y: np.ndarray
    ap_ids: tuple[str, ...]
    ap_index: np.ndarray
    sample_index: np.ndarray
    query_aps: frozenset[str]

    def __post_init__(self) -> None:
        if len(self.x) != len(self.y) or len(self.x) < 2:
            raise ValueError("Regression needs at least 2 (x, y) pairs of equal length")


@dataclass(frozen=True)
class LmsFit:
    """Fitted line, its objective value and the derived residual scale."""

    theta1: float
    theta2: float
    median_sq_residual: float
    scale: float
    degenerate: bool = False


@dataclass(frozen=True)
class AdjustedQuery:
    """Outlier-regulated query: per-AP adjusted RSS over the whole union.

    outlier_flags maps (sample_index, ap_id) to whether that pair's query
    value was replaced by its fitted value. query_aps preserves the AP set
    actually observed in the raw query (needed for common-AP counting).
    """

    adjusted_rss: Mapping[str, float]
    outlier_flags: Mapping[tuple[int, str], bool]
    query_aps: frozenset[str]


def build_regression(query: Fingerprint, samples: Sequence[Fingerprint]) -> RegressionData:
    """Pair every union AP of every sample with the query's value for it."""
    if not samples:
        raise ValueError("Need at least one sample fingerprint")
    union: set[str] = set(query.ap_ids)
    for fp in samples:
        union.update(fp.ap_ids)
    ap_ids = tuple(sorted(union))
    m, p = len(samples), len(ap_ids)
    x = np.empty(m * p)
    y = np.empty(m * p)
    ap_index = np.empty(m * p, dtype=np.intp)
    sample_index = np.empty(m * p, dtype=np.intp)
    pos = 0
    for k, fp in enumerate(samples):
        for i, ap in enumerate(ap_ids):
            x[pos] = fp.rss(ap)
            y[pos] = query.rss(ap)
            ap_index[pos] = i
            sample_index[pos] = k
            pos += 1
    return RegressionData(x, y, ap_ids, ap_index, sample_index, frozenset(query.ap_ids))


def _pair_indices(n: int, config: LmsConfig) -> tuple[np.ndarray, np.ndarray]:
    """Elemental-set pair indices: all pairs up to the exact threshold, a
    seeded random subset beyond it."""
    i, j = np.triu_indices(n, k=1)
    if n > config.exact_threshold and len(i) > config.subsample_pairs:
        rng = np.random.default_rng(config.rng_seed)
        keep = rng.choice(len(i), size=config.subsample_pairs, replace=False)
        keep.sort()
        i, j = i[keep], j[keep]
    return i, j


def _preliminary_scale(median_sq_residual: float, n: int) -> float:
    """Finite-sample corrected scale from the LMS objective; 0 for exact fits."""
    if median_sq_residual <= 0.0:
        return 0.0
    return _MAD_SCALE * (1.0 + 5.0 / max(n - 2, 1)) * float(np.sqrt(median_sq_residual))


def fit_line_lms(x: np.ndarray, y: np.ndarray, config: LmsConfig = LmsConfig()) -> LmsFit:
    """LMS line fit on raw arrays; the array-level core behind lms_fit."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(x)
    if n < 2 or len(y) != n:
        raise ValueError("Need at least 2 pairs of equal length")
    if np.all(x == x[0]):
        theta2 = float(np.median(y))
        med = float(np.median((y - theta2) ** 2))
        return LmsFit(0.0, theta2, med, _preliminary_scale(med, n), degenerate=True)

    i, j = _pair_indices(n, config)
    dx = x[i] - x[j]
    valid = dx != 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        slopes = np.where(valid, (y[i] - y[j]) / np.where(valid, dx, 1.0), 0.0)
    intercepts = y[j] - slopes * x[j]
    resid = y[None, :] - slopes[:, None] * x[None, :] - intercepts[:, None]
    objective = np.median(resid * resid, axis=1)
    objective[~valid] = np.inf
    best = int(np.argmin(objective))
    med = float(objective[best])
    return LmsFit(float(slopes[best]), float(intercepts[best]), med, _preliminary_scale(med, n))


def fit_line_lms_batch(
    xs: np.ndarray, ys: np.ndarray, config: LmsConfig = LmsConfig(), chunk_elems: int = 20_000_000
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """LMS fits for many regressions of equal length at once.

    xs and ys are (C, n); returns (theta1, theta2, median_sq_residual, scale)
    arrays of length C. Row results are identical to fit_line_lms on the row.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    n_fits, n = xs.shape
    if n < 2:
        raise ValueError("Need at least 2 pairs per fit")
    i, j = _pair_indices(n, config)
    theta1 = np.zeros(n_fits)
    theta2 = np.zeros(n_fits)
    med = np.zeros(n_fits)

    rows_per_chunk = max(1, chunk_elems // (len(i) * n))
    for start in range(0, n_fits, rows_per_chunk):
        sl = slice(start, min(start + rows_per_chunk, n_fits))
        x, y = xs[sl], ys[sl]
        dx = x[:, i] - x[:, j]
        valid = dx != 0.0
        with np.errstate(divide="ignore", invalid="ignore"):
            slopes = np.where(valid, (y[:, i] - y[:, j]) / np.where(valid, dx, 1.0), 0.0)
        intercepts = y[:, j] - slopes * x[:, j]
        resid = y[:, None, :] - slopes[:, :, None] * x[:, None, :] - intercepts[:, :, None]
        objective = np.median(resid * resid, axis=2)
        objective[~valid] = np.inf
        best = np.argmin(objective, axis=1)
        rows = np.arange(len(best))
        theta1[sl] = slopes[rows, best]
        theta2[sl] = intercepts[rows, best]
        med[sl] = objective[rows, best]

        # Rows whose observations all share one x have no valid pair line.
        degenerate = ~valid.any(axis=1)
        if degenerate.any():
            t2 = np.median(y[degenerate], axis=1)
            theta1[sl][degenerate] = 0.0
            theta2[sl][degenerate] = t2
            med[sl][degenerate] = np.median((y[degenerate] - t2[:, None]) ** 2, axis=1)

    scale = np.where(med > 0.0, _MAD_SCALE * (1.0 + 5.0 / max(n - 2, 1)) * np.sqrt(med), 0.0)
    return theta1, theta2, med, scale


def lms_fit(data: RegressionData, config: LmsConfig = LmsConfig()) -> LmsFit:
    """LMS fit of the stacked query-vs-samples regression."""
    return fit_line_lms(data.x, data.y, config)


def adjust_query(
    query: Fingerprint,
    samples: Sequence[Fingerprint],
    fit: LmsFit,
    config: LmsConfig = LmsConfig(),
) -> AdjustedQuery:
    """Replace outlying query values by their fitted ones and average per AP.

    A pair is an outlier when |residual / scale| exceeds the cutoff; with a
    zero scale (exact fit) any nonzero residual counts. Kept pairs pass
    through untouched, so an outlier-free regression is a fixed point.
    """
    data = build_regression(query, samples)
    fitted = fit.theta1 * data.x + fit.theta2
    resid = data.y - fitted
    if fit.scale > 0.0:
        outlier = np.abs(resid / fit.scale) > config.outlier_cutoff
    else:
        outlier = np.abs(resid) > 1e-9
    adjusted = np.where(outlier, fitted, data.y)

    p = len(data.ap_ids)
    sums = np.zeros(p)
    counts = np.zeros(p)
    np.add.at(sums, data.ap_index, adjusted)
    np.add.at(counts, data.ap_index, 1.0)
    adjusted_rss = {ap: float(sums[i] / counts[i]) for i, ap in enumerate(data.ap_ids)}
    flags = {
        (int(data.sample_index[k]), data.ap_ids[data.ap_index[k]]): bool(outlier[k])
        for k in range(len(outlier))
    }
    return AdjustedQuery(adjusted_rss, flags, data.query_aps)


def adjusted_rsd(adj: AdjustedQuery, candidate_mean: Fingerprint) -> RsdVector:
    """RSD of the adjusted query against a candidate fingerprint.

    The union spans both AP sets with -100 substitution; the common count q
    compares the raw query's AP set (not the union-smeared adjusted one)
    against the candidate's.
    """
    candidate_aps = candidate_mean.ap_ids
    union = set(adj.adjusted_rss) | set(candidate_aps)
    delta = {
        ap: abs(adj.adjusted_rss.get(ap, RSS_FLOOR) - candidate_mean.rss(ap)) for ap in union
    }
    return RsdVector(delta=delta, p=len(union), q=len(adj.query_aps & candidate_aps))
