"""Per-AP discrimination weights from the log-distance path loss model.

An AP close to the receiver pins the position down sharply: a 1 dB RSS change
maps to a small physical displacement. A faraway AP barely constrains it. The
discrimination factor quantifies this as the reciprocal of the estimated
AP distance, which on the LDPL model is an exponential in the observed RSS.
Above a watershed RSS the exponential is replaced by a capped sigmoid so one
fluctuating strong AP cannot drown out every other AP's contribution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .model import RSS_CEIL, RSS_FLOOR, Fingerprint

__all__ = [
    "PropagationParams",
    "DiscriminationProfile",
    "ldpl_rss",
    "raw_factor",
    "profile",
    "pairwise_weight",
]


@dataclass(frozen=True)
class PropagationParams:
    """LDPL and sigmoid-cap parameters.

    Defaults: path-loss exponent 3 (typical indoors) with sigmoid constants
    a=4, c=4.3; reference power -30 dBm at 1 m is a standard WiFi value, and
    the watershed f0=-57 dBm is where the exponential and sigmoid branches
    intersect under these defaults, keeping the piecewise factor continuous.
    """

    p_d0: float = -30.0  # dBm at the 1 m reference distance
    gamma: float = 3.0  # path-loss exponent
    a: float = 4.0  # sigmoid output cap is 1/a
    c: float = 4.3  # sigmoid midpoint, in (rss+100)/10 units
    f0: float = -57.0  # watershed RSS separating the two branches

    def __post_init__(self) -> None:
        if not (1.0 < self.gamma <= 6.0):
            raise ValueError(f"gamma must be in (1, 6], got {self.gamma}")
        if self.a <= 0:
            raise ValueError(f"a must be > 0, got {self.a}")
        if not (RSS_FLOOR <= self.f0 <= RSS_CEIL):
            raise ValueError(f"f0 must be within [{RSS_FLOOR}, {RSS_CEIL}], got {self.f0}")


@dataclass(frozen=True)
class DiscriminationProfile:
    """Normalized per-AP weights for one fingerprint; they sum to one."""

    weights: Mapping[str, float]

    def __post_init__(self) -> None:
        if any(w < 0 for w in self.weights.values()):
            raise ValueError("Weights must be non-negative")
        total = sum(self.weights.values())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"Weights must sum to 1 within 1e-9, got {total}")

    def weight(self, ap: str) -> float:
        """Weight of `ap`, zero when absent from the profile."""
        return self.weights.get(ap, 0.0)


def ldpl_rss(d: float, params: PropagationParams = PropagationParams()) -> float:
    """Expected RSS at distance `d` meters under the log-distance model."""
    if d <= 0:
        raise ValueError(f"Distance must be > 0 m, got {d}")
    return params.p_d0 - 10.0 * params.gamma * math.log10(d)


def raw_factor(rss: float, params: PropagationParams = PropagationParams()) -> float:
    """Unnormalized discrimination factor for one observed RSS.

    At or below the watershed this is 1/d for the LDPL-estimated distance d,
    i.e. 10**((rss - p_d0) / (10 gamma)). Above it, a sigmoid capped at 1/a.
    """
    if not (RSS_FLOOR <= rss <= RSS_CEIL):
        raise ValueError(f"RSS must be within [{RSS_FLOOR}, {RSS_CEIL}], got {rss}")
    return float(_raw_factor_array(np.asarray(rss, dtype=float), params))


def _raw_factor_array(rss: np.ndarray, params: PropagationParams) -> np.ndarray:
    """Vectorized raw_factor; inputs assumed already within the valid range."""
    ldpl = 10.0 ** ((rss - params.p_d0) / (10.0 * params.gamma))
    sigmoid = (1.0 / params.a) / (1.0 + np.exp(-2.0 * ((rss + 100.0) / 10.0 - params.c)))
    return np.where(rss <= params.f0, ldpl, sigmoid)


def profile(fp: Fingerprint, params: PropagationParams = PropagationParams()) -> DiscriminationProfile:
    """Normalized discrimination weights for every AP in a fingerprint."""
    raw = {ap: raw_factor(r.rss, params) for ap, r in fp.readings.items()}
    total = sum(raw.values())
    # raw_factor is strictly positive on the valid RSS range, so total > 0.
    return DiscriminationProfile({ap: v / total for ap, v in raw.items()})


def pairwise_weight(rho_s: DiscriminationProfile, rho_t: DiscriminationProfile, ap: str) -> float:
    """Weight of `ap` when matching two fingerprints: the larger of its two
    per-fingerprint weights, with absent APs contributing zero."""
    return max(rho_s.weight(ap), rho_t.weight(ap))
