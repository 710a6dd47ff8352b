import math

import numpy as np
import pytest

from fingerloc import (
    ApPlacement,
    Environment,
    Fingerprint,
    Location,
    MatcherConfig,
    NoCommonApError,
    PipelineToggles,
    Query,
    RadioMap,
    Reading,
    RsdVector,
    ScanModel,
    adjust_query,
    adjusted_rsd,
    basic_localize,
    build_regression,
    dorfin_localize,
    euclidean_dissimilarity,
    horus_localize,
    lms_fit,
    pairwise_weight,
    phi,
    profile,
    radar_localize,
    scan,
    score_candidates,
    survey,
    union_rsd,
    weighted_h,
)


def fp(readings: dict[str, float], t: float = 0.0) -> Fingerprint:
    return Fingerprint({ap: Reading(rss, t) for ap, rss in readings.items()})


def random_map(rng, nx=3, ny=3, n_aps=5, m=3, noise=2.0) -> RadioMap:
    aps = [f"ap{i}" for i in range(n_aps)]
    base = {ap: rng.uniform(-85.0, -35.0, size=(nx, ny)) for ap in aps}
    entries = {}
    for i in range(nx):
        for j in range(ny):
            loc = Location(float(i), float(j))
            samples = []
            for _ in range(m):
                readings = {}
                for ap in aps:
                    if rng.random() < 0.85:  # per-sample AP dropout
                        rss = float(np.clip(base[ap][i, j] + rng.normal(0, noise), -100, -20))
                        readings[ap] = rss
                if not readings:
                    readings["ap0"] = -90.0
                samples.append(fp(readings))
            entries[loc] = samples
    return RadioMap(1.0, entries)


class TestWeightedH:
    def test_all_zero_deltas(self):
        rsd = RsdVector({"a": 0.0, "b": 0.0}, p=2, q=2)
        assert weighted_h(rsd, {"a": 0.6, "b": 0.4}) == 0.0

    def test_hand_evaluated(self):
        rsd = RsdVector({"a": 10.0, "b": 0.0}, p=2, q=2)
        assert weighted_h(rsd, {"a": 0.6, "b": 0.4}) == pytest.approx(6.0)

    def test_uniform_weights_reduce_to_scaled_euclidean(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            p = int(rng.integers(1, 8))
            delta = {f"ap{i}": float(rng.uniform(0, 40)) for i in range(p)}
            rsd = RsdVector(delta, p=p, q=p)
            uniform = {ap: 1.0 / p for ap in delta}
            norm = math.sqrt(sum(d * d for d in delta.values()))
            assert weighted_h(rsd, uniform) == pytest.approx(norm / p)


class TestPhi:
    def test_equal_sets(self):
        assert phi(6.0, 2, 2) == pytest.approx(6.0)

    def test_ratio_amplifies(self):
        assert phi(6.0, 3, 1) == pytest.approx(18.0)

    def test_no_common_aps_is_infinite(self):
        assert phi(6.0, 3, 0) == math.inf

    def test_invalid_counts_rejected(self):
        with pytest.raises(ValueError):
            phi(1.0, 1, 2)

    def test_phi_never_below_h(self):
        rng = np.random.default_rng(6)
        for _ in range(100):
            p = int(rng.integers(1, 10))
            q = int(rng.integers(0, p + 1))
            h = float(rng.uniform(0, 50))
            assert phi(h, p, q) >= h or (h == 0 and q > 0)

    def test_exhaustive_small_universe(self):
        # Over every nonempty pair of subsets of a 4-AP universe, phi is
        # infinite exactly when the subsets are disjoint.
        universe = ["a", "b", "c", "d"]
        subsets = []
        for mask in range(1, 16):
            subsets.append([ap for k, ap in enumerate(universe) if mask >> k & 1])
        for s in subsets:
            for t in subsets:
                rsd = union_rsd(fp({ap: -50.0 for ap in s}), fp({ap: -60.0 for ap in t}))
                value = phi(weighted_h(rsd, {ap: 1.0 for ap in rsd.delta}), rsd.p, rsd.q)
                assert math.isinf(value) == (not set(s) & set(t))


class TestArgminInvariance:
    def test_uniform_weight_scaling_keeps_argmin(self):
        rng = np.random.default_rng(8)
        for _ in range(100):
            n_cand = int(rng.integers(2, 8))
            cands = []
            for _ in range(n_cand):
                p = int(rng.integers(1, 6))
                delta = {f"ap{i}": float(rng.uniform(0, 30)) for i in range(p)}
                weights = {f"ap{i}": float(rng.uniform(0.01, 1)) for i in range(p)}
                q = int(rng.integers(1, p + 1))
                cands.append((RsdVector(delta, p=p, q=q), weights))
            c = float(rng.uniform(0.1, 10))
            plain = [phi(weighted_h(d, w), d.p, d.q) for d, w in cands]
            scaled = [
                phi(weighted_h(d, {ap: c * v for ap, v in w.items()}), d.p, d.q)
                for d, w in cands
            ]
            assert int(np.argmin(plain)) == int(np.argmin(scaled))


class TestBasic:
    def test_exact_mean_query(self):
        rng = np.random.default_rng(10)
        rm = random_map(rng)
        loc = Location(1.0, 2.0)
        est = basic_localize(rm.mean_fingerprint(loc), rm)
        assert est.location == loc
        assert est.method == "basic"

    def test_smaller_norm_wins(self):
        entries = {
            Location(0, 0): [fp({"a": -50.0, "b": -60.0})],
            Location(1, 0): [fp({"a": -52.0, "b": -60.0})],
        }
        rm = RadioMap(1.0, entries)
        # Query 5 dB from the first mean, 7 dB from the second.
        est = basic_localize(fp({"a": -47.0, "b": -56.0}), rm)
        assert est.location == Location(0, 0)

    def test_disjoint_candidate_scores_finitely(self):
        entries = {
            Location(0, 0): [fp({"a": -90.0})],
            Location(5, 5): [fp({"b": -30.0})],
        }
        rm = RadioMap(1.0, entries)
        est = basic_localize(fp({"a": -90.0}), rm)
        assert est.location == Location(0, 0)
        # The disjoint candidate was comparable (finite h), just worse.
        other = euclidean_dissimilarity(fp({"a": -90.0}), rm.mean_fingerprint(Location(5, 5)))
        assert math.isfinite(other)


class TestRadar:
    def test_k1_mirrors_basic(self):
        rng = np.random.default_rng(14)
        rm = random_map(rng)
        q = fp({"ap0": -60.0, "ap1": -55.0, "ap2": -70.0})
        assert radar_localize(q, rm, k=1).location == basic_localize(q, rm).location

    def test_equidistant_centroid(self):
        entries = {
            Location(0, 0): [fp({"a": -50.0})],
            Location(2, 0): [fp({"a": -50.0})],
            Location(1, 3): [fp({"a": -50.0})],
        }
        rm = RadioMap(1.0, entries)
        est = radar_localize(fp({"a": -50.0}), rm, k=3)
        assert est.location == Location(1.0, 1.0)

    def test_k_too_large(self):
        rng = np.random.default_rng(15)
        rm = random_map(rng, nx=2, ny=2)
        with pytest.raises(ValueError):
            radar_localize(fp({"ap0": -60.0}), rm, k=5)


class TestHorus:
    def test_query_at_tight_mean(self):
        rng = np.random.default_rng(16)
        rm = random_map(rng, noise=1.0)
        loc = Location(2.0, 1.0)
        est = horus_localize(rm.mean_fingerprint(loc), rm)
        assert est.location == loc

    def test_uniform_map_breaks_ties_deterministically(self):
        entries = {
            Location(1, 1): [fp({"a": -50.0}), fp({"a": -50.0})],
            Location(0, 0): [fp({"a": -50.0}), fp({"a": -50.0})],
        }
        rm = RadioMap(1.0, entries)
        est = horus_localize(fp({"a": -50.0}), rm)
        assert est.location == Location(0, 0)

    def test_requires_two_samples(self):
        rm = RadioMap(1.0, {Location(0, 0): [fp({"a": -50.0})]})
        with pytest.raises(ValueError):
            horus_localize(fp({"a": -50.0}), rm)

    def test_missing_ap_counts_as_floor_observation(self):
        # The query lacks "b": a location whose samples rarely hear "b"
        # (values near the floor) explains that absence better than one
        # where "b" is strong.
        entries = {
            Location(0, 0): [fp({"a": -60.0, "b": -98.0}), fp({"a": -60.0})],
            Location(3, 3): [fp({"a": -60.0, "b": -40.0}), fp({"a": -60.0, "b": -42.0})],
        }
        rm = RadioMap(1.0, entries)
        est = horus_localize(fp({"a": -60.0}), rm)
        assert est.location == Location(0, 0)


class TestDorfinPipeline:
    def test_exact_match_dominates(self):
        rng = np.random.default_rng(18)
        rm = random_map(rng)
        loc = Location(2.0, 2.0)
        query = Query(fingerprint=rm.mean_fingerprint(loc))
        est = dorfin_localize(query, rm)
        assert est.location == loc

    def test_disjoint_candidate_never_selected(self):
        # A far candidate sharing zero APs scores infinite phi, so even a
        # terrible common-AP candidate beats it.
        entries = {
            Location(0, 0): [fp({"a": -95.0, "b": -95.0})],
            Location(9, 9): [fp({"c": -30.0, "d": -30.0})],
        }
        rm = RadioMap(1.0, entries)
        est = dorfin_localize(Query(fingerprint=fp({"a": -30.0, "b": -30.0})), rm)
        assert est.location == Location(0, 0)

    def test_all_disjoint_raises(self):
        rm = RadioMap(1.0, {Location(0, 0): [fp({"x": -50.0})]})
        with pytest.raises(NoCommonApError):
            dorfin_localize(Query(fingerprint=fp({"y": -50.0})), rm)

    def test_noiseless_grid_closed_loop(self):
        # 5x5 grid, zero noise: every grid-point query maps to its own cell.
        # AP positions are deliberately asymmetric; with symmetric placement
        # mirror-image cells would be genuinely indistinguishable.
        env = Environment(
            width=4.0,
            height=4.0,
            aps=(
                ApPlacement("a", Location(0.4, 0.7)),
                ApPlacement("b", Location(3.3, 0.6)),
                ApPlacement("c", Location(2.1, 3.5)),
            ),
            noise_std=0.0,
            seed=0,
        )
        rm = survey(env, grid_spacing=1.0, samples_per_location=2)
        assert len(rm) == 25
        model = ScanModel()
        for loc in rm.locations:
            query_fp = scan(env, model, loc, t=100.0, history={})
            est = dorfin_localize(Query(fingerprint=query_fp), rm)
            assert est.location == loc
            best = basic_localize(query_fp, rm)
            assert best.location == loc

    def test_all_off_reduction_equals_basic(self):
        rng = np.random.default_rng(20)
        rm = random_map(rng, nx=4, ny=4)
        config = MatcherConfig(toggles=PipelineToggles(False, False, False, False))
        for _ in range(25):
            readings = {
                f"ap{i}": float(rng.uniform(-95, -30))
                for i in range(5)
                if rng.random() < 0.8
            }
            if not readings:
                readings = {"ap0": -60.0}
            query = fp(readings)
            engine = dorfin_localize(Query(fingerprint=query), rm, config)
            reference = basic_localize(query, rm)
            assert engine.location == reference.location
            assert engine.score.h == pytest.approx(reference.score.h, rel=1e-9)

    def test_deterministic_repeat(self):
        rng = np.random.default_rng(22)
        rm = random_map(rng)
        query = Query(fingerprint=fp({"ap0": -55.0, "ap1": -65.0, "ap3": -75.0}))
        first = dorfin_localize(query, rm)
        second = dorfin_localize(query, rm)
        assert first == second

    def test_selection_key_is_h_when_ca_off(self):
        rng = np.random.default_rng(24)
        rm = random_map(rng)
        config = MatcherConfig(toggles=PipelineToggles(True, True, False, False))
        scores = score_candidates(Query(fingerprint=fp({"ap0": -50.0, "ap1": -60.0})), rm, config)
        assert np.array_equal(scores.selection_key, scores.h)


class TestEngineMatchesObjectApi:
    def test_static_pipeline_cross_check(self):
        # The vectorized engine must agree with the step-by-step object API
        # at every candidate: same regression, adjustment, weights, h, phi.
        rng = np.random.default_rng(26)
        rm = random_map(rng, nx=3, ny=2, n_aps=5, m=4)
        config = MatcherConfig()
        readings = {f"ap{i}": float(rng.uniform(-90, -35)) for i in range(4)}
        query_fp = fp(readings, t=50.0)
        scores = score_candidates(Query(fingerprint=query_fp), rm, config)

        for idx, loc in enumerate(scores.locations):
            samples = rm.samples(loc)
            mean = rm.mean_fingerprint(loc)
            data = build_regression(query_fp, list(samples))
            fit = lms_fit(data, config.lms)
            adj = adjust_query(query_fp, list(samples), fit, config.lms)
            rsd = adjusted_rsd(adj, mean)
            clamped = {
                ap: Reading(min(max(v, -100.0), -20.0), 0.0)
                for ap, v in adj.adjusted_rss.items()
                if ap in query_fp.ap_ids
            }
            rho_s = profile(Fingerprint(clamped), config.propagation)
            rho_t = profile(mean, config.propagation)
            weights = {ap: pairwise_weight(rho_s, rho_t, ap) for ap in rsd.delta}
            h = weighted_h(rsd, weights)
            expected_phi = phi(h, rsd.p, rsd.q)
            assert scores.h[idx] == pytest.approx(h, rel=1e-9, abs=1e-12)
            assert scores.phi[idx] == pytest.approx(expected_phi, rel=1e-9, abs=1e-12)
            assert scores.p[idx] == rsd.p
            assert scores.q[idx] == rsd.q
