import math

import numpy as np
import pytest

from fingerloc import (
    ApPlacement,
    Environment,
    Location,
    ScanModel,
    TrajectorySpec,
    integrate_motion,
    scan,
    survey,
    true_rss,
    walk,
)
from fingerloc.simulate import grid_locations


def make_env(width=20.0, height=20.0, noise=0.0, aps=None, seed=0):
    if aps is None:
        aps = (
            ApPlacement("a", Location(0.115 * width, 0.155 * height)),
            ApPlacement("b", Location(0.86 * width, 0.82 * height)),
        )
    return Environment(width=width, height=height, aps=aps, noise_std=noise, seed=seed)


class TestTrueRss:
    def test_reference_distance(self):
        env = make_env()
        ap = ApPlacement("x", Location(5.0, 5.0))
        assert true_rss(env, ap, Location(6.0, 5.0)) == pytest.approx(-30.0)

    def test_one_decade(self):
        env = make_env()
        ap = ApPlacement("x", Location(5.0, 5.0))
        assert true_rss(env, ap, Location(15.0, 5.0)) == pytest.approx(-60.0)

    def test_body_blockage_range(self):
        env = make_env()
        ap = ApPlacement("x", Location(5.0, 5.0))
        rng = np.random.default_rng(1)
        clear = true_rss(env, ap, Location(15.0, 5.0))
        for _ in range(50):
            # AP due west while facing east: blocked by the body.
            blocked = true_rss(env, ap, Location(15.0, 5.0), rng, body_heading=0.0)
            assert clear - 10.0 <= blocked <= clear - 5.0
            # Facing the AP: unblocked.
            facing = true_rss(env, ap, Location(15.0, 5.0), rng, body_heading=math.pi)
            assert facing == pytest.approx(clear)

    def test_below_floor_absent(self):
        env = make_env()
        ap = ApPlacement("x", Location(0.0, 0.0), p_d0=-30.0, gamma=3.0)
        assert true_rss(env, ap, Location(20.0, 20.0), detection_floor=-70.0) is None

    def test_out_of_bounds_rejected(self):
        env = make_env()
        with pytest.raises(ValueError):
            true_rss(env, env.aps[0], Location(25.0, 5.0))


class TestScan:
    def test_no_misses_all_fresh(self):
        env = make_env()
        fp = scan(env, ScanModel(), Location(10.0, 10.0), t=7.0, history={})
        assert fp is not None
        assert all(r.t == 7.0 for r in fp.readings.values())

    def test_missed_scan_reports_stale(self):
        env = make_env()
        history = {}
        first = scan(env, ScanModel(), Location(10.0, 10.0), t=0.0, history=history)
        rng = np.random.default_rng(0)
        stale = scan(env, ScanModel(miss_rates=1.0), Location(10.0, 10.0), t=1.4,
                     history=history, rng=rng)
        assert stale.readings == first.readings  # duplicated, timestamps kept
        assert all(1.4 - r.t == pytest.approx(1.4) for r in stale.readings.values())

    def test_stale_beyond_horizon_omitted(self):
        env = make_env()
        history = {}
        scan(env, ScanModel(), Location(10.0, 10.0), t=0.0, history=history)
        rng = np.random.default_rng(0)
        model = ScanModel(miss_rates=1.0)
        for k in range(1, 4):  # ages 1.4, 2.8, 4.2: still reported
            fp = scan(env, model, Location(10.0, 10.0), t=1.4 * k, history=history, rng=rng)
            assert fp is not None and len(fp.readings) == 2
        # Age 5.6 exceeds the 5 s horizon: nothing left to report.
        assert scan(env, model, Location(10.0, 10.0), t=5.6, history=history, rng=rng) is None


class TestSurvey:
    def test_grid_count(self):
        env = make_env(width=10.0, height=10.0)
        assert len(grid_locations(env, 1.0)) == 121

    def test_samples_per_location(self):
        env = make_env(width=4.0, height=4.0)
        rm = survey(env, grid_spacing=2.0, samples_per_location=60)
        assert len(rm) == 9
        for loc in rm.locations:
            assert len(rm.samples(loc)) == 60

    def test_noiseless_survey_is_deterministic(self):
        env = make_env(width=6.0, height=6.0)
        rm1 = survey(env, 2.0, 3)
        rm2 = survey(env, 2.0, 3)
        for loc in rm1.locations:
            assert rm1.mean_fingerprint(loc).readings == rm2.mean_fingerprint(loc).readings


class TestWalk:
    def test_stationary_trace(self):
        env = make_env()
        spec = TrajectorySpec(waypoints=(Location(5.0, 5.0),), duration_s=5.6)
        queries = walk(env, spec, ScanModel(), np.random.default_rng(0),
                       step_noise=0.0, body_blockage=False)
        assert len(queries) == 5
        assert all(q.truth == Location(5.0, 5.0) for q in queries)
        assert all(not q.motion for q in queries)

    def test_scan_spacing_and_count(self):
        env = make_env(width=20.0, height=20.0)
        spec = TrajectorySpec(waypoints=(Location(2.0, 10.0), Location(14.0, 10.0)), speed=1.2)
        queries = walk(env, spec, ScanModel(), np.random.default_rng(0),
                       step_noise=0.0, body_blockage=False)
        assert len(queries) == 8
        gaps = [
            queries[i].truth.distance_to(queries[i + 1].truth) for i in range(len(queries) - 1)
        ]
        assert all(g == pytest.approx(1.68) for g in gaps)

    def test_zero_step_noise_integrates_exactly(self):
        env = make_env(width=20.0, height=20.0)
        spec = TrajectorySpec(
            waypoints=(Location(2.0, 2.0), Location(10.0, 2.0), Location(10.0, 9.0)), speed=1.0
        )
        queries = walk(env, spec, ScanModel(), np.random.default_rng(0),
                       step_noise=0.0, body_blockage=False)
        last = queries[-1]
        first = queries[0]
        est = integrate_motion(last.motion, t_now=last.t, dt=last.t + 1e-9)
        dx = last.truth.x - first.truth.x
        dy = last.truth.y - first.truth.y
        assert est.ell == pytest.approx(math.hypot(dx, dy), abs=1e-9)
        assert est.theta == pytest.approx(math.atan2(dy, dx), abs=1e-9)

    def test_same_seed_bit_identical(self):
        env = make_env(noise=3.0)
        spec = TrajectorySpec(waypoints=(Location(2.0, 2.0), Location(15.0, 15.0)), speed=1.0)
        model = ScanModel(miss_rates=0.1)
        q1 = walk(env, spec, model, np.random.default_rng(42))
        q2 = walk(env, spec, model, np.random.default_rng(42))
        assert len(q1) == len(q2)
        for a, b in zip(q1, q2):
            assert a.fingerprint.readings == b.fingerprint.readings
            assert a.motion == b.motion


class TestOutdatedPhenomenology:
    def test_outdated_rate_tracks_miss_rate(self):
        env = make_env(noise=0.0)
        for miss in (0.05, 0.15, 0.25):
            model = ScanModel(miss_rates=miss)
            rng = np.random.default_rng(int(miss * 100))
            history = {}
            reported = outdated = 0
            pos = Location(10.0, 10.0)
            for k in range(10_000):
                t = 1.4 * k
                fp = scan(env, model, pos, t, history, rng)
                if fp is None:
                    continue
                for r in fp.readings.values():
                    reported += 1
                    if t - r.t > 0.5:
                        outdated += 1
            assert abs(outdated / reported - miss) <= 0.02

    def test_majority_of_fingerprints_outdated(self):
        rng = np.random.default_rng(3)
        aps = tuple(
            ApPlacement(f"ap{i:02d}", Location(float(rng.uniform(0, 20)), float(rng.uniform(0, 20))))
            for i in range(15)
        )
        env = make_env(aps=aps, noise=0.0)
        rates = {ap.ap_id: float(r) for ap, r in zip(aps, rng.uniform(0.02, 0.25, size=15))}
        model = ScanModel(miss_rates=rates)
        history = {}
        with_outdated = total = 0
        for k in range(2000):
            fp = scan(env, model, Location(10.0, 10.0), 1.4 * k, history, rng)
            if fp is None:
                continue
            total += 1
            ages = [1.4 * k - r.t for r in fp.readings.values()]
            if any(a > 0.5 for a in ages):
                with_outdated += 1
        assert with_outdated / total > 0.8

    def test_delay_histogram_decreasing(self):
        env = make_env(noise=0.0)
        model = ScanModel(miss_rates=0.2)
        rng = np.random.default_rng(5)
        history = {}
        delays = []
        for k in range(20_000):
            t = 1.4 * k
            fp = scan(env, model, Location(10.0, 10.0), t, history, rng)
            if fp is None:
                continue
            for r in fp.readings.values():
                if t - r.t > 0.5:
                    delays.append(round(t - r.t, 1))
        values, counts = np.unique(delays, return_counts=True)
        assert set(values) == {1.4, 2.8, 4.2}
        assert counts[0] > counts[1] > counts[2]
