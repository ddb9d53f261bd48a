import math

import numpy as np
import pytest

from mellin_aer.tsm import (
    MatchResult,
    ScaleEstimate,
    SegmentPlan,
    TsmConfig,
    calibrate_threshold,
    estimate_scale,
    frame_domain_score,
    localize_event,
    plan_for,
    plan_segments,
    rates,
    run_tsm,
    search_database,
)
from mellin_aer.video import VideoCube, embed_event, generate_synthetic, random_spec, resample_speed


def covered_events(plan: SegmentPlan, duration: int) -> np.ndarray:
    """Boolean per start frame: does some segment contain [start, start + duration)?"""
    starts = np.arange(plan.T3 - duration + 1)
    ok = np.zeros(starts.size, dtype=bool)
    for a, b in plan.segments:
        ok |= (starts >= a) & (starts + duration <= b)
    return ok


class TestConfig:
    def test_defaults(self):
        c = TsmConfig()
        assert (c.method, c.threshold, c.n_tau) == ("power", 0.5, 512)

    @pytest.mark.parametrize("kw", [{"method": "sum"}, {"threshold": 1.5}, {"window": 1}, {"max_alpha": 0}])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            TsmConfig(**kw)


class TestEstimateScale:
    @pytest.mark.parametrize("alpha", [0.5, 1.0, 2.0, 3.0])
    @pytest.mark.parametrize("method", ["power", "peak"])
    def test_recovers_alpha(self, small_clip, alpha, method):
        ref = resample_speed(small_clip, alpha)
        truth = ref.num_frames / small_clip.num_frames
        est = estimate_scale(small_clip, ref, TsmConfig(method=method))
        assert abs(math.log(est.alpha) - math.log(truth)) <= 2 * est.delta_tau
        assert est.tau_shift == pytest.approx(est.lag * est.delta_tau)
        assert est.alpha == pytest.approx(math.exp(-est.tau_shift))
        assert est.matched

    def test_self_match_is_unit_score(self, small_clip):
        est = estimate_scale(small_clip, small_clip)
        assert est.lag == 0 and est.alpha == 1.0
        assert est.score == pytest.approx(1.0)

    @pytest.mark.parametrize("gain,offset", [(0.5, 0.0), (2.0, 0.1), (0.1, 0.7)])
    def test_gain_invariant_argmax(self, small_clip, gain, offset):
        ref = resample_speed(small_clip, 2.0)
        scaled = VideoCube(gain * ref.samples + offset, ref.frame_rate)
        a = estimate_scale(small_clip, ref)
        b = estimate_scale(small_clip, scaled)
        assert a.lag == b.lag
        assert b.score == pytest.approx(a.score)

    def test_frame_rate_mismatch(self, small_clip):
        other = VideoCube(small_clip.samples, 25.0)
        with pytest.raises(ValueError, match="frame rate"):
            estimate_scale(small_clip, other)

    def test_size_mismatch(self, small_clip):
        with pytest.raises(ValueError, match="spatial"):
            estimate_scale(small_clip, VideoCube(small_clip.samples[:, :8], small_clip.frame_rate))

    def test_static_query_never_matches(self, small_clip):
        still = VideoCube(np.repeat(small_clip.samples[:1], 50, axis=0), small_clip.frame_rate)
        est = estimate_scale(still, small_clip)
        assert not est.matched and est.score == 0.0


class TestRunTsm:
    def test_localizes_embedded_event(self, small_clip):
        event = resample_speed(small_clip, 2.0)
        ref = embed_event(event, 700, 123, background=small_clip.samples.mean(axis=0))
        result = run_tsm(small_clip, ref)
        assert result.matched
        assert abs(result.event_frame - 123) <= 5
        assert abs(math.log(result.alpha / 2.0)) < 0.05

    def test_no_match_is_a_result(self, small_clip):
        other = generate_synthetic(random_spec(999, width=16, height=16, num_frames=200))
        result = run_tsm(small_clip, other, TsmConfig(threshold=1.0))
        assert not result.matched
        assert result.event_frame is None and result.step2_score is None

    def test_localize_event_reports_offset(self, small_clip):
        ref = embed_event(small_clip, 400, 50)
        loc = localize_event(small_clip, ref, truth=48)
        assert loc.event_frame == 50 and loc.frame_offset == 2

    def test_frame_domain_score_self(self, small_clip):
        lag, score = frame_domain_score(small_clip, small_clip)
        assert lag == 0 and score == pytest.approx(1.0)


class TestMatchResult:
    def test_unmatched_cannot_carry_frame(self):
        with pytest.raises(ValueError):
            MatchResult(False, 1.0, event_frame=3)

    def test_to_dict(self):
        d = MatchResult(True, 2.0, 5, 0.9, 0.8).to_dict()
        assert d == {
            "matched": True, "alpha": 2.0, "event_frame": 5, "step1_score": 0.9,
            "step2_score": 0.8, "segment_index": None, "absolute_frame": None,
        }


class TestPlanSegments:
    def test_example(self):
        plan = plan_segments(1000, 400, 100)
        assert plan.segments == ((0, 400), (300, 700), (600, 1000))

    def test_exact_fit(self):
        assert plan_segments(400, 400, 100).segments == ((0, 400),)

    def test_last_segment_clamped(self):
        plan = plan_segments(1050, 400, 100)
        assert plan.segments[-1] == (900, 1050)

    @pytest.mark.parametrize("T3,T2,T1", [(100, 50, 50), (100, 50, 60), (100, 200, 10), (100, 50, 0)])
    def test_invalid(self, T3, T2, T1):
        with pytest.raises(ValueError):
            plan_segments(T3, T2, T1)

    def test_coverage_sampled(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            T3 = int(rng.integers(2, 2001))
            T2 = int(rng.integers(2, T3 + 1))
            T1 = int(rng.integers(1, T2))
            plan = plan_segments(T3, T2, T1)
            assert plan.segments[0][0] == 0 and plan.segments[-1][1] == T3
            assert all(b - a <= T2 for a, b in plan.segments)
            assert all(covered_events(plan, T1))

    def test_plan_for_defaults(self, small_clip):
        db = VideoCube(np.zeros((3000, 16, 16)), small_clip.frame_rate)
        plan = plan_for(small_clip, db, TsmConfig(window=1200, max_alpha=4))
        assert plan.T1 == 800 and plan.T2 == 1200
        assert plan_for(small_clip, db).segments == ((0, 3000),)


class TestSearchDatabase:
    def test_absolute_frames(self, small_clip):
        event = resample_speed(small_clip, 1.5)
        db = embed_event(event, 1500, 900, background=small_clip.samples.mean(axis=0))
        matches = search_database(small_clip, db, TsmConfig(window=700, max_alpha=2))
        assert matches
        best = matches[0]
        assert abs(best.absolute_frame - 900) <= 5
        seg = plan_segments(1500, 700, 400).segments[best.segment_index]
        assert best.absolute_frame == seg[0] + best.event_frame
        scores = [m.step1_score for m in matches]
        assert scores == sorted(scores, reverse=True)

    def test_plan_must_fit(self, small_clip):
        with pytest.raises(ValueError):
            search_database(small_clip, small_clip, plan=plan_segments(500, 300, 100))


class TestCalibration:
    def test_policies(self):
        matched = [0.9, 0.8, 0.95]
        unmatched = [0.1, 0.5, 0.3]
        t_fp = calibrate_threshold(matched, unmatched, "min-fp")
        assert t_fp == np.nextafter(0.5, np.inf)
        assert calibrate_threshold(matched, unmatched, "min-false-negative") == 0.8
        assert rates(matched, unmatched, t_fp) == (100.0, 0.0)

    def test_overlap(self):
        matched = [0.4, 0.9]
        unmatched = [0.5, 0.1]
        t_fp = calibrate_threshold(matched, unmatched, "min-fp")
        t_fn = calibrate_threshold(matched, unmatched, "min-fn")
        assert rates(matched, unmatched, t_fp) == (50.0, 0.0)
        assert rates(matched, unmatched, t_fn) == (100.0, 50.0)

    def test_errors(self):
        with pytest.raises(ValueError):
            calibrate_threshold([], [0.1])
        with pytest.raises(ValueError):
            calibrate_threshold([0.5], [0.1], "balanced")

    def test_rates_empty(self):
        assert rates([], [0.2], 0.5) == (None, 0.0)
