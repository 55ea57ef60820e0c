"""Grounder: noise channel, confidence scoring, and feature extraction."""

import numpy as np
import pytest

from langtrack import grounder as gr
from langtrack import queries as q
from langtrack import synthworld as sw
from langtrack.geometry import Box, FrameBounds, iou

CLEAN = gr.NoiseProfile()


def scene_of(objects, events=(), n_frames=20, target_id=0, seed=9, bounds=(256, 256)):
    return sw.SceneSpec(bounds=FrameBounds(*bounds), n_frames=n_frames,
                        objects=tuple(objects), target_id=target_id,
                        events=tuple(events), seed=seed)


def sample_of(scene, text="the red triangle"):
    return sw.VideoSample(scene, [sw.GeneratedQuery(text, False)])


def obj(oid, shape, color, size, x, y, vel=(0.0, 0.0), z=0):
    return sw.ObjectSpec(oid, shape, color, size,
                         sw.Trajectory(sw.TrajectoryKind.LINEAR, (x, y), vel), z_order=z)


@pytest.fixture
def single_target():
    return sample_of(scene_of([obj(0, q.Shape.TRIANGLE, q.Color.RED, 24, 80, 80)]))


def test_noiseless_single_target_identity(single_target):
    out = gr.ground(single_target, 0, "the red triangle", CLEAN)
    assert out.top1.box == single_target.gt_box(0)
    assert out.top1.confidence == 1.0


def test_noiseless_unambiguous_perfect_on_all_frames():
    sample = sample_of(scene_of([
        obj(0, q.Shape.TRIANGLE, q.Color.RED, 24, 60, 60, vel=(1.0, 0.5)),
        obj(1, q.Shape.ELLIPSE, q.Color.BLUE, 30, 180, 120, vel=(-0.5, 0.0)),
    ]))
    for f in range(sample.n_frames):
        out = gr.ground(sample, f, "the red triangle", CLEAN)
        assert iou(out.top1.box, sample.gt_box(f)) == 1.0
        assert out.top1.confidence == 1.0


def test_identical_twins_tie_break_is_index_order():
    twins = [obj(0, q.Shape.RECTANGLE, q.Color.RED, 24, 60, 60),
             obj(1, q.Shape.RECTANGLE, q.Color.RED, 24, 180, 180)]
    # same boxes either way; winner is always the lower-index candidate
    for target_id, expected_iou in [(0, 1.0), (1, 0.0)]:
        sample = sample_of(scene_of(twins, target_id=target_id), "the red rectangle")
        out = gr.ground(sample, 0, "the red rectangle", CLEAN)
        assert iou(out.top1.box, sample.gt_box(0)) == expected_iou
        assert out.top1.box == sample.states(0)[0].box


def test_confidence_tie_prefers_larger_area():
    sample = sample_of(scene_of([
        obj(0, q.Shape.RECTANGLE, q.Color.RED, 30, 60, 60),
        obj(1, q.Shape.RECTANGLE, q.Color.RED, 18, 180, 180),
    ]), "the red rectangle")
    out = gr.ground(sample, 0, "the red rectangle", CLEAN)
    assert out.top1.box.w == 30.0


def test_full_occlusion_with_miss_boost_yields_fallback():
    ev = sw.DegradationEvent(sw.EventKind.OCCLUSION_BAND, start=0, end=20, magnitude=1.0)
    sample = sample_of(scene_of([
        obj(0, q.Shape.TRIANGLE, q.Color.RED, 24, 80, 80),
        obj(1, q.Shape.ELLIPSE, q.Color.BLUE, 30, 180, 40),
    ], events=[ev]))
    noise = gr.NoiseProfile(miss_rate=0.5, seed=11)
    out = gr.ground(sample, 3, "the red triangle", noise)
    assert out.top1.confidence == 0.0
    assert out.top1.box == Box(0, 0, 256, 256)


def test_mostly_occluded_target_is_suppressed():
    ev = sw.DegradationEvent(sw.EventKind.OCCLUSION_BAND, start=0, end=20, magnitude=0.8)
    sample = sample_of(scene_of([obj(0, q.Shape.TRIANGLE, q.Color.RED, 24, 80, 80)], events=[ev]))
    cands = gr.detect_candidates(sample, 2, CLEAN)
    assert all(c.source_id != 0 for c in cands)


def test_miss_rate_one_leaves_no_true_candidates():
    sample = sample_of(scene_of([obj(0, q.Shape.TRIANGLE, q.Color.RED, 24, 80, 80)]))
    cands = gr.detect_candidates(sample, 0, gr.NoiseProfile(miss_rate=1.0, seed=3))
    assert cands == []


def test_detect_candidates_deterministic():
    sample = sample_of(scene_of([
        obj(0, q.Shape.TRIANGLE, q.Color.RED, 24, 80, 80),
        obj(1, q.Shape.ELLIPSE, q.Color.BLUE, 30, 180, 40),
    ]))
    noise = gr.NoiseProfile(jitter_sigma=2.0, miss_rate=0.3,
                            false_positive_rate=0.8, confusion_rate=0.2, seed=77)
    a = gr.detect_candidates(sample, 5, noise)
    b = gr.detect_candidates(sample, 5, noise)
    assert a == b
    c = gr.detect_candidates(sample, 5, gr.NoiseProfile(**{**noise.to_dict(), "seed": 78}))
    assert a != c


def test_miss_rate_monotonicity_over_seeds():
    sample = sample_of(scene_of([
        obj(0, q.Shape.TRIANGLE, q.Color.RED, 24, 80, 80),
        obj(1, q.Shape.ELLIPSE, q.Color.BLUE, 30, 180, 40),
        obj(2, q.Shape.RECTANGLE, q.Color.GREEN, 20, 40, 200),
    ]))
    rates = [0.0, 0.25, 0.5, 0.75, 1.0]
    for seed in range(100):
        counts = []
        for r in rates:
            cands = gr.detect_candidates(sample, 0, gr.NoiseProfile(miss_rate=r, seed=seed))
            counts.append(sum(1 for c in cands if c.source_id is not None))
        assert counts == sorted(counts, reverse=True)


def test_jitter_lowers_confidence_and_keeps_box_inside():
    sample = sample_of(scene_of([obj(0, q.Shape.TRIANGLE, q.Color.RED, 24, 12, 12)]))
    noise = gr.NoiseProfile(jitter_sigma=3.0, seed=5)
    for f in range(10):
        out = gr.ground(sample, f, "the red triangle", noise)
        assert 0.0 < out.top1.confidence < 1.0
        b = out.top1.box
        assert b.x >= 0 and b.y >= 0 and b.x2 <= 256 and b.y2 <= 256


def test_quality_penalizes_small_boxes_more():
    big = gr.detection_quality(Box(0, 0, 40, 40), 2.0, 0.0)
    small = gr.detection_quality(Box(0, 0, 12, 12), 2.0, 0.0)
    assert small < big < 1.0


def test_event_discounts_confidence():
    ev = sw.DegradationEvent(sw.EventKind.BLUR, start=0, end=10, magnitude=0.8)
    sample = sample_of(scene_of([obj(0, q.Shape.TRIANGLE, q.Color.RED, 24, 80, 80)], events=[ev]))
    out = gr.ground(sample, 2, "the red triangle", CLEAN)
    assert out.top1.confidence == pytest.approx(1.0 - 0.5 * 0.8)
    assert gr.ground(sample, 15, "the red triangle", CLEAN).top1.confidence == 1.0


def test_confidence_bounded_under_heavy_noise():
    sample = sample_of(scene_of([
        obj(0, q.Shape.TRIANGLE, q.Color.RED, 24, 80, 80),
        obj(1, q.Shape.ELLIPSE, q.Color.BLUE, 30, 180, 40),
    ]))
    noise = gr.NoiseProfile(jitter_sigma=5.0, miss_rate=0.4,
                            false_positive_rate=1.0, confusion_rate=0.5, seed=13)
    for f in range(20):
        out = gr.ground(sample, f, "the red triangle", noise)
        for sb in out.candidates:
            assert 0.0 <= sb.confidence <= 1.0
        assert out.top1.confidence == max(sb.confidence for sb in out.candidates)


def test_fallback_always_present():
    sample = sample_of(scene_of([obj(0, q.Shape.TRIANGLE, q.Color.RED, 24, 80, 80)]))
    out = gr.ground(sample, 0, "the red triangle", CLEAN)
    assert any(sb.box == Box(0, 0, 256, 256) and sb.confidence == 0.0 for sb in out.candidates)


def test_empty_scene_grounds_to_fallback_with_zero_contrast():
    scene = sw.SceneSpec(bounds=FrameBounds(64, 64), n_frames=3, objects=(), target_id=0)
    sample = sw.VideoSample(scene, [sw.GeneratedQuery("the red triangle", True)])
    out = gr.ground(sample, 0, "the red triangle", CLEAN)
    assert out.top1.confidence == 0.0
    assert out.features.patch_contrast == 0.0
    assert out.features.crowding == 0.0


def test_feature_vector_bounds_and_round_trip():
    sample = sample_of(scene_of([
        obj(0, q.Shape.TRIANGLE, q.Color.RED, 24, 80, 80),
        obj(1, q.Shape.ELLIPSE, q.Color.BLUE, 30, 180, 40),
    ]))
    noise = gr.NoiseProfile(jitter_sigma=2.0, miss_rate=0.2,
                            false_positive_rate=0.6, confusion_rate=0.15, seed=21)
    for f in range(10):
        feats = gr.ground(sample, f, "the red triangle", noise).features
        v = feats.vector()
        assert v.shape == (gr.FEATURE_DIM,)
        assert np.all(np.isfinite(v))
        for i in [0, 1, 2, 3, 7, 8, 9]:
            assert 0.0 <= v[i] <= 1.0
        assert gr.GroundingFeatures.from_vector(v) == feats


def test_twin_distractor_shows_up_in_crowding():
    sample = sample_of(scene_of([
        obj(0, q.Shape.RECTANGLE, q.Color.RED, 24, 60, 60),
        obj(1, q.Shape.RECTANGLE, q.Color.RED, 24, 180, 180),
    ]), "the red rectangle")
    feats = gr.ground(sample, 0, "the red rectangle", CLEAN).features
    assert feats.crowding == pytest.approx(0.5)
    assert feats.margin == pytest.approx(0.0)


def test_unique_match_margin_vs_partial_distractor():
    sample = sample_of(scene_of([
        obj(0, q.Shape.TRIANGLE, q.Color.RED, 24, 80, 80),
        obj(1, q.Shape.ELLIPSE, q.Color.RED, 24, 180, 40),
    ]))
    feats = gr.ground(sample, 0, "the red triangle", CLEAN).features
    assert feats.margin == pytest.approx(0.5)  # distractor matches color only
    assert feats.crowding == 0.0
    assert feats.patch_contrast > 0.05


def test_noise_profile_validation_and_round_trip():
    with pytest.raises(ValueError):
        gr.NoiseProfile(miss_rate=1.2)
    with pytest.raises(ValueError):
        gr.NoiseProfile(jitter_sigma=-1.0)
    n = gr.NoiseProfile(jitter_sigma=1.5, miss_rate=0.1, seed=42)
    assert gr.NoiseProfile.from_dict(n.to_dict()) == n
