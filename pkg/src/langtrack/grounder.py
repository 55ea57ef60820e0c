"""Per-frame language grounding over the symbolic scene, with a controllable
error model.

The grounder never sees pixels when *deciding*: candidates come from the
scene's object list pushed through a noise channel (misses, box jitter,
attribute confusion, spurious detections), and are scored purely from
constraint matching plus a quality prior. The raster is consulted only to
fill the patch-contrast entry of the feature vector handed downstream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .geometry import Box, FrameBounds, clamp_to_frame
from .queries import Color, MatchContext, ObjectView, Query, Shape, parse
from .queries import satisfies as _satisfies
from .synthworld import (
    EventKind,
    SceneSpec,
    VideoSample,
    active_events,
    max_active_magnitude,
)

FEATURE_DIM = 10

# Sensitivity of the confidence quality prior to box-corner jitter, expressed
# relative to candidate area so small targets are penalized harder.
_JITTER_QUALITY_GAIN = 8.0

# A detection whose box is mostly under the occluder band is suppressed
# outright instead of going through the miss lottery.
_OCCLUSION_VISIBILITY_CUTOFF = 0.5


@dataclass(frozen=True)
class NoiseProfile:
    """Error-channel parameters for candidate detection.

    miss_rate is boosted additively by half the strongest active degradation
    magnitude, so frames inside events lose detections more often.
    """

    jitter_sigma: float = 0.0
    miss_rate: float = 0.0
    false_positive_rate: float = 0.0
    confusion_rate: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for name in ("miss_rate", "false_positive_rate", "confusion_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.jitter_sigma < 0.0:
            raise ValueError("jitter_sigma must be >= 0")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a non-negative 64-bit integer")

    def to_dict(self) -> dict:
        return {
            "jitter_sigma": self.jitter_sigma,
            "miss_rate": self.miss_rate,
            "false_positive_rate": self.false_positive_rate,
            "confusion_rate": self.confusion_rate,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseProfile":
        return cls(**d)


@dataclass(frozen=True)
class Candidate:
    """One perceived object; source_id is None for spurious detections."""

    box: Box
    color: Color
    shape: Shape
    source_id: Optional[int]

    def view(self) -> ObjectView:
        # Perceived size mirrors the world's square objects: the geometric
        # mean of the sides reduces to the true size for unjittered boxes.
        size = math.sqrt(self.box.w * self.box.h)
        return ObjectView(color=self.color, shape=self.shape, size=size, box=self.box)


@dataclass(frozen=True)
class ScoredBox:
    box: Box
    confidence: float


@dataclass(frozen=True)
class GroundingFeatures:
    """Fixed 10-entry description of one grounding decision.

    crowding stores n/(n+1) of the raw competitor count so every entry that
    feeds the regressor lives in [0, 1].
    """

    confidence: float
    match_strength: float
    margin: float
    crowding: float
    rel_area: float
    rel_width: float
    rel_height: float
    blur_magnitude: float
    illumination_magnitude: float
    patch_contrast: float

    def vector(self) -> np.ndarray:
        return np.array(
            [
                self.confidence,
                self.match_strength,
                self.margin,
                self.crowding,
                self.rel_area,
                self.rel_width,
                self.rel_height,
                self.blur_magnitude,
                self.illumination_magnitude,
                self.patch_contrast,
            ],
            dtype=np.float64,
        )

    @classmethod
    def from_vector(cls, v: Sequence[float]) -> "GroundingFeatures":
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (FEATURE_DIM,):
            raise ValueError(f"feature vector must have shape ({FEATURE_DIM},)")
        return cls(*[float(x) for x in v])


@dataclass(frozen=True)
class GroundingOutput:
    top1: ScoredBox
    candidates: tuple[ScoredBox, ...]
    features: GroundingFeatures


def _occluded_fraction(scene: SceneSpec, frame_index: int, target_box: Optional[Box], box: Box) -> float:
    """Fraction of box height under the widest active occluder band."""
    if target_box is None:
        return 0.0
    frac = 0.0
    for ev in active_events(scene, frame_index):
        if ev.kind is not EventKind.OCCLUSION_BAND:
            continue
        _, cy = target_box.center
        half = target_box.h * (1.0 + ev.magnitude) / 2.0
        overlap = min(box.y2, cy + half) - max(box.y, cy - half)
        if box.h > 0:
            frac = max(frac, overlap / box.h)
    return max(frac, 0.0)


def _jittered_box(b: Box, j: np.ndarray, bounds: FrameBounds) -> Box:
    x1, y1 = b.x + j[0], b.y + j[1]
    x2, y2 = b.x2 + j[2], b.y2 + j[3]
    w = min(max(x2 - x1, 2.0), bounds.width)
    h = min(max(y2 - y1, 2.0), bounds.height)
    box = Box.from_center((x1 + x2) / 2.0, (y1 + y2) / 2.0, w, h)
    return clamp_to_frame(box, bounds)


def _confused_attributes(rng: np.random.Generator, color: Color, shape: Shape) -> tuple[Color, Shape]:
    if int(rng.integers(2)) == 0:
        choices = [c for c in Color if c is not color]
        return choices[int(rng.integers(len(choices)))], shape
    choices = [s for s in Shape if s is not shape]
    return color, choices[int(rng.integers(len(choices)))]


def detect_candidates(sample: VideoSample, frame_index: int, noise: NoiseProfile) -> list[Candidate]:
    """Perceive the frame's objects through the noise channel.

    Deterministic in (noise.seed, scene seed, frame index). The per-object
    miss uniforms are drawn as one block before anything else, so raising
    miss_rate against a fixed seed can only shrink the survivor set.
    """
    scene = sample.scene
    states = sample.states(frame_index)
    rng = np.random.default_rng(np.random.SeedSequence((noise.seed, scene.seed, frame_index)))

    boost = 0.5 * max_active_magnitude(scene, frame_index)
    p_drop = min(noise.miss_rate + boost, 1.0)
    miss_draws = rng.random(len(states))

    target_box = None
    for st in states:
        if st.id == scene.target_id:
            target_box = st.box

    out: list[Candidate] = []
    for st, u in zip(states, miss_draws):
        if _occluded_fraction(scene, frame_index, target_box, st.box) > _OCCLUSION_VISIBILITY_CUTOFF:
            continue
        if u < p_drop:
            continue
        box, color, shape = st.box, st.color, st.shape
        if noise.jitter_sigma > 0.0:
            box = _jittered_box(box, rng.normal(0.0, noise.jitter_sigma, size=4), scene.bounds)
        if noise.confusion_rate > 0.0 and rng.random() < noise.confusion_rate:
            color, shape = _confused_attributes(rng, color, shape)
        out.append(Candidate(box=box, color=color, shape=shape, source_id=st.id))

    if noise.false_positive_rate > 0.0:
        colors, shapes = list(Color), list(Shape)
        for _ in range(int(rng.poisson(noise.false_positive_rate))):
            size = rng.uniform(10.0, 40.0)
            cx = rng.uniform(size / 2.0, scene.bounds.width - size / 2.0)
            cy = rng.uniform(size / 2.0, scene.bounds.height - size / 2.0)
            out.append(
                Candidate(
                    box=Box.from_center(cx, cy, size, size),
                    color=colors[int(rng.integers(len(colors)))],
                    shape=shapes[int(rng.integers(len(shapes)))],
                    source_id=None,
                )
            )
    return out


def detection_quality(box: Box, jitter_sigma: float, max_magnitude: float) -> float:
    """Confidence prior: localization trust × degradation discount.

    Trust falls off with expected squared jitter relative to box area, so a
    given sigma hurts small candidates more; any active event discounts by
    half its magnitude. Blind to *which* object was matched.
    """
    area = max(box.w * box.h, 1e-9)
    trust = math.exp(-_JITTER_QUALITY_GAIN * jitter_sigma * jitter_sigma / area)
    q = trust * (1.0 - 0.5 * max_magnitude)
    return min(max(q, 0.0), 1.0)


def _patch_contrast(frame: np.ndarray, box: Box) -> float:
    h, w = frame.shape[:2]
    x1 = min(max(int(math.floor(box.x)), 0), w - 1)
    y1 = min(max(int(math.floor(box.y)), 0), h - 1)
    x2 = max(min(int(math.ceil(box.x2)), w), x1 + 1)
    y2 = max(min(int(math.ceil(box.y2)), h), y1 + 1)
    gray = frame[y1:y2, x1:x2].astype(np.float64).mean(axis=2)
    return min(float(gray.std()) / 128.0, 1.0)


def ground(
    sample: VideoSample,
    frame_index: int,
    query: Union[Query, str],
    noise: NoiseProfile,
) -> GroundingOutput:
    """Score all perceived candidates against the query; return the argmax.

    Confidence = match_strength × detection_quality. Ties break toward the
    larger box, then the lower candidate index. A full-frame fallback at
    confidence 0 keeps the output total on frames with no detections.
    """
    if isinstance(query, str):
        query = Query(query)
    constraints = parse(query)
    scene = sample.scene
    bounds = scene.bounds

    cands = detect_candidates(sample, frame_index, noise)
    views = [c.view() for c in cands]
    ctx = MatchContext(bounds=bounds, objects=views)
    max_mag = max_active_magnitude(scene, frame_index)

    scored: list[ScoredBox] = []
    strengths: list[float] = []
    for view in views:
        _, strength = _satisfies(constraints, view, ctx)
        conf = strength * detection_quality(view.box, noise.jitter_sigma, max_mag)
        scored.append(ScoredBox(box=view.box, confidence=min(max(conf, 0.0), 1.0)))
        strengths.append(strength)

    scored.append(ScoredBox(box=Box(0.0, 0.0, float(bounds.width), float(bounds.height)), confidence=0.0))
    strengths.append(0.0)

    best = max(
        range(len(scored)),
        key=lambda i: (scored[i].confidence, scored[i].box.w * scored[i].box.h, -i),
    )
    top = scored[best]

    other_conf = [s.confidence for i, s in enumerate(scored) if i != best]
    margin = top.confidence - max(other_conf) if other_conf else top.confidence
    crowd = sum(1 for i in range(len(scored)) if i != best and strengths[i] >= strengths[best])
    frame_area = float(bounds.width * bounds.height)
    features = GroundingFeatures(
        confidence=top.confidence,
        match_strength=strengths[best],
        margin=margin,
        crowding=crowd / (crowd + 1.0),
        rel_area=top.box.w * top.box.h / frame_area,
        rel_width=top.box.w / bounds.width,
        rel_height=top.box.h / bounds.height,
        blur_magnitude=max_active_magnitude(scene, frame_index, EventKind.BLUR),
        illumination_magnitude=max_active_magnitude(scene, frame_index, EventKind.ILLUMINATION),
        patch_contrast=_patch_contrast(sample.frame(frame_index), top.box),
    )
    return GroundingOutput(top1=top, candidates=tuple(scored), features=features)
