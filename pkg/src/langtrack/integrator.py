"""Score-guided integration of grounding and tracking.

The default engine is a greedy hard switch: keep a saved score for the box
currently being tracked, re-adopt the grounder's output whenever the current
frame's score beats it, and decay the saved score a little on every tracked
frame so the pipeline eventually re-listens to language. Variants cover the
ablation grid: a switch-threshold margin, blended template updates, soft
output fusion over the tracker's candidate grid, and fixed schedules that
ignore scores entirely.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import rtscore as rts
from . import tracker as tk
from .geometry import Box, iou
from .grounder import GroundingOutput, NoiseProfile, ground
from .synthworld import VideoSample

SCORE_SOURCES = ("grounding-confidence", "r-only", "rt-product", "oracle-r", "oracle-rt")
TEMPLATE_UPDATES = ("greedy", "improvement-threshold", "fixed-weight", "score-weighted")
OUTPUT_FUSIONS = ("hard-switch", "soft-fusion")
SCHEDULES = (
    "adaptive",
    "all-grounding",
    "frame-first",
    "frame-middle",
    "frame-last",
    "frame-random",
    "fixed-interval",
)

TLookup = Callable[[VideoSample, int], float]


@dataclass(frozen=True)
class IntegrationPolicy:
    score_source: str = "rt-product"
    template_update: str = "greedy"
    output_fusion: str = "hard-switch"
    schedule: str = "adaptive"
    interval: Optional[int] = None
    decay: float = 0.998
    improvement_tau: float = 0.20
    fixed_rate: float = 0.9
    fusion_weight: Optional[float] = None  # None: weight tracks the frame score

    def __post_init__(self):
        if self.score_source not in SCORE_SOURCES:
            raise ValueError(f"unknown score_source {self.score_source!r}")
        if self.template_update not in TEMPLATE_UPDATES:
            raise ValueError(f"unknown template_update {self.template_update!r}")
        if self.output_fusion not in OUTPUT_FUSIONS:
            raise ValueError(f"unknown output_fusion {self.output_fusion!r}")
        if self.schedule not in SCHEDULES:
            raise ValueError(f"unknown schedule {self.schedule!r}")
        if not 0.0 < self.decay <= 1.0:
            raise ValueError("decay must be in (0, 1]")
        if self.improvement_tau < 0.0:
            raise ValueError("improvement_tau must be >= 0")
        if (self.schedule == "fixed-interval") != (self.interval is not None):
            raise ValueError("interval must be set exactly for the fixed-interval schedule")
        if self.interval is not None and self.interval < 1:
            raise ValueError("interval must be >= 1")
        if self.fusion_weight is not None and not 0.0 <= self.fusion_weight <= 1.0:
            raise ValueError("fusion_weight must be in [0, 1]")

    def to_dict(self) -> dict:
        return {
            "score_source": self.score_source,
            "template_update": self.template_update,
            "output_fusion": self.output_fusion,
            "schedule": self.schedule,
            "interval": self.interval,
            "decay": self.decay,
            "improvement_tau": self.improvement_tau,
            "fixed_rate": self.fixed_rate,
            "fusion_weight": self.fusion_weight,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "IntegrationPolicy":
        return cls(**d)


@dataclass(frozen=True)
class FrameRecord:
    frame_index: int
    source: str  # "grounding" or "tracking"
    s_frame: float  # this frame's score for the grounded box
    s_saved_before: float
    s_saved_after: float
    grounded_box: Optional[Box]
    tracked_box: Optional[Box]
    output_box: Box

    def to_dict(self) -> dict:
        def b(x: Optional[Box]):
            return None if x is None else [x.x, x.y, x.w, x.h]

        return {
            "frame_index": self.frame_index,
            "source": self.source,
            "s_frame": self.s_frame,
            "s_saved_before": self.s_saved_before,
            "s_saved_after": self.s_saved_after,
            "grounded_box": b(self.grounded_box),
            "tracked_box": b(self.tracked_box),
            "output_box": b(self.output_box),
        }


def combined_score(source: str, scores: Optional[rts.RTScores], confidence: float) -> float:
    """Collapse the available quality signals into one scalar per frame."""
    if source == "grounding-confidence":
        return confidence
    if scores is None:
        raise ValueError(f"score source {source!r} needs RTScores")
    if source in ("r-only", "oracle-r"):
        return scores.r
    return scores.r * scores.t


def _frame_score(
    sample: VideoSample,
    frame_index: int,
    gout: GroundingOutput,
    policy: IntegrationPolicy,
    model: Optional[rts.ScoreModel],
    t_lookup: Optional[TLookup],
    config: tk.TrackerConfig,
) -> float:
    src = policy.score_source
    conf = gout.top1.confidence
    if src == "grounding-confidence":
        return combined_score(src, None, conf)
    if src in ("r-only", "rt-product"):
        if model is None:
            raise ValueError(f"score source {src!r} needs a trained model")
        return combined_score(src, rts.predict(model, gout.features, conf), conf)
    r = iou(gout.top1.box, sample.gt_box(frame_index))
    if src == "oracle-r":
        return r
    t = t_lookup(sample, frame_index) if t_lookup else rts.derive_t(sample, frame_index, config)
    return r * t


def _grid_iou(response: tk.ResponseMap, box: Box) -> np.ndarray:
    cx, cy = response.centers[:, 0], response.centers[:, 1]
    w, h = response.sizes[:, 0], response.sizes[:, 1]
    x1, y1 = cx - w / 2.0, cy - h / 2.0
    ix = np.minimum(x1 + w, box.x2) - np.maximum(x1, box.x)
    iy = np.minimum(y1 + h, box.y2) - np.maximum(y1, box.y)
    inter = np.maximum(ix, 0.0) * np.maximum(iy, 0.0)
    union = w * h + box.w * box.h - inter
    return np.where(union > 0.0, inter / union, 0.0)


def _minmax(v: np.ndarray) -> np.ndarray:
    lo, hi = float(v.min()), float(v.max())
    if hi <= lo:
        return np.zeros_like(v)
    return (v - lo) / (hi - lo)


def fuse_outputs(gout: GroundingOutput, response: tk.ResponseMap, weight: float) -> Box:
    """Convex-combine both signals over the tracker's candidate grid.

    Grounding confidences are splatted onto the grid by IoU against each
    candidate, both maps are min-max normalized, and the argmax of the
    weighted sum wins. weight 1 trusts grounding alone, 0 the tracker.
    """
    splat = np.zeros(len(response.scores))
    for sb in gout.candidates:
        if sb.confidence > 0.0:
            splat += sb.confidence * _grid_iou(response, sb.box)
    fused = weight * _minmax(splat) + (1.0 - weight) * _minmax(np.asarray(response.scores))
    return response.box(int(np.argmax(fused)))


def _adopt(
    state: tk.TrackerState,
    frame: np.ndarray,
    box: Box,
    policy: IntegrationPolicy,
    s_frame: float,
    config: tk.TrackerConfig,
) -> None:
    """Point the tracker at a newly adopted grounding box."""
    rate = {
        "greedy": 1.0,
        "improvement-threshold": 1.0,
        "fixed-weight": policy.fixed_rate,
        "score-weighted": min(max(s_frame, 0.0), 1.0),
    }[policy.template_update]
    tk.update_template(state, frame, box, rate, config)
    state.last_box = box


def _switch_test(saved: float, s_frame: float, policy: IntegrationPolicy) -> bool:
    if policy.template_update == "improvement-threshold":
        return saved * (1.0 + policy.improvement_tau) < s_frame
    return saved < s_frame


def run_video(
    sample: VideoSample,
    query: str,
    noise: NoiseProfile,
    config: tk.TrackerConfig,
    policy: IntegrationPolicy,
    model: Optional[rts.ScoreModel] = None,
    t_lookup: Optional[TLookup] = None,
    run_seed: int = 0,
) -> tuple[list[Box], list[FrameRecord]]:
    """Produce one box per frame under the policy; also return the audit log."""
    if policy.schedule == "adaptive":
        return _run_adaptive(sample, query, noise, config, policy, model, t_lookup)
    if policy.schedule == "all-grounding":
        return _run_all_grounding(sample, query, noise)
    if policy.schedule == "fixed-interval":
        return _run_fixed_interval(sample, query, noise, config, policy)
    return _run_frame_init(sample, query, noise, config, policy, run_seed)


def _track_frame(
    sample: VideoSample,
    f: int,
    state: tk.TrackerState,
    config: tk.TrackerConfig,
    policy: IntegrationPolicy,
    gout: Optional[GroundingOutput],
    weight: float,
) -> tuple[Box, Box]:
    """One tracked frame; returns (raw tracker box, output box after fusion)."""
    tracked, response = tk.track(sample.frame(f), state, config)
    if policy.output_fusion == "soft-fusion" and gout is not None:
        output = fuse_outputs(gout, response, weight)
        state.last_box = output  # the search window follows what we report
        return tracked, output
    return tracked, tracked


def _run_adaptive(sample, query, noise, config, policy, model, t_lookup):
    boxes: list[Box] = []
    log: list[FrameRecord] = []
    saved = 0.0
    state: Optional[tk.TrackerState] = None
    for f in range(sample.n_frames):
        gout = ground(sample, f, query, noise)
        b_g = gout.top1.box
        s_frame = _frame_score(sample, f, gout, policy, model, t_lookup, config)
        before = saved
        if f == 0:
            state = tk.init(sample.frame(0), b_g, config)
            saved = s_frame
            boxes.append(b_g)
            log.append(FrameRecord(0, "grounding", s_frame, before, saved, b_g, None, b_g))
            continue
        if _switch_test(saved, s_frame, policy):
            _adopt(state, sample.frame(f), b_g, policy, s_frame, config)
            saved = s_frame
            boxes.append(b_g)
            log.append(FrameRecord(f, "grounding", s_frame, before, saved, b_g, None, b_g))
        else:
            weight = s_frame if policy.fusion_weight is None else policy.fusion_weight
            tracked, output = _track_frame(sample, f, state, config, policy, gout, weight)
            saved = saved * policy.decay
            boxes.append(output)
            log.append(FrameRecord(f, "tracking", s_frame, before, saved, b_g, tracked, output))
    return boxes, log


def _run_all_grounding(sample, query, noise):
    boxes, log = [], []
    for f in range(sample.n_frames):
        gout = ground(sample, f, query, noise)
        b_g = gout.top1.box
        boxes.append(b_g)
        conf = gout.top1.confidence
        log.append(FrameRecord(f, "grounding", conf, 0.0, 0.0, b_g, None, b_g))
    return boxes, log


def _run_fixed_interval(sample, query, noise, config, policy):
    boxes, log = [], []
    state: Optional[tk.TrackerState] = None
    for f in range(sample.n_frames):
        if f % policy.interval == 0:
            gout = ground(sample, f, query, noise)
            b_g = gout.top1.box
            if state is None:
                state = tk.init(sample.frame(f), b_g, config)
            else:
                tk.update_template(state, sample.frame(f), b_g, 1.0, config)
                state.last_box = b_g
            boxes.append(b_g)
            log.append(FrameRecord(f, "grounding", gout.top1.confidence, 0.0, 0.0, b_g, None, b_g))
        else:
            gout = ground(sample, f, query, noise) if policy.output_fusion == "soft-fusion" else None
            weight = policy.fusion_weight if policy.fusion_weight is not None else 0.5
            tracked, output = _track_frame(sample, f, state, config, policy, gout, weight)
            log.append(FrameRecord(f, "tracking", 0.0, 0.0, 0.0,
                                   None if gout is None else gout.top1.box, tracked, output))
            boxes.append(output)
    return boxes, log


def _init_frame_index(sample: VideoSample, policy: IntegrationPolicy, run_seed: int) -> int:
    n = sample.n_frames
    if policy.schedule == "frame-first":
        return 0
    if policy.schedule == "frame-middle":
        return n // 2
    if policy.schedule == "frame-last":
        return n - 1
    rng = np.random.default_rng(np.random.SeedSequence((run_seed, sample.scene.seed, 271)))
    return int(rng.integers(n))


def _run_frame_init(sample, query, noise, config, policy, run_seed):
    """Ground once at the init frame; track outward in both directions."""
    k = _init_frame_index(sample, policy, run_seed)
    n = sample.n_frames
    gout = ground(sample, k, query, noise)
    b_g = gout.top1.box
    boxes: list[Optional[Box]] = [None] * n
    records: list[Optional[FrameRecord]] = [None] * n
    boxes[k] = b_g
    records[k] = FrameRecord(k, "grounding", gout.top1.confidence, 0.0, 0.0, b_g, None, b_g)

    for frames in (range(k + 1, n), range(k - 1, -1, -1)):
        state = tk.init(sample.frame(k), b_g, config)
        for f in frames:
            fr_gout = ground(sample, f, query, noise) if policy.output_fusion == "soft-fusion" else None
            weight = policy.fusion_weight if policy.fusion_weight is not None else 0.5
            tracked, output = _track_frame(sample, f, state, config, policy, fr_gout, weight)
            boxes[f] = output
            records[f] = FrameRecord(f, "tracking", 0.0, 0.0, 0.0,
                                     None if fr_gout is None else fr_gout.top1.box, tracked, output)
    return list(boxes), list(records)


def fixed_schedule_run(
    sample: VideoSample,
    query: str,
    noise: NoiseProfile,
    config: tk.TrackerConfig,
    schedule: str,
    interval: Optional[int] = None,
    run_seed: int = 0,
) -> list[Box]:
    """Score-free baselines: pure grounding, one-shot inits, periodic re-init."""
    policy = IntegrationPolicy(schedule=schedule, interval=interval)
    boxes, _ = run_video(sample, query, noise, config, policy, run_seed=run_seed)
    return boxes


def run_scripted(
    scores: list[float], policy: Optional[IntegrationPolicy] = None
) -> tuple[list[str], list[float]]:
    """Replay the adaptive switch rule on a bare score sequence.

    Returns (per-frame source, saved score after each frame). Useful for
    auditing the decay bookkeeping without any video in the loop.
    """
    policy = policy or IntegrationPolicy()
    sources: list[str] = []
    saved_log: list[float] = []
    saved = 0.0
    for i, s in enumerate(scores):
        if i == 0 or _switch_test(saved, s, policy):
            saved = s
            sources.append("grounding")
        else:
            saved = saved * policy.decay
            sources.append("tracking")
        saved_log.append(saved)
    return sources, saved_log
