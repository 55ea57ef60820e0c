"""Region/template quality scores.

Two quantities grade a grounded box: how well it overlaps the target right
now (r), and how well a tracker templated on this frame's ground truth would
carry through the rest of the video (t). Ground-truth values are derived by
actually running the tracker; a small two-head regressor then learns to
predict both from the grounding feature vector so they are available at
inference, with the region head hard-gated to 0 under low confidence.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import tracker as tk
from .geometry import Box, iou
from .grounder import FEATURE_DIM, GroundingFeatures, NoiseProfile, ground
from .synthworld import Dataset, VideoSample

HIDDEN = 16
CONFIDENCE_GATE = 0.5


class SingleFrameVideo(Exception):
    """Template quality is undefined when there are no other frames."""


class InsufficientSamples(Exception):
    """Fewer training samples than one batch."""


class EmptyAfterFilter(Exception):
    """The confidence filter removed every candidate training sample."""


@dataclass(frozen=True)
class RTScores:
    r: float
    t: float

    def __post_init__(self):
        for name in ("r", "t"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")

    @property
    def combined(self) -> float:
        return self.r * self.t


@dataclass(frozen=True)
class TrainingSample:
    features: GroundingFeatures
    confidence: float
    gt_r: float
    gt_t: float
    video_id: int
    frame_index: int

    def __post_init__(self):
        if not 0.0 <= self.gt_r <= 1.0 or not 0.0 <= self.gt_t <= 1.0:
            raise ValueError("gt_r and gt_t must be in [0, 1]")

    def to_dict(self) -> dict:
        return {
            "features": [float(x) for x in self.features.vector()],
            "confidence": self.confidence,
            "gt_r": self.gt_r,
            "gt_t": self.gt_t,
            "video_id": self.video_id,
            "frame_index": self.frame_index,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainingSample":
        return cls(
            features=GroundingFeatures.from_vector(d["features"]),
            confidence=d["confidence"],
            gt_r=d["gt_r"],
            gt_t=d["gt_t"],
            video_id=d["video_id"],
            frame_index=d["frame_index"],
        )


def derive_r(grounded: Box, gt: Box) -> float:
    return iou(grounded, gt)


def derive_t(
    sample: VideoSample,
    frame_index: int,
    config: tk.TrackerConfig = tk.TrackerConfig(),
) -> float:
    """Mean IoU of a tracker templated at this frame's GT over all others.

    Tracks forward to the end, then re-initializes and tracks backward to
    frame 0, so every non-template frame contributes exactly once.
    """
    n = sample.n_frames
    if n < 2:
        raise SingleFrameVideo(f"video {sample.video_id} has a single frame")
    gt = sample.gt_box(frame_index)
    vals: list[float] = []
    if frame_index < n - 1:
        st = tk.init(sample.frame(frame_index), gt, config)
        for f in range(frame_index + 1, n):
            box, _ = tk.track(sample.frame(f), st, config)
            vals.append(iou(box, sample.gt_box(f)))
    if frame_index > 0:
        st = tk.init(sample.frame(frame_index), gt, config)
        for f in range(frame_index - 1, -1, -1):
            box, _ = tk.track(sample.frame(f), st, config)
            vals.append(iou(box, sample.gt_box(f)))
    return float(np.mean(vals))


def smoothed_l1(prediction, target):
    """0.5 e^2 inside |e| < 1, |e| - 0.5 outside; works element-wise."""
    e = np.asarray(prediction, dtype=np.float64) - np.asarray(target, dtype=np.float64)
    a = np.abs(e)
    out = np.where(a < 1.0, 0.5 * e * e, a - 0.5)
    return float(out) if out.ndim == 0 else out


def rmsprop_step(params, grads, accumulator, lr, decay=0.9, epsilon=1e-8):
    """One RMSProp update; returns (new_params, new_accumulator)."""
    p = np.asarray(params, dtype=np.float64)
    g = np.asarray(grads, dtype=np.float64)
    acc = decay * np.asarray(accumulator, dtype=np.float64) + (1.0 - decay) * g * g
    return p - lr * g / (np.sqrt(acc) + epsilon), acc


Head = dict[str, np.ndarray]
_PARAM_KEYS = ("w1", "b1", "w2", "b2")


def _init_head(rng: np.random.Generator) -> Head:
    return {
        "w1": rng.normal(0.0, math.sqrt(2.0 / FEATURE_DIM), size=(HIDDEN, FEATURE_DIM)),
        "b1": np.zeros(HIDDEN),
        "w2": rng.normal(0.0, math.sqrt(2.0 / HIDDEN), size=(HIDDEN,)),
        "b2": np.zeros(1),
    }


def _head_forward(head: Head, x: np.ndarray) -> np.ndarray:
    """Raw (unclamped) head output for a batch (N, d) or single (d,) input."""
    single = x.ndim == 1
    xb = x[None, :] if single else x
    z1 = xb @ head["w1"].T + head["b1"]
    a1 = np.maximum(z1, 0.0)
    out = a1 @ head["w2"] + head["b2"][0]
    return out[0] if single else out


def _head_loss_and_grads(head: Head, x: np.ndarray, y: np.ndarray) -> tuple[float, Head]:
    z1 = x @ head["w1"].T + head["b1"]
    a1 = np.maximum(z1, 0.0)
    out = a1 @ head["w2"] + head["b2"][0]
    e = out - y
    loss = float(np.mean(smoothed_l1(out, y)))
    # d smoothed_l1 / de is e clipped to [-1, 1]
    d2 = np.clip(e, -1.0, 1.0) / len(y)
    da1 = np.outer(d2, head["w2"])
    dz1 = da1 * (z1 > 0.0)
    grads = {
        "w1": dz1.T @ x,
        "b1": dz1.sum(axis=0),
        "w2": a1.T @ d2,
        "b2": np.array([d2.sum()]),
    }
    return loss, grads


@dataclass
class ScoreModel:
    """Two independent 1-hidden-layer heads over the grounding features."""

    r_head: Head
    t_head: Head
    epochs: int = 0
    final_loss: float = float("nan")

    @classmethod
    def init(cls, seed: int = 0) -> "ScoreModel":
        rng = np.random.default_rng(np.random.SeedSequence((seed, 904886)))
        return cls(r_head=_init_head(rng), t_head=_init_head(rng))

    def raw_outputs(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return _head_forward(self.r_head, x), _head_forward(self.t_head, x)

    def to_dict(self) -> dict:
        def head_dict(h: Head) -> dict:
            return {k: np.asarray(h[k]).tolist() for k in _PARAM_KEYS}

        return {
            "feature_dim": FEATURE_DIM,
            "hidden": HIDDEN,
            "epochs": self.epochs,
            "final_loss": self.final_loss,
            "r_head": head_dict(self.r_head),
            "t_head": head_dict(self.t_head),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScoreModel":
        if d.get("feature_dim") != FEATURE_DIM or d.get("hidden") != HIDDEN:
            raise ValueError("model shape does not match this build")

        def head(h: dict) -> Head:
            return {k: np.asarray(h[k], dtype=np.float64) for k in _PARAM_KEYS}

        return cls(
            r_head=head(d["r_head"]),
            t_head=head(d["t_head"]),
            epochs=d.get("epochs", 0),
            final_loss=d.get("final_loss", float("nan")),
        )


def save_model(model: ScoreModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model.to_dict(), sort_keys=True, indent=1) + "\n")


def load_model(path: str | Path) -> ScoreModel:
    return ScoreModel.from_dict(json.loads(Path(path).read_text()))


def loss_and_gradients(
    model: ScoreModel, x: np.ndarray, y_r: np.ndarray, y_t: np.ndarray
) -> tuple[float, Head, Head]:
    """Equal-weight two-head objective and its analytic gradients."""
    loss_r, g_r = _head_loss_and_grads(model.r_head, x, y_r)
    loss_t, g_t = _head_loss_and_grads(model.t_head, x, y_t)
    half = lambda g: {k: 0.5 * v for k, v in g.items()}  # noqa: E731
    return 0.5 * (loss_r + loss_t), half(g_r), half(g_t)


def train(
    samples: Sequence[TrainingSample],
    epochs: int,
    batch: int = 32,
    lr: float = 1e-4,
    seed: int = 0,
) -> ScoreModel:
    """Minibatch RMSProp with the learning rate annealed linearly to zero."""
    if len(samples) < batch:
        raise InsufficientSamples(f"need at least {batch} samples, got {len(samples)}")
    x = np.stack([s.features.vector() for s in samples])
    y_r = np.array([s.gt_r for s in samples])
    y_t = np.array([s.gt_t for s in samples])

    model = ScoreModel.init(seed)
    acc = {
        "r": {k: np.zeros_like(v) for k, v in model.r_head.items()},
        "t": {k: np.zeros_like(v) for k, v in model.t_head.items()},
    }
    rng = np.random.default_rng(np.random.SeedSequence((seed, 517)))
    n = len(samples)
    steps_per_epoch = math.ceil(n / batch)
    total_steps = epochs * steps_per_epoch
    step = 0
    for _ in range(epochs):
        perm = rng.permutation(n)
        for start in range(0, n, batch):
            idx = perm[start : start + batch]
            step_lr = lr * (1.0 - step / total_steps)
            _, g_r, g_t = loss_and_gradients(model, x[idx], y_r[idx], y_t[idx])
            for name, head, grads in (("r", model.r_head, g_r), ("t", model.t_head, g_t)):
                for k in _PARAM_KEYS:
                    head[k], acc[name][k] = rmsprop_step(head[k], grads[k], acc[name][k], step_lr)
            step += 1
    model.epochs = epochs
    model.final_loss, _, _ = loss_and_gradients(model, x, y_r, y_t)
    return model


def predict(model: ScoreModel, features, confidence: float) -> RTScores:
    """Clamped head outputs; region score forced to 0 under the gate."""
    x = features.vector() if isinstance(features, GroundingFeatures) else np.asarray(features, dtype=np.float64)
    raw_r, raw_t = model.raw_outputs(x)
    t = float(np.clip(raw_t, 0.0, 1.0))
    if confidence < CONFIDENCE_GATE:
        return RTScores(r=0.0, t=t)
    return RTScores(r=float(np.clip(raw_r, 0.0, 1.0)), t=t)


def collect_training_set(
    dataset: Dataset,
    noise: NoiseProfile,
    config: tk.TrackerConfig = tk.TrackerConfig(),
    t_lookup: Optional[Callable[[VideoSample, int], float]] = None,
    progress: Optional[Callable[[int, int], None]] = None,
) -> list[TrainingSample]:
    """Build (features, gt_r, gt_t) triplets from the training split.

    Groundings below the confidence gate are discarded before any score is
    derived. The expensive gt_t is computed once per (video, frame) and
    shared across that frame's queries; pass t_lookup to reuse a cache.
    """
    videos = dataset.split_videos("train")
    if not videos:
        raise ValueError("dataset has no training split")
    samples: list[TrainingSample] = []
    for i, video in enumerate(videos):
        if video.n_frames < 2:  # no template score exists; skip the video
            continue
        queries = video.unambiguous_queries()
        t_by_frame: dict[int, float] = {}
        for f in range(video.n_frames):
            for gq in queries:
                out = ground(video, f, gq.text, noise)
                if out.top1.confidence < CONFIDENCE_GATE:
                    continue
                if f not in t_by_frame:
                    t_by_frame[f] = t_lookup(video, f) if t_lookup else derive_t(video, f, config)
                samples.append(
                    TrainingSample(
                        features=out.features,
                        confidence=out.top1.confidence,
                        gt_r=derive_r(out.top1.box, video.gt_box(f)),
                        gt_t=t_by_frame[f],
                        video_id=video.video_id,
                        frame_index=f,
                    )
                )
        video.drop_frame_cache()
        if progress is not None:
            progress(i + 1, len(videos))
    if not samples:
        raise EmptyAfterFilter("no grounding cleared the confidence gate; noise profile too harsh")
    return samples
