"""Deterministic synthetic video world.

Scenes are symbolic descriptions of moving colored shapes plus degradation
events; everything downstream (ground truth, query text, pixels) is a pure
function of (scene, seed). Rasters are re-derived on demand, never stored.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.ndimage import uniform_filter

from .geometry import Box, FrameBounds
from . import queries as q
from .queries import Color, ConstraintSet, MatchContext, ObjectView, Query, Shape

BACKGROUND_GRAY = 128.0
OCCLUDER_RGB = (40.0, 40.0, 40.0)

DATASET_FORMAT = "gti-dataset-v1"


class TrajectoryKind(str, Enum):
    LINEAR = "linear"
    SINUSOIDAL = "sinusoidal"
    RANDOM_WALK = "random-walk"


class EventKind(str, Enum):
    BLUR = "blur"
    ILLUMINATION = "illumination-shift"
    OCCLUSION_BAND = "full-occlusion-band"


@dataclass(frozen=True)
class Trajectory:
    kind: TrajectoryKind
    start: tuple[float, float]
    velocity: tuple[float, float] = (0.0, 0.0)
    amplitude: float = 0.0
    period: float = 48.0
    step_scale: float = 0.0


@dataclass(frozen=True)
class ObjectSpec:
    id: int
    shape: Shape
    color: Color
    size: float
    trajectory: Trajectory
    z_order: int = 0
    size_rate: float = 1.0  # per-frame multiplicative size growth

    def __post_init__(self):
        if not (8.0 <= self.size <= 64.0):
            raise ValueError(f"object size must be in [8, 64], got {self.size}")
        if not (0.5 <= self.size_rate <= 2.0):
            raise ValueError(f"size_rate must be in [0.5, 2], got {self.size_rate}")

    def size_at(self, frame: int) -> float:
        """Size at a frame; depends only on the frame index so truncating a
        video never changes earlier frames."""
        if self.size_rate == 1.0:
            return self.size
        return min(max(self.size * self.size_rate ** frame, 4.0), 96.0)


@dataclass(frozen=True)
class DegradationEvent:
    kind: EventKind
    start: int
    end: int  # exclusive
    magnitude: float

    def __post_init__(self):
        if not (0 <= self.start < self.end):
            raise ValueError(f"bad event interval [{self.start}, {self.end})")
        if not (0.0 <= self.magnitude <= 1.0):
            raise ValueError(f"event magnitude must be in [0, 1], got {self.magnitude}")

    def active(self, frame: int) -> bool:
        return self.start <= frame < self.end


@dataclass(frozen=True)
class SceneSpec:
    bounds: FrameBounds
    n_frames: int
    objects: tuple[ObjectSpec, ...]
    target_id: int
    events: tuple[DegradationEvent, ...] = ()
    seed: int = 0

    def __post_init__(self):
        if self.n_frames < 1:
            raise ValueError("scene needs at least one frame")
        ids = [o.id for o in self.objects]
        if len(set(ids)) != len(ids):
            raise ValueError("object ids must be unique")
        if self.objects and self.target_id not in ids:
            raise ValueError(f"target_id {self.target_id} not among objects")
        for ev in self.events:
            if ev.end > self.n_frames:
                raise ValueError("event interval exceeds n_frames")

    @property
    def target(self) -> Optional[ObjectSpec]:
        return next((o for o in self.objects if o.id == self.target_id), None)


@dataclass(frozen=True)
class ObjectState:
    """One object's realized geometry in one frame."""

    id: int
    box: Box
    color: Color
    shape: Shape
    size: float
    z_order: int

    def view(self) -> ObjectView:
        return ObjectView(color=self.color, shape=self.shape, size=self.size, box=self.box)


def _fold(p: float, lo: float, hi: float) -> float:
    """Reflect a coordinate into [lo, hi] (triangle-wave border reflection)."""
    if hi <= lo:
        return lo
    span = hi - lo
    r = (p - lo) % (2.0 * span)
    return lo + (r if r <= span else 2.0 * span - r)


def _object_centers(obj: ObjectSpec, scene: SceneSpec) -> np.ndarray:
    n = scene.n_frames
    if obj.size_rate == 1.0:
        halves = np.full(n, obj.size / 2.0)
        margin = 0.0
    else:
        # per-frame folding keeps ramped objects inside the frame; the margin
        # absorbs float rounding so downstream crops never poke past the edge
        halves = np.array([obj.size_at(f) / 2.0 for f in range(n)])
        margin = 1e-6
    lo_x, hi_x = halves + margin, scene.bounds.width - halves - margin
    lo_y, hi_y = halves + margin, scene.bounds.height - halves - margin
    traj = obj.trajectory
    t = np.arange(n, dtype=np.float64)
    if traj.kind is TrajectoryKind.RANDOM_WALK:
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((scene.seed, obj.id, 7))))
        steps = rng.normal(0.0, traj.step_scale, size=(n - 1, 2)) if n > 1 else np.zeros((0, 2))
        cx = np.empty(n)
        cy = np.empty(n)
        cx[0] = _fold(traj.start[0], lo_x[0], hi_x[0])
        cy[0] = _fold(traj.start[1], lo_y[0], hi_y[0])
        for i in range(1, n):
            cx[i] = _fold(cx[i - 1] + traj.velocity[0] + steps[i - 1, 0], lo_x[i], hi_x[i])
            cy[i] = _fold(cy[i - 1] + traj.velocity[1] + steps[i - 1, 1], lo_y[i], hi_y[i])
        return np.stack([cx, cy], axis=1)
    raw_x = traj.start[0] + traj.velocity[0] * t
    raw_y = traj.start[1] + traj.velocity[1] * t
    if traj.kind is TrajectoryKind.SINUSOIDAL:
        vx, vy = traj.velocity
        norm = math.hypot(vx, vy)
        px, py = (-vy / norm, vx / norm) if norm > 0 else (0.0, 1.0)
        wave = traj.amplitude * np.sin(2.0 * math.pi * t / traj.period)
        raw_x = raw_x + px * wave
        raw_y = raw_y + py * wave
    cx = np.array([_fold(v, lo, hi) for v, lo, hi in zip(raw_x, lo_x, hi_x)])
    cy = np.array([_fold(v, lo, hi) for v, lo, hi in zip(raw_y, lo_y, hi_y)])
    return np.stack([cx, cy], axis=1)


def simulate(scene: SceneSpec) -> list[list[ObjectState]]:
    """Per-frame object states; deterministic in (scene, scene.seed)."""
    per_object = {o.id: _object_centers(o, scene) for o in scene.objects}
    frames: list[list[ObjectState]] = []
    for f in range(scene.n_frames):
        states = []
        for o in scene.objects:
            cx, cy = per_object[o.id][f]
            s = o.size_at(f)
            box = Box.from_center(cx, cy, s, s)
            states.append(ObjectState(o.id, box, o.color, o.shape, s, o.z_order))
        frames.append(states)
    return frames


def _paint_shape(canvas: np.ndarray, state: ObjectState) -> None:
    h, w = canvas.shape[:2]
    b = state.box
    x1 = max(int(math.floor(b.x)), 0)
    y1 = max(int(math.floor(b.y)), 0)
    x2 = min(int(math.ceil(b.x2)), w)
    y2 = min(int(math.ceil(b.y2)), h)
    if x2 <= x1 or y2 <= y1:
        return
    ys, xs = np.mgrid[y1:y2, x1:x2]
    pxc = xs + 0.5  # pixel centers
    pyc = ys + 0.5
    if state.shape is Shape.RECTANGLE:
        mask = (pxc >= b.x) & (pxc < b.x2) & (pyc >= b.y) & (pyc < b.y2)
    elif state.shape is Shape.ELLIPSE:
        cx, cy = b.center
        rx, ry = b.w / 2.0, b.h / 2.0
        mask = ((pxc - cx) / rx) ** 2 + ((pyc - cy) / ry) ** 2 <= 1.0
    else:  # triangle: apex top center, base along the bottom edge
        cx = b.x + b.w / 2.0
        # Interpolate allowed half-width linearly from apex (0) to base (w/2).
        frac = np.clip((pyc - b.y) / b.h, 0.0, 1.0)
        mask = (pyc >= b.y) & (pyc < b.y2) & (np.abs(pxc - cx) <= frac * (b.w / 2.0))
    rgb = q.COLOR_RGB[state.color]
    region = canvas[y1:y2, x1:x2]
    region[mask] = rgb


def active_events(scene: SceneSpec, frame_index: int) -> list[DegradationEvent]:
    return [ev for ev in scene.events if ev.active(frame_index)]


def max_active_magnitude(scene: SceneSpec, frame_index: int, kind: Optional[EventKind] = None) -> float:
    mags = [ev.magnitude for ev in active_events(scene, frame_index) if kind is None or ev.kind is kind]
    return max(mags, default=0.0)


def rasterize(scene: SceneSpec, frame_index: int, states: Optional[Sequence[ObjectState]] = None) -> np.ndarray:
    """Render one frame as float64 RGB (H, W, 3) in [0, 255].

    Paint order: objects by z (low first), occlusion band, illumination
    scaling, then blur, so an illumination-only frame is an exact scalar
    multiple of its event-free counterpart.
    """
    if not (0 <= frame_index < scene.n_frames):
        raise IndexError(f"frame {frame_index} out of range [0, {scene.n_frames})")
    if states is None:
        states = simulate(scene)[frame_index]
    h, w = scene.bounds.height, scene.bounds.width
    canvas = np.full((h, w, 3), BACKGROUND_GRAY, dtype=np.float64)
    for st in sorted(states, key=lambda s: (s.z_order, s.id)):
        _paint_shape(canvas, st)

    target_state = next((s for s in states if s.id == scene.target_id), None)
    for ev in active_events(scene, frame_index):
        if ev.kind is EventKind.OCCLUSION_BAND:
            if target_state is None:
                continue
            _, cy = target_state.box.center
            half = target_state.box.h * (1.0 + ev.magnitude) / 2.0
            y1 = max(int(math.floor(cy - half)), 0)
            y2 = min(int(math.ceil(cy + half)), h)
            canvas[y1:y2, :, :] = OCCLUDER_RGB
    illum = max_active_magnitude(scene, frame_index, EventKind.ILLUMINATION)
    if illum > 0.0:
        canvas *= 1.0 - 0.7 * illum
    blur = max_active_magnitude(scene, frame_index, EventKind.BLUR)
    if blur > 0.0:
        radius = math.ceil(3.0 * blur)
        canvas = uniform_filter(canvas, size=(2 * radius + 1, 2 * radius + 1, 1), mode="nearest")
    return canvas


@dataclass(frozen=True)
class GeneratedQuery:
    text: str
    ambiguous: bool


class VideoSample:
    """A scene plus lazily derived ground truth, queries, and rasters.

    Frames served through frame() are quantized to uint8 and cached per
    video; rasterize()/frame_f64() stay exact for pixel-level probes.
    """

    def __init__(self, scene: SceneSpec, queries_: Sequence[GeneratedQuery], video_id: int = 0):
        if not queries_:
            raise ValueError("video sample needs at least one query")
        self.scene = scene
        self.queries = list(queries_)
        self.video_id = video_id
        self._states: Optional[list[list[ObjectState]]] = None
        self._frames: list[Optional[np.ndarray]] = [None] * scene.n_frames

    @property
    def n_frames(self) -> int:
        return self.scene.n_frames

    @property
    def bounds(self) -> FrameBounds:
        return self.scene.bounds

    def states(self, frame_index: Optional[int] = None):
        if self._states is None:
            self._states = simulate(self.scene)
        return self._states if frame_index is None else self._states[frame_index]

    def gt_box(self, frame_index: int) -> Box:
        for st in self.states(frame_index):
            if st.id == self.scene.target_id:
                return st.box
        raise KeyError("target not found")  # unreachable given SceneSpec invariant

    def gt_tubelet(self) -> list[Box]:
        return [self.gt_box(f) for f in range(self.n_frames)]

    def frame_f64(self, frame_index: int) -> np.ndarray:
        return rasterize(self.scene, frame_index, self.states(frame_index))

    def frame(self, frame_index: int) -> np.ndarray:
        """uint8 view of the frame, cached for repeated tracker access."""
        cached = self._frames[frame_index]
        if cached is None:
            cached = np.clip(np.rint(self.frame_f64(frame_index)), 0, 255).astype(np.uint8)
            self._frames[frame_index] = cached
        return cached

    def drop_frame_cache(self) -> None:
        self._frames = [None] * self.scene.n_frames

    def unambiguous_queries(self) -> list[GeneratedQuery]:
        return [g for g in self.queries if not g.ambiguous]


def truncate_video(sample: VideoSample, n_frames: int) -> VideoSample:
    """A copy of the video that simply stops after n_frames.

    Trajectories and noise are seeded identically, so every surviving frame
    is byte-identical to the original; events are clipped to the new end.
    """
    scene = sample.scene
    if not 1 <= n_frames <= scene.n_frames:
        raise ValueError(f"n_frames must be in [1, {scene.n_frames}]")
    events = tuple(
        replace(ev, end=min(ev.end, n_frames)) for ev in scene.events if ev.start < n_frames
    )
    return VideoSample(replace(scene, n_frames=n_frames, events=events),
                       sample.queries, sample.video_id)


def count_satisfiers(c: ConstraintSet, scene: SceneSpec, frame_index: int = 0) -> int:
    """Brute-force count of scene objects satisfying all constraints."""
    views = [s.view() for s in simulate(scene)[frame_index]]
    ctx = MatchContext(bounds=scene.bounds, objects=views)
    return sum(1 for v in views if q.satisfies(c, v, ctx)[0])


def _disambiguation_candidates(scene: SceneSpec, minimal: ConstraintSet) -> Iterable[ConstraintSet]:
    all_states = simulate(scene)
    states0 = all_states[0]
    views = [s.view() for s in states0]
    ctx = MatchContext(bounds=scene.bounds, objects=views)
    idx = next(i for i, s in enumerate(states0) if s.id == scene.target_id)
    target = views[idx]

    # Size qualifier only when the target is clearly off-median at both ends
    # of the video, so neither grounding-time perception noise nor size ramps
    # can flip it mid-sequence.
    views_end = [s.view() for s in all_states[-1]]
    ctx_end = MatchContext(bounds=scene.bounds, objects=views_end)
    target_end = views_end[idx]
    med = ctx.median_size()
    med_end = ctx_end.median_size()
    if med > 0 and target.size <= 0.8 * med and target_end.size <= 0.8 * med_end:
        yield ConstraintSet(shape=minimal.shape, color=minimal.color, size_qualifier=q.SizeQualifier.SMALL)
    elif med > 0 and target.size >= 1.2 * med and target_end.size >= 1.2 * med_end:
        yield ConstraintSet(shape=minimal.shape, color=minimal.color, size_qualifier=q.SizeQualifier.LARGE)

    for sq in q.SpatialQualifier:
        if q._spatial_holds(sq, target, scene.bounds):
            yield ConstraintSet(shape=minimal.shape, color=minimal.color, spatial_qualifier=sq)

    for pred in q.RelationPredicate:
        for ref_view in views:
            # Skip self and twins of the target; "the red rectangle left of
            # the red rectangle" would be self-referential.
            if ref_view is target or (ref_view.shape is target.shape and ref_view.color is target.color):
                continue
            ref = ConstraintSet(shape=ref_view.shape, color=ref_view.color)
            cand = ConstraintSet(shape=minimal.shape, color=minimal.color, relation=(pred, ref))
            if q.satisfies(cand, target, ctx)[0]:
                yield cand


def make_queries(scene: SceneSpec) -> list[GeneratedQuery]:
    """Minimal query for the target, plus a disambiguated one when needed.

    The ambiguity flag is true iff >= 2 objects satisfy the query's
    constraints at frame 0.
    """
    target = scene.target
    if target is None:
        return []
    minimal = ConstraintSet(shape=target.shape, color=target.color)
    out = [GeneratedQuery(q.render(minimal).text, count_satisfiers(minimal, scene) >= 2)]
    if out[0].ambiguous:
        for cand in _disambiguation_candidates(scene, minimal):
            if count_satisfiers(cand, scene) == 1:
                out.append(GeneratedQuery(q.render(cand).text, False))
                break
    return out


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def scene_to_dict(scene: SceneSpec) -> dict:
    return {
        "bounds": [scene.bounds.width, scene.bounds.height],
        "n_frames": scene.n_frames,
        "seed": scene.seed,
        "target_id": scene.target_id,
        "objects": [
            {
                "id": o.id,
                "shape": o.shape.value,
                "color": o.color.value,
                "size": o.size,
                # emitted only when ramping so pre-ramp datasets keep their digests
                **({"size_rate": o.size_rate} if o.size_rate != 1.0 else {}),
                "z_order": o.z_order,
                "trajectory": {
                    "kind": o.trajectory.kind.value,
                    "start": list(o.trajectory.start),
                    "velocity": list(o.trajectory.velocity),
                    "amplitude": o.trajectory.amplitude,
                    "period": o.trajectory.period,
                    "step_scale": o.trajectory.step_scale,
                },
            }
            for o in scene.objects
        ],
        "events": [
            {"kind": ev.kind.value, "start": ev.start, "end": ev.end, "magnitude": ev.magnitude}
            for ev in scene.events
        ],
    }


def scene_from_dict(d: dict) -> SceneSpec:
    objects = tuple(
        ObjectSpec(
            id=o["id"],
            shape=Shape(o["shape"]),
            color=Color(o["color"]),
            size=o["size"],
            size_rate=o.get("size_rate", 1.0),
            z_order=o["z_order"],
            trajectory=Trajectory(
                kind=TrajectoryKind(o["trajectory"]["kind"]),
                start=tuple(o["trajectory"]["start"]),
                velocity=tuple(o["trajectory"]["velocity"]),
                amplitude=o["trajectory"]["amplitude"],
                period=o["trajectory"]["period"],
                step_scale=o["trajectory"]["step_scale"],
            ),
        )
        for o in d["objects"]
    )
    events = tuple(
        DegradationEvent(EventKind(e["kind"]), e["start"], e["end"], e["magnitude"]) for e in d["events"]
    )
    return SceneSpec(
        bounds=FrameBounds(d["bounds"][0], d["bounds"][1]),
        n_frames=d["n_frames"],
        objects=objects,
        target_id=d["target_id"],
        events=events,
        seed=d["seed"],
    )


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def digest_of(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()


# ---------------------------------------------------------------------------
# Dataset generation
# ---------------------------------------------------------------------------

@dataclass
class GenConfig:
    """Knobs for dataset generation; a pure function of (config, seed)."""

    n_train: int = 40
    n_test: int = 50
    frame_width: int = 256
    frame_height: int = 256
    n_frames_train: int = 100
    n_frames_test: int = 200
    min_objects: int = 2
    max_objects: int = 5
    twin_rate: float = 0.55  # chance of an identical color+shape distractor
    event_rate: float = 1.2  # expected degradation events per video
    min_size: float = 14.0
    max_size: float = 40.0
    small_target_rate: float = 0.25
    max_speed: float = 1.5
    size_ratio_max: float = 1.0  # 1.0 disables size ramps

    def to_dict(self) -> dict:
        return dict(vars(self))

    @staticmethod
    def from_dict(d: dict) -> "GenConfig":
        cfg = GenConfig()
        for k, v in d.items():
            if not hasattr(cfg, k):
                raise ValueError(f"unknown gen config key {k!r}")
            setattr(cfg, k, v)
        return cfg


def _video_seed(seed: int, index: int, attempt: int) -> int:
    raw = hashlib.sha256(f"{seed}:{index}:{attempt}".encode()).digest()
    return int.from_bytes(raw[:8], "big") % (2**63)


def _split_assignment(seed: int, n_train: int, n_total: int) -> list[str]:
    ranks = sorted(
        range(n_total),
        key=lambda i: hashlib.sha256(f"split:{seed}:{i}".encode()).hexdigest(),
    )
    split = ["test"] * n_total
    for i in ranks[:n_train]:
        split[i] = "train"
    return split


def _random_trajectory(rng: np.random.Generator, cfg: GenConfig, size: float) -> Trajectory:
    half = size / 2.0
    start = (
        float(rng.uniform(half, cfg.frame_width - half)),
        float(rng.uniform(half, cfg.frame_height - half)),
    )
    speed = float(rng.uniform(0.3, cfg.max_speed))
    angle = float(rng.uniform(0.0, 2.0 * math.pi))
    vel = (speed * math.cos(angle), speed * math.sin(angle))
    kind = TrajectoryKind(rng.choice([k.value for k in TrajectoryKind], p=[0.4, 0.35, 0.25]))
    if kind is TrajectoryKind.SINUSOIDAL:
        return Trajectory(kind, start, vel, amplitude=float(rng.uniform(8.0, 24.0)),
                          period=float(rng.uniform(36.0, 72.0)))
    if kind is TrajectoryKind.RANDOM_WALK:
        return Trajectory(kind, start, vel, step_scale=float(rng.uniform(0.3, 0.9)))
    return Trajectory(kind, start, vel)


def _random_size_rate(rng: np.random.Generator, cfg: GenConfig, size: float,
                      n_frames: int) -> float:
    """Per-frame growth rate whose end-of-video ratio is log-uniform in
    [1/size_ratio_max, size_ratio_max], clamped so sizes stay renderable.

    No rng draw when the knob is off, so pre-ramp configs reproduce
    byte-identical datasets.
    """
    if cfg.size_ratio_max <= 1.0 or n_frames <= 1:
        return 1.0
    hi = min(cfg.size_ratio_max, 96.0 / size)
    lo = max(1.0 / cfg.size_ratio_max, 5.0 / size)
    ratio = math.exp(rng.uniform(math.log(lo), math.log(hi)))
    return float(ratio ** (1.0 / (n_frames - 1)))


def _random_scene(rng: np.random.Generator, cfg: GenConfig, n_frames: int, scene_seed: int) -> SceneSpec:
    bounds = FrameBounds(cfg.frame_width, cfg.frame_height)
    n_obj = int(rng.integers(cfg.min_objects, cfg.max_objects + 1))
    colors = [c for c in Color]
    shapes = [s for s in Shape]
    target_color = colors[int(rng.integers(len(colors)))]
    target_shape = shapes[int(rng.integers(len(shapes)))]
    if rng.uniform() < cfg.small_target_rate:
        target_size = float(rng.uniform(cfg.min_size, cfg.min_size + 6.0))
    else:
        target_size = float(rng.uniform(cfg.min_size, cfg.max_size))
    objects = [
        ObjectSpec(
            id=0,
            shape=target_shape,
            color=target_color,
            size=target_size,
            trajectory=_random_trajectory(rng, cfg, target_size),
            z_order=int(rng.integers(0, 4)),
            size_rate=_random_size_rate(rng, cfg, target_size, n_frames),
        )
    ]
    make_twin = rng.uniform() < cfg.twin_rate and n_obj >= 2
    for i in range(1, n_obj):
        if make_twin and i == 1:
            color, shape = target_color, target_shape
            size = target_size if rng.uniform() < 0.6 else float(rng.uniform(cfg.min_size, cfg.max_size))
        else:
            color = colors[int(rng.integers(len(colors)))]
            shape = shapes[int(rng.integers(len(shapes)))]
            size = float(rng.uniform(cfg.min_size, cfg.max_size))
        objects.append(
            ObjectSpec(
                id=i,
                shape=shape,
                color=color,
                size=size,
                trajectory=_random_trajectory(rng, cfg, size),
                z_order=int(rng.integers(0, 4)),
                size_rate=_random_size_rate(rng, cfg, size, n_frames),
            )
        )
    events = []
    # event_rate is per 100 frames so long and short videos are degraded
    # for a comparable fraction of their duration
    n_events = int(rng.poisson(cfg.event_rate * n_frames / 100.0))
    for _ in range(n_events):
        kind = EventKind(rng.choice([k.value for k in EventKind], p=[0.3, 0.3, 0.4]))
        if kind is EventKind.OCCLUSION_BAND:
            duration = int(rng.integers(5, 11))
            magnitude = float(rng.uniform(0.5, 0.9))
        else:
            duration = int(rng.integers(10, 31))
            magnitude = float(rng.uniform(0.4, 1.0))
        duration = min(duration, n_frames)
        start = int(rng.integers(0, max(1, n_frames - duration)))
        events.append(DegradationEvent(kind, start, start + duration, magnitude))
    return SceneSpec(
        bounds=bounds,
        n_frames=n_frames,
        objects=tuple(objects),
        target_id=0,
        events=tuple(events),
        seed=scene_seed,
    )


def build_video(cfg: GenConfig, seed: int, index: int, split: str) -> VideoSample:
    """Generate one video; retries scene draws until an unambiguous query exists."""
    n_frames = cfg.n_frames_train if split == "train" else cfg.n_frames_test
    for attempt in range(64):
        scene_seed = _video_seed(seed, index, attempt)
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(scene_seed)))
        scene = _random_scene(rng, cfg, n_frames, scene_seed)
        gqs = make_queries(scene)
        if any(not g.ambiguous for g in gqs):
            return VideoSample(scene, gqs, video_id=index)
    raise RuntimeError(f"could not generate an unambiguous query for video {index}")


def generate_dataset(cfg: GenConfig, seed: int, path: str | Path) -> dict:
    """Write the JSONL dataset; returns a summary dict with the digest."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    config_digest = digest_of({"gen_config": cfg.to_dict(), "seed": seed})
    n_total = cfg.n_train + cfg.n_test
    splits = _split_assignment(seed, cfg.n_train, n_total)
    with open(path, "w") as fh:
        fh.write(canonical_json({"format": DATASET_FORMAT, "config_digest": config_digest}) + "\n")
        for i in range(n_total):
            video = build_video(cfg, seed, i, splits[i])
            record = {
                "video_id": i,
                "split": splits[i],
                "scene": scene_to_dict(video.scene),
                "queries": [{"text": g.text, "ambiguous": g.ambiguous} for g in video.queries],
            }
            fh.write(canonical_json(record) + "\n")
    return {"path": str(path), "n_videos": n_total, "config_digest": config_digest}


@dataclass
class Dataset:
    header: dict
    videos: list[VideoSample]
    splits: list[str]

    @property
    def config_digest(self) -> str:
        return self.header["config_digest"]

    def split_videos(self, split: str) -> list[VideoSample]:
        return [v for v, s in zip(self.videos, self.splits) if s == split]


def load_dataset(path: str | Path) -> Dataset:
    videos: list[VideoSample] = []
    splits: list[str] = []
    with open(path) as fh:
        header = json.loads(fh.readline())
        if header.get("format") != DATASET_FORMAT:
            raise ValueError(f"unexpected dataset format {header.get('format')!r}")
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            scene = scene_from_dict(rec["scene"])
            gqs = [GeneratedQuery(x["text"], x["ambiguous"]) for x in rec["queries"]]
            videos.append(VideoSample(scene, gqs, video_id=rec["video_id"]))
            splits.append(rec["split"])
    return Dataset(header=header, videos=videos, splits=splits)


def write_ppm(path: str | Path, frame_u8: np.ndarray) -> None:
    """Binary PPM (P6) dump of one uint8 RGB frame."""
    h, w = frame_u8.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode())
        fh.write(frame_u8.astype(np.uint8).tobytes())
