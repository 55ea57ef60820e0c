"""Template-matching tracker: ZNCC search over a strided window with scales.

The tracker is the only raster consumer in the pipeline. track() runs a
vectorized path that gathers every candidate patch from one bilinearly
interpolated supergrid per scale; track_reference() recomputes each
candidate independently and exists to cross-check the fast path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .geometry import Box, FrameBounds, clamp_to_frame


@dataclass(frozen=True)
class TrackerConfig:
    patch_size: int = 32
    search_radius: int = 32
    stride: int = 2
    scales: tuple[float, ...] = (0.95, 1.0, 1.05)

    def __post_init__(self):
        if self.patch_size < 2 or self.search_radius < 1 or self.stride < 1:
            raise ValueError("bad tracker config")
        if not self.scales or any(s <= 0 for s in self.scales):
            raise ValueError("scales must be positive")

    def offsets(self) -> np.ndarray:
        """Symmetric center-offset grid, always containing 0."""
        pos = np.arange(0, self.search_radius + 1, self.stride, dtype=np.float64)
        return np.concatenate([-pos[:0:-1], pos])

    def to_dict(self) -> dict:
        return {
            "patch_size": self.patch_size,
            "search_radius": self.search_radius,
            "stride": self.stride,
            "scales": list(self.scales),
        }

    @staticmethod
    def from_dict(d: dict) -> "TrackerConfig":
        return TrackerConfig(
            patch_size=d.get("patch_size", 32),
            search_radius=d.get("search_radius", 32),
            stride=d.get("stride", 2),
            scales=tuple(d.get("scales", (0.95, 1.0, 1.05))),
        )


@dataclass
class Template:
    patch: np.ndarray  # (R, R, 3) float64
    source_box: Box


@dataclass
class TrackerState:
    template: Template
    last_box: Box


@dataclass
class ResponseMap:
    """All scored candidates of one track() call."""

    centers: np.ndarray  # (n, 2) candidate centers (cx, cy)
    sizes: np.ndarray    # (n, 2) candidate sizes (w, h)
    scores: np.ndarray   # (n,) ZNCC in [-1, 1]
    best_index: int

    def __post_init__(self):
        if len(self.scores) == 0:
            raise ValueError("response map must be non-empty")
        if not np.all(np.isfinite(self.scores)):
            raise ValueError("response scores must be finite")

    def box(self, i: int) -> Box:
        return Box.from_center(self.centers[i, 0], self.centers[i, 1], self.sizes[i, 0], self.sizes[i, 1])

    @property
    def best_box(self) -> Box:
        return self.box(self.best_index)

    @property
    def best_score(self) -> float:
        return float(self.scores[self.best_index])


def _axis_samples(center: float, size: float, n: int) -> np.ndarray:
    """Index-space sample positions resampling a span of `size` to n pixels."""
    return center - size / 2.0 + (np.arange(n) + 0.5) * (size / n) - 0.5


def _gather_1d(arr: np.ndarray, pos: np.ndarray, axis_len: int, axis: int) -> np.ndarray:
    """Bilinear gather along one axis with border replication.

    Uses the fused lerp a + (b-a)*f so constant regions interpolate exactly
    flat; the zero-variance similarity guard depends on that.
    """
    p = np.clip(pos, 0.0, axis_len - 1.0)
    i0 = np.minimum(p.astype(np.int64), max(axis_len - 2, 0))
    f = p - i0
    a = np.take(arr, i0, axis=axis).astype(np.float64)
    b = np.take(arr, np.minimum(i0 + 1, axis_len - 1), axis=axis).astype(np.float64)
    shape = [1] * arr.ndim
    shape[axis] = len(pos)
    f = f.reshape(shape)
    return a + (b - a) * f


def crop_patch(frame: np.ndarray, box: Box, n: int) -> np.ndarray:
    """Bilinear resample of the box crop to (n, n, 3) float64."""
    h, w = frame.shape[:2]
    cx, cy = box.center
    xs = _axis_samples(cx, box.w, n)
    ys = _axis_samples(cy, box.h, n)
    cols = _gather_1d(frame, xs, w, axis=1)
    return _gather_1d(cols, ys, h, axis=0)


def zncc(a: np.ndarray, b: np.ndarray) -> float:
    """Zero-normalized cross-correlation; 0 when either patch is flat."""
    av = np.asarray(a, dtype=np.float64).ravel()
    bv = np.asarray(b, dtype=np.float64).ravel()
    am = av - av.mean()
    bm = bv - bv.mean()
    na = math.sqrt(float(am @ am))
    nb = math.sqrt(float(bm @ bm))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.clip((am @ bm) / (na * nb), -1.0, 1.0))


def _check_crop(frame: np.ndarray, box: Box, inside: bool) -> None:
    h, w = frame.shape[:2]
    if box.area < 1.0:
        raise ValueError(f"degenerate crop {box}: area < 1 px")
    if inside and not (box.x >= 0 and box.y >= 0 and box.x2 <= w and box.y2 <= h):
        raise ValueError(f"box {box} not inside {w}x{h} frame")


def make_template(frame: np.ndarray, box: Box, config: TrackerConfig) -> Template:
    return Template(patch=crop_patch(frame, box, config.patch_size), source_box=box)


def init(frame: np.ndarray, box: Box, config: TrackerConfig) -> TrackerState:
    """Start tracking from a known box; the crop becomes the template."""
    _check_crop(frame, box, inside=True)
    return TrackerState(template=make_template(frame, box, config), last_box=box)


def update_template(state: TrackerState, frame: np.ndarray, box: Box, rate: float,
                    config: TrackerConfig) -> TrackerState:
    """Blend a new crop into the template; rate 1 is full replacement."""
    if not (0.0 <= rate <= 1.0):
        raise ValueError(f"update rate must be in [0, 1], got {rate}")
    _check_crop(frame, box, inside=False)
    new_patch = crop_patch(frame, box, config.patch_size)
    state.template = Template(
        patch=(1.0 - rate) * state.template.patch + rate * new_patch,
        source_box=box,
    )
    return state


def _select_best(scores: np.ndarray, disp2: np.ndarray, scale_pref: np.ndarray) -> int:
    """Argmax with ties broken by smallest displacement, then scale 1.0, then index."""
    best = scores.max()
    idx = np.flatnonzero(scores == best)
    if len(idx) == 1:
        return int(idx[0])
    order = np.lexsort((idx, scale_pref[idx], disp2[idx]))
    return int(idx[order[0]])


def _scale_scores(frame: np.ndarray, px: np.ndarray, py: np.ndarray, R: int, n_off: int,
                  tm_ones: np.ndarray, tnorm: float, tm_sum: float) -> np.ndarray:
    """ZNCC of every candidate patch of one scale against the template.

    px/py hold all sample positions (patch pixel k major, grid offset j
    minor). Offsets are a uniform integer grid, so one bilinearly
    interpolated supergrid over the search block contains every candidate
    patch as a strided sub-array; scoring is then a single matmul.
    Arithmetic is float32; the fused lerp keeps flat regions exactly flat.
    """
    h, w = frame.shape[:2]
    pgx = np.clip(px, 0.0, w - 1.0)
    pgy = np.clip(py, 0.0, h - 1.0)
    ix0 = np.minimum(pgx.astype(np.int64), max(w - 2, 0))
    iy0 = np.minimum(pgy.astype(np.int64), max(h - 2, 0))
    fx = (pgx - ix0).astype(np.float32)[None, :, None]
    fy = (pgy - iy0).astype(np.float32)[:, None, None]
    x_lo, x_hi = int(ix0.min()), min(int(ix0.max()) + 2, w)
    y_lo, y_hi = int(iy0.min()), min(int(iy0.max()) + 2, h)
    sub = frame[y_lo:y_hi, x_lo:x_hi]
    ix0 -= x_lo
    iy0 -= y_lo
    ix1 = np.minimum(ix0 + 1, x_hi - x_lo - 1)
    iy1 = np.minimum(iy0 + 1, y_hi - y_lo - 1)

    # Rows first: the intermediate stays narrow, cutting memory traffic.
    a = sub[iy0].astype(np.float32)
    d = sub[iy1].astype(np.float32)
    d -= a
    rows = a + d * fy  # (R*n_off, sub_w, 3)
    b = rows[:, ix0]
    grid = b + (rows[:, ix1] - b) * fx  # (R*n_off, R*n_off, 3)

    m = np.ascontiguousarray(
        grid.reshape(R, n_off, R, n_off, 3).transpose(1, 3, 0, 2, 4)
    ).reshape(n_off * n_off, R * R * 3)
    dw = m @ tm_ones  # one pass for template dots and patch sums
    sums = dw[:, 1]
    sq = np.einsum("ij,ij->i", m, m)
    dim = np.float32(m.shape[1])
    # Centered dot without materializing centered patches:
    # sum((p - mean(p)) * tm) == p.tm - mean(p) * sum(tm).
    dots = dw[:, 0] - sums * np.float32(tm_sum / float(dim))
    var = np.maximum(sq - sums * sums / dim, 0.0)
    norms = np.sqrt(var)
    with np.errstate(invalid="ignore", divide="ignore"):
        sc = dots / (norms * np.float32(tnorm))
    sc[var == 0.0] = 0.0
    if tnorm == 0.0:
        sc[:] = 0.0
    np.clip(sc, -1.0, 1.0, out=sc)
    return sc.astype(np.float64)


_GRID_CACHE: dict = {}


def _grid_constants(config: TrackerConfig):
    """Per-config candidate grid constants, cached across calls."""
    key = (config.patch_size, config.search_radius, config.stride, config.scales)
    hit = _GRID_CACHE.get(key)
    if hit is None:
        offsets = config.offsets()
        n_off = len(offsets)
        dy_grid, dx_grid = np.meshgrid(offsets, offsets, indexing="ij")
        dx, dy = dx_grid.ravel(), dy_grid.ravel()
        disp2 = np.tile(dx * dx + dy * dy, len(config.scales))
        scale_pref = np.repeat([0.0 if s == 1.0 else 1.0 for s in config.scales], n_off * n_off)
        base = (np.arange(config.patch_size) + 0.5) / config.patch_size
        hit = (offsets, n_off, dx, dy, disp2, scale_pref, base)
        _GRID_CACHE[key] = hit
    return hit


def track(frame: np.ndarray, state: TrackerState, config: TrackerConfig) -> tuple[Box, ResponseMap]:
    """Score all window/scale candidates against the template; adopt the best."""
    h, w = frame.shape[:2]
    R = config.patch_size
    offsets, n_off, dx, dy, disp2, scale_pref, base = _grid_constants(config)
    cx, cy = state.last_box.center
    bw, bh = state.last_box.w, state.last_box.h

    tvec = state.template.patch.reshape(-1)
    tm = (tvec - tvec.mean()).astype(np.float32)
    tm64 = tm.astype(np.float64)
    tnorm = math.sqrt(float(tm64 @ tm64))
    tm_sum = float(tm64.sum())  # float32 rounding residual, corrected in the dot
    tm_ones = np.stack([tm, np.ones_like(tm)], axis=1)

    n_per_scale = n_off * n_off
    n_total = n_per_scale * len(config.scales)
    scores = np.empty(n_total)
    centers = np.empty((n_total, 2))
    sizes = np.empty((n_total, 2))

    for si, s in enumerate(config.scales):
        ws, hs = bw * s, bh * s
        # (k, j) sample positions: per-patch-pixel base plus integer offsets
        px = ((cx - ws / 2.0 + base * ws - 0.5)[:, None] + offsets[None, :]).ravel()
        py = ((cy - hs / 2.0 + base * hs - 0.5)[:, None] + offsets[None, :]).ravel()
        lo = si * n_per_scale
        scores[lo:lo + n_per_scale] = _scale_scores(frame, px, py, R, n_off, tm_ones, tnorm, tm_sum)
        centers[lo:lo + n_per_scale, 0] = cx + dx
        centers[lo:lo + n_per_scale, 1] = cy + dy
        sizes[lo:lo + n_per_scale] = (ws, hs)

    best = _select_best(scores, disp2, scale_pref)
    response = ResponseMap(centers=centers, sizes=sizes, scores=scores, best_index=best)
    result = clamp_to_frame(response.best_box, FrameBounds(w, h))
    state.last_box = result
    return result, response


def track_reference(frame: np.ndarray, state: TrackerState, config: TrackerConfig) -> tuple[Box, ResponseMap]:
    """Candidate-at-a-time implementation of track(); cross-check oracle."""
    h, w = frame.shape[:2]
    offsets = config.offsets()
    cx, cy = state.last_box.center
    bw, bh = state.last_box.w, state.last_box.h
    tpatch = state.template.patch

    centers, sizes, scores, disp2, scale_pref = [], [], [], [], []
    for s in config.scales:
        ws, hs = bw * s, bh * s
        for dy in offsets:
            for dx in offsets:
                box = Box.from_center(cx + dx, cy + dy, ws, hs)
                patch = crop_patch(frame, box, config.patch_size)
                centers.append((cx + dx, cy + dy))
                sizes.append((ws, hs))
                scores.append(zncc(patch, tpatch))
                disp2.append(dx * dx + dy * dy)
                scale_pref.append(0.0 if s == 1.0 else 1.0)
    scores = np.array(scores)
    best = _select_best(scores, np.array(disp2), np.array(scale_pref))
    response = ResponseMap(centers=np.array(centers), sizes=np.array(sizes), scores=scores, best_index=best)
    result = clamp_to_frame(response.best_box, FrameBounds(w, h))
    state.last_box = result
    return result, response
