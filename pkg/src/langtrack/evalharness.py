"""Benchmark harness: metrics, the policy grid, caches, and report files.

Template-quality derivation is the dominant compute (a full tracker rollout
per frame), so those values are cached on disk keyed by dataset and tracker
digests and shared across seeds, policies, and re-runs. The policy grid is
evaluated video-by-video so each video's rasters are rendered once, and is
parallelizable across videos with a deterministic video-id-ordered reduce.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import integrator as ig
from . import rtscore as rts
from . import tracker as tk
from .geometry import Box, center_distance, iou
from .grounder import NoiseProfile, ScoredBox
from .synthworld import Dataset, VideoSample, digest_of, scene_from_dict, scene_to_dict, GeneratedQuery

SUCCESS_THRESHOLDS = np.round(np.linspace(0.0, 1.0, 21), 2)
PRECISION_THRESHOLDS = np.arange(0.0, 51.0, 1.0)


def iou_series(pred: Sequence[Box], gt: Sequence[Box]) -> np.ndarray:
    if len(pred) != len(gt):
        raise ValueError(f"tubelet lengths differ: {len(pred)} vs {len(gt)}")
    return np.array([iou(p, g) for p, g in zip(pred, gt)])


def success_curve(pred: Sequence[Box], gt: Sequence[Box]) -> np.ndarray:
    """Fraction of frames with IoU strictly above each threshold."""
    vals = iou_series(pred, gt)
    return np.array([float(np.mean(vals > t)) for t in SUCCESS_THRESHOLDS])


def success_auc(pred: Sequence[Box], gt: Sequence[Box]) -> float:
    return float(np.mean(success_curve(pred, gt)))


def precision_curve(pred: Sequence[Box], gt: Sequence[Box]) -> np.ndarray:
    if len(pred) != len(gt):
        raise ValueError(f"tubelet lengths differ: {len(pred)} vs {len(gt)}")
    dists = np.array([center_distance(p, g) for p, g in zip(pred, gt)])
    return np.array([float(np.mean(dists <= t)) for t in PRECISION_THRESHOLDS])


def precision_at(pred: Sequence[Box], gt: Sequence[Box], threshold: float = 20.0) -> float:
    if len(pred) != len(gt):
        raise ValueError(f"tubelet lengths differ: {len(pred)} vs {len(gt)}")
    dists = [center_distance(p, g) for p, g in zip(pred, gt)]
    return float(np.mean([d <= threshold for d in dists]))


def oracle_scores(
    sample: VideoSample,
    frame_index: int,
    grounded: ScoredBox,
    config: tk.TrackerConfig,
    t_lookup: Optional[ig.TLookup] = None,
) -> rts.RTScores:
    """Scores computed against ground truth instead of the regressor."""
    r = iou(grounded.box, sample.gt_box(frame_index))
    t = t_lookup(sample, frame_index) if t_lookup else rts.derive_t(sample, frame_index, config)
    return rts.RTScores(r=r, t=t)


# ---------------------------------------------------------------------------
# template-score cache


class TScoreCache:
    """Directory of per-video template-quality vectors.

    One .npy per video keeps writes incremental, so an interrupted
    derivation resumes where it stopped.
    """

    def __init__(self, root: str | Path, dataset_digest: str, tracker_digest: str):
        self.dir = Path(root) / f"tscores-{dataset_digest[:12]}-{tracker_digest[:12]}"
        self.dir.mkdir(parents=True, exist_ok=True)
        self._mem: dict[int, np.ndarray] = {}

    def path_for(self, video_id: int) -> Path:
        return self.dir / f"v{video_id:05d}.npy"

    def has(self, video_id: int) -> bool:
        return video_id in self._mem or self.path_for(video_id).exists()

    def get(self, video_id: int) -> np.ndarray:
        if video_id not in self._mem:
            self._mem[video_id] = np.load(self.path_for(video_id))
        return self._mem[video_id]

    def put(self, video_id: int, values: np.ndarray) -> None:
        self._mem[video_id] = np.asarray(values, dtype=np.float64)
        # survive the cache dir being swept out from under a long derivation
        self.dir.mkdir(parents=True, exist_ok=True)
        np.save(self.path_for(video_id), self._mem[video_id])

    def lookup(self, sample: VideoSample, frame_index: int) -> float:
        return float(self.get(sample.video_id)[frame_index])

    def lookup_fn(self) -> ig.TLookup:
        return self.lookup


def _tscore_worker(payload: dict) -> tuple[int, list[float]]:
    sample = _sample_from_payload(payload)
    cfg = tk.TrackerConfig.from_dict(payload["tracker"])
    vals = [rts.derive_t(sample, f, cfg) for f in range(sample.n_frames)]
    return payload["video_id"], vals


def _sample_from_payload(payload: dict) -> VideoSample:
    scene = scene_from_dict(payload["scene"])
    queries = [GeneratedQuery(t, a) for t, a in payload["queries"]]
    return VideoSample(scene, queries, video_id=payload["video_id"])


def _video_payload(sample: VideoSample, config: tk.TrackerConfig) -> dict:
    return {
        "video_id": sample.video_id,
        "scene": scene_to_dict(sample.scene),
        "queries": [(g.text, g.ambiguous) for g in sample.queries],
        "tracker": config.to_dict(),
    }


def ensure_tscores(
    videos: Sequence[VideoSample],
    config: tk.TrackerConfig,
    cache: TScoreCache,
    jobs: int = 1,
    progress: Optional[Callable[[int, int], None]] = None,
) -> None:
    """Fill the cache for every multi-frame video that is missing."""
    pending = [v for v in videos if v.n_frames >= 2 and not cache.has(v.video_id)]
    done = len(videos) - len(pending)
    if progress:
        progress(done, len(videos))
    if not pending:
        return
    payloads = [_video_payload(v, config) for v in pending]
    if jobs <= 1:
        results = map(_tscore_worker, payloads)
        for vid, vals in results:
            cache.put(vid, np.array(vals))
            done += 1
            if progress:
                progress(done, len(videos))
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for vid, vals in pool.map(_tscore_worker, payloads):
                cache.put(vid, np.array(vals))
                done += 1
                if progress:
                    progress(done, len(videos))


# ---------------------------------------------------------------------------
# policy registry


@dataclass(frozen=True)
class RegistryEntry:
    policy: ig.IntegrationPolicy
    needs_model: bool = False
    needs_tscores: bool = False
    all_seeds: bool = True  # ablation variants run on the first seed only


def policy_registry() -> dict[str, RegistryEntry]:
    P = ig.IntegrationPolicy
    oracle_rt = P(score_source="oracle-rt")
    return {
        "grounding-only": RegistryEntry(P(schedule="all-grounding", score_source="grounding-confidence")),
        "track-first": RegistryEntry(P(schedule="frame-first", score_source="grounding-confidence")),
        "track-middle": RegistryEntry(P(schedule="frame-middle", score_source="grounding-confidence")),
        "track-last": RegistryEntry(P(schedule="frame-last", score_source="grounding-confidence")),
        "track-random": RegistryEntry(P(schedule="frame-random", score_source="grounding-confidence")),
        "fixed-interval-5": RegistryEntry(P(schedule="fixed-interval", interval=5, score_source="grounding-confidence")),
        "fixed-interval-10": RegistryEntry(P(schedule="fixed-interval", interval=10, score_source="grounding-confidence")),
        "fixed-interval-20": RegistryEntry(P(schedule="fixed-interval", interval=20, score_source="grounding-confidence")),
        "fixed-weight-fusion": RegistryEntry(
            P(schedule="frame-first", output_fusion="soft-fusion", fusion_weight=0.5,
              score_source="grounding-confidence")),
        "ours-confidence": RegistryEntry(P(score_source="grounding-confidence")),
        "ours-r": RegistryEntry(P(score_source="r-only"), needs_model=True),
        "ours-rt": RegistryEntry(P(score_source="rt-product"), needs_model=True),
        "oracle-r": RegistryEntry(P(score_source="oracle-r")),
        "oracle-rt": RegistryEntry(oracle_rt, needs_tscores=True),
        # template-update / output-fusion ablation grid (oracle-scored)
        "ablate-greedy-hard": RegistryEntry(oracle_rt, needs_tscores=True, all_seeds=False),
        "ablate-greedy-soft": RegistryEntry(
            P(score_source="oracle-rt", output_fusion="soft-fusion"),
            needs_tscores=True, all_seeds=False),
        "ablate-improvement-threshold": RegistryEntry(
            P(score_source="oracle-rt", template_update="improvement-threshold"),
            needs_tscores=True, all_seeds=False),
        "ablate-fixed-weight": RegistryEntry(
            P(score_source="oracle-rt", template_update="fixed-weight"),
            needs_tscores=True, all_seeds=False),
        "ablate-score-weighted": RegistryEntry(
            P(score_source="oracle-rt", template_update="score-weighted"),
            needs_tscores=True, all_seeds=False),
    }


ABLATION_POLICIES = (
    "ablate-greedy-hard",
    "ablate-greedy-soft",
    "ablate-improvement-threshold",
    "ablate-fixed-weight",
    "ablate-score-weighted",
)


# ---------------------------------------------------------------------------
# benchmark runner


@dataclass
class PolicyRow:
    name: str
    policy: dict
    seeds: list[int]
    success: float
    precision: float
    mean_reground_interval: float
    success_curve: list[float]
    precision_curve: list[float]
    per_video: list[dict]  # one record per (seed, video)

    def to_dict(self) -> dict:
        return dict(vars(self))


@dataclass
class MetricReport:
    rows: list[PolicyRow]
    dataset_digest: str
    tracker: dict
    noise: dict
    seeds: list[int]
    n_videos: int
    include_ambiguous: bool

    def row(self, name: str) -> PolicyRow:
        for r in self.rows:
            if r.name == name:
                return r
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "dataset_digest": self.dataset_digest,
            "tracker": self.tracker,
            "noise": self.noise,
            "seeds": self.seeds,
            "n_videos": self.n_videos,
            "include_ambiguous": self.include_ambiguous,
            "rows": [r.to_dict() for r in self.rows],
        }


def _eval_unit(
    sample: VideoSample,
    policy: ig.IntegrationPolicy,
    noise: NoiseProfile,
    config: tk.TrackerConfig,
    model: Optional[rts.ScoreModel],
    t_vec: Optional[np.ndarray],
    seed: int,
    include_ambiguous: bool,
) -> Optional[dict]:
    queries = [g for g in sample.queries if include_ambiguous or not g.ambiguous]
    if not queries:
        return None
    t_lookup = None
    if t_vec is not None:
        t_lookup = lambda s, f: float(t_vec[f])  # noqa: E731
    gt = sample.gt_tubelet()
    succ, prec, s_curve, p_curve, intervals = [], [], [], [], []
    for gq in queries:
        boxes, log = ig.run_video(sample, gq.text, noise, config, policy,
                                  model=model, t_lookup=t_lookup, run_seed=seed)
        succ.append(success_auc(boxes, gt))
        prec.append(precision_at(boxes, gt))
        s_curve.append(success_curve(boxes, gt))
        p_curve.append(precision_curve(boxes, gt))
        n_grounded = sum(1 for r in log if r.source == "grounding")
        intervals.append(sample.n_frames / max(n_grounded, 1))
    return {
        "video_id": sample.video_id,
        "seed": seed,
        "n_queries": len(queries),
        "success": float(np.mean(succ)),
        "precision": float(np.mean(prec)),
        "reground_interval": float(np.mean(intervals)),
        "success_curve": np.mean(s_curve, axis=0),
        "precision_curve": np.mean(p_curve, axis=0),
    }


def _policy_video_worker(payload: dict) -> tuple[int, dict]:
    sample = _sample_from_payload(payload)
    config = tk.TrackerConfig.from_dict(payload["tracker"])
    model = rts.ScoreModel.from_dict(payload["model"]) if payload["model"] else None
    t_vec = None if payload["t_vec"] is None else np.asarray(payload["t_vec"])
    out: dict = {}
    for exec_id, policy_dict, seed in payload["units"]:
        policy = ig.IntegrationPolicy.from_dict(policy_dict)
        noise = NoiseProfile.from_dict({**payload["noise"], "seed": seed})
        res = _eval_unit(sample, policy, noise, config, model, t_vec, seed,
                         payload["include_ambiguous"])
        out[(exec_id, seed)] = res
    sample.drop_frame_cache()
    return payload["video_id"], out


def run_benchmark(
    dataset: Dataset,
    names: Sequence[str],
    noise: NoiseProfile,
    config: tk.TrackerConfig,
    model: Optional[rts.ScoreModel],
    seeds: Sequence[int],
    cache: Optional[TScoreCache] = None,
    jobs: int = 1,
    include_ambiguous: bool = False,
    progress: Optional[Callable[[int, int], None]] = None,
) -> MetricReport:
    """Evaluate the named policies over the test split.

    Policies sharing an identical policy definition are executed once and
    reported once per name. Ablation entries run on the first seed only.
    """
    registry = policy_registry()
    unknown = [n for n in names if n not in registry]
    if unknown:
        raise ValueError(f"unknown policies: {unknown}")
    videos = dataset.split_videos("test")
    if not videos:
        raise ValueError("dataset has no test split")
    if not seeds:
        raise ValueError("need at least one seed")

    entries = {n: registry[n] for n in names}
    if any(e.needs_model for e in entries.values()) and model is None:
        missing = [n for n, e in entries.items() if e.needs_model]
        raise ValueError(f"policies {missing} need a trained model")
    needs_t = any(e.needs_tscores for e in entries.values())
    if needs_t and cache is None:
        raise ValueError("oracle template scores requested but no cache given")

    # deduplicate identical (policy, seed) executions
    exec_of_name: dict[str, tuple[str, list[int]]] = {}
    units: dict[tuple[str, int], dict] = {}
    for n, e in entries.items():
        exec_id = digest_of(e.policy.to_dict())
        seed_list = list(seeds) if e.all_seeds else [seeds[0]]
        exec_of_name[n] = (exec_id, seed_list)
        for s in seed_list:
            units[(exec_id, s)] = e.policy.to_dict()
    unit_list = [(eid, pdict, s) for (eid, s), pdict in units.items()]

    if needs_t and cache is not None:
        ensure_tscores(videos, config, cache, jobs=jobs)

    payloads = []
    for v in videos:
        payloads.append({
            **_video_payload(v, config),
            "noise": noise.to_dict(),
            "model": model.to_dict() if model else None,
            "t_vec": cache.get(v.video_id).tolist() if (needs_t and cache and cache.has(v.video_id)) else None,
            "units": unit_list,
            "include_ambiguous": include_ambiguous,
        })

    results: dict[int, dict] = {}
    if jobs <= 1:
        for i, p in enumerate(payloads):
            vid, res = _policy_video_worker(p)
            results[vid] = res
            if progress:
                progress(i + 1, len(payloads))
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for i, (vid, res) in enumerate(pool.map(_policy_video_worker, payloads)):
                results[vid] = res
                if progress:
                    progress(i + 1, len(payloads))

    rows = []
    for n in names:
        exec_id, seed_list = exec_of_name[n]
        per_video = []
        for vid in sorted(results):
            for s in seed_list:
                r = results[vid].get((exec_id, s))
                if r is not None:
                    per_video.append(r)
        if not per_video:
            raise ValueError(f"policy {n!r} evaluated no queries")
        s_curve = np.mean([r["success_curve"] for r in per_video], axis=0)
        p_curve = np.mean([r["precision_curve"] for r in per_video], axis=0)
        rows.append(PolicyRow(
            name=n,
            policy=entries[n].policy.to_dict(),
            seeds=seed_list,
            success=float(np.mean([r["success"] for r in per_video])),
            precision=float(np.mean([r["precision"] for r in per_video])),
            mean_reground_interval=float(np.mean([r["reground_interval"] for r in per_video])),
            success_curve=[float(x) for x in s_curve],
            precision_curve=[float(x) for x in p_curve],
            per_video=[{k: (list(map(float, v)) if isinstance(v, np.ndarray) else v)
                        for k, v in r.items()} for r in per_video],
        ))
    return MetricReport(
        rows=rows,
        dataset_digest=dataset.config_digest,
        tracker=config.to_dict(),
        noise=noise.to_dict(),
        seeds=list(seeds),
        n_videos=len(videos),
        include_ambiguous=include_ambiguous,
    )


# ---------------------------------------------------------------------------
# report files


def write_report_csv(report: MetricReport, path: str | Path) -> None:
    lines = ["policy,success,precision,mean_reground_interval,seeds,n_videos"]
    for r in report.rows:
        seeds = ";".join(str(s) for s in r.seeds)
        lines.append(f"{r.name},{r.success:.6f},{r.precision:.6f},"
                     f"{r.mean_reground_interval:.3f},{seeds},{report.n_videos}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_report_json(report: MetricReport, path: str | Path) -> None:
    import json

    Path(path).write_text(json.dumps(report.to_dict(), sort_keys=True, indent=1) + "\n")


def load_report_json(path: str | Path) -> MetricReport:
    import json

    d = json.loads(Path(path).read_text())
    rows = [PolicyRow(**r) for r in d["rows"]]
    return MetricReport(rows=rows, dataset_digest=d["dataset_digest"], tracker=d["tracker"],
                        noise=d["noise"], seeds=d["seeds"], n_videos=d["n_videos"],
                        include_ambiguous=d["include_ambiguous"])


_SVG_COLORS = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
               "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#393b79", "#637939",
               "#8c6d31", "#843c39", "#7b4173", "#3182bd", "#e6550d", "#31a354"]


def _svg_plot(series: list[tuple[str, np.ndarray, np.ndarray]], title: str,
              xlabel: str, ylabel: str, x_max: float) -> str:
    w, h = 640, 420
    ml, mr, mt, mb = 60, 180, 40, 50
    pw, ph = w - ml - mr, h - mt - mb

    def sx(x):
        return ml + (x / x_max) * pw

    def sy(y):
        return mt + (1.0 - y) * ph

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" '
             f'viewBox="0 0 {w} {h}" font-family="monospace" font-size="11">',
             f'<rect width="{w}" height="{h}" fill="white"/>',
             f'<text x="{ml}" y="24" font-size="14">{title}</text>']
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        y = sy(frac)
        parts.append(f'<line x1="{ml}" y1="{y:.1f}" x2="{ml + pw}" y2="{y:.1f}" '
                     f'stroke="#dddddd" stroke-width="1"/>')
        parts.append(f'<text x="{ml - 8}" y="{y + 4:.1f}" text-anchor="end">{frac:.2f}</text>')
        x = sx(frac * x_max)
        parts.append(f'<text x="{x:.1f}" y="{mt + ph + 16}" text-anchor="middle">'
                     f'{frac * x_max:g}</text>')
    parts.append(f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" '
                 f'fill="none" stroke="#333333"/>')
    parts.append(f'<text x="{ml + pw / 2:.0f}" y="{h - 12}" text-anchor="middle">{xlabel}</text>')
    parts.append(f'<text x="16" y="{mt + ph / 2:.0f}" text-anchor="middle" '
                 f'transform="rotate(-90 16 {mt + ph / 2:.0f})">{ylabel}</text>')
    for i, (label, xs, ys) in enumerate(series):
        color = _SVG_COLORS[i % len(_SVG_COLORS)]
        pts = " ".join(f"{sx(x):.1f},{sy(y):.1f}" for x, y in zip(xs, ys))
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.8"/>')
        ly = mt + 14 + i * 15
        parts.append(f'<line x1="{ml + pw + 8}" y1="{ly - 4}" x2="{ml + pw + 26}" y2="{ly - 4}" '
                     f'stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{ml + pw + 30}" y="{ly}">{label}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_success_svg(report: MetricReport, path: str | Path) -> None:
    series = [(r.name, SUCCESS_THRESHOLDS, np.asarray(r.success_curve)) for r in report.rows]
    Path(path).write_text(_svg_plot(series, "Success rate vs overlap threshold",
                                    "overlap threshold", "success rate", 1.0))


def write_precision_svg(report: MetricReport, path: str | Path) -> None:
    series = [(r.name, PRECISION_THRESHOLDS, np.asarray(r.precision_curve)) for r in report.rows]
    Path(path).write_text(_svg_plot(series, "Precision vs center-distance threshold",
                                    "distance threshold (px)", "precision", 50.0))
