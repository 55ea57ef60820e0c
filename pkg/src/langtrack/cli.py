"""Command line pipeline: gen, derive-scores, train, run, report, trace.

Configuration comes from one JSON file (--config) with per-flag overrides;
flags win. Every command is deterministic given explicit seeds, and no
artifact contains wall-clock values (timing goes to run.log only).
Exit codes: 0 success, 2 usage or config error, 3 data error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import evalharness as ev
from . import integrator as ig
from . import rtscore as rts
from .grounder import NoiseProfile
from .synthworld import (
    GenConfig,
    canonical_json,
    digest_of,
    generate_dataset,
    load_dataset,
    write_ppm,
)
from .tracker import TrackerConfig

FORMAT_VERSION = "gti-run-v1"
SAMPLES_FORMAT = "gti-samples-v1"
EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 2, 3

# benchmark-grade tracker: small patch and coarse stride keep the full grid
# affordable while staying accurate on this world's object sizes
BENCHMARK_TRACKER = TrackerConfig(patch_size=12, search_radius=15, stride=3, scales=(1.0,))


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


def _env_seed() -> Optional[int]:
    v = os.environ.get("GTI_SEED")
    return int(v) if v else None


@dataclass
class RunConfig:
    """Everything a pipeline run needs, serializable to one JSON file."""

    dataset: str = "data/benchmark.gti.jsonl"
    out_dir: str = "runs/benchmark"
    cache_dir: str = ""  # empty: <out_dir>/cache
    model: str = ""  # empty: <out_dir>/model.json
    samples: str = ""  # empty: <out_dir>/samples.jsonl
    gen: GenConfig = field(default_factory=GenConfig)
    gen_seed: Optional[int] = None  # falls back to GTI_SEED, then 0
    noise: NoiseProfile = field(default_factory=NoiseProfile)
    tracker: TrackerConfig = field(default_factory=lambda: BENCHMARK_TRACKER)
    policies: list = field(default_factory=lambda: ["all"])
    seeds: Optional[list] = None  # falls back to [GTI_SEED] or [0, 1, 2]
    train_epochs: int = 40
    train_batch: int = 32
    train_lr: float = 1e-4
    train_seed: Optional[int] = None
    include_ambiguous: bool = False
    jobs: int = 0  # 0: all available cores
    format_version: str = FORMAT_VERSION

    def resolved_gen_seed(self) -> int:
        if self.gen_seed is not None:
            return self.gen_seed
        return _env_seed() or 0

    def resolved_train_seed(self) -> int:
        if self.train_seed is not None:
            return self.train_seed
        return _env_seed() or 0

    def resolved_seeds(self) -> list:
        if self.seeds:
            return list(self.seeds)
        env = _env_seed()
        return [env] if env is not None else [0, 1, 2]

    def resolved_jobs(self) -> int:
        return self.jobs if self.jobs > 0 else (os.cpu_count() or 1)

    def model_path(self) -> Path:
        return Path(self.model) if self.model else Path(self.out_dir) / "model.json"

    def samples_path(self) -> Path:
        return Path(self.samples) if self.samples else Path(self.out_dir) / "samples.jsonl"

    def cache_root(self) -> Path:
        return Path(self.cache_dir) if self.cache_dir else Path(self.out_dir) / "cache"

    def policy_names(self) -> list:
        registry = ev.policy_registry()
        if list(self.policies) == ["all"]:
            return list(registry)
        return list(self.policies)

    def to_dict(self) -> dict:
        return {
            "format_version": self.format_version,
            "dataset": self.dataset,
            "out_dir": self.out_dir,
            "cache_dir": self.cache_dir,
            "model": self.model,
            "samples": self.samples,
            "gen": self.gen.to_dict(),
            "gen_seed": self.gen_seed,
            "noise": self.noise.to_dict(),
            "tracker": self.tracker.to_dict(),
            "policies": list(self.policies),
            "seeds": None if self.seeds is None else list(self.seeds),
            "train_epochs": self.train_epochs,
            "train_batch": self.train_batch,
            "train_lr": self.train_lr,
            "train_seed": self.train_seed,
            "include_ambiguous": self.include_ambiguous,
            "jobs": self.jobs,
        }

    @staticmethod
    def from_dict(d: dict) -> "RunConfig":
        version = d.get("format_version", FORMAT_VERSION)
        if version != FORMAT_VERSION:
            raise UsageError(f"config format {version!r} not supported (want {FORMAT_VERSION!r})")
        cfg = RunConfig()
        plain = {k: v for k, v in d.items()
                 if k not in ("gen", "noise", "tracker", "format_version")}
        unknown = [k for k in plain if not hasattr(cfg, k)]
        if unknown:
            raise UsageError(f"unknown config keys: {unknown}")
        for k, v in plain.items():
            setattr(cfg, k, v)
        if "gen" in d:
            cfg.gen = GenConfig.from_dict(d["gen"])
        if "noise" in d:
            cfg.noise = NoiseProfile.from_dict(d["noise"])
        if "tracker" in d:
            cfg.tracker = TrackerConfig.from_dict(d["tracker"])
        return cfg


def load_config(path: Optional[str]) -> RunConfig:
    if path is None:
        return RunConfig()
    p = Path(path)
    if not p.exists():
        raise UsageError(f"config file not found: {p}")
    try:
        return RunConfig.from_dict(json.loads(p.read_text()))
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file is not valid JSON: {exc}") from exc


def _parse_int_list(text: str) -> list:
    try:
        return [int(x) for x in text.split(",") if x.strip() != ""]
    except ValueError as exc:
        raise UsageError(f"expected comma-separated integers, got {text!r}") from exc


def apply_overrides(cfg: RunConfig, args: argparse.Namespace) -> RunConfig:
    """Copy any explicitly passed flag onto the config; flags win."""
    simple = {
        "dataset": "dataset", "out_dir": "out_dir", "cache_dir": "cache_dir",
        "model": "model", "samples": "samples", "epochs": "train_epochs",
        "batch": "train_batch", "lr": "train_lr", "train_seed": "train_seed",
        "jobs": "jobs", "include_ambiguous": "include_ambiguous",
    }
    for flag, attr in simple.items():
        v = getattr(args, flag, None)
        if v is not None:
            setattr(cfg, attr, v)
    if getattr(args, "seed", None) is not None:
        cfg.gen_seed = args.seed
    if getattr(args, "seeds", None) is not None:
        cfg.seeds = _parse_int_list(args.seeds)
    if getattr(args, "policies", None) is not None:
        cfg.policies = [p.strip() for p in args.policies.split(",") if p.strip()]
    noise_flags = {"jitter_sigma": "jitter_sigma", "miss_rate": "miss_rate",
                   "false_positive_rate": "false_positive_rate",
                   "confusion_rate": "confusion_rate", "noise_seed": "seed"}
    noise_updates = {attr: getattr(args, flag) for flag, attr in noise_flags.items()
                     if getattr(args, flag, None) is not None}
    if noise_updates:
        cfg.noise = replace(cfg.noise, **noise_updates)
    gen_flags = ("n_train", "n_test", "n_frames_train", "n_frames_test",
                 "event_rate", "twin_rate")
    gen_updates = {f: getattr(args, f) for f in gen_flags
                   if getattr(args, f, None) is not None}
    if getattr(args, "n_videos", None) is not None:
        if args.n_videos < 0:
            raise UsageError("--n-videos must be >= 0")
        gen_updates["n_train"] = args.n_videos // 2
        gen_updates["n_test"] = args.n_videos - args.n_videos // 2
    if gen_updates:
        cfg.gen = GenConfig.from_dict({**cfg.gen.to_dict(), **gen_updates})
    return cfg


# ---------------------------------------------------------------------------
# commands


def _dataset_path(cfg: RunConfig, args: argparse.Namespace) -> Path:
    out = getattr(args, "out", None)
    if out is None:
        return Path(cfg.dataset)
    p = Path(out)
    return p if p.suffix == ".jsonl" else p / "dataset.gti.jsonl"


def cmd_gen(cfg: RunConfig, args: argparse.Namespace) -> int:
    path = _dataset_path(cfg, args)
    summary = generate_dataset(cfg.gen, cfg.resolved_gen_seed(), path)
    print(f"dataset {path}")
    print(f"digest {summary['config_digest']}")
    print(f"videos train={cfg.gen.n_train} test={cfg.gen.n_test}")
    return EXIT_OK


def _load_dataset_checked(cfg: RunConfig):
    p = Path(cfg.dataset)
    if not p.exists():
        raise UsageError(f"dataset not found: {p}")
    try:
        return load_dataset(p)
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        raise DataError(f"dataset unreadable: {exc}") from exc


def _tscore_cache(cfg: RunConfig, dataset) -> ev.TScoreCache:
    return ev.TScoreCache(cfg.cache_root(), dataset.config_digest,
                          digest_of(cfg.tracker.to_dict()))


def cmd_derive(cfg: RunConfig, args: argparse.Namespace) -> int:
    dataset = _load_dataset_checked(cfg)
    train_videos = dataset.split_videos("train")
    if not train_videos:
        raise DataError("dataset has no training split")
    cache = _tscore_cache(cfg, dataset)
    ev.ensure_tscores(train_videos, cfg.tracker, cache, jobs=cfg.resolved_jobs(),
                      progress=_progress("template scores"))
    try:
        samples = rts.collect_training_set(dataset, cfg.noise, cfg.tracker,
                                           t_lookup=cache.lookup)
    except rts.EmptyAfterFilter as exc:
        raise DataError(str(exc)) from exc

    usable = [v for v in train_videos if v.n_frames >= 2]
    skipped = len(train_videos) - len(usable)
    total = sum(v.n_frames * len(v.unambiguous_queries()) for v in usable)
    kept = len(samples)

    path = cfg.samples_path()
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        header = {"format": SAMPLES_FORMAT, "dataset_digest": dataset.config_digest,
                  "noise": cfg.noise.to_dict(), "tracker": cfg.tracker.to_dict()}
        fh.write(canonical_json(header) + "\n")
        for s in samples:
            fh.write(canonical_json(s.to_dict()) + "\n")
    print(f"samples {path}")
    print(f"grounded frames {total}")
    print(f"kept {kept}")
    print(f"filtered {total - kept}")
    print(f"skipped single-frame videos {skipped}")
    return EXIT_OK


def _read_samples(path: Path) -> list:
    if not path.exists():
        raise UsageError(f"samples file not found: {path}")
    with open(path) as fh:
        header = json.loads(fh.readline())
        if header.get("format") != SAMPLES_FORMAT:
            raise DataError(f"unexpected samples format: {header.get('format')!r}")
        return [rts.TrainingSample.from_dict(json.loads(line)) for line in fh if line.strip()]


def cmd_train(cfg: RunConfig, args: argparse.Namespace) -> int:
    if cfg.train_epochs <= 0:
        raise UsageError("--epochs must be >= 1")
    samples = _read_samples(cfg.samples_path())
    seed = cfg.resolved_train_seed()
    x = np.array([s.features.vector() for s in samples])
    y_r = np.array([s.gt_r for s in samples])
    y_t = np.array([s.gt_t for s in samples])
    initial_loss, _, _ = rts.loss_and_gradients(rts.ScoreModel.init(seed), x, y_r, y_t)
    try:
        model = rts.train(samples, epochs=cfg.train_epochs, batch=cfg.train_batch,
                          lr=cfg.train_lr, seed=seed)
    except rts.InsufficientSamples as exc:
        raise DataError(str(exc)) from exc
    path = cfg.model_path()
    path.parent.mkdir(parents=True, exist_ok=True)
    rts.save_model(model, path)
    print(f"model {path}")
    print(f"initial loss {initial_loss:.6f}")
    print(f"final loss {model.final_loss:.6f}")
    print(f"model digest {digest_of(model.to_dict())}")
    return EXIT_OK


def _load_model_if_needed(cfg: RunConfig, names: Sequence[str]):
    registry = ev.policy_registry()
    if not any(registry[n].needs_model for n in names if n in registry):
        return None
    path = cfg.model_path()
    if not path.exists():
        raise UsageError(f"model not found: {path} (run `train` first)")
    try:
        return rts.load_model(path)
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        raise DataError(f"model unreadable: {exc}") from exc


def _progress(label: str):
    def cb(done: int, total: int) -> None:
        if total and (done == total or done % max(total // 10, 1) == 0):
            print(f"  {label}: {done}/{total}", file=sys.stderr)
    return cb


def cmd_run(cfg: RunConfig, args: argparse.Namespace) -> int:
    dataset = _load_dataset_checked(cfg)
    names = cfg.policy_names()
    model = _load_model_if_needed(cfg, names)
    cache = _tscore_cache(cfg, dataset)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    jobs = cfg.resolved_jobs()
    t0 = time.perf_counter()
    try:
        report = ev.run_benchmark(dataset, names, cfg.noise, cfg.tracker, model,
                                  cfg.resolved_seeds(), cache=cache, jobs=jobs,
                                  include_ambiguous=cfg.include_ambiguous,
                                  progress=_progress("videos"))
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    wall = time.perf_counter() - t0
    ev.write_report_csv(report, out / "report.csv")
    ev.write_report_json(report, out / "report.json")
    with open(out / "run.log", "a") as fh:
        fh.write(f"{time.strftime('%Y-%m-%dT%H:%M:%S')} benchmark "
                 f"wall_seconds={wall:.1f} jobs={jobs} videos={report.n_videos} "
                 f"policies={len(names)} seeds={len(report.seeds)}\n")
    _print_table(report)
    print(f"report {out / 'report.csv'}")
    return EXIT_OK


def _print_table(report: ev.MetricReport) -> None:
    print(f"{'policy':28s} {'success':>8s} {'precision':>9s} {'interval':>8s}")
    for r in report.rows:
        print(f"{r.name:28s} {r.success:8.4f} {r.precision:9.4f} "
              f"{r.mean_reground_interval:8.2f}")


def cmd_report(cfg: RunConfig, args: argparse.Namespace) -> int:
    out = Path(args.run_dir) if getattr(args, "run_dir", None) else Path(cfg.out_dir)
    path = out / "report.json"
    if not path.exists():
        raise UsageError(f"no report.json under {out}")
    try:
        report = ev.load_report_json(path)
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        raise DataError(f"report unreadable: {exc}") from exc
    ev.write_success_svg(report, out / "success.svg")
    ev.write_precision_svg(report, out / "precision.svg")
    _print_table(report)
    print(f"plots {out / 'success.svg'} {out / 'precision.svg'}")
    return EXIT_OK


def _trace_line(rec: ig.FrameRecord) -> str:
    b = rec.output_box
    return (f"f={rec.frame_index:04d} source={rec.source:9s} "
            f"s={rec.s_frame:.6f} S={rec.s_saved_after:.6f} "
            f"box={b.x:.1f},{b.y:.1f},{b.w:.1f},{b.h:.1f}")


def cmd_trace(cfg: RunConfig, args: argparse.Namespace) -> int:
    policy_name = args.policy or "ours-confidence"
    registry = ev.policy_registry()
    if policy_name not in registry:
        raise UsageError(f"unknown policy {policy_name!r}; see --policies all")
    policy = registry[policy_name].policy

    if args.inject_scores:
        try:
            scores = [float(x) for x in args.inject_scores.split(",")]
        except ValueError as exc:
            raise UsageError(f"bad --inject-scores: {exc}") from exc
        sources, saved = ig.run_scripted(scores, policy)
        for f, (src, s, big_s) in enumerate(zip(sources, scores, saved)):
            print(f"f={f:04d} source={src:9s} s={s:.6f} S={big_s:.6f}")
        return EXIT_OK

    dataset = _load_dataset_checked(cfg)
    videos = {v.video_id: v for v in dataset.videos}
    vid = args.video if args.video is not None else dataset.split_videos("test")[0].video_id
    if vid not in videos:
        raise DataError(f"video {vid} not in dataset")
    sample = videos[vid]
    if args.query:
        query = args.query
    else:
        unambiguous = sample.unambiguous_queries()
        if not unambiguous:
            raise DataError(f"video {vid} has no unambiguous query; pass --query")
        query = unambiguous[0].text

    entry = registry[policy_name]
    model = _load_model_if_needed(cfg, [policy_name])
    t_lookup = None
    if entry.needs_tscores:
        cache = _tscore_cache(cfg, dataset)
        ev.ensure_tscores([sample], cfg.tracker, cache, jobs=1)
        t_lookup = cache.lookup
    run_seed = cfg.resolved_seeds()[0]
    noise = replace(cfg.noise, seed=run_seed)
    boxes, log = ig.run_video(sample, query, noise, cfg.tracker, policy,
                              model=model, t_lookup=t_lookup, run_seed=run_seed)
    print(f"video {vid} query {query!r} policy {policy_name} seed {run_seed}")
    for rec in log:
        print(_trace_line(rec))

    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    trace_path = out / f"trace-v{vid:05d}.jsonl"
    with open(trace_path, "w") as fh:
        head = {"format": "gti-trace-v1", "video_id": vid, "query": query,
                "policy": policy.to_dict(), "seed": run_seed,
                "noise": noise.to_dict()}
        fh.write(canonical_json(head) + "\n")
        for rec in log:
            fh.write(canonical_json(rec.to_dict()) + "\n")
    print(f"trace {trace_path}")

    if args.dump_frames:
        n = min(args.dump_frames, sample.n_frames)
        dump_dir = out / f"frames-v{vid:05d}"
        dump_dir.mkdir(parents=True, exist_ok=True)
        for f in range(n):
            write_ppm(dump_dir / f"f{f:04d}.ppm", sample.frame(f))
        print(f"frames {dump_dir} ({n} files)")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="langtrack",
        description="language-conditioned tracking pipeline on a synthetic world")
    parser.add_argument("--config", help="JSON run configuration")
    parser.add_argument("--print-config", action="store_true",
                        help="print the merged effective config and exit")
    sub = parser.add_subparsers(dest="command")

    def common(p):
        p.add_argument("--dataset")
        p.add_argument("--out-dir")
        p.add_argument("--cache-dir")
        p.add_argument("--jobs", type=int)

    g = sub.add_parser("gen", help="generate a dataset")
    common(g)
    g.add_argument("--seed", type=int, help="generation seed (GTI_SEED fallback)")
    g.add_argument("--out", help="output file (.jsonl) or directory")
    g.add_argument("--n-videos", type=int, help="total video count, split half train half test")
    g.add_argument("--n-train", type=int)
    g.add_argument("--n-test", type=int)
    g.add_argument("--n-frames-train", type=int)
    g.add_argument("--n-frames-test", type=int)
    g.add_argument("--event-rate", type=float)
    g.add_argument("--twin-rate", type=float)

    def noise_flags(p):
        p.add_argument("--jitter-sigma", type=float)
        p.add_argument("--miss-rate", type=float)
        p.add_argument("--false-positive-rate", type=float)
        p.add_argument("--confusion-rate", type=float)
        p.add_argument("--noise-seed", type=int)

    d = sub.add_parser("derive-scores", help="build training samples from the train split")
    common(d)
    noise_flags(d)
    d.add_argument("--samples")

    t = sub.add_parser("train", help="fit the score regressor")
    common(t)
    t.add_argument("--samples")
    t.add_argument("--model")
    t.add_argument("--epochs", type=int)
    t.add_argument("--batch", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--train-seed", type=int)

    r = sub.add_parser("run", help="run the benchmark grid")
    common(r)
    noise_flags(r)
    r.add_argument("--model")
    r.add_argument("--policies", help="comma list or 'all'")
    r.add_argument("--seeds", help="comma list of run seeds")
    r.add_argument("--include-ambiguous", action="store_const", const=True)

    p = sub.add_parser("report", help="render tables and SVG curves from a run")
    common(p)
    p.add_argument("--run-dir", help="directory with report.json (default: out dir)")

    tr = sub.add_parser("trace", help="per-frame integration log for one video")
    common(tr)
    noise_flags(tr)
    tr.add_argument("--video", type=int)
    tr.add_argument("--query")
    tr.add_argument("--policy")
    tr.add_argument("--model")
    tr.add_argument("--seeds", help="run seed (first entry used)")
    tr.add_argument("--inject-scores", help="comma list of per-frame scores; no dataset needed")
    tr.add_argument("--dump-frames", type=int, help="write the first N frames as PPM")
    return parser


COMMANDS = {
    "gen": cmd_gen,
    "derive-scores": cmd_derive,
    "train": cmd_train,
    "run": cmd_run,
    "report": cmd_report,
    "trace": cmd_trace,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        cfg = apply_overrides(cfg, args)
        if args.print_config:
            print(json.dumps(cfg.to_dict(), sort_keys=True, indent=1))
            return EXIT_OK
        if args.command is None:
            parser.print_usage(sys.stderr)
            return EXIT_USAGE
        return COMMANDS[args.command](cfg, args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
