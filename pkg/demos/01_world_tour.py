"""Tour of the synthetic world: scenes, trajectories, events, rasters.

Builds one deterministic scene, prints what lives in it, then renders a few
frames to PPM so you can look at them (any image viewer opens PPM; or
`convert f0000.ppm f0000.png`).
"""

import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parent.parent / "src"))

from langtrack import synthworld as sw
from langtrack.geometry import FrameBounds

OUT = pathlib.Path(__file__).resolve().parent / "out" / "world"


def main() -> None:
    objects = (
        sw.ObjectSpec(0, "rectangle", "red", 26.0,
                      sw.Trajectory(sw.TrajectoryKind.LINEAR, (60.0, 80.0), (1.5, 0.4))),
        sw.ObjectSpec(1, "ellipse", "cyan", 20.0,
                      sw.Trajectory(sw.TrajectoryKind.SINUSOIDAL, (160.0, 60.0), (0.8, 0.0),
                                    amplitude=24.0)),
        sw.ObjectSpec(2, "triangle", "yellow", 32.0,
                      sw.Trajectory(sw.TrajectoryKind.RANDOM_WALK, (110.0, 150.0), (0.0, 0.0),
                                    step_scale=1.2)),
    )
    events = (
        sw.DegradationEvent(sw.EventKind.BLUR, start=20, end=32, magnitude=0.8),
        sw.DegradationEvent(sw.EventKind.OCCLUSION_BAND, start=40, end=48, magnitude=0.7),
    )
    scene = sw.SceneSpec(bounds=FrameBounds(256, 256), n_frames=60,
                         objects=objects, target_id=0, events=events, seed=11)
    sample = sw.VideoSample(scene, [sw.GeneratedQuery("the red rectangle", False)])

    print(f"scene: {len(objects)} objects, {scene.n_frames} frames, seed {scene.seed}")
    for o in objects:
        print(f"  #{o.id}: {o.color} {o.shape}, size {o.size}, {o.trajectory.kind.value}")
    for e in events:
        print(f"  event: {e.kind.value} frames [{e.start},{e.end}) magnitude {e.magnitude}")

    print("\ntarget ground truth (every 10th frame):")
    for f in range(0, scene.n_frames, 10):
        b = sample.gt_box(f)
        mag = sw.max_active_magnitude(scene, f)
        print(f"  f={f:3d} box=({b.x:6.1f},{b.y:6.1f},{b.w:4.1f},{b.h:4.1f}) "
              f"active-degradation={mag:.2f}")

    OUT.mkdir(parents=True, exist_ok=True)
    for f in (0, 25, 44):  # clean, blurred, occluded
        sw.write_ppm(OUT / f"f{f:04d}.ppm", sample.frame(f))
    print(f"\nwrote 3 frames under {OUT}")
    print("f0025 is blurred; f0044 has the dark occlusion band over the scene")


if __name__ == "__main__":
    main()
