"""Template tracking: initialization, search, drift, and recovery.

Tracks a moving target from a single template through an occlusion event.
The normalized-correlation response is appearance-only: it holds position
while the target is hidden (score collapses, box freezes near the last
seen spot) and re-locks when the target re-emerges nearby.
"""

import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parent.parent / "src"))

from langtrack import synthworld as sw
from langtrack import tracker as tk
from langtrack.geometry import FrameBounds, iou


def main() -> None:
    objects = (
        sw.ObjectSpec(0, "ellipse", "green", 24.0,
                      sw.Trajectory(sw.TrajectoryKind.LINEAR, (50.0, 120.0), (1.8, 0.2))),
        sw.ObjectSpec(1, "triangle", "purple", 28.0,
                      sw.Trajectory(sw.TrajectoryKind.LINEAR, (190.0, 70.0), (-0.5, 0.6))),
    )
    events = (sw.DegradationEvent(sw.EventKind.OCCLUSION_BAND, 18, 25, 0.85),)
    scene = sw.SceneSpec(bounds=FrameBounds(256, 256), n_frames=40,
                         objects=objects, target_id=0, events=events, seed=9)
    sample = sw.VideoSample(scene, [sw.GeneratedQuery("the green ellipse", False)])

    config = tk.TrackerConfig(patch_size=12, search_radius=15, stride=3, scales=(1.0,))
    state = tk.init(sample.frame(0), sample.gt_box(0), config)
    print(f"template: {config.patch_size}x{config.patch_size}, "
          f"search radius {config.search_radius}px, stride {config.stride}")
    print(f"{'frame':>5s} {'score':>7s} {'iou':>6s}  note")
    for f in range(1, scene.n_frames):
        box, response = tk.track(sample.frame(f), state, config)
        occluded = any(e.kind == sw.EventKind.OCCLUSION_BAND and e.active(f)
                       for e in events)
        if f % 4 == 0 or occluded:
            note = "occluded" if occluded else ""
            print(f"{f:5d} {response.best_score:7.3f} "
                  f"{iou(box, sample.gt_box(f)):6.3f}  {note}")

    print("\nthe response map over the final frame (best candidate per row):")
    state2 = tk.init(sample.frame(0), sample.gt_box(0), config)
    _, response = tk.track(sample.frame(1), state2, config)
    n = len(response.scores)
    top = sorted(range(n), key=lambda i: response.scores[i], reverse=True)[:3]
    for rank, i in enumerate(top, 1):
        b = response.box(i)
        print(f"  #{rank}: score {response.scores[i]:.4f} at ({b.x:.0f},{b.y:.0f})")


if __name__ == "__main__":
    main()
