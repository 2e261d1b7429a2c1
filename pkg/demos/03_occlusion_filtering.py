"""Occlusion filtering with projected lidar depths.

A bus-sized box sits between the camera and two of four poles.  All lidar
points are projected into the image; each pole's true camera distance is
compared against the average depth of the samples around its base pixel.
"""

import numpy as np

from polemap.frames import Pose
from polemap.occlusion import build_depth_samples, visibility
from polemap.synth import (BoxObstacle, GroundPatch, LidarSpec, PoleSpec,
                           SceneSpec, SensorRig, generate_scene,
                           level_lidar_mount, pitched_camera, simulate_lidar,
                           true_annotations)

rig = SensorRig(
    vehicle_height=1.2,
    camera=pitched_camera(900.0, 900.0, 1280, 720, (0.4, 0.0, 0.4), 14.0),
    vehicle_to_lidar=level_lidar_mount((0.8, 0.0, 1.8)),
)
scan = LidarSpec(channels=60, vertical_fov_deg=(-30.0, -4.0),
                 horizontal_resolution_deg=0.5, max_range=60.0)
pose = Pose(0.0, 0.0, 0.0)

bus = BoxObstacle((12.0, -3.5, 0.0), (14.5, 1.5, 2.9))
poles = (PoleSpec(22.0, -2.0, 4.0, 0.15),   # hidden behind the bus
         PoleSpec(26.0, 0.5, 4.0, 0.15),    # also hidden
         PoleSpec(18.0, 5.0, 4.0, 0.15),    # clear view
         PoleSpec(9.0, -5.5, 4.0, 0.15))    # clear view, close
scene = generate_scene(SceneSpec(ground=(GroundPatch.flat(0.0),),
                                 poles=poles, obstacles=(bus,)))

cloud, _ = simulate_lidar(scene, rig.lidar_to_world(pose), scan)
samples = build_depth_samples(
    cloud, rig.camera.extrinsics.compose(rig.vehicle_to_lidar.inverse()),
    rig.camera)
print(f"{len(samples)} lidar samples landed in the image\n")

truth = true_annotations(scene, rig.camera_to_world(pose), rig.camera)
cam_center = rig.camera_to_world(pose).translation
print(f"{'pole':>6} {'true dist':>10} {'local depth':>12} "
      f"{'verdict':>10} {'ray-cast truth':>15}")
for i, row in enumerate(truth.poles):
    if row.pixel is None:
        continue
    distance = float(np.linalg.norm(np.asarray(row.base) - cam_center))
    verdict = visibility(row.pixel, distance, samples,
                         radius_px=20.0, depth_diff_threshold=5.0)
    local = ("-" if verdict.local_depth is None
             else f"{verdict.local_depth:.1f} m")
    print(f"{i:>6} {distance:8.1f} m {local:>12} "
          f"{verdict.state.value:>10} "
          f"{'visible' if row.visible else 'occluded':>15}")
