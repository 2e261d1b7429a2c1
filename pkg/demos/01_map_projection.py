"""Project HD-map landmarks into a camera image, step by step.

Walks a single feature through every frame the pipeline uses:
geodetic -> local ENU -> vehicle (planar pose) -> flat-ground height ->
camera -> pixel.
"""

import math

from polemap.frames import (GeodeticPoint, Pose, assign_fixed_height,
                            geodetic_to_enu, map_to_vehicle, project_to_image,
                            transform_point)
from polemap.synth import pitched_camera

origin = GeodeticPoint(49.4, 2.82)  # ENU anchor near the drive

# three mapped poles, as they would appear in a map.jsonl file: two ahead
# of the vehicle below, one behind it
landmarks = {
    "sign_a": GeodeticPoint(49.400135, 2.820245),
    "light_b": GeodeticPoint(49.400118, 2.820213),
    "bollard_c": GeodeticPoint(49.399945, 2.819985),
}

camera = pitched_camera(900.0, 900.0, 1280, 720, position=(0.4, 0.0, 0.4),
                        pitch_deg=12.0)
pose = Pose(x=5.0, y=2.0, theta=math.radians(35.0))
vehicle_height = 1.2  # meters between the vehicle frame and the road

print(f"vehicle at ({pose.x}, {pose.y}), heading "
      f"{math.degrees(pose.theta):.0f} deg ccw from east\n")
for name, geo in landmarks.items():
    enu = geodetic_to_enu(geo, origin)
    in_vehicle = map_to_vehicle(enu, pose)
    grounded = assign_fixed_height(in_vehicle, vehicle_height)
    in_camera = transform_point(grounded, camera.extrinsics)
    projected = project_to_image(in_camera, camera)
    print(f"{name:10s} enu=({enu.east:8.2f}, {enu.north:8.2f}) m  "
          f"vehicle=({grounded.x:7.2f}, {grounded.y:7.2f}, {grounded.z:5.2f})")
    print(f"{'':10s} -> {projected}")
