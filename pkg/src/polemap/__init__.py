"""Map-aided pole-base annotation toolkit.

Projects 2D HD-map landmarks into camera images as pole-base points,
refines their height and filters occlusions with lidar, extracts the same
kind of points from segmentation masks, evaluates detector outputs against
them, and serves a human review loop over the generated labels.
"""

from .frames import (BehindCamera, CameraModel, EnuPoint2, GeodeticPoint,
                     OutOfImage, Pixel, Point3, Pose, RigidTransform,
                     assign_fixed_height, geodetic_to_enu, load_calibration,
                     map_to_vehicle, project_to_image, transform_point)
from .map_store import MapFeature, MapSet, load_map, query_radius
from .ground import (GroundSegmenterConfig, PointCloud,
                     PolarGridPlaneSegmenter, load_point_cloud,
                     refine_height, segment_ground)
from .occlusion import (DepthSampleMap, VisibilityState, VisibilityVerdict,
                        build_depth_samples, local_depth, visibility)
from .annotate import (Annotation, AnnotationParams, AuditRecord, Decision,
                       annotate_frame, export_dataset, make_box,
                       subsample_frames)
from .seg_extract import (ClassMergeSpec, PixelCluster, Rejected, SegMask,
                          extract_pole_base, find_clusters, merge_classes,
                          mask_to_annotations)
from .evaluate import (EvalReport, MatchResult, PredictionRecord,
                       average_precision, evaluate_detections,
                       horizontal_mae, iou, map_50_95, match_detections,
                       pr_curve, precision_recall)
from .synth import (BoxObstacle, GroundPatch, LidarSpec, PoleSpec, Scene,
                    SceneSpec, SceneTruth, SensorRig, generate_scene,
                    simulate_lidar, true_annotations)

__version__ = "0.1.0"
