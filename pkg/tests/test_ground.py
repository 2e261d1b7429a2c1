import math

import numpy as np
import pytest

from polemap.frames import Point3, Pose, RigidTransform
from polemap.ground import (GroundSegmenterConfig, PointCloud,
                            PolarGridPlaneSegmenter, load_point_cloud,
                            refine_height, save_point_cloud, segment_ground)
from polemap.synth import (GroundPatch, LidarSpec, PoleSpec, SceneSpec,
                           generate_scene, simulate_lidar)

from oracles import nearest_ground_index

LIDAR_UP = RigidTransform(np.eye(3), [0.0, 0.0, 2.0], "lidar", "world")
SCAN = LidarSpec(channels=48, vertical_fov_deg=(-40.0, -3.0),
                 horizontal_resolution_deg=1.0, max_range=80.0)


def simulate(scene_spec):
    scene = generate_scene(scene_spec)
    return simulate_lidar(scene, LIDAR_UP, SCAN)


class TestSegmentGround:
    def test_empty_cloud(self):
        labels = segment_ground(PointCloud(np.zeros((0, 3))))
        assert labels.shape == (0,)

    def test_flat_plane_with_pole(self):
        # plane at z=-2 below the sensor plus one pole of points; the truth
        # labels from the simulator are the oracle
        spec = SceneSpec(ground=(GroundPatch.flat(0.0),),
                         poles=(PoleSpec(8.0, 0.0, 3.0, 0.3),))
        cloud, truth = simulate(spec)
        labels = segment_ground(cloud)
        heights = cloud.points[:, 2] + 2.0  # height above the true plane
        obstacle = ~truth & (heights > 0.5)
        assert obstacle.sum() > 50
        assert not labels[obstacle].any()
        assert labels[truth].mean() > 0.99

    def test_sloped_plane_mostly_ground(self):
        spec = SceneSpec(ground=(GroundPatch.slope_x(0.0, 3.0, -2.0),),
                         poles=())
        cloud, truth = simulate(spec)
        cfg = GroundSegmenterConfig(max_slope_deg=5.0)
        labels = segment_ground(cloud, cfg)
        assert truth.all()
        assert labels.mean() >= 0.99

    def test_deterministic(self):
        spec = SceneSpec(ground=(GroundPatch.flat(0.0),),
                         poles=(PoleSpec(6.0, 2.0, 2.5, 0.2),
                                PoleSpec(12.0, -4.0, 4.0, 0.4)))
        cloud, _ = simulate(spec)
        a = segment_ground(cloud)
        b = segment_ground(PointCloud(cloud.points.copy()))
        assert (a == b).all()

    def test_pluggable_segmenter_interface(self):
        spec = SceneSpec(ground=(GroundPatch.flat(0.0),), poles=())
        cloud, truth = simulate(spec)

        def all_ground(c):
            return np.ones(len(c), dtype=bool)

        # any callable with the same shape contract drops in
        labels = all_ground(cloud)
        assert labels.shape == (len(cloud),)
        baseline = PolarGridPlaneSegmenter()(cloud)
        assert baseline.shape == labels.shape


class TestRefineHeight:
    def make_cloud(self, pts):
        return PointCloud(np.asarray(pts, dtype=float))

    def test_nearest_neighbor_forced(self):
        cloud = self.make_cloud([[1, 0, -1.4], [5, 5, -1.6]])
        labels = np.array([True, True])
        out = refine_height(Point3(1.2, 0.1, 0.0, "lidar"), cloud, labels)
        assert out.z == -1.4
        assert (out.x, out.y) == (1.2, 0.1)

    def test_no_ground_points(self):
        cloud = self.make_cloud([[1, 0, -1.4], [2, 0, -1.5]])
        labels = np.array([False, False])
        assert refine_height(Point3(0, 0, 0, "lidar"), cloud, labels) is None

    def test_beyond_max_distance(self):
        cloud = self.make_cloud([[50, 50, -1.0]])
        labels = np.array([True])
        out = refine_height(Point3(0, 0, 0, "lidar"), cloud, labels,
                            max_2d_distance=5.0)
        assert out is None

    def test_matches_brute_force(self):
        rng = np.random.default_rng(101)
        pts = rng.uniform([-40, -40, -3], [40, 40, 2], (10_000, 3))
        labels = rng.random(10_000) < 0.6
        cloud = self.make_cloud(pts)
        for _ in range(50):
            f = Point3(*rng.uniform(-40, 40, 2), 0.0, "lidar")
            expect = nearest_ground_index(pts.tolist(), labels.tolist(),
                                          f.x, f.y)
            got = refine_height(f, cloud, labels, max_2d_distance=1e9)
            assert got is not None
            k, _ = expect
            assert got.z == pts[k, 2]

    def test_selected_point_is_ground_labeled(self):
        rng = np.random.default_rng(103)
        pts = rng.uniform([-10, -10, -3], [10, 10, 3], (500, 3))
        labels = rng.random(500) < 0.5
        cloud = self.make_cloud(pts)
        f = Point3(0.0, 0.0, 0.0, "lidar")
        out = refine_height(f, cloud, labels, max_2d_distance=1e9)
        ground_z = set(pts[labels][:, 2].tolist())
        assert out.z in ground_z  # z comes from a ground point, never else

    def test_tie_breaks_by_lowest_index(self):
        cloud = self.make_cloud([[1.0, 0.0, -1.0], [-1.0, 0.0, -2.0],
                                 [0.0, 1.0, -3.0]])
        labels = np.array([True, True, True])
        out = refine_height(Point3(0.0, 0.0, 0.0, "lidar"), cloud, labels)
        assert out.z == -1.0

    def test_translation_equivariance(self):
        rng = np.random.default_rng(107)
        pts = rng.uniform([-20, -20, -2], [20, 20, 0], (300, 3))
        labels = rng.random(300) < 0.7
        f = Point3(1.5, -2.5, 0.0, "lidar")
        base = refine_height(f, PointCloud(pts), labels, 1e9)
        shift = np.array([13.0, -7.0, 0.0])
        moved = refine_height(Point3(f.x + 13.0, f.y - 7.0, 0.0, "lidar"),
                              PointCloud(pts + shift), labels, 1e9)
        assert moved.z == base.z

    def test_frame_mismatch_rejected(self):
        cloud = self.make_cloud([[0, 0, 0]])
        with pytest.raises(ValueError, match="frame"):
            refine_height(Point3(0, 0, 0, "vehicle"), cloud,
                          np.array([True]))


class TestPointCloudIO:
    def test_bin_round_trip(self, tmp_path):
        rng = np.random.default_rng(41)
        pts = rng.uniform(-50, 50, (257, 3)).astype(np.float32).astype(float)
        inten = rng.uniform(0, 1, 257).astype(np.float32).astype(float)
        cloud = PointCloud(pts, inten)
        path = tmp_path / "scan.bin"
        save_point_cloud(cloud, path)
        back = load_point_cloud(path)
        assert np.allclose(back.points, pts, atol=1e-6)
        assert np.allclose(back.intensity, inten, atol=1e-6)

    def test_csv_round_trip(self, tmp_path):
        cloud = PointCloud(np.array([[1.5, -2.25, 0.125]]),
                           np.array([0.5]))
        path = tmp_path / "scan.csv"
        save_point_cloud(cloud, path)
        back = load_point_cloud(path)
        assert np.allclose(back.points, cloud.points, atol=1e-6)

    def test_truncated_bin_rejected(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(b"\x00" * 10)
        with pytest.raises(ValueError):
            load_point_cloud(path)

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            PointCloud(np.array([[0.0, 0.0, np.nan]]))
