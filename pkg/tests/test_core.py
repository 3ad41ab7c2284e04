"""Shared geometric and image primitives."""

import numpy as np
import pytest

from shapelight.core import io
from shapelight.core.camera import CameraModel, look_at_camera, triangulate
from shapelight.core.image import EdgeMap, ImageF
from shapelight.core.rasterops import (
    euclidean_distance_transform,
    hysteresis_threshold,
    nearest_true_indices,
)
from shapelight.core.transforms import (
    RigidTransform2D,
    RigidTransform3D,
    rot_x,
    rot_z,
    wrap_angle,
)
from shapelight.errors import (
    AllFalse,
    BadThresholds,
    DegenerateRays,
    PointBehindCamera,
    ShapeMismatch,
)


def identity_cam(fx=1000.0, cx=500.0, cy=500.0, w=1000, h=1000):
    return CameraModel(
        fx=fx, fy=fx, cx=cx, cy=cy, width=w, height=h,
        pose=RigidTransform3D.identity(),
    )


# --------------------------------------------------------------------- ImageF
class TestImageF:
    def test_shape_and_channels(self):
        im = ImageF(np.zeros((4, 6)))
        assert im.height == 4 and im.width == 6 and im.channels == 1
        assert im.valid.all()

    def test_single_channel_third_axis_is_squeezed(self):
        im = ImageF(np.zeros((4, 6, 1)))
        assert im.channels == 1 and im.samples.shape == (4, 6)

    def test_bad_channel_count_rejected(self):
        with pytest.raises(ShapeMismatch):
            ImageF(np.zeros((4, 6, 2)))

    def test_valid_mask_shape_checked(self):
        with pytest.raises(ShapeMismatch):
            ImageF(np.zeros((4, 6)), valid=np.ones((4, 5), dtype=bool))

    def test_bilinear_hits_centers_exactly(self):
        rng = np.random.default_rng(0)
        im = ImageF(rng.random((5, 7)))
        uu, vv = np.meshgrid(np.arange(7), np.arange(5))
        assert np.allclose(im.sample_bilinear(uu, vv), im.samples)

    def test_bilinear_midpoint(self):
        im = ImageF(np.array([[0.0, 1.0], [2.0, 3.0]]))
        assert im.sample_bilinear(0.5, 0.5) == pytest.approx(1.5)

    def test_bilinear_reproduces_affine_fields(self):
        # a bilinear interpolant is exact on functions linear in u and v
        uu, vv = np.meshgrid(np.arange(9, dtype=float), np.arange(8, dtype=float))
        im = ImageF(2.0 * uu - 0.5 * vv + 3.0)
        rng = np.random.default_rng(1)
        qu = rng.uniform(0, 8, 50)
        qv = rng.uniform(0, 7, 50)
        assert np.allclose(im.sample_bilinear(qu, qv), 2.0 * qu - 0.5 * qv + 3.0)


class TestEdgeMap:
    def test_confidence_range_enforced(self):
        with pytest.raises(ValueError):
            EdgeMap(ImageF(np.full((3, 3), 1.5)))

    def test_pixels_are_uv(self):
        b = np.zeros((3, 4), dtype=bool)
        b[1, 2] = True
        em = EdgeMap(ImageF(np.zeros((3, 4))), binary=b)
        assert em.pixels.tolist() == [[2, 1]]


# ----------------------------------------------------------------- transforms
class TestTransforms:
    def test_wrap_angle_range(self):
        assert wrap_angle(np.pi) == pytest.approx(np.pi)
        assert wrap_angle(-np.pi) == pytest.approx(np.pi)
        assert wrap_angle(3 * np.pi + 0.1) == pytest.approx(0.1 - np.pi, abs=1e-12)

    def test_non_orthonormal_rotation_rejected(self):
        R = np.eye(3)
        R[0, 0] = 1.01
        with pytest.raises(ValueError):
            RigidTransform3D(R, np.zeros(3))

    def test_reflection_rejected(self):
        R = np.diag([1.0, 1.0, -1.0])
        with pytest.raises(ValueError):
            RigidTransform3D(R, np.zeros(3))

    def test_inverse_compose_roundtrip(self):
        rng = np.random.default_rng(2)
        T = RigidTransform3D(rot_z(0.7) @ rot_x(-0.3), rng.normal(size=3))
        pts = rng.normal(size=(10, 3))
        assert np.allclose(T.inverse().apply(T.apply(pts)), pts, atol=1e-12)
        I = T.compose(T.inverse())
        assert np.allclose(I.R, np.eye(3), atol=1e-12)
        assert np.allclose(I.t, 0, atol=1e-12)

    def test_compose_order_matches_apply(self):
        rng = np.random.default_rng(3)
        A = RigidTransform3D(rot_z(0.5), np.array([1.0, 2.0, 3.0]))
        B = RigidTransform3D(rot_x(0.8), np.array([-1.0, 0.5, 0.0]))
        p = rng.normal(size=3)
        assert np.allclose(A.compose(B).apply(p), A.apply(B.apply(p)))

    def test_2d_matches_3d_embedding(self):
        T = RigidTransform2D(4.0, -2.0, 0.6)
        p2 = np.array([[3.0, 5.0]])
        p3 = np.array([[3.0, 5.0, 7.0]])
        q3 = T.to_3d().apply(p3)
        assert np.allclose(T.apply(p2)[0], q3[0, :2])
        assert q3[0, 2] == pytest.approx(7.0)  # planar motion keeps z

    def test_2d_theta_wrapped(self):
        T = RigidTransform2D(0.0, 0.0, 2 * np.pi + 0.25)
        assert T.theta == pytest.approx(0.25)

    def test_json_roundtrip(self, tmp_path):
        T = RigidTransform3D(rot_z(1.1), np.array([0.5, -9.0, 3.25]))
        p = tmp_path / "t.json"
        T.save_json(p)
        U = RigidTransform3D.load_json(p)
        assert np.allclose(T.R, U.R) and np.allclose(T.t, U.t)


# --------------------------------------------------------------------- camera
class TestProjection:
    def test_optical_axis(self):
        cam = identity_cam()
        px = cam.project(np.array([0.0, 0.0, 1000.0]), frame="camera")
        assert np.allclose(px, [500.0, 500.0])

    def test_similar_triangles(self):
        cam = identity_cam()
        px = cam.project(np.array([100.0, 0.0, 1000.0]), frame="camera")
        assert np.allclose(px, [600.0, 500.0])

    def test_behind_camera_raises(self):
        cam = identity_cam()
        with pytest.raises(PointBehindCamera):
            cam.project(np.array([0.0, 0.0, -5.0]), frame="camera")

    def test_project_backproject_roundtrip(self):
        cam = look_at_camera(
            eye=(120.0, -80.0, 400.0), target=(0.0, 0.0, 0.0), fx=2400.0,
            width=801, height=601,
        )
        rng = np.random.default_rng(4)
        pts = rng.uniform(-40, 40, size=(1000, 3))
        px = cam.project(pts)
        depth = cam.to_camera(pts)[:, 2]
        back = cam.back_project(px, depth)
        scale = np.maximum(np.linalg.norm(pts, axis=1), 1.0)
        assert np.max(np.linalg.norm(back - pts, axis=1) / scale) < 1e-9

    def test_json_roundtrip(self, tmp_path):
        cam = look_at_camera(
            eye=(0.0, 10.0, 300.0), target=(0.0, 0.0, 0.0), fx=1500.0,
            width=640, height=480,
        )
        p = tmp_path / "cam.json"
        cam.save_json(p)
        cam2 = CameraModel.load_json(p)
        assert cam2.fx == cam.fx and cam2.width == cam.width
        assert np.allclose(cam2.pose.R, cam.pose.R)
        assert np.allclose(cam2.pose.t, cam.pose.t)


class TestTriangulate:
    def two_cams(self):
        c1 = look_at_camera((-100.0, 0.0, 500.0), (0.0, 0.0, 0.0), 1000.0, 801, 601)
        c2 = look_at_camera((100.0, 0.0, 500.0), (0.0, 0.0, 0.0), 1000.0, 801, 601)
        return c1, c2

    def test_exact_rays_recover_point(self):
        c1, c2 = self.two_cams()
        p = np.array([0.0, 0.0, 50.0])
        pt, res = triangulate(c1, c1.project(p), c2, c2.project(p))
        assert np.allclose(pt, p, atol=1e-9)
        assert res == pytest.approx(0.0, abs=1e-9)

    def test_one_pixel_perturbation_small_error(self):
        c1, c2 = self.two_cams()
        p = np.array([0.0, 0.0, 0.0])  # ~500mm range
        px2 = c2.project(p) + np.array([1.0, 0.0])
        pt, res = triangulate(c1, c1.project(p), c2, px2)
        assert res > 0
        assert np.linalg.norm(pt - p) < 2.0

    def test_parallel_rays_raise(self):
        cam = identity_cam()
        with pytest.raises(DegenerateRays):
            triangulate(cam, (500.0, 500.0), cam, (500.0, 500.0))

    def test_symmetric_in_arguments(self):
        c1, c2 = self.two_cams()
        p = np.array([12.0, -7.0, 30.0])
        px1, px2 = c1.project(p), c2.project(p) + np.array([0.4, -0.2])
        a, ra = triangulate(c1, px1, c2, px2)
        b, rb = triangulate(c2, px2, c1, px1)
        assert np.allclose(a, b, atol=1e-9)
        assert ra == pytest.approx(rb, abs=1e-9)


# ------------------------------------------------------------------ rasterops
def brute_force_edt(mask):
    h, w = mask.shape
    ys, xs = np.nonzero(mask)
    out = np.empty((h, w))
    for r in range(h):
        for c in range(w):
            out[r, c] = np.sqrt(((ys - r) ** 2 + (xs - c) ** 2).min())
    return out


class TestDistanceTransform:
    def test_single_seed(self):
        m = np.zeros((11, 11), dtype=bool)
        m[5, 5] = True
        d = euclidean_distance_transform(m)
        assert d[5, 5] == 0.0
        assert d[5, 6] == pytest.approx(1.0)
        assert d[6, 6] == pytest.approx(np.sqrt(2.0))

    def test_all_true_is_zero(self):
        d = euclidean_distance_transform(np.ones((8, 9), dtype=bool))
        assert np.all(d == 0.0)

    def test_empty_raises(self):
        with pytest.raises(AllFalse):
            euclidean_distance_transform(np.zeros((4, 4), dtype=bool))

    @pytest.mark.parametrize("seed", range(6))
    def test_matches_brute_force(self, seed):
        rng = np.random.default_rng(seed)
        h, w = rng.integers(1, 65, size=2)
        m = rng.random((h, w)) < 0.07
        if not m.any():
            m[rng.integers(h), rng.integers(w)] = True
        assert np.allclose(euclidean_distance_transform(m), brute_force_edt(m))

    def test_nearest_indices_point_at_true_pixels(self):
        rng = np.random.default_rng(11)
        m = rng.random((40, 30)) < 0.05
        m[3, 4] = True
        dist, ir, ic = nearest_true_indices(m)
        assert m[ir, ic].all()
        ys, xs = np.meshgrid(np.arange(40), np.arange(30), indexing="ij")
        realized = np.hypot(ir - ys, ic - xs)
        assert np.allclose(realized, brute_force_edt(m))
        assert np.allclose(dist, realized)


class TestHysteresis:
    def test_uniform_zero_empty(self):
        out = hysteresis_threshold(np.zeros((5, 5)), 0.4, 0.8)
        assert not out.any()

    def test_chain_connected_to_seed(self):
        c = np.zeros((5, 7))
        c[2, 1] = 0.9
        c[2, 2] = c[3, 3] = c[2, 4] = 0.5  # 8-connected chain off the seed
        out = hysteresis_threshold(c, 0.4, 0.8)
        assert out[2, 1] and out[2, 2] and out[3, 3] and out[2, 4]
        assert out.sum() == 4

    def test_isolated_weak_pixel_dropped(self):
        c = np.zeros((5, 5))
        c[2, 2] = 0.5
        out = hysteresis_threshold(c, 0.4, 0.8)
        assert not out.any()

    def test_bad_thresholds(self):
        with pytest.raises(BadThresholds):
            hysteresis_threshold(np.zeros((3, 3)), 0.9, 0.1)

    def test_accepts_imagef(self):
        c = np.zeros((4, 4))
        c[1, 1] = 1.0
        out = hysteresis_threshold(ImageF(c), 0.2, 0.8)
        assert out[1, 1] and out.sum() == 1


# ------------------------------------------------------------------------- io
class TestFileIO:
    @pytest.mark.parametrize("channels", [1, 3, 6])
    def test_pfm_roundtrip(self, tmp_path, channels):
        rng = np.random.default_rng(channels)
        data = rng.standard_normal((13, 9, channels)).astype(np.float32)
        if channels == 1:
            data = data[:, :, 0]
        p = tmp_path / "x.pfm"
        io.write_pfm(p, data)
        back = io.read_pfm(p, channels=channels)
        assert back.shape == ((13, 9) if channels == 1 else (13, 9, channels))
        assert np.array_equal(back, np.float64(data))

    def test_pfm_odd_height_cannot_be_six_channel(self, tmp_path):
        p = tmp_path / "x.pfm"
        io.write_pfm(p, np.zeros((5, 4, 3), dtype=np.float32))
        with pytest.raises(ValueError):
            io.read_pfm(p, channels=6)

    def test_png16_roundtrip_quantization(self, tmp_path):
        rng = np.random.default_rng(5)
        img = rng.random((12, 7))
        p = tmp_path / "x.png"
        io.write_png16(p, img)
        back = io.read_png16(p).astype(np.float64) / 65535.0
        assert np.max(np.abs(back - img)) <= 0.5 / 65535 + 1e-12

    def test_mask_png_roundtrip(self, tmp_path):
        m = np.zeros((6, 6), dtype=bool)
        m[2:4, 1:5] = True
        p = tmp_path / "m.png"
        io.write_png16(p, m.astype(np.float64))
        assert np.array_equal(io.read_mask_png(p), m)

    def test_ply_roundtrip(self, tmp_path):
        rng = np.random.default_rng(6)
        pts = rng.normal(size=(25, 3))
        nrm = rng.normal(size=(25, 3))
        nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
        p = tmp_path / "c.ply"
        io.write_ply(p, pts, nrm)
        pts2, nrm2 = io.read_ply(p)
        assert np.allclose(pts2, pts, atol=1e-6)
        assert np.allclose(nrm2, nrm, atol=1e-6)

    def test_ply_without_normals(self, tmp_path):
        pts = np.array([[0.0, 1.0, 2.0], [3.0, 4.0, 5.0]])
        p = tmp_path / "c.ply"
        io.write_ply(p, pts)
        pts2, nrm2 = io.read_ply(p)
        assert np.allclose(pts2, pts, atol=1e-6)
        assert nrm2 is None

    def test_obj_roundtrip(self, tmp_path):
        verts = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
        faces = np.array([[0, 1, 2]])
        p = tmp_path / "m.obj"
        io.write_obj(p, verts, faces)
        v2, f2 = io.read_obj(p)
        assert np.allclose(v2, verts)
        assert np.array_equal(f2, faces)
