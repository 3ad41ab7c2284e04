"""Grasp selection: orientation sampling, back-projection, mean shift,
edge scoring, two-view triangulation, and thin-disc circle fitting."""

import numpy as np
import pytest

from shapelight.core.camera import look_at_camera
from shapelight.core.image import EdgeMap, ImageF
from shapelight.errors import (
    NoFeasibleGrasp,
    RejectionExhausted,
    TooFewEdgePixels,
    WindowOutOfBounds,
    ZeroMass,
)
from shapelight.grasp import (
    GraspCandidate,
    PatchWindow,
    backproject_probability,
    camshift_largest_patch,
    detect_disc,
    edge_score,
    minimum_enclosing_circle,
    sample_gripper_orientations,
    select_grasp,
)
from shapelight.normals import NormalMap
from shapelight.synth import frame_scene, make_scene, render_ground_truth

Z = np.array([0.0, 0.0, 1.0])


def empty_edges(shape):
    return EdgeMap(np.zeros(shape))


def constant_normals(shape, n, valid=None):
    v = np.zeros(shape + (3,))
    v[:] = np.asarray(n, dtype=float)
    return NormalMap(v, valid=valid)


class TestSampleOrientations:
    def test_tiny_sigma_recovers_pick_dir(self):
        d = np.array([0.3, -0.2, 0.93])
        d /= np.linalg.norm(d)
        s = sample_gripper_orientations(d, 50, 1e-9, rng=np.random.default_rng(0))
        assert np.abs(s - d).max() < 1e-6
        assert np.allclose(np.linalg.norm(s, axis=1), 1.0)

    def test_mean_direction(self):
        s = sample_gripper_orientations(Z, 1000, 0.2, rng=np.random.default_rng(1))
        mean = s.mean(axis=0)
        mean /= np.linalg.norm(mean)
        assert np.degrees(np.arccos(mean @ Z)) < 2.0

    def test_table_clearance(self):
        s = sample_gripper_orientations(
            np.array([1.0, 0.0, 0.0]),
            2000,
            0.3,
            table_clearance=True,
            rng=np.random.default_rng(2),
        )
        assert s[:, 2].min() >= -np.sin(np.radians(5.0)) - 1e-12

    def test_rejection_exhausted_downward(self):
        with pytest.raises(RejectionExhausted):
            sample_gripper_orientations(
                -Z, 10, 0.05, table_clearance=True, rng=np.random.default_rng(3)
            )

    def test_parameter_validation(self):
        with pytest.raises(ValueError):
            sample_gripper_orientations(Z, 0, 0.1)
        with pytest.raises(ValueError):
            sample_gripper_orientations(Z, 5, 0.0)
        with pytest.raises(ValueError):
            sample_gripper_orientations(np.zeros(3), 5, 0.1)


class TestBackprojection:
    def test_aligned_normals_score_one(self):
        nm = constant_normals((8, 8), Z)
        s = sample_gripper_orientations(Z, 200, 0.01, rng=np.random.default_rng(4))
        prob = backproject_probability(nm, s)
        assert np.all(prob.samples > 0.99)

    def test_orthogonal_normals_score_zero(self):
        nm = constant_normals((8, 8), (1.0, 0.0, 0.0))
        s = sample_gripper_orientations(Z, 200, 0.01, rng=np.random.default_rng(5))
        assert backproject_probability(nm, s).samples.max() == 0.0

    def test_invalid_pixels_score_zero(self):
        valid = np.zeros((6, 6), bool)
        valid[2:4, 2:4] = True
        nm = constant_normals((6, 6), Z, valid=valid)
        s = sample_gripper_orientations(Z, 100, 0.01, rng=np.random.default_rng(6))
        prob = backproject_probability(nm, s)
        assert prob.samples[~valid].max() == 0.0
        assert prob.samples[valid].min() > 0.99

    def test_tolerance_monotone(self):
        rng = np.random.default_rng(7)
        nm = NormalMap(rng.normal(size=(10, 10, 3)))
        s = sample_gripper_orientations(Z, 150, 0.4, rng=rng)
        p_narrow = backproject_probability(nm, s, tol_deg=10.0).samples
        p_wide = backproject_probability(nm, s, tol_deg=30.0).samples
        assert np.all(p_wide >= p_narrow)

    def test_pyramid_faces(self):
        scene = make_scene("pyramid", albedo=0.95, ground=True)
        cam = frame_scene(scene, px_per_mm=3.0)
        gt = render_ground_truth(scene, cam)
        s = sample_gripper_orientations(Z, 300, 0.05, rng=np.random.default_rng(8))
        prob = backproject_probability(gt.normals, s)
        nz = gt.normals.vectors[..., 2]
        top = gt.silhouette & (nz > 0.999)
        walls = gt.silhouette & (nz > 0.1) & (nz < 0.9)
        assert walls.sum() > 100 and top.sum() > 100
        assert prob.samples[top].mean() > 0.9
        assert prob.samples[walls].mean() < 0.1


class TestCamshift:
    def test_rectangle_moments(self):
        p = np.zeros((60, 80))
        p[20:34, 30:60] = 1.0  # 14 tall, 30 wide
        win = camshift_largest_patch(ImageF(p))
        assert np.allclose(win.center, [44.5, 26.5], atol=0.5)
        assert abs(win.orientation) % np.pi < 0.02  # long axis along +u
        assert np.allclose(win.half_extents, [15.0, 7.0], atol=1.0)
        assert win.iterations < 100

    def test_largest_of_two_blobs(self):
        p = np.zeros((50, 100))
        p[10:30, 10:30] = 1.0  # 400 px
        p[20:30, 70:80] = 1.0  # 100 px
        win = camshift_largest_patch(ImageF(p))
        assert np.allclose(win.center, [19.5, 19.5], atol=1.0)

    def test_uniform_image_centers(self):
        win = camshift_largest_patch(ImageF(np.full((41, 61), 0.5)))
        assert np.allclose(win.center, [30.0, 20.0], atol=0.5)

    def test_rotated_rectangle_orientation(self):
        h, w = 80, 80
        vv, uu = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
        ang = np.radians(30.0)
        du, dv = uu - 40.0, vv - 40.0
        along = du * np.cos(ang) + dv * np.sin(ang)
        across = -du * np.sin(ang) + dv * np.cos(ang)
        p = ((np.abs(along) <= 25) & (np.abs(across) <= 8)).astype(float)
        win = camshift_largest_patch(ImageF(p))
        got = np.degrees(win.orientation) % 180.0
        assert min(abs(got - 30.0), abs(got - 210.0)) < 2.0
        assert win.half_extents[0] > win.half_extents[1]

    def test_zero_mass(self):
        with pytest.raises(ZeroMass):
            camshift_largest_patch(ImageF(np.zeros((20, 20))))


class TestEdgeScore:
    def test_no_edges_scores_zero(self):
        win = PatchWindow((20.0, 20.0), (8.0, 8.0), 0.0)
        assert edge_score(win, empty_edges((40, 40))) == 0.0

    def test_full_coverage_maximal_density(self):
        win = PatchWindow((20.0, 20.0), (8.0, 8.0), 0.0)
        full = EdgeMap(np.ones((40, 40)), binary=np.ones((40, 40), bool))
        s = edge_score(win, full, w0=1.0, w1=0.5)
        assert s >= 1.0  # density term saturated at w0
        assert s <= 1.5

    def test_straddling_ridge_scores_higher(self):
        binary = np.zeros((40, 60), bool)
        binary[:, 30] = True
        edges = EdgeMap(binary.astype(float), binary=binary)
        clean = PatchWindow((15.0, 20.0), (8.0, 8.0), 0.0)
        straddle = PatchWindow((30.0, 20.0), (8.0, 8.0), 0.0)
        assert edge_score(clean, edges) == 0.0
        assert edge_score(straddle, edges) > edge_score(clean, edges)

    def test_out_of_bounds(self):
        win = PatchWindow((3.0, 20.0), (8.0, 8.0), 0.0)
        with pytest.raises(WindowOutOfBounds):
            edge_score(win, empty_edges((40, 40)))


class TestMinimumEnclosingCircle:
    def test_equilateral_triangle(self):
        ang = np.radians([90.0, 210.0, 330.0])
        pts = np.stack([np.cos(ang), np.sin(ang)], axis=1) * 10.0 + [3.0, 7.0]
        c, r = minimum_enclosing_circle(pts)
        assert np.allclose(c, [3.0, 7.0], atol=1e-9)
        assert r == pytest.approx(10.0, abs=1e-9)

    def test_collinear_degenerates_to_diameter(self):
        pts = np.array([[0.0, 0.0], [1.0, 1.0], [4.0, 4.0], [2.5, 2.5]])
        c, r = minimum_enclosing_circle(pts)
        assert np.allclose(c, [2.0, 2.0], atol=1e-9)
        assert r == pytest.approx(np.sqrt(8.0), abs=1e-9)

    def test_single_and_pair(self):
        c, r = minimum_enclosing_circle(np.array([[5.0, -2.0]]))
        assert np.allclose(c, [5.0, -2.0]) and r == 0.0
        c, r = minimum_enclosing_circle(np.array([[0.0, 0.0], [0.0, 6.0]]))
        assert np.allclose(c, [0.0, 3.0]) and r == pytest.approx(3.0)

    @pytest.mark.parametrize("seed,n", [(0, 20), (1, 57), (2, 133), (3, 200)])
    def test_matches_brute_force(self, seed, n):
        rng = np.random.default_rng(seed)
        pts = rng.uniform(-50, 50, (n, 2))
        c, r = minimum_enclosing_circle(pts)
        cb, rb = self._brute_force(pts)
        assert r == pytest.approx(rb, rel=1e-9)
        assert np.allclose(c, cb, atol=1e-6)

    @pytest.mark.parametrize("seed", [4, 5, 6])
    def test_contains_all_points(self, seed):
        rng = np.random.default_rng(seed)
        pts = rng.normal(scale=30.0, size=(500, 2))
        c, r = minimum_enclosing_circle(pts)
        assert np.linalg.norm(pts - c, axis=1).max() <= r + 1e-9 * 30.0

    @staticmethod
    def _brute_force(pts):
        n = len(pts)
        eps = 1e-9 * max(np.abs(pts).max(), 1.0)
        centers = []
        radii = []
        ii, jj = np.triu_indices(n, k=1)
        mid = 0.5 * (pts[ii] + pts[jj])
        centers.append(mid)
        radii.append(np.linalg.norm(pts[ii] - mid, axis=1))
        # circumcircles of all non-collinear triples
        tri = np.array(
            [(i, j, k) for i in range(n) for j in range(i + 1, n) for k in range(j + 1, n)]
        )
        if len(tri):
            a, b, c3 = pts[tri[:, 0]], pts[tri[:, 1]], pts[tri[:, 2]]
            d = 2.0 * (
                (a[:, 0] - c3[:, 0]) * (b[:, 1] - c3[:, 1])
                - (b[:, 0] - c3[:, 0]) * (a[:, 1] - c3[:, 1])
            )
            ok = np.abs(d) > 1e-12
            a, b, c3, d = a[ok], b[ok], c3[ok], d[ok]
            aa = (a**2).sum(axis=1)
            bb = (b**2).sum(axis=1)
            cc = (c3**2).sum(axis=1)
            ux = ((aa - cc) * (b[:, 1] - c3[:, 1]) - (bb - cc) * (a[:, 1] - c3[:, 1])) / d
            uy = ((bb - cc) * (a[:, 0] - c3[:, 0]) - (aa - cc) * (b[:, 0] - c3[:, 0])) / d
            cen = np.stack([ux, uy], axis=1)
            centers.append(cen)
            radii.append(np.linalg.norm(a - cen, axis=1))
        centers = np.concatenate(centers)
        radii = np.concatenate(radii)
        best_r = np.inf
        best_c = None
        for lo in range(0, len(centers), 20000):
            cen = centers[lo : lo + 20000]
            rad = radii[lo : lo + 20000]
            dmax = np.sqrt(
                ((pts[None, :, :] - cen[:, None, :]) ** 2).sum(axis=2)
            ).max(axis=1)
            valid = dmax <= rad + eps
            if valid.any():
                k = np.argmin(np.where(valid, rad, np.inf))
                if rad[k] < best_r:
                    best_r = rad[k]
                    best_c = cen[k]
        return best_c, best_r


@pytest.fixture(scope="module")
def pyramid_views():
    scene = make_scene("pyramid", albedo=0.95, ground=True)
    cam1 = frame_scene(scene, px_per_mm=3.0)
    cam2 = frame_scene(scene, elevation_deg=42.0, azimuth_deg=-90.0, px_per_mm=3.0)
    gts = [render_ground_truth(scene, c) for c in (cam1, cam2)]
    views = []
    for gt in gts:
        nm = NormalMap(gt.normals.vectors, valid=gt.normals.valid & gt.silhouette)
        views.append((nm, empty_edges(nm.shape)))
    return views, (cam1, cam2), gts


class TestSelectGrasp:
    def test_pyramid_top_face(self, pyramid_views):
        views, cams, gts = pyramid_views
        dirs = [
            np.array(d, dtype=float)
            for d in [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1)]
        ]
        cand = select_grasp(views, cams, dirs, rng=np.random.default_rng(9))
        assert cand.accepted
        ang = np.degrees(np.arccos(np.clip(cand.approach_normal @ Z, -1, 1)))
        assert ang < 5.0
        # default frustum: 100mm base, 55mm tall, 40mm flat top
        top_centroid = np.array([0.0, 0.0, 55.0])
        assert np.linalg.norm(cand.grasp_point - top_centroid) < 3.0
        # every pixel of the window sits on the flat top face
        for win, gt in zip(cand.windows, gts):
            inside = win.pixel_mask(gt.normals.shape)
            top = gt.silhouette & (gt.normals.vectors[..., 2] > 0.999)
            from scipy.ndimage import binary_dilation

            assert not (inside & ~binary_dilation(top, iterations=2)).any()

    def test_empty_scene(self):
        nm = NormalMap(np.zeros((20, 20, 3)), valid=np.zeros((20, 20), bool))
        cam1 = look_at_camera((0, 0, 400.0), (0, 0, 0), 600.0, width=20, height=20)
        cam2 = look_at_camera((0, 300, 300.0), (0, 0, 0), 600.0, width=20, height=20)
        with pytest.raises(NoFeasibleGrasp):
            select_grasp(
                [(nm, empty_edges((20, 20)))] * 2,
                (cam1, cam2),
                [Z],
                rng=np.random.default_rng(10),
            )

    def test_deterministic_under_seed(self, pyramid_views):
        views, cams, _ = pyramid_views
        dirs = [Z]
        a = select_grasp(views, cams, dirs, rng=np.random.default_rng(11))
        b = select_grasp(views, cams, dirs, rng=np.random.default_rng(11))
        assert np.array_equal(a.grasp_point, b.grasp_point)
        assert a.flatness_mass == b.flatness_mass

    def test_edgy_scene_rejected(self, pyramid_views):
        views, cams, _ = pyramid_views
        noisy = []
        for nm, _ in views:
            binary = np.zeros(nm.shape, bool)
            binary[::3, :] = True  # a third of every window is edges
            noisy.append((nm, EdgeMap(binary.astype(float), binary=binary)))
        with pytest.raises(NoFeasibleGrasp):
            select_grasp(noisy, cams, [Z], rng=np.random.default_rng(12))

    def test_vertical_face_picks_horizontal_direction(self):
        scene = make_scene("octagon_prism", albedo=0.95, ground=True)
        # octagon vertices sit on the axes, so faces point 22.5 deg off-axis
        wall = np.array([np.cos(np.radians(22.5)), np.sin(np.radians(22.5)), 0.0])
        apothem = 50.0 * np.cos(np.radians(22.5))
        face_center = apothem * wall + np.array([0.0, 0.0, 14.5])
        tangent = np.array([-wall[1], wall[0], 0.0])
        eye1 = face_center + 450.0 * wall - 80.0 * tangent + np.array([0, 0, 30.0])
        eye2 = face_center + 450.0 * wall + 80.0 * tangent + np.array([0, 0, 30.0])
        cam1 = look_at_camera(eye1, face_center, 1800.0, width=260, height=200)
        cam2 = look_at_camera(eye2, face_center, 1800.0, width=260, height=200)
        views = []
        for cam in (cam1, cam2):
            gt = render_ground_truth(scene, cam)
            nm = NormalMap(gt.normals.vectors, valid=gt.normals.valid & gt.silhouette)
            views.append((nm, empty_edges(nm.shape)))
        cand = select_grasp(
            views,
            (cam1, cam2),
            [Z, wall],
            rng=np.random.default_rng(13),
        )
        assert cand.approach_normal @ wall > np.cos(np.radians(10.0))
        # prism is 29mm tall, wall centroid sits at mid-height
        assert abs(cand.grasp_point[2] - 14.5) < 4.0
        assert np.linalg.norm(cand.grasp_point[:2] - face_center[:2]) < 6.0


class TestGraspCandidateInvariant:
    def test_accepted_requires_passing_numbers(self):
        win = PatchWindow((5.0, 5.0), (3.0, 3.0), 0.0)
        with pytest.raises(ValueError):
            GraspCandidate(
                windows=(win, win),
                grasp_point=np.zeros(3),
                approach_normal=Z,
                flatness_mass=10.0,
                edge_score=0.5,
                edge_threshold=0.04,
                triangulation_residual_mm=0.1,
                accepted=True,
            )
        with pytest.raises(ValueError):
            GraspCandidate(
                windows=(win, win),
                grasp_point=np.zeros(3),
                approach_normal=Z,
                flatness_mass=10.0,
                edge_score=0.01,
                edge_threshold=0.04,
                triangulation_residual_mm=5.0,
                accepted=True,
            )
        c = GraspCandidate(
            windows=(win, win),
            grasp_point=np.zeros(3),
            approach_normal=2.0 * Z,
            flatness_mass=10.0,
            edge_score=0.01,
            edge_threshold=0.04,
            triangulation_residual_mm=0.5,
            accepted=True,
        )
        assert np.allclose(c.approach_normal, Z)
        d = c.to_dict()
        assert d["accepted"] and len(d["windows"]) == 2


@pytest.fixture(scope="module")
def disc_views():
    scene = make_scene("disc", albedo=0.95, ground=True)
    cam1 = frame_scene(scene, px_per_mm=7.0)
    cam2 = frame_scene(scene, elevation_deg=60.0, azimuth_deg=-90.0, px_per_mm=7.0)
    gt1 = render_ground_truth(scene, cam1)
    gt2 = render_ground_truth(scene, cam2, edge_tau=1.5)
    e1 = EdgeMap(gt1.occlusion_edges.astype(float), binary=gt1.occlusion_edges)
    e2 = EdgeMap(gt2.occlusion_edges.astype(float), binary=gt2.occlusion_edges)
    return e1, e2, (cam1, cam2)


class TestDetectDisc:
    def test_disc_center_and_radius(self, disc_views):
        e1, e2, cams = disc_views
        det = detect_disc(e1, e2, cams)
        for r in det.radius_px:
            assert abs(r - 175.0) <= 3.0
        disc_centroid = np.array([0.0, 0.0, 3.15 / 2.0])
        assert np.linalg.norm(det.center_mm - disc_centroid) < 2.0

    def test_too_few_pixels(self, disc_views):
        e1, _, cams = disc_views
        sparse = EdgeMap(np.zeros((10, 10)))
        with pytest.raises(TooFewEdgePixels):
            detect_disc(sparse, e1, cams)

    def test_triangle_circumcircle_via_views(self):
        # 3 pixels forming an equilateral triangle: circle center = centroid
        ang = np.radians([90.0, 210.0, 330.0])
        pts = np.stack([np.cos(ang), np.sin(ang)], axis=1) * 30.0 + [60.0, 60.0]
        binary = np.zeros((120, 120), bool)
        for u, v in np.rint(pts).astype(int):
            binary[v, u] = True
        edges = EdgeMap(binary.astype(float), binary=binary)
        cam1 = look_at_camera((0, 0, 400.0), (0, 0, 0), 600.0, width=120, height=120)
        cam2 = look_at_camera((0, 250, 320.0), (0, 0, 0), 600.0, width=120, height=120)
        det = detect_disc(edges, edges, (cam1, cam2))
        assert np.allclose(det.center_px[0], np.rint(pts).mean(axis=0), atol=1.0)
        assert abs(det.radius_px[0] - 30.0) < 1.5
