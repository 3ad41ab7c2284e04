"""Rendering oracle: primitives, shading, shadows, ground truth."""

import numpy as np
import pytest

from shapelight.core.camera import look_at_camera
from shapelight.core.transforms import RigidTransform3D, rot_z
from shapelight.errors import (
    AsymmetricMatrix,
    EmptyView,
    NonPositiveDimension,
    UnknownPrimitive,
)
from shapelight.synth import (
    DirectionalLight,
    Mesh,
    add_noise,
    capture,
    default_rig,
    frame_scene,
    heightfield,
    light_from_angles,
    linear_equivalent_sh,
    make_scene,
    rasterize_scene,
    read_dataset,
    render_ground_truth,
    render_lambertian,
    render_sh,
    standard_scene,
    visibility_stack,
    write_dataset,
)
from shapelight.synth.rig import STANDARD_OBJECTS, LightRig

OVERHEAD = DirectionalLight(np.array([0.0, 0.0, 1.0]))


def slab_scene(height=6.0, size=90.0):
    """Flat-topped plate much larger than the camera's field of view."""
    return make_scene(
        "heightfield",
        fn=lambda x, y: np.full_like(x, height),
        size_x=size,
        size_y=size,
        smooth=False,
        ground=False,
    )


def slab_cam(size=40.0, px=161):
    # frames a window strictly inside the slab top
    return look_at_camera(
        eye=(0.0, 0.0, 400.0), target=(0.0, 0.0, 0.0),
        fx=400.0 * (px - 1) / size, width=px, height=px,
    )


# ----------------------------------------------------------------- primitives
class TestPrimitives:
    def test_hemisphere_vertices_on_sphere(self):
        mesh = make_scene("hemisphere", radius=40.0).mesh
        r = np.linalg.norm(mesh.vertices, axis=1)
        assert np.all(np.abs(r - 40.0) <= 0.01)
        assert mesh.vertices[:, 2].min() >= -1e-12

    def test_card_bounding_box(self):
        mesh = make_scene("card").mesh
        lo = mesh.vertices.min(axis=0)
        hi = mesh.vertices.max(axis=0)
        assert np.allclose(hi - lo, [86.0, 54.0, 0.76])

    def test_pyramid_bounding_box(self):
        mesh = make_scene("pyramid", base_x=100.0, base_y=100.0, height=55.0).mesh
        lo = mesh.vertices.min(axis=0)
        hi = mesh.vertices.max(axis=0)
        assert np.allclose(hi - lo, [100.0, 100.0, 55.0])

    def test_disc_default_is_paper_target(self):
        mesh = make_scene("disc").mesh
        lo = mesh.vertices.min(axis=0)
        hi = mesh.vertices.max(axis=0)
        assert hi[0] - lo[0] == pytest.approx(50.0, abs=1e-9)
        assert hi[2] - lo[2] == pytest.approx(3.15, abs=1e-9)

    def test_unknown_primitive(self):
        with pytest.raises(UnknownPrimitive):
            make_scene("torus")

    def test_nonpositive_dimension(self):
        with pytest.raises(NonPositiveDimension):
            make_scene("hemisphere", radius=-3.0)
        with pytest.raises(NonPositiveDimension):
            make_scene("pyramid", base_x=0.0)

    @pytest.mark.parametrize("name", sorted(STANDARD_OBJECTS))
    def test_catalog_meshes_respect_aspect_budget(self, name):
        mesh = standard_scene(name).mesh
        assert mesh.face_aspect().max() <= 4.0
        areas = mesh.face_areas()
        assert areas.min() > 0

    def test_heightfield_normals_match_gradient(self):
        mesh = heightfield(
            fn=lambda x, y: 0.02 * x * x, size_x=40.0, size_y=40.0
        )
        i = np.argmin(np.abs(mesh.vertices[:, 0] - 10.0) + np.abs(mesh.vertices[:, 1]))
        n = mesh.vertex_normals[i]
        expect = np.array([-0.4, 0.0, 1.0])
        expect /= np.linalg.norm(expect)
        assert np.allclose(n, expect, atol=1e-6)


# -------------------------------------------------------------------- shading
class TestRenderLambertian:
    def test_light_along_normal_uniform(self):
        scene = slab_scene()
        img = render_lambertian(scene, OVERHEAD, slab_cam(), ambient=0.0, exposure=1.0)
        expect = scene.albedo / np.pi
        assert img.valid.all()
        assert np.allclose(img.samples, expect, atol=1e-12)

    def test_orthogonal_light_pure_ambient(self):
        scene = slab_scene()
        side = DirectionalLight(np.array([1.0, 0.0, 0.0]))
        img = render_lambertian(scene, side, slab_cam(), ambient=0.07, exposure=1.0)
        assert np.allclose(img.samples, 0.07, atol=1e-12)

    def test_auto_exposure_peak(self):
        scene = standard_scene("pyramid")
        cam = frame_scene(scene)
        light = light_from_angles(0.0, 30.0)
        img = render_lambertian(scene, light, cam, ambient=0.04)
        assert 0.75 <= img.samples.max() <= 0.85

    def test_pyramid_lit_faces_match_analytic_predicate(self):
        # frustum is convex: an object pixel is lit iff its face tilts
        # toward the light, no shadow-ray subtleties on the object itself
        scene = standard_scene("pyramid")
        cam = frame_scene(scene)
        light = light_from_angles(0.0, 30.0)
        raster = rasterize_scene(scene, cam)
        img = render_lambertian(
            scene, light, cam, ambient=0.0, exposure=1.0, raster=raster
        )
        obj = raster.object_mask
        n_true = render_ground_truth(scene, cam, raster=raster).normals.vectors
        analytic = np.einsum("hwd,d->hw", n_true, light.direction) > 1e-9
        lit = img.samples > 1e-12
        assert np.array_equal(lit[obj], analytic[obj])

    def test_cast_shadow_falls_away_from_light(self):
        scene = standard_scene("pyramid")
        cam = frame_scene(scene, shadow_apron=True)
        light = light_from_angles(0.0, 30.0)  # from +x
        raster = rasterize_scene(scene, cam)
        img = render_lambertian(
            scene, light, cam, ambient=0.0, exposure=1.0, raster=raster
        )
        pts = raster.points_world
        ground = raster.hit & ~raster.object_mask
        shadowed = ground & (img.samples <= 1e-12)
        assert shadowed.any()
        assert pts[shadowed][:, 0].max() < -25.0  # all behind the pyramid

    def test_shadowed_never_brighter(self):
        scene = standard_scene("octagon_bevel")
        cam = frame_scene(scene)
        raster = rasterize_scene(scene, cam)
        for az in (0.0, 120.0):
            light = light_from_angles(az, 30.0)
            with_sh = render_lambertian(
                scene, light, cam, ambient=0.03, exposure=1.0, raster=raster
            )
            without = render_lambertian(
                scene, light, cam, ambient=0.03, exposure=1.0, raster=raster,
                shadows=False,
            )
            assert np.all(with_sh.samples <= without.samples + 1e-12)

    def test_empty_view_raises(self):
        scene = make_scene("hemisphere", radius=10.0, ground=False)
        cam = look_at_camera(
            eye=(0.0, 0.0, 400.0), target=(0.0, 0.0, 800.0),  # looking at the sky
            fx=500.0, width=65, height=65,
        )
        with pytest.raises(EmptyView):
            render_lambertian(scene, OVERHEAD, cam, exposure=1.0)


class TestRenderSH:
    def test_constant_block_uniform(self):
        M = np.zeros((4, 4))
        M[3, 3] = 0.31
        img = render_sh(slab_scene(), M, slab_cam())
        assert np.allclose(img.samples, 0.31, atol=1e-12)

    def test_asymmetric_matrix_rejected(self):
        M = np.zeros((4, 4))
        M[0, 1] = 1.0
        with pytest.raises(AsymmetricMatrix):
            render_sh(slab_scene(), M, slab_cam())

    def test_linear_equivalent_matches_lambertian(self):
        # overhead light on a dome: no clamping, no shadows anywhere
        scene = standard_scene("hemisphere")
        cam = frame_scene(scene)
        raster = rasterize_scene(scene, cam)
        direct = render_lambertian(
            scene, OVERHEAD, cam, ambient=0.05, exposure=1.0, raster=raster
        )
        M = linear_equivalent_sh(OVERHEAD, ambient=0.05, albedo=scene.albedo)
        # ground albedo differs; compare on the object only
        obj = raster.object_mask
        sh = render_sh(scene, M, cam, raster=raster)
        assert np.max(np.abs(sh.samples[obj] - direct.samples[obj])) < 1e-9

    def test_random_matrix_matches_normal_oracle(self):
        rng = np.random.default_rng(8)
        M = rng.normal(size=(4, 4))
        M = 0.5 * (M + M.T)
        scene = standard_scene("hemisphere")
        cam = frame_scene(scene)
        raster = rasterize_scene(scene, cam)
        img = render_sh(scene, M, cam, raster=raster)
        gt = render_ground_truth(scene, cam, raster=raster)
        n = gt.normals.vectors[raster.hit]
        nt = np.concatenate([n, np.ones((n.shape[0], 1))], axis=1)
        direct = np.einsum("ki,ij,kj->k", nt, M, nt)
        assert np.allclose(img.samples[raster.hit], direct, atol=1e-12)


# --------------------------------------------------------------- ground truth
class TestGroundTruth:
    def test_flat_plane_all_up_no_edges(self):
        gt = render_ground_truth(slab_scene(), slab_cam())
        assert gt.normals.valid.all()
        assert np.allclose(gt.normals.vectors, [0.0, 0.0, 1.0], atol=1e-12)
        assert not gt.occlusion_edges.any()
        assert np.isfinite(gt.depth.samples[gt.silhouette]).all()

    def test_step_edge_exactly_at_step(self):
        # 10mm plateau on the ground plane, seen from straight above
        scene = make_scene(
            "card", length=30.0, width=20.0, thickness=10.0, ground=True
        )
        cam = frame_scene(scene)
        gt = render_ground_truth(scene, cam)
        edges = gt.occlusion_edges
        # the near side of the jump is the plateau rim: edge pixels are
        # exactly the object-mask pixels bordering ground
        obj = gt.silhouette
        rim = obj & ~_erode8(obj)
        assert edges.any()
        assert np.array_equal(edges, rim)

    def test_silhouette_matches_point_in_triangle_oracle(self):
        scene = make_scene(
            "star_prism", outer_diameter=30.0, height=8.0, ground=False
        )
        cam = look_at_camera(
            eye=(0.0, 0.0, 300.0), target=(0.0, 0.0, 0.0), fx=1200.0,
            width=161, height=161,
        )
        raster = rasterize_scene(scene, cam)
        gt = render_ground_truth(scene, cam, raster=raster)
        cover = _brute_force_coverage(scene.mesh, cam, 161, 161)
        assert np.array_equal(gt.silhouette, cover)

    def test_normals_live_in_base_frame(self):
        # a tilted camera must not change the reported normals
        scene = slab_scene()
        cam = look_at_camera(
            eye=(150.0, -90.0, 380.0), target=(0.0, 0.0, 0.0), fx=2000.0,
            width=129, height=129,
        )
        gt = render_ground_truth(scene, cam)
        assert np.allclose(
            gt.normals.vectors[gt.normals.valid], [0.0, 0.0, 1.0], atol=1e-9
        )


def _erode8(mask):
    from scipy import ndimage

    return ndimage.binary_erosion(mask, structure=np.ones((3, 3), dtype=bool))


def _brute_force_coverage(mesh: Mesh, cam, width, height):
    """Point-in-triangle test of every projected face at each pixel center."""
    cover = np.zeros((height, width), dtype=bool)
    pix = cam.project(mesh.vertices)
    for f in mesh.faces:
        tri = pix[f]
        lo = np.maximum(np.floor(tri.min(axis=0)).astype(int), 0)
        hi = np.minimum(np.ceil(tri.max(axis=0)).astype(int), [width - 1, height - 1])
        if np.any(hi < lo):
            continue
        us, vs = np.meshgrid(
            np.arange(lo[0], hi[0] + 1), np.arange(lo[1], hi[1] + 1)
        )
        p = np.stack([us.ravel(), vs.ravel()], axis=1).astype(np.float64)
        d0 = tri[1] - tri[0]
        d1 = tri[2] - tri[0]
        den = d0[0] * d1[1] - d0[1] * d1[0]
        if abs(den) < 1e-12:
            continue
        q = p - tri[0]
        a = (q[:, 0] * d1[1] - q[:, 1] * d1[0]) / den
        b = (d0[0] * q[:, 1] - d0[1] * q[:, 0]) / den
        inside = (a >= -1e-9) & (b >= -1e-9) & (a + b <= 1 + 1e-9)
        cover[p[inside, 1].astype(int), p[inside, 0].astype(int)] = True
    return cover


# ------------------------------------------------------------------- captures
class TestCaptureRig:
    def test_default_rig_geometry(self):
        rig = default_rig()
        assert len(rig.grazing) == 6
        for i, light in enumerate(rig.grazing):
            assert light.direction[2] == pytest.approx(0.5)  # 30 deg elevation
            az = np.degrees(np.arctan2(light.direction[1], light.direction[0]))
            assert az % 360 == pytest.approx((i * 60.0) % 360, abs=1e-9)
        assert rig.overhead.radiance < 0.5  # keeps the lit test one-sided
        assert rig.ambient > 0

    def test_rig_json_roundtrip(self, tmp_path):
        rig = default_rig()
        p = tmp_path / "lights.json"
        rig.save_json(p)
        rig2 = LightRig.load_json(p)
        assert rig2.gain == rig.gain
        assert rig2.ambient == rig.ambient
        for a, b in zip(rig.all_lights, rig2.all_lights):
            assert np.allclose(a.direction, b.direction)
            assert a.radiance == b.radiance

    def test_capture_exposes_calibration_scene_to_spec_band(self):
        scene = standard_scene("hemisphere")
        cam = frame_scene(scene)
        cap = capture(scene, cam, default_rig())
        peak = max(float(im.samples.max()) for im in cap.images)
        assert 0.75 <= peak <= 0.85

    def test_visibility_stack_matches_single_queries(self):
        scene = standard_scene("octagon")
        cam = frame_scene(scene)
        raster = rasterize_scene(scene, cam)
        rig = default_rig()
        vis = visibility_stack(raster, rig)
        assert vis.shape == raster.depth.shape + (7,)
        from shapelight.synth.render import light_visibility

        one = light_visibility(raster, rig.grazing[2])
        assert np.array_equal(vis[:, :, 2], one)

    def test_capture_images_consistent_with_gt(self):
        scene = standard_scene("ridge")
        cam = frame_scene(scene)
        cap = capture(scene, cam, default_rig())
        assert len(cap.images) == 7
        assert cap.gt.silhouette.any()
        # overhead image must be strictly dimmer than the per-pixel max of
        # grazing images on well-lit object pixels (radiance 0.45 vs 1.0)
        stack = np.stack([im.samples for im in cap.directional], axis=2)
        lit_everywhere = (stack > cap.rig.ambient * cap.rig.gain + 0.05).all(axis=2)
        sel = lit_everywhere & cap.gt.silhouette
        if sel.any():
            assert np.all(cap.overhead.samples[sel] < stack.max(axis=2)[sel])

    def test_noise_is_seeded_and_unbiased(self):
        scene = standard_scene("disc")
        cam = frame_scene(scene)
        rig = default_rig()
        a = capture(scene, cam, rig, noise_sigma=0.01, rng=np.random.default_rng(3))
        b = capture(scene, cam, rig, noise_sigma=0.01, rng=np.random.default_rng(3))
        clean = capture(scene, cam, rig)
        for ia, ib in zip(a.images, b.images):
            assert np.array_equal(ia.samples, ib.samples)
        diff = a.images[0].samples - clean.images[0].samples
        assert abs(diff.mean()) < 5e-4
        assert diff.std() == pytest.approx(0.01, rel=0.05)

    def test_add_noise_zero_sigma_identity(self):
        scene = slab_scene()
        img = render_lambertian(scene, OVERHEAD, slab_cam(), exposure=1.0)
        out = add_noise(img, 0.0, np.random.default_rng(0))
        assert out is img

    def test_dataset_roundtrip(self, tmp_path):
        scene = standard_scene("octagon")
        cam = frame_scene(scene)
        cap = capture(scene, cam, default_rig())
        write_dataset(tmp_path, cap)
        for name in (
            "I_1.pfm", "I_7.pfm", "gt_normals.pfm", "gt_depth.pfm",
            "silhouette.png", "edges.png", "camera.json", "lights.json",
        ):
            assert (tmp_path / name).exists()
        back = read_dataset(tmp_path)
        for a, b in zip(cap.images, back.images):
            assert np.allclose(a.samples, b.samples, atol=1e-6)
        assert np.array_equal(cap.gt.silhouette, back.gt.silhouette)
        assert np.array_equal(cap.gt.occlusion_edges, back.gt.occlusion_edges)
        ang = back.gt.normals.angular_error_deg(cap.gt.normals)
        assert np.nanmax(ang[cap.gt.normals.valid]) < 1e-3
        assert back.camera.fx == pytest.approx(cam.fx)

    def test_scene_pose_moves_the_render(self):
        scene = standard_scene("pyramid")
        moved = scene.posed(RigidTransform3D(rot_z(0.3), np.array([8.0, -5.0, 0.0])))
        cam = frame_scene(scene)
        a = render_ground_truth(scene, cam)
        b = render_ground_truth(moved, cam)
        assert not np.array_equal(a.silhouette, b.silhouette)
        ca = np.argwhere(a.silhouette).mean(axis=0)
        cb = np.argwhere(b.silhouette).mean(axis=0)
        assert np.linalg.norm(ca - cb) > 10.0
