"""Synthetic rendering oracle.

Rasterization evaluates the exact pixel-center ray/triangle intersection
(projective-correct barycentrics, z-buffered), so depth and normals agree
with per-face analytic predicates to machine precision. Hard shadows are
computed per surface point by an exact occlusion test against the mesh in
a light-aligned frame (no shadow-map discretization): a point is occluded
when some triangle contains its light-space footprint strictly closer to
the light, with a small depth bias and the point's own face excluded.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core.camera import CameraModel
from ..core.image import ImageF
from ..errors import AsymmetricMatrix, EmptyView
from ..normals import NormalMap
from .primitives import DirectionalLight, Mesh, Scene

SHADOW_BIAS_MM = 0.05
DEPTH_TIE_EPS = 1e-9


# ------------------------------------------------------------------ raster
def _flatten_windows(x0, x1, y0, y1):
    """Variable-size bbox flattening: returns (owner_index, px, py)."""
    nx = x1 - x0 + 1
    ny = y1 - y0 + 1
    counts = nx * ny
    total = int(counts.sum())
    if total == 0:
        return (np.zeros(0, np.intp),) * 3
    owner = np.repeat(np.arange(len(counts), dtype=np.intp), counts)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    within = np.arange(total, dtype=np.intp) - np.repeat(starts, counts)
    nx_o = nx[owner]
    px = x0[owner] + within % nx_o
    py = y0[owner] + within // nx_o
    return owner, px, py


@dataclass
class SceneRaster:
    """Per-pixel intersection buffers for one camera view of a scene."""

    cam: CameraModel
    depth: np.ndarray  # (h, w) camera-frame z, inf where empty
    face: np.ndarray  # (h, w) winning face index, -1 where empty
    normals_world: np.ndarray  # (h, w, 3) unit, 0 where empty
    points_world: np.ndarray  # (h, w, 3)
    object_mask: np.ndarray  # (h, w) hit an object (not ground) face
    albedo: np.ndarray  # (h, w)
    mesh_world: Mesh
    n_object_faces: int

    @property
    def hit(self) -> np.ndarray:
        return np.isfinite(self.depth)


def rasterize_mesh(mesh: Mesh, cam: CameraModel, z_near: float = 0.5):
    """Rasterize a world-frame mesh. Returns (depth, face, bary) buffers."""
    h, w = cam.height, cam.width
    depth = np.full((h, w), np.inf)
    face = np.full((h, w), -1, dtype=np.int64)
    bary = np.zeros((h, w, 3))

    vc = cam.to_camera(mesh.vertices)
    z = vc[:, 2]
    tri_z = z[mesh.faces]
    ok = (tri_z > z_near).all(axis=1)
    if not ok.any():
        return depth, face, bary
    u = cam.fx * vc[:, 0] / z + cam.cx
    v = cam.fy * vc[:, 1] / z + cam.cy
    p2 = np.stack([u, v], axis=1)

    fidx = np.nonzero(ok)[0]
    tri2 = p2[mesh.faces[fidx]]  # (m, 3, 2)
    x0 = np.clip(np.ceil(tri2[:, :, 0].min(axis=1) - 0.5), 0, w - 1).astype(np.int64)
    x1 = np.clip(np.floor(tri2[:, :, 0].max(axis=1) + 0.5), 0, w - 1).astype(np.int64)
    y0 = np.clip(np.ceil(tri2[:, :, 1].min(axis=1) - 0.5), 0, h - 1).astype(np.int64)
    y1 = np.clip(np.floor(tri2[:, :, 1].max(axis=1) + 0.5), 0, h - 1).astype(np.int64)
    nonempty = (x1 >= x0) & (y1 >= y0)
    # skip screen-degenerate triangles (edge-on slivers)
    a2 = (tri2[:, 1, 0] - tri2[:, 0, 0]) * (tri2[:, 2, 1] - tri2[:, 0, 1]) - (
        tri2[:, 1, 1] - tri2[:, 0, 1]
    ) * (tri2[:, 2, 0] - tri2[:, 0, 0])
    nonempty &= np.abs(a2) > 1e-12
    fidx = fidx[nonempty]
    if fidx.size == 0:
        return depth, face, bary
    tri2 = tri2[nonempty]
    a2 = a2[nonempty]
    x0, x1, y0, y1 = x0[nonempty], x1[nonempty], y0[nonempty], y1[nonempty]

    owner, px, py = _flatten_windows(x0, x1, y0, y1)
    ax = tri2[owner, 0, 0]
    ay = tri2[owner, 0, 1]
    bx = tri2[owner, 1, 0]
    by = tri2[owner, 1, 1]
    cx = tri2[owner, 2, 0]
    cy = tri2[owner, 2, 1]
    area = a2[owner]
    pxf = px.astype(np.float64)
    pyf = py.astype(np.float64)
    # screen-space barycentrics, orientation-normalized by the signed area
    l0 = ((bx - pxf) * (cy - pyf) - (by - pyf) * (cx - pxf)) / area
    l1 = ((cx - pxf) * (ay - pyf) - (cy - pyf) * (ax - pxf)) / area
    l2 = 1.0 - l0 - l1
    eps = -1e-11
    inside = (l0 >= eps) & (l1 >= eps) & (l2 >= eps)
    if not inside.any():
        return depth, face, bary
    owner = owner[inside]
    px = px[inside]
    py = py[inside]
    l0 = l0[inside]
    l1 = l1[inside]
    l2 = l2[inside]
    zt = z[mesh.faces[fidx]]  # (m, 3)
    invz = l0 / zt[owner, 0] + l1 / zt[owner, 1] + l2 / zt[owner, 2]
    pz = 1.0 / invz

    flat = py * w + px
    np.minimum.at(depth.reshape(-1), flat, pz)
    near = pz <= depth.reshape(-1)[flat] * (1 + 1e-12) + DEPTH_TIE_EPS
    # ties on shared edges resolved to the lowest face index, deterministically
    winner = np.full(h * w, np.iinfo(np.int64).max, dtype=np.int64)
    np.minimum.at(winner, flat[near], fidx[owner[near]])
    sel = near.copy()
    sel[near] = fidx[owner[near]] == winner[flat[near]]
    face.reshape(-1)[flat[sel]] = fidx[owner[sel]]
    depth.reshape(-1)[flat[sel]] = pz[sel]
    # perspective-correct barycentrics for the winners
    w0 = (l0[sel] / zt[owner[sel], 0]) * pz[sel]
    w1 = (l1[sel] / zt[owner[sel], 1]) * pz[sel]
    w2 = 1.0 - w0 - w1
    bary.reshape(-1, 3)[flat[sel]] = np.stack([w0, w1, w2], axis=1)
    return depth, face, bary


def rasterize_scene(scene: Scene, cam: CameraModel) -> SceneRaster:
    """Rasterize object + ground for one camera."""
    extent = _ground_extent(scene, cam)
    mesh, n_obj = scene.world_mesh(extent)
    depth, face, bary = rasterize_mesh(mesh, cam)
    hit = np.isfinite(depth)
    if not hit.any():
        raise EmptyView("camera sees no geometry")
    h, w = depth.shape

    normals = np.zeros((h, w, 3))
    fn = mesh.face_normals()
    vv, uu = np.nonzero(hit)
    fids = face[vv, uu]
    if mesh.vertex_normals is not None:
        vn = mesh.vertex_normals[mesh.faces[fids]]  # (k, 3, 3)
        nint = np.einsum("kj,kjd->kd", bary[vv, uu], vn)
        nint /= np.linalg.norm(nint, axis=1, keepdims=True)
        normals[vv, uu] = nint
    else:
        normals[vv, uu] = fn[fids]
    # orient normals toward the camera side they were seen from
    view = cam.pose.inverse().R[:, 2]  # camera forward in base frame
    flip = np.einsum("kd,d->k", normals[vv, uu], view) > 0
    idx_flip = (vv[flip], uu[flip])
    normals[idx_flip] = -normals[idx_flip]

    zbuf = np.where(hit, depth, np.nan)
    uu_all, vv_all = cam.pixel_grid()
    pts_cam = np.stack(
        [
            (uu_all - cam.cx) / cam.fx * zbuf,
            (vv_all - cam.cy) / cam.fy * zbuf,
            zbuf,
        ],
        axis=-1,
    )
    inv = cam.pose.inverse()
    pts_world = np.where(
        hit[..., None], pts_cam @ inv.R.T + inv.t, 0.0
    )

    object_mask = hit & (face >= 0) & (face < n_obj)
    albedo = np.where(object_mask, scene.albedo, scene.ground_albedo)
    albedo[~hit] = 0.0
    return SceneRaster(
        cam=cam,
        depth=depth,
        face=face,
        normals_world=normals,
        points_world=pts_world,
        object_mask=object_mask,
        albedo=albedo,
        mesh_world=mesh,
        n_object_faces=n_obj,
    )


def _ground_extent(scene: Scene, cam: CameraModel) -> float:
    """Half-size of the ground quad: camera footprint plus margin."""
    if not scene.ground:
        return 0.0
    corners = np.array(
        [
            [0.0, 0.0],
            [cam.width - 1.0, 0.0],
            [0.0, cam.height - 1.0],
            [cam.width - 1.0, cam.height - 1.0],
        ]
    )
    origin, dirs = cam.pixel_rays(corners)
    dz = dirs[:, 2]
    if np.any(dz >= -1e-6):
        # some corner ray does not descend; fall back to a wide apron
        reach = 2000.0
    else:
        s = (0.0 - origin[2]) / dz
        pts = origin[None, :] + s[:, None] * dirs
        reach = float(np.abs(pts[:, :2]).max())
    lo, hi = scene.mesh.transformed(scene.pose).aabb()
    obj_reach = float(max(abs(lo[0]), abs(hi[0]), abs(lo[1]), abs(hi[1])))
    shadow_reach = obj_reach + 6.0 * max(hi[2], 1.0)
    return max(reach, shadow_reach) + 25.0


# ------------------------------------------------------------------ shadows
def shadow_test(
    points: np.ndarray,
    light_dir: np.ndarray,
    mesh: Mesh,
    exclude_face: np.ndarray = None,
    skip_faces_from: int = None,
    bias: float = SHADOW_BIAS_MM,
) -> np.ndarray:
    """True where a point's path toward the light is blocked by the mesh.

    Exact per-triangle point-in-projection test in a light-aligned frame.
    ``skip_faces_from`` excludes trailing faces (the ground) from casting.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    n_pts = pts.shape[0]
    occluded = np.zeros(n_pts, dtype=bool)
    if n_pts == 0:
        return occluded
    l = np.asarray(light_dir, dtype=np.float64)
    l = l / np.linalg.norm(l)
    # light frame: e1, e2 span the plane orthogonal to l
    a = np.array([1.0, 0.0, 0.0]) if abs(l[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(l, a)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(l, e1)

    nf = mesh.faces.shape[0] if skip_faces_from is None else int(skip_faces_from)
    faces = mesh.faces[:nf]
    if faces.shape[0] == 0:
        return occluded
    V2 = np.stack([mesh.vertices @ e1, mesh.vertices @ e2], axis=1)
    Vd = -(mesh.vertices @ l)  # depth along propagation (larger = farther)
    tri2 = V2[faces]  # (m, 3, 2)
    trid = Vd[faces]
    p2 = np.stack([pts @ e1, pts @ e2], axis=1)
    pd = -(pts @ l)

    # grid bins over the point footprint, cell ~ median triangle extent
    ext = np.maximum(
        tri2.max(axis=1) - tri2.min(axis=1), 1e-6
    )  # (m, 2)
    cell = float(np.median(ext.max(axis=1)))
    cell = max(cell, 1e-3)
    lo = p2.min(axis=0) - 1e-9
    hi = p2.max(axis=0) + 1e-9
    ncx = max(1, int(np.ceil((hi[0] - lo[0]) / cell)))
    ncy = max(1, int(np.ceil((hi[1] - lo[1]) / cell)))
    pcx = np.clip(((p2[:, 0] - lo[0]) / cell).astype(np.int64), 0, ncx - 1)
    pcy = np.clip(((p2[:, 1] - lo[1]) / cell).astype(np.int64), 0, ncy - 1)
    pcell = pcy * ncx + pcx
    order = np.argsort(pcell, kind="stable")
    sorted_cell = pcell[order]
    starts = np.searchsorted(sorted_cell, np.arange(ncx * ncy, dtype=np.int64), "left")
    ends = np.searchsorted(sorted_cell, np.arange(ncx * ncy, dtype=np.int64), "right")

    # triangle -> overlapped cells
    tx0 = np.clip(np.floor((tri2[:, :, 0].min(axis=1) - lo[0]) / cell), 0, ncx - 1)
    tx1 = np.clip(np.floor((tri2[:, :, 0].max(axis=1) - lo[0]) / cell), 0, ncx - 1)
    ty0 = np.clip(np.floor((tri2[:, :, 1].min(axis=1) - lo[1]) / cell), 0, ncy - 1)
    ty1 = np.clip(np.floor((tri2[:, :, 1].max(axis=1) - lo[1]) / cell), 0, ncy - 1)
    out = tri2[:, :, 0].max(axis=1) < lo[0]
    out |= tri2[:, :, 0].min(axis=1) > hi[0]
    out |= tri2[:, :, 1].max(axis=1) < lo[1]
    out |= tri2[:, :, 1].min(axis=1) > hi[1]
    keep = ~out
    # light-parallel slivers cannot block a measurable set
    area2 = (tri2[:, 1, 0] - tri2[:, 0, 0]) * (tri2[:, 2, 1] - tri2[:, 0, 1]) - (
        tri2[:, 1, 1] - tri2[:, 0, 1]
    ) * (tri2[:, 2, 0] - tri2[:, 0, 0])
    keep &= np.abs(area2) > 1e-12
    tids = np.nonzero(keep)[0]
    if tids.size == 0:
        return occluded

    towner, tcx, tcy = _flatten_windows(
        tx0[tids].astype(np.int64),
        tx1[tids].astype(np.int64),
        ty0[tids].astype(np.int64),
        ty1[tids].astype(np.int64),
    )
    pair_tri = tids[towner]
    pair_cell = tcy * ncx + tcx
    cnt = (ends - starts)[pair_cell]
    nz = cnt > 0
    pair_tri = pair_tri[nz]
    pair_cell = pair_cell[nz]
    cnt = cnt[nz]
    if pair_tri.size == 0:
        return occluded
    tri_of = np.repeat(pair_tri, cnt)
    base = np.concatenate([[0], np.cumsum(cnt)[:-1]])
    within = np.arange(int(cnt.sum()), dtype=np.intp) - np.repeat(base, cnt)
    pt_of = order[np.repeat(starts[pair_cell], cnt) + within]

    ax, ay = tri2[tri_of, 0, 0], tri2[tri_of, 0, 1]
    bx, by = tri2[tri_of, 1, 0], tri2[tri_of, 1, 1]
    cx, cy = tri2[tri_of, 2, 0], tri2[tri_of, 2, 1]
    pxp, pyp = p2[pt_of, 0], p2[pt_of, 1]
    area = area2[tri_of]
    l0 = ((bx - pxp) * (cy - pyp) - (by - pyp) * (cx - pxp)) / area
    l1 = ((cx - pxp) * (ay - pyp) - (cy - pyp) * (ax - pxp)) / area
    l2 = 1.0 - l0 - l1
    inside = (l0 >= 0) & (l1 >= 0) & (l2 >= 0)
    d_tri = l0 * trid[tri_of, 0] + l1 * trid[tri_of, 1] + l2 * trid[tri_of, 2]
    blocked = inside & (d_tri < pd[pt_of] - bias)
    if exclude_face is not None:
        blocked &= tri_of != np.asarray(exclude_face).reshape(-1)[pt_of]
    occluded[np.unique(pt_of[blocked])] = True
    return occluded


def light_visibility(raster: SceneRaster, light: DirectionalLight) -> np.ndarray:
    """Per-pixel bool: surface receives direct light (facing and unoccluded)."""
    hit = raster.hit
    n = raster.normals_world[hit]
    facing = n @ light.direction > 0.0
    vis = np.zeros(hit.shape, dtype=bool)
    pts = raster.points_world[hit][facing]
    excl = raster.face[hit][facing]
    occ = shadow_test(
        pts,
        light.direction,
        raster.mesh_world,
        exclude_face=excl,
        skip_faces_from=raster.n_object_faces,
    )
    sub = np.zeros(facing.shape, dtype=bool)
    sub[facing] = ~occ
    vis[hit] = sub
    return vis


# ------------------------------------------------------------------ shading
def render_lambertian(
    scene: Scene,
    light: DirectionalLight,
    cam: CameraModel,
    ambient: float = 0.0,
    exposure="auto",
    raster: SceneRaster = None,  # type: ignore[assignment]
    shadows: bool = True,
    visibility: np.ndarray = None,  # type: ignore[assignment]
) -> ImageF:
    """Diffuse shading: ambient + (albedo/pi) * max(0, n.l) * radiance,
    with the direct term zeroed where the light is occluded.

    ``exposure="auto"`` scales the image so its brightest pixel lands at
    0.8; pass a number to apply a fixed gain instead (image sets share one
    gain so ratios stay meaningful). A precomputed ``visibility`` mask
    skips the shadow rays.
    """
    r = raster if raster is not None else rasterize_scene(scene, cam)
    if not r.hit.any():
        raise EmptyView("no geometry projects into the image")
    ndotl = np.einsum("hwd,d->hw", r.normals_world, light.direction)
    direct = (r.albedo / np.pi) * np.maximum(ndotl, 0.0) * light.radiance
    if shadows:
        vis = visibility if visibility is not None else light_visibility(r, light)
        direct = direct * vis
    img = np.where(r.hit, ambient + direct, 0.0)
    if exposure == "auto":
        peak = float(img.max())
        if peak <= 0:
            raise EmptyView("nothing lit; cannot auto-expose")
        img = img * (0.8 / peak)
    else:
        img = img * float(exposure)
    return ImageF(img, valid=r.hit)


def render_sh(
    scene: Scene,
    M: np.ndarray,
    cam: CameraModel,
    raster: SceneRaster = None,  # type: ignore[assignment]
) -> ImageF:
    """Quadratic-in-normal shading: I = [n;1]^T M [n;1] (no shadow test)."""
    M = np.asarray(M, dtype=np.float64)
    if M.shape != (4, 4) or not np.allclose(M, M.T, atol=1e-12, rtol=0):
        raise AsymmetricMatrix("shading matrix must be symmetric 4x4")
    r = raster if raster is not None else rasterize_scene(scene, cam)
    n = r.normals_world
    A = M[:3, :3]
    b = M[:3, 3]
    d = M[3, 3]
    quad = np.einsum("hwi,ij,hwj->hw", n, A, n)
    lin = 2.0 * np.einsum("hwi,i->hw", n, b)
    img = np.where(r.hit, quad + lin + d, 0.0)
    return ImageF(img, valid=r.hit)


def linear_equivalent_sh(light: DirectionalLight, ambient: float = 0.0, albedo: float = 1.0) -> np.ndarray:
    """The symmetric matrix whose quadratic form reproduces unshadowed,
    unclamped Lambertian shading of a given light (plus ambient)."""
    M = np.zeros((4, 4))
    M[:3, 3] = M[3, :3] = (albedo / np.pi) * light.radiance * light.direction / 2.0
    M[3, 3] = ambient
    return M


# ------------------------------------------------------------- ground truth
@dataclass(frozen=True)
class GroundTruthBundle:
    """Reference maps rendered alongside the images."""

    normals: NormalMap  # base-frame unit normals where geometry is hit
    depth: ImageF  # camera-frame z in mm
    silhouette: np.ndarray  # (h, w) bool, object pixels
    occlusion_edges: np.ndarray  # (h, w) bool, near side of depth jumps


def occlusion_edges_from_depth(
    depth: np.ndarray, valid: np.ndarray, tau: float = 2.0
) -> np.ndarray:
    """Mark the NEAR pixel of any 8-neighbor depth jump greater than tau.

    Pixels bordering invalid (no-geometry) neighbors count as jumps.
    """
    d = np.where(valid, depth, np.inf)
    h, w = d.shape
    edges = np.zeros((h, w), dtype=bool)
    shifts = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]
    for dy, dx in shifts:
        # out-of-image neighbors are unknown, not depth jumps
        nb = np.full((h, w), -np.inf)
        ys = slice(max(dy, 0), h + min(dy, 0))
        xs = slice(max(dx, 0), w + min(dx, 0))
        yd = slice(max(-dy, 0), h + min(-dy, 0))
        xd = slice(max(-dx, 0), w + min(-dx, 0))
        nb[yd, xd] = d[ys, xs]
        # inf-inf between two no-hit pixels is nan; those never count
        with np.errstate(invalid="ignore"):
            edges |= (nb - d) > tau
    edges &= np.asarray(valid, dtype=bool)
    return edges


def render_ground_truth(
    scene: Scene,
    cam: CameraModel,
    edge_tau: float = 2.0,
    raster: SceneRaster = None,  # type: ignore[assignment]
) -> GroundTruthBundle:
    r = raster if raster is not None else rasterize_scene(scene, cam)
    if not r.hit.any():
        raise EmptyView("no geometry projects into the image")
    nmap = NormalMap(r.normals_world, valid=r.hit)
    depth = ImageF(np.where(r.hit, r.depth, 0.0), valid=r.hit)
    edges = occlusion_edges_from_depth(r.depth, r.hit, tau=edge_tau)
    return GroundTruthBundle(
        normals=nmap,
        depth=depth,
        silhouette=r.object_mask.copy(),
        occlusion_edges=edges,
    )


def add_noise(image: ImageF, sigma: float, rng: np.random.Generator) -> ImageF:
    """Additive Gaussian noise (fraction of full scale); sigma=0 is exact."""
    if sigma == 0:
        return image
    noisy = image.samples + rng.normal(0.0, sigma, size=image.samples.shape)
    return ImageF(noisy, valid=image.valid)
