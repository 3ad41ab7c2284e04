"""Triangle meshes and the synthetic object catalog.

All primitives sit on the table plane (z = 0) in their local frame,
centered in x/y, and are meshed with roughly square triangles whose
aspect ratio (longest edge squared over twice the area) stays below 4.
Planar faces get no vertex normals (flat shading); curved primitives
carry exact analytic vertex normals for smooth interpolation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..errors import NonPositiveDimension, UnknownPrimitive
from ..core.transforms import RigidTransform3D

ASPECT_LIMIT = 4.0


@dataclass(frozen=True)
class Mesh:
    vertices: np.ndarray  # (n, 3) mm
    faces: np.ndarray  # (m, 3) int
    vertex_normals: np.ndarray = None  # type: ignore[assignment]

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        f = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        vn = self.vertex_normals
        if vn is not None:
            vn = np.asarray(vn, dtype=np.float64).reshape(-1, 3)
            if vn.shape != v.shape:
                raise ValueError("vertex_normals shape mismatch")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)
        object.__setattr__(self, "vertex_normals", vn)

    # ------------------------------------------------------------ derived
    def face_corners(self):
        v = self.vertices
        f = self.faces
        return v[f[:, 0]], v[f[:, 1]], v[f[:, 2]]

    def face_normals(self) -> np.ndarray:
        a, b, c = self.face_corners()
        n = np.cross(b - a, c - a)
        norm = np.linalg.norm(n, axis=1, keepdims=True)
        norm[norm == 0] = 1.0
        return n / norm

    def face_areas(self) -> np.ndarray:
        a, b, c = self.face_corners()
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)

    def face_aspect(self) -> np.ndarray:
        """Longest edge squared over twice the area (equilateral ~1.15)."""
        a, b, c = self.face_corners()
        e = np.stack(
            [
                np.linalg.norm(b - a, axis=1),
                np.linalg.norm(c - b, axis=1),
                np.linalg.norm(a - c, axis=1),
            ],
            axis=1,
        )
        lmax = e.max(axis=1)
        area = self.face_areas()
        area = np.maximum(area, 1e-12)
        return lmax**2 / (2.0 * area)

    def aabb(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def bounding_dims(self) -> np.ndarray:
        lo, hi = self.aabb()
        return hi - lo

    def edges(self) -> np.ndarray:
        """Unique undirected edges, (k, 2) sorted vertex indices."""
        f = self.faces
        e = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]], axis=0)
        e = np.sort(e, axis=1)
        return np.unique(e, axis=0)

    def transformed(self, xf: RigidTransform3D) -> "Mesh":
        vn = None if self.vertex_normals is None else xf.rotate(self.vertex_normals)
        return Mesh(xf.apply(self.vertices), self.faces.copy(), vn)

    @staticmethod
    def merge(meshes) -> "Mesh":
        verts = []
        faces = []
        normals = []
        have_normals = all(m.vertex_normals is not None for m in meshes)
        off = 0
        for m in meshes:
            verts.append(m.vertices)
            faces.append(m.faces + off)
            if have_normals:
                normals.append(m.vertex_normals)
            off += m.vertices.shape[0]
        return Mesh(
            np.concatenate(verts, axis=0),
            np.concatenate(faces, axis=0),
            np.concatenate(normals, axis=0) if have_normals else None,
        )


def validate_mesh(mesh: Mesh, aspect_limit: float = ASPECT_LIMIT) -> Mesh:
    bad = mesh.face_aspect() > aspect_limit
    if bad.any():
        worst = float(mesh.face_aspect().max())
        raise ValueError(
            f"{int(bad.sum())} faces exceed aspect limit {aspect_limit} (worst {worst:.2f})"
        )
    return mesh


# ----------------------------------------------------------------- helpers
def _positive(**dims) -> None:
    for k, v in dims.items():
        if not (v > 0):
            raise NonPositiveDimension(f"{k} must be > 0, got {v}")


def _quad_patch(c00, c10, c11, c01, step: float):
    """Bilinear patch between four corners, split into ~square triangles."""
    c00, c10, c11, c01 = (np.asarray(c, dtype=np.float64) for c in (c00, c10, c11, c01))
    lu = max(np.linalg.norm(c10 - c00), np.linalg.norm(c11 - c01))
    lv = max(np.linalg.norm(c01 - c00), np.linalg.norm(c11 - c10))
    nu = max(1, int(np.ceil(lu / step)))
    nv = max(1, int(np.ceil(lv / step)))
    u = np.linspace(0.0, 1.0, nu + 1)
    v = np.linspace(0.0, 1.0, nv + 1)
    uu, vv = np.meshgrid(u, v)
    pts = (
        (1 - uu)[..., None] * (1 - vv)[..., None] * c00
        + uu[..., None] * (1 - vv)[..., None] * c10
        + uu[..., None] * vv[..., None] * c11
        + (1 - uu)[..., None] * vv[..., None] * c01
    )
    verts = pts.reshape(-1, 3)
    idx = np.arange((nu + 1) * (nv + 1)).reshape(nv + 1, nu + 1)
    a = idx[:-1, :-1].ravel()
    b = idx[:-1, 1:].ravel()
    c = idx[1:, 1:].ravel()
    d = idx[1:, :-1].ravel()
    faces = np.concatenate(
        [np.stack([a, b, c], axis=1), np.stack([a, c, d], axis=1)], axis=0
    )
    return Mesh(verts, faces)


def _walls(bottom_ring: np.ndarray, top_ring: np.ndarray, step: float) -> Mesh:
    """Side walls between two closed rings with equal vertex counts."""
    n = bottom_ring.shape[0]
    pieces = []
    for i in range(n):
        j = (i + 1) % n
        pieces.append(
            _quad_patch(bottom_ring[i], bottom_ring[j], top_ring[j], top_ring[i], step)
        )
    return Mesh.merge(pieces)


def _stitch_rings(ring_a: np.ndarray, ring_b: np.ndarray, offset_a: int, offset_b: int):
    """Triangulate the annulus between two concentric rings (a inner, b outer).

    Rings are (n, 3) arrays ordered CCW by angle; indices into the final
    vertex buffer start at the given offsets. Walks both rings merging by
    angle; triangles wind CCW seen from +Z (normals up).
    """
    ang_a = np.arctan2(ring_a[:, 1], ring_a[:, 0])
    ang_b = np.arctan2(ring_b[:, 1], ring_b[:, 0])
    na, nb = len(ring_a), len(ring_b)
    faces = []
    i = j = 0
    # unwrap angles so both walks are monotone over one turn
    au = np.unwrap(ang_a - ang_a[0])
    bu = np.unwrap(ang_b - ang_a[0])
    if bu[0] > np.pi:
        bu -= 2 * np.pi
    while i < na or j < nb:
        next_a = au[i + 1] if i + 1 < na else au[0] + 2 * np.pi if i < na else np.inf
        next_b = bu[j + 1] if j + 1 < nb else bu[0] + 2 * np.pi if j < nb else np.inf
        ia, ja = offset_a + (i % na), offset_b + (j % nb)
        if next_a <= next_b:
            faces.append([ia, ja, offset_a + ((i + 1) % na)])
            i += 1
        else:
            faces.append([ia, ja, offset_b + ((j + 1) % nb)])
            j += 1
    return faces


def _tri_patch(a, b, c, step: float) -> Mesh:
    """Barycentric refinement of one triangle into ~(l/step)^2 copies."""
    a, b, c = (np.asarray(p, dtype=np.float64) for p in (a, b, c))
    lmax = max(np.linalg.norm(b - a), np.linalg.norm(c - b), np.linalg.norm(a - c))
    n = max(1, int(np.ceil(lmax / step)))
    verts = []
    index = {}
    for i in range(n + 1):
        for j in range(n + 1 - i):
            index[(i, j)] = len(verts)
            k = n - i - j
            verts.append((i * b + j * c + k * a) / n)
    faces = []
    for i in range(n):
        for j in range(n - i):
            faces.append([index[(i, j)], index[(i + 1, j)], index[(i, j + 1)]])
            if j < n - i - 1:
                faces.append([index[(i + 1, j)], index[(i + 1, j + 1)], index[(i, j + 1)]])
    return Mesh(np.asarray(verts), np.asarray(faces))


def _disc_cap(radius: float, z: float, step: float):
    """Disc at height z triangulated as concentric rings (no slivers)."""
    nr = max(2, int(np.ceil(radius / step)))
    radii = np.linspace(0.0, radius, nr + 1)[1:]
    rings = []
    for r in radii:
        nseg = max(8, int(np.ceil(2 * np.pi * r / step)))
        ang = np.arange(nseg) * (2 * np.pi / nseg)
        rings.append(
            np.stack([r * np.cos(ang), r * np.sin(ang), np.full(nseg, z)], axis=1)
        )
    verts = [np.array([[0.0, 0.0, z]])]
    offsets = [0]
    off = 1
    for ring in rings:
        verts.append(ring)
        offsets.append(off)
        off += len(ring)
    verts = np.concatenate(verts, axis=0)
    faces = []
    first = rings[0]
    n0 = len(first)
    for i in range(n0):
        faces.append([0, offsets[1] + i, offsets[1] + (i + 1) % n0])
    for k in range(len(rings) - 1):
        faces.extend(
            _stitch_rings(rings[k], rings[k + 1], offsets[k + 1], offsets[k + 2])
        )
    return Mesh(verts, np.asarray(faces)), rings[-1], offsets[-1]


# ---------------------------------------------------------------- primitives
def pyramid(
    base_x: float = 100.0,
    base_y: float = 100.0,
    height: float = 55.0,
    top_frac: float = 0.4,
    step: float = None,  # type: ignore[assignment]
) -> Mesh:
    """Rectangular frustum (flat-topped pyramid). top_frac=0 gives an apex."""
    _positive(base_x=base_x, base_y=base_y, height=height)
    if not (0.0 <= top_frac < 1.0):
        raise NonPositiveDimension(f"top_frac must be in [0,1), got {top_frac}")
    step = step or max(base_x, base_y, height) / 24.0
    hx, hy = base_x / 2.0, base_y / 2.0
    tx, ty = hx * top_frac, hy * top_frac
    b = [(-hx, -hy), (hx, -hy), (hx, hy), (-hx, hy)]
    t = [(-tx, -ty), (tx, -ty), (tx, ty), (-tx, ty)]
    parts = []
    if top_frac == 0.0:
        apex = np.array([0.0, 0.0, height])
        for i in range(4):
            j = (i + 1) % 4
            p0 = np.array([*b[i], 0.0])
            p1 = np.array([*b[j], 0.0])
            parts.append(_tri_patch(p0, p1, apex, step))
    else:
        for i in range(4):
            j = (i + 1) % 4
            p0 = np.array([*b[i], 0.0])
            p1 = np.array([*b[j], 0.0])
            q1 = np.array([*t[j], height])
            q0 = np.array([*t[i], height])
            # tapered walls as two refined triangles; a bilinear grid on a
            # trapezoid this pinched skews cells past the aspect limit
            parts.append(_tri_patch(p0, p1, q1, step))
            parts.append(_tri_patch(p0, q1, q0, step))
        parts.append(
            _quad_patch(
                np.array([*t[0], height]),
                np.array([*t[1], height]),
                np.array([*t[2], height]),
                np.array([*t[3], height]),
                step,
            )
        )
    return validate_mesh(Mesh.merge(parts))


def star_prism(
    outer_diameter: float = 110.0,
    height: float = 15.0,
    points: int = 5,
    inner_frac: float = 0.55,
    step: float = None,  # type: ignore[assignment]
) -> Mesh:
    _positive(outer_diameter=outer_diameter, height=height)
    if points < 3:
        raise NonPositiveDimension("star needs at least 3 points")
    step = step or outer_diameter / 30.0
    R = outer_diameter / 2.0
    r = R * inner_frac
    ang = np.arange(2 * points) * (np.pi / points) + np.pi / 2
    rad = np.where(np.arange(2 * points) % 2 == 0, R, r)
    ring = np.stack([rad * np.cos(ang), rad * np.sin(ang), np.zeros_like(ang)], axis=1)
    top_ring = ring + np.array([0.0, 0.0, height])
    # star polygons are star-shaped about the center: fan the top cap
    n = len(ring)
    cap_verts = np.concatenate([np.array([[0.0, 0.0, height]]), top_ring], axis=0)
    cap_faces = [[0, 1 + i, 1 + (i + 1) % n] for i in range(n)]
    cap = Mesh(cap_verts, np.asarray(cap_faces))
    walls = _walls(ring, top_ring, step)
    return validate_mesh(Mesh.merge([cap, walls]))


def octagon_prism(
    width: float = 100.0,
    height: float = 29.0,
    bevel_frac: float = 0.0,
    bevel_offset: tuple = (0.0, 0.0),
    step: float = None,  # type: ignore[assignment]
) -> Mesh:
    """Regular octagon prism (vertices on the axes, bbox = width).

    ``bevel_frac`` > 0 shrinks the top ring and shifts it by
    ``bevel_offset`` (mm), producing asymmetric slanted walls.
    """
    _positive(width=width, height=height)
    step = step or width / 24.0
    R = width / 2.0
    ang = np.arange(8) * (np.pi / 4.0)
    ring = np.stack([R * np.cos(ang), R * np.sin(ang), np.zeros(8)], axis=1)
    s = 1.0 - bevel_frac
    top_ring = ring * np.array([s, s, 1.0]) + np.array(
        [bevel_offset[0], bevel_offset[1], height]
    )
    center = np.array([bevel_offset[0], bevel_offset[1], height])
    pieces = [
        _tri_patch(center, top_ring[i], top_ring[(i + 1) % 8], step) for i in range(8)
    ]
    walls = _walls(ring, top_ring, step)
    return validate_mesh(Mesh.merge(pieces + [walls]))


def hemisphere(radius: float = 40.0, subdivisions: int = 4) -> Mesh:
    """Upper half-sphere resting on the table, exact vertex normals.

    Octahedron-based subdivision keeps the equator ring clean at z = 0
    and all vertices exactly on the sphere.
    """
    _positive(radius=radius)
    verts = np.array(
        [[1, 0, 0], [0, 1, 0], [-1, 0, 0], [0, -1, 0], [0, 0, 1]], dtype=np.float64
    )
    faces = [[0, 1, 4], [1, 2, 4], [2, 3, 4], [3, 0, 4]]
    v = verts
    f = np.asarray(faces, dtype=np.int64)
    for _ in range(subdivisions):
        edge_mid: dict = {}
        new_faces = []
        vlist = list(v)
        for tri in f:
            mids = []
            for i in range(3):
                key = tuple(sorted((tri[i], tri[(i + 1) % 3])))
                if key not in edge_mid:
                    m = vlist[key[0]] + vlist[key[1]]
                    m = m / np.linalg.norm(m)
                    edge_mid[key] = len(vlist)
                    vlist.append(m)
                mids.append(edge_mid[key])
            a, b, c = tri
            ab, bc, ca = mids
            new_faces += [[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]
        v = np.asarray(vlist)
        f = np.asarray(new_faces, dtype=np.int64)
    v = v * radius
    normals = v / radius
    v = v.copy()
    v[:, 2] = np.maximum(v[:, 2], 0.0)  # equator vertices are exact already
    return validate_mesh(Mesh(v, f, vertex_normals=normals))


def disc(
    diameter: float = 50.0, thickness: float = 3.15, step: float = None  # type: ignore[assignment]
) -> Mesh:
    _positive(diameter=diameter, thickness=thickness)
    R = diameter / 2.0
    step = step or max(R / 12.0, 1.0)
    cap, outer_ring, _ = _disc_cap(R, thickness, step)
    bottom_ring = outer_ring - np.array([0.0, 0.0, thickness])
    wall_step = min(step, 2.5 * thickness)
    walls = _walls(bottom_ring, outer_ring, wall_step)
    return validate_mesh(Mesh.merge([cap, walls]))


def card(
    length: float = 86.0,
    width: float = 54.0,
    thickness: float = 0.76,
    step: float = None,  # type: ignore[assignment]
) -> Mesh:
    """Axis-aligned thin box (open bottom), long side along +X."""
    _positive(length=length, width=width, thickness=thickness)
    step = step or max(length, width) / 24.0
    hx, hy = length / 2.0, width / 2.0
    z = thickness
    c = [
        np.array([-hx, -hy, 0.0]),
        np.array([hx, -hy, 0.0]),
        np.array([hx, hy, 0.0]),
        np.array([-hx, hy, 0.0]),
    ]
    ct = [p + np.array([0.0, 0.0, z]) for p in c]
    top = _quad_patch(ct[0], ct[1], ct[2], ct[3], step)
    wall_step = min(step, 2.5 * thickness)
    walls = _walls(np.stack(c), np.stack(ct), wall_step)
    return validate_mesh(Mesh.merge([top, walls]))


def heightfield(
    fn: Callable[[np.ndarray, np.ndarray], np.ndarray],
    size_x: float,
    size_y: float,
    step: float = None,  # type: ignore[assignment]
    smooth: bool = True,
) -> Mesh:
    """Surface z = fn(x, y) over a centered rectangle.

    ``fn`` must be vectorized and should fall to 0 at the rectangle border
    (the mesh is not skirted). Vertex normals come from central differences
    of ``fn`` when ``smooth``.
    """
    _positive(size_x=size_x, size_y=size_y)
    step = step or max(size_x, size_y) / 48.0
    nx = max(2, int(np.ceil(size_x / step)))
    ny = max(2, int(np.ceil(size_y / step)))
    x = np.linspace(-size_x / 2.0, size_x / 2.0, nx + 1)
    y = np.linspace(-size_y / 2.0, size_y / 2.0, ny + 1)
    xx, yy = np.meshgrid(x, y)
    zz = np.asarray(fn(xx, yy), dtype=np.float64)
    verts = np.stack([xx.ravel(), yy.ravel(), zz.ravel()], axis=1)
    idx = np.arange((nx + 1) * (ny + 1)).reshape(ny + 1, nx + 1)
    a = idx[:-1, :-1].ravel()
    b = idx[:-1, 1:].ravel()
    cc = idx[1:, 1:].ravel()
    d = idx[1:, :-1].ravel()
    faces = np.concatenate(
        [np.stack([a, b, cc], axis=1), np.stack([a, cc, d], axis=1)], axis=0
    )
    vn = None
    if smooth:
        h = step / 4.0
        dzdx = (fn(xx + h, yy) - fn(xx - h, yy)) / (2 * h)
        dzdy = (fn(xx, yy + h) - fn(xx, yy - h)) / (2 * h)
        vn = np.stack([-dzdx.ravel(), -dzdy.ravel(), np.ones(verts.shape[0])], axis=1)
        vn /= np.linalg.norm(vn, axis=1, keepdims=True)
    return validate_mesh(Mesh(verts, faces, vertex_normals=vn))


def ridge(
    length: float = 60.0,
    width: float = 36.0,
    height: float = 14.0,
    step: float = None,  # type: ignore[assignment]
) -> Mesh:
    """Rounded bar: a cylinder-like hump along +X with smooth run-outs.

    The cross profile is h*(1-q^2)^1.5, which meets the table tangentially
    so the triangulated slope stays within the aspect budget.
    """
    _positive(length=length, width=width, height=height)

    def fn(x, y):
        qx = np.clip(np.abs(x) / (length / 2.0), 0.0, 1.0)
        qy = np.clip(np.abs(y) / (width / 2.0), 0.0, 1.0)
        return height * (1.0 - qy**2) ** 1.5 * (1.0 - qx**4) ** 1.5

    return heightfield(fn, length, width, step=step or 1.5)


_RELIEF_BUMPS = (
    # (x frac, y frac, sigma frac, amplitude frac) of (size, size, size, height)
    (-0.18, -0.12, 0.16, 1.0),
    (0.22, 0.05, 0.13, 0.8),
    (-0.02, 0.24, 0.11, 0.6),
    (0.10, -0.26, 0.10, -0.4),
)


def relief(
    size: float = 56.0, height: float = 10.0, step: float = None  # type: ignore[assignment]
) -> Mesh:
    """Asymmetric bas-relief: a fixed layout of smooth bumps and a dip."""
    _positive(size=size, height=height)

    def fn(x, y):
        z = np.zeros_like(x)
        for bx, by, bs, ba in _RELIEF_BUMPS:
            r2 = (x - bx * size) ** 2 + (y - by * size) ** 2
            z = z + ba * height * np.exp(-0.5 * r2 / (bs * size) ** 2)
        # taper to zero at the border
        qx = np.clip(np.abs(x) / (size / 2.0), 0.0, 1.0)
        qy = np.clip(np.abs(y) / (size / 2.0), 0.0, 1.0)
        taper = (1.0 - qx**2) * (1.0 - qy**2)
        return np.maximum(z * taper, 0.0)

    return heightfield(fn, size, size, step=step or 1.5)


def dome(
    size_x: float = 50.0,
    size_y: float = 44.0,
    height: float = 12.0,
    step: float = None,  # type: ignore[assignment]
) -> Mesh:
    """Smooth oval dome, slightly skewed so its outline is not symmetric."""
    _positive(size_x=size_x, size_y=size_y, height=height)

    def fn(x, y):
        # skew shifts the crest off-center
        xs = x + 0.22 * y
        qx = np.clip(np.abs(xs) / (size_x / 2.0), 0.0, 1.0)
        qy = np.clip(np.abs(y) / (size_y / 2.0), 0.0, 1.0)
        return height * (1.0 - qx**2) ** 1.5 * (1.0 - qy**2) ** 1.5

    return heightfield(fn, size_x * 1.3, size_y, step=step or 1.5)


_PRIMITIVES = {
    "pyramid": pyramid,
    "star_prism": star_prism,
    "octagon_prism": octagon_prism,
    "hemisphere": hemisphere,
    "disc": disc,
    "card": card,
    "heightfield": heightfield,
    "ridge": ridge,
    "relief": relief,
    "dome": dome,
}


@dataclass(frozen=True)
class DirectionalLight:
    """Distant light. ``direction`` points from the surface toward the light."""

    direction: np.ndarray
    radiance: float = 1.0

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=np.float64).reshape(3)
        if abs(np.linalg.norm(d) - 1.0) > 1e-9:
            raise ValueError(f"light direction must be unit length, |d|={np.linalg.norm(d)}")
        object.__setattr__(self, "direction", d)
        object.__setattr__(self, "radiance", float(self.radiance))


@dataclass(frozen=True)
class Scene:
    """One object on (or off) the white table mat.

    pose maps the object's local frame into the base frame; albedo is the
    object's diffuse reflectance in (0, 1]; ground adds the mat plane at
    z = 0 with its own albedo.
    """

    mesh: Mesh
    albedo: float = 0.9
    ground: bool = True
    ground_albedo: float = 0.92
    pose: RigidTransform3D = None  # type: ignore[assignment]

    def __post_init__(self):
        if not (0.0 < self.albedo <= 1.0):
            raise ValueError(f"albedo must be in (0,1], got {self.albedo}")
        if self.pose is None:
            object.__setattr__(self, "pose", RigidTransform3D.identity())

    def posed(self, pose) -> "Scene":
        xf = pose.to_3d() if hasattr(pose, "to_3d") else pose
        return Scene(self.mesh, self.albedo, self.ground, self.ground_albedo, xf)

    def world_mesh(self, ground_extent: float = 0.0):
        """Object mesh in the base frame, plus ground quad when enabled.

        Returns (mesh, n_object_faces); ground faces come last.
        """
        obj = self.mesh.transformed(self.pose)
        n_obj = obj.faces.shape[0]
        if not self.ground or ground_extent <= 0:
            return obj, n_obj
        e = float(ground_extent)
        gv = np.array(
            [[-e, -e, 0.0], [e, -e, 0.0], [e, e, 0.0], [-e, e, 0.0]]
        )
        gf = np.array([[0, 1, 2], [0, 2, 3]])
        ground = Mesh(gv, gf)
        if obj.vertex_normals is not None:
            up = np.tile(np.array([0.0, 0.0, 1.0]), (4, 1))
            ground = Mesh(gv, gf, vertex_normals=up)
        return Mesh.merge([obj, ground]), n_obj


def make_scene(primitive: str, albedo: float = 0.9, ground: bool = True, **dims) -> Scene:
    """Build a catalog scene. Unknown names raise UnknownPrimitive."""
    try:
        builder = _PRIMITIVES[primitive]
    except KeyError:
        raise UnknownPrimitive(
            f"unknown primitive {primitive!r}; expected one of {sorted(_PRIMITIVES)}"
        ) from None
    mesh = builder(**dims)
    return Scene(mesh=mesh, albedo=albedo, ground=ground)
