"""The simulated capture rig: lights, cameras, and dataset plumbing.

Geometry mirrors a small tabletop cell: six grazing sources spaced every
60 degrees of azimuth at 30 degrees elevation, one dimmer overhead source,
constant ambient. The overhead radiance is chosen below the grazing
response of an upward-facing patch (0.5 * 1.0), so the brighter-than-
overhead shadow rule classifies open ground correctly.

Exposure is one fixed gain shared by every capture of the rig, calibrated
so the brightest physically possible pixel (a white surface facing a
grazing light head-on) lands at 0.8 of full scale. Sharing the gain keeps
ratios between light channels meaningful across image sets.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, replace

import numpy as np

from ..core import io
from ..core.camera import CameraModel, look_at_camera
from ..core.image import ImageF
from ..errors import MissingInput
from ..normals import NormalMap
from .primitives import DirectionalLight, Scene, make_scene
from .render import (
    GroundTruthBundle,
    SceneRaster,
    add_noise,
    light_visibility,
    rasterize_scene,
    render_ground_truth,
    render_lambertian,
)

GRAZING_ELEVATION_DEG = 30.0
OVERHEAD_RADIANCE = 0.45
AMBIENT = 0.04
PEAK_TARGET = 0.8
MAX_ALBEDO = 0.95
PX_PER_MM = 7.0
CAMERA_DISTANCE_MM = 600.0


def light_from_angles(azimuth_deg: float, elevation_deg: float, radiance: float = 1.0) -> DirectionalLight:
    az = np.deg2rad(azimuth_deg)
    el = np.deg2rad(elevation_deg)
    d = np.array([np.cos(az) * np.cos(el), np.sin(az) * np.cos(el), np.sin(el)])
    return DirectionalLight(direction=d, radiance=radiance)


@dataclass(frozen=True)
class LightRig:
    grazing: tuple  # 6 DirectionalLight
    overhead: DirectionalLight
    ambient: float
    gain: float

    @property
    def all_lights(self) -> tuple:
        return self.grazing + (self.overhead,)

    def to_dict(self) -> dict:
        return {
            "grazing": [
                {"direction": list(l.direction), "radiance": l.radiance}
                for l in self.grazing
            ],
            "overhead": {
                "direction": list(self.overhead.direction),
                "radiance": self.overhead.radiance,
            },
            "ambient": self.ambient,
            "gain": self.gain,
        }

    @staticmethod
    def from_dict(d: dict) -> "LightRig":
        grazing = tuple(
            DirectionalLight(np.array(g["direction"]), float(g["radiance"]))
            for g in d["grazing"]
        )
        ov = DirectionalLight(
            np.array(d["overhead"]["direction"]), float(d["overhead"]["radiance"])
        )
        return LightRig(grazing, ov, float(d["ambient"]), float(d["gain"]))

    def save_json(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")

    @staticmethod
    def load_json(path) -> "LightRig":
        with open(path) as f:
            return LightRig.from_dict(json.load(f))


def default_rig() -> LightRig:
    grazing = tuple(
        light_from_angles(60.0 * k, GRAZING_ELEVATION_DEG, 1.0) for k in range(6)
    )
    overhead = DirectionalLight(np.array([0.0, 0.0, 1.0]), OVERHEAD_RADIANCE)
    peak = AMBIENT + (MAX_ALBEDO / np.pi) * 1.0
    return LightRig(grazing, overhead, AMBIENT, gain=PEAK_TARGET / peak)


# ------------------------------------------------------------------ cameras
def frame_scene(
    scene: Scene,
    elevation_deg: float = 90.0,
    azimuth_deg: float = -90.0,
    distance: float = CAMERA_DISTANCE_MM,
    px_per_mm: float = PX_PER_MM,
    margin_mm: float = 10.0,
    shadow_apron: bool = False,
) -> CameraModel:
    """Aim a camera at the scene and size the sensor to cover it.

    The focal length realizes ``px_per_mm`` at the target distance. The
    sensor covers the object's bounding box plus a ground margin;
    ``shadow_apron`` widens it so fully cast grazing shadows fit (about
    1.8x object height at 30 degrees elevation). Shadows crossing the
    frame border still render correctly either way; the apron only
    controls how much of them is imaged.
    """
    el = np.deg2rad(elevation_deg)
    az = np.deg2rad(azimuth_deg)
    eye = distance * np.array(
        [np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)]
    )
    fwd = -eye / np.linalg.norm(eye)
    up = (0.0, 1.0, 0.0) if abs(fwd[2]) > 0.99 else (0.0, 0.0, 1.0)
    fx = px_per_mm * distance

    lo, hi = scene.mesh.transformed(scene.pose).aabb()
    reach = float(max(abs(lo[0]), abs(hi[0]), abs(lo[1]), abs(hi[1])))
    apron = reach + margin_mm
    if shadow_apron:
        apron += hi[2] / np.tan(np.deg2rad(GRAZING_ELEVATION_DEG))
    corners = []
    for x in (lo[0], hi[0]):
        for y in (lo[1], hi[1]):
            for z in (lo[2], hi[2]):
                corners.append([x, y, z])
    for x in (-apron, apron):
        for y in (-apron, apron):
            corners.append([x, y, 0.0])
    pts = np.array(corners)

    probe = look_at_camera(eye, (0.0, 0.0, 0.0), fx, width=8, height=8, up=up)
    pc = probe.to_camera(pts)
    u = fx * pc[:, 0] / pc[:, 2]
    v = fx * pc[:, 1] / pc[:, 2]
    half_w = int(np.ceil(np.abs(u).max())) + 2
    half_h = int(np.ceil(np.abs(v).max())) + 2
    return look_at_camera(
        eye, (0.0, 0.0, 0.0), fx, width=2 * half_w + 1, height=2 * half_h + 1, up=up
    )


def default_cameras(scene: Scene):
    """The rig's two viewpoints: straight down and obliquely from the side."""
    c1 = frame_scene(scene, elevation_deg=90.0)
    c2 = frame_scene(scene, elevation_deg=42.0, azimuth_deg=-90.0)
    return c1, c2


# ------------------------------------------------------------------ captures
@dataclass
class CaptureSet:
    """One camera's seven-image stack plus reference data.

    ``images[0:6]`` are the grazing channels, ``images[6]`` the overhead.
    ``visibility[..., i]`` is the oracle's per-light direct-light mask.
    In-memory captures keep the raster for reuse; datasets loaded from
    disk carry ``raster=None`` and ``visibility=None``.
    """

    images: list
    camera: CameraModel
    rig: LightRig
    gt: GroundTruthBundle
    raster: SceneRaster = None  # type: ignore[assignment]
    visibility: np.ndarray = None  # type: ignore[assignment]

    @property
    def directional(self) -> list:
        return self.images[:6]

    @property
    def overhead(self) -> ImageF:
        return self.images[6]


def visibility_stack(raster: SceneRaster, rig: LightRig) -> np.ndarray:
    vis = np.zeros(raster.depth.shape + (7,), dtype=bool)
    for i, light in enumerate(rig.all_lights):
        vis[..., i] = light_visibility(raster, light)
    return vis


def capture(
    scene: Scene,
    cam: CameraModel,
    rig: LightRig,
    noise_sigma: float = 0.0,
    rng: np.random.Generator = None,  # type: ignore[assignment]
    edge_tau: float = 2.0,
) -> CaptureSet:
    raster = rasterize_scene(scene, cam)
    vis = visibility_stack(raster, rig)
    images = []
    for i, light in enumerate(rig.all_lights):
        img = render_lambertian(
            scene,
            light,
            cam,
            ambient=rig.ambient,
            exposure=rig.gain,
            raster=raster,
            visibility=vis[..., i],
        )
        images.append(img)
    if noise_sigma > 0:
        if rng is None:
            rng = np.random.default_rng(0)
        images = [add_noise(im, noise_sigma, rng) for im in images]
    gt = render_ground_truth(scene, cam, edge_tau=edge_tau, raster=raster)
    return CaptureSet(
        images=images, camera=cam, rig=rig, gt=gt, raster=raster, visibility=vis
    )


def apply_texture(cap: CaptureSet, texture: np.ndarray) -> CaptureSet:
    """Simulate per-pixel albedo variation by scaling all channels alike.

    Scaling every channel by the same map leaves channel ratios exactly
    invariant, which is what makes ratio-based edge detection texture-
    blind.
    """
    tex = np.asarray(texture, dtype=np.float64)
    if tex.min() <= 0 or tex.max() > 1.0:
        raise ValueError("texture must lie in (0, 1]")
    images = [ImageF(im.samples * tex, valid=im.valid) for im in cap.images]
    return replace(cap, images=images)


# ------------------------------------------------------------------ datasets
DATASET_IMAGES = [f"I_{i}.pfm" for i in range(1, 8)]


def write_dataset(path, cap: CaptureSet) -> None:
    """Write the on-disk capture layout.

    I_1..I_7.pfm, gt_normals.pfm, gt_depth.pfm, silhouette.png, edges.png,
    camera.json, lights.json.
    """
    os.makedirs(path, exist_ok=True)
    for name, im in zip(DATASET_IMAGES, cap.images):
        io.write_pfm(os.path.join(path, name), im.samples)
    cap.gt.normals.save_pfm(os.path.join(path, "gt_normals.pfm"))
    io.write_pfm(
        os.path.join(path, "gt_depth.pfm"),
        np.where(cap.gt.depth.valid, cap.gt.depth.samples, 0.0),
    )
    io.write_png16(os.path.join(path, "silhouette.png"), cap.gt.silhouette)
    io.write_png16(os.path.join(path, "edges.png"), cap.gt.occlusion_edges)
    cap.camera.save_json(os.path.join(path, "camera.json"))
    cap.rig.save_json(os.path.join(path, "lights.json"))


def read_dataset(path) -> CaptureSet:
    if not os.path.isdir(path):
        raise MissingInput(f"dataset directory not found: {path}")
    for required in DATASET_IMAGES + ["camera.json", "lights.json"]:
        if not os.path.exists(os.path.join(path, required)):
            raise MissingInput(f"dataset missing {required}")
    cam = CameraModel.load_json(os.path.join(path, "camera.json"))
    rig = LightRig.load_json(os.path.join(path, "lights.json"))
    images = [
        ImageF(io.read_pfm(os.path.join(path, name), channels=1))
        for name in DATASET_IMAGES
    ]
    normals = NormalMap.load_pfm(os.path.join(path, "gt_normals.pfm"))
    depth_raw = io.read_pfm(os.path.join(path, "gt_depth.pfm"), channels=1)
    depth = ImageF(depth_raw, valid=depth_raw > 0)
    silhouette = io.read_mask_png(os.path.join(path, "silhouette.png"))
    edges = io.read_mask_png(os.path.join(path, "edges.png"))
    gt = GroundTruthBundle(
        normals=normals, depth=depth, silhouette=silhouette, occlusion_edges=edges
    )
    return CaptureSet(images=images, camera=cam, rig=rig, gt=gt)


# ------------------------------------------------------------------ catalog
STANDARD_OBJECTS = {
    "pyramid": ("pyramid", dict(base_x=60.0, base_y=60.0, height=32.0, top_frac=0.4)),
    "star": ("star_prism", dict(outer_diameter=64.0, height=12.0)),
    "octagon": ("octagon_prism", dict(width=52.0, height=16.0)),
    "octagon_bevel": (
        "octagon_prism",
        dict(width=52.0, height=16.0, bevel_frac=0.35, bevel_offset=(6.0, -4.0)),
    ),
    "hemisphere": ("hemisphere", dict(radius=24.0)),
    "disc": ("disc", dict(diameter=50.0, thickness=3.15)),
    "card": ("card", dict()),
    "ridge": ("ridge", dict()),
    "relief": ("relief", dict()),
    "dome": ("dome", dict()),
}


def standard_scene(name: str, albedo: float = MAX_ALBEDO, pose=None) -> Scene:
    """One of the ten catalog objects on the ground plane."""
    try:
        primitive, dims = STANDARD_OBJECTS[name]
    except KeyError:
        raise MissingInput(
            f"unknown object {name!r}; expected one of {sorted(STANDARD_OBJECTS)}"
        ) from None
    scene = make_scene(primitive, albedo=albedo, ground=True, **dims)
    if pose is not None:
        scene = scene.posed(pose)
    return scene
