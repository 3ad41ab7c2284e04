"""Synthetic scenes and the rendering oracle used to verify the pipeline."""

from .primitives import (
    DirectionalLight,
    Mesh,
    Scene,
    card,
    disc,
    dome,
    heightfield,
    hemisphere,
    make_scene,
    octagon_prism,
    pyramid,
    relief,
    ridge,
    star_prism,
    validate_mesh,
)
from .render import (
    GroundTruthBundle,
    SceneRaster,
    add_noise,
    light_visibility,
    linear_equivalent_sh,
    occlusion_edges_from_depth,
    rasterize_mesh,
    rasterize_scene,
    render_ground_truth,
    render_lambertian,
    render_sh,
    shadow_test,
)
from .rig import (
    STANDARD_OBJECTS,
    CaptureSet,
    LightRig,
    apply_texture,
    capture,
    default_cameras,
    default_rig,
    frame_scene,
    light_from_angles,
    read_dataset,
    standard_scene,
    visibility_stack,
    write_dataset,
)

__all__ = [
    "CaptureSet",
    "DirectionalLight",
    "GroundTruthBundle",
    "LightRig",
    "Mesh",
    "STANDARD_OBJECTS",
    "Scene",
    "SceneRaster",
    "add_noise",
    "apply_texture",
    "capture",
    "card",
    "default_cameras",
    "default_rig",
    "disc",
    "dome",
    "frame_scene",
    "heightfield",
    "hemisphere",
    "light_from_angles",
    "light_visibility",
    "linear_equivalent_sh",
    "make_scene",
    "occlusion_edges_from_depth",
    "octagon_prism",
    "pyramid",
    "rasterize_mesh",
    "rasterize_scene",
    "read_dataset",
    "relief",
    "render_ground_truth",
    "render_lambertian",
    "render_sh",
    "ridge",
    "shadow_test",
    "standard_scene",
    "star_prism",
    "validate_mesh",
    "visibility_stack",
    "write_dataset",
]
