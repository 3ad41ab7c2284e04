"""shapelight: shape, edges, grasps, poses and deformation from a stack of
directionally illuminated images, with a built-in synthetic oracle."""

__version__ = "0.1.0"

from . import core, errors, normals, optim, synth

__all__ = ["core", "errors", "normals", "optim", "synth", "__version__"]
