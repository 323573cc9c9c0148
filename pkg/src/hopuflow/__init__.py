"""High-order hybrid mixed-stress solver for incompressible flow on box meshes."""

from . import fespace, forms, hopu, linsolve, mesh, splitting, stats
from .fespace import SpaceSet, build_spaces
from .forms import FluxMode
from .mesh import build_box_mesh

__version__ = "0.1.0"

__all__ = [
    "FluxMode",
    "SpaceSet",
    "build_box_mesh",
    "build_spaces",
    "fespace",
    "forms",
    "hopu",
    "linsolve",
    "mesh",
    "splitting",
    "stats",
]
