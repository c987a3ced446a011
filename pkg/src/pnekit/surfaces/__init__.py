"""Graph surfaces and their geometry in an initial data set."""

from .geometry import (BarrierMargins, SurfaceGeometry, barrier_margins, induced_geometry,
                       null_expansion, shear_and_potential)
from .grids import SurfaceGrid
from .surface import Surface

__all__ = [
    "Surface", "SurfaceGrid", "SurfaceGeometry", "BarrierMargins", "induced_geometry",
    "null_expansion", "shear_and_potential", "barrier_margins",
]
