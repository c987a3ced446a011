"""Charts, tensor fields, ambient geometry and the modified DEC margin."""

from .chart import Chart
from .data import AmbientSample, InitialDataSet
from .ops import (christoffel, dec_summary, energy_density, export_fields_csv,
                  modified_dec_margin, momentum_density, scalar_curvature)
from .presets import AnalyticSource, build_source
from .tensors import CovectorField, ScalarField, SymTensorField, write_fields_csv

__all__ = [
    "Chart", "InitialDataSet", "AmbientSample", "AnalyticSource", "build_source",
    "ScalarField", "CovectorField", "SymTensorField", "write_fields_csv",
    "christoffel", "scalar_curvature", "energy_density", "momentum_density",
    "modified_dec_margin", "dec_summary", "export_fields_csv",
]
