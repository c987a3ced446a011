"""Scalar, covector and symmetric 2-tensor fields sampled on a chart."""

import csv
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError
from .chart import Chart

__all__ = ["ScalarField", "CovectorField", "SymTensorField", "triu_pairs", "write_fields_csv"]


def triu_pairs(n):
    """Index pairs ``(i, j)``, ``i <= j``, in storage order."""
    return list(zip(*np.triu_indices(n)))


def _check(chart, values, trailing, name):
    if values.shape != tuple(chart.shape) + trailing:
        raise ConfigError(f"{name}: shape {values.shape} does not match chart {chart.shape} x {trailing}")
    if not np.all(np.isfinite(values)):
        raise ConfigError(f"{name}: non-finite values")


@dataclass(frozen=True)
class ScalarField:
    chart: Chart
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape == ():
            vals = np.full(self.chart.shape, float(vals))
        _check(self.chart, vals, (), "ScalarField")
        object.__setattr__(self, "values", vals)

    def columns(self, name="value"):
        return [name], self.values.reshape(-1, 1)


@dataclass(frozen=True)
class CovectorField:
    chart: Chart
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        _check(self.chart, vals, (self.chart.dim,), "CovectorField")
        object.__setattr__(self, "values", vals)

    def columns(self, name="J"):
        names = [f"{name}_{c}" for c in self.chart.coordinate_names]
        return names, self.values.reshape(-1, self.chart.dim)


@dataclass(frozen=True)
class SymTensorField:
    """Symmetric 2-tensor stored as its upper triangle.

    ``values[..., k]`` is the component ``(i, j) = triu_pairs(n)[k]``.
    """

    chart: Chart
    values: np.ndarray

    def __post_init__(self):
        n = self.chart.dim
        vals = np.asarray(self.values, dtype=float)
        _check(self.chart, vals, (n * (n + 1) // 2,), "SymTensorField")
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_full(cls, chart, full):
        full = np.asarray(full, dtype=float)
        i, j = np.triu_indices(chart.dim)
        return cls(chart, full[..., i, j])

    def full(self):
        n = self.chart.dim
        out = np.empty(self.values.shape[:-1] + (n, n))
        for k, (i, j) in enumerate(triu_pairs(n)):
            out[..., i, j] = self.values[..., k]
            out[..., j, i] = self.values[..., k]
        return out

    def columns(self, name="g"):
        names_ = self.chart.coordinate_names
        names = [f"{name}_{names_[i]}{names_[j]}" for i, j in triu_pairs(self.chart.dim)]
        return names, self.values.reshape(-1, len(names))


def write_fields_csv(path, chart, fields):
    """One row per node: chart coordinates followed by every field's components.

    ``fields`` maps a column prefix to a field object.
    """
    header = list(chart.coordinate_names)
    blocks = [chart.points()]
    for name, field in fields.items():
        names, cols = field.columns(name)
        header += names
        blocks.append(cols)
    table = np.hstack(blocks)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in table:
            w.writerow([format(float(v), ".17g") for v in row])
