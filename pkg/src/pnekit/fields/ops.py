"""Finite-difference field operations on an :class:`InitialDataSet`.

All derivatives come from the chart's centered second-order stencils
(one-sided second order at closed edges).  Outputs are chart fields.
"""

import numpy as np

from ..errors import ConfigError, DegenerateMetricError
from . import kernels
from .tensors import CovectorField, ScalarField, write_fields_csv

__all__ = [
    "christoffel",
    "scalar_curvature",
    "energy_density",
    "momentum_density",
    "modified_dec_margin",
    "dec_summary",
    "export_fields_csv",
]


def christoffel(data, node):
    """Christoffel symbols ``Gamma[k, i, j]`` at one node.

    ``node`` is a multi-index (or flat index) into the chart.
    """
    ch = data.chart
    if np.ndim(node) == 0:
        node = np.unravel_index(int(node), ch.shape)
    node = tuple(int(i) for i in node)
    if len(node) != ch.dim:
        raise ConfigError(f"node index {node} does not match chart dimension {ch.dim}")
    try:
        kernels.inverse_metric(data.g.full()[node])
    except DegenerateMetricError as exc:
        raise DegenerateMetricError(f"at node {node}: {exc}") from None
    return np.real(data.chart_christoffel[node])


def _grid(data):
    kernels.inverse_metric(data.g.full())
    return data.grid


def scalar_curvature(data):
    return ScalarField(data.chart, np.real(_grid(data).scalar_curvature))


def energy_density(data):
    """mu under the data set's ``mu_convention``."""
    return ScalarField(data.chart, np.real(_grid(data).mu))


def momentum_density(data):
    return CovectorField(data.chart, np.real(data.grid_to_chart_covector(_grid(data).J)))


def modified_dec_margin(data):
    """``mu - |J| + 1/2 (n/(n-1) h^2 - 2 h tr_g p - 2 |Dh|)`` at every node.

    The data satisfy the modified dominant energy condition iff this is
    nonnegative everywhere.
    """
    s = _grid(data)
    val = kernels.dec_margin(s.mu, s.J, s.g_inv, s.h, s.dh, s.tr_p, data.n)
    return ScalarField(data.chart, np.real(val))


def dec_summary(data, tol=0.0):
    """Min, argmin (chart coordinates) and pass flag of the DEC margin."""
    m = modified_dec_margin(data).values
    k = int(np.argmin(m))
    node = np.unravel_index(k, data.chart.shape)
    return {
        "min_margin": float(m.flat[k]),
        "argmin_node": [int(i) for i in node],
        "argmin_coordinates": [float(c) for c in data.chart.points()[k]],
        "passed": bool(m.flat[k] >= -tol),
    }


def export_fields_csv(data, path):
    """Dump ``g, p, h, R, mu, J`` and the DEC margin, one row per node."""
    write_fields_csv(path, data.chart, {
        "g": data.g,
        "p": data.p,
        "h": data.h,
        "R": scalar_curvature(data),
        "mu": energy_density(data),
        "J": momentum_density(data),
        "dec_margin": modified_dec_margin(data),
    })
