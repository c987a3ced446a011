"""Initial data sets ``(M, g, p, h)`` sampled on a chart.

An :class:`InitialDataSet` always carries node samples of ``g``, ``p`` and
``h`` in chart components.  Grid quantities (Christoffel symbols, curvature,
``mu``, ``J``) are obtained from those samples by finite differences.

Off-grid evaluation (surfaces, Jang graphs) goes through :meth:`ambient`.
Data built from a closed-form preset are evaluated exactly there, in
Cartesian coordinates; tabulated data are interpolated in chart
coordinates from the node samples and their finite-difference derivatives.
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from ..errors import ConfigError, OutOfChartError
from . import kernels
from .chart import Chart
from .presets import AnalyticSource, build_source
from .tensors import ScalarField, SymTensorField, triu_pairs

__all__ = ["InitialDataSet", "AmbientSample", "TRACE_CONVENTIONS", "MU_CONVENTIONS"]

TRACE_CONVENTIONS = ("ambient", "induced")
MU_CONVENTIONS = ("standard", "literal")


@dataclass
class AmbientSample:
    """Ambient fields at a batch of points, in one coordinate frame.

    Arrays carry the batch shape first.  Derived quantities are computed on
    first access and work for complex input.
    """

    g: np.ndarray
    dg: np.ndarray
    ddg: np.ndarray
    p: np.ndarray
    dp: np.ndarray
    h: np.ndarray
    dh: np.ndarray
    mu_convention: str = "standard"

    @cached_property
    def g_inv(self):
        return kernels.inverse_metric(self.g)

    @cached_property
    def gamma(self):
        return kernels.christoffel(self.g_inv, self.dg)

    @cached_property
    def ricci(self):
        dgamma = kernels.christoffel_derivative(self.g_inv, self.dg, self.ddg)
        return kernels.ricci(self.gamma, dgamma)

    @cached_property
    def scalar_curvature(self):
        return kernels.trace(self.g_inv, self.ricci)

    @cached_property
    def tr_p(self):
        return kernels.trace(self.g_inv, self.p)

    @cached_property
    def mu(self):
        return kernels.energy_density(self.scalar_curvature, self.g_inv, self.p, self.mu_convention)

    @cached_property
    def J(self):
        return kernels.momentum_density(self.g_inv, self.gamma, self.dg, self.p, self.dp)


def _pullback(J, t):
    return np.einsum("...ia,...ij,...jb->...ab", J, t, J)


@dataclass(frozen=True, eq=False)
class InitialDataSet:
    """The triple ``(g, p, h)`` on a chart, with convention flags.

    Parameters
    ----------
    chart : Chart
    g, p : SymTensorField
        Chart components.
    h : ScalarField
    n : int
        Dimension of ``M``; must equal the chart dimension and be at least 3.
    trace_convention : {"ambient", "induced"}
        Which trace of ``p`` enters ``h^2 - 2 h tr p`` in the stability operator.
    mu_convention : {"standard", "literal"}
    source : AnalyticSource, optional
        Closed-form generator; enables exact off-grid evaluation.
    """

    chart: Chart
    g: SymTensorField
    p: SymTensorField
    h: ScalarField
    n: int
    trace_convention: str = "ambient"
    mu_convention: str = "standard"
    source: AnalyticSource = None
    description: dict = field(default=None, repr=False)

    def __post_init__(self):
        if self.n < 3:
            raise ConfigError(f"dimension must be at least 3, got {self.n}")
        if self.n != self.chart.dim:
            raise ConfigError(f"dimension {self.n} differs from chart dimension {self.chart.dim}")
        if self.trace_convention not in TRACE_CONVENTIONS:
            raise ConfigError(f"unknown trace convention {self.trace_convention!r}")
        if self.mu_convention not in MU_CONVENTIONS:
            raise ConfigError(f"unknown mu convention {self.mu_convention!r}")
        for f in (self.g, self.p, self.h):
            if f.chart != self.chart:
                raise ConfigError("fields live on a different chart")
        if not kernels.leading_minors_positive(self.g.full()):
            raise ConfigError("metric is not positive definite at every node")

    # -- construction -----------------------------------------------------

    @classmethod
    def from_source(cls, source, chart, **kw):
        if chart.dim != source.n:
            raise ConfigError("source and chart dimensions differ")
        x = chart.cartesian_points()
        vals = source.evaluate(x)
        J = chart.cartesian_jacobian()
        g = SymTensorField.from_full(chart, np.real(_pullback(J, vals["g"])))
        p = SymTensorField.from_full(chart, np.real(_pullback(J, vals["p"])))
        h = ScalarField(chart, np.real(vals["h"]))
        return cls(chart, g, p, h, chart.dim, source=source, **kw)

    @classmethod
    def from_json(cls, desc, trace_convention=None, mu_convention=None):
        """Build from a description such as
        ``{"preset": "schwarzschild", "mass": 1.0, "chart": {...}}``.
        """
        if "chart" not in desc:
            raise ConfigError("data description needs a chart")
        chart = Chart.from_json(desc["chart"])
        kw = {
            "trace_convention": trace_convention or desc.get("trace_convention", "ambient"),
            "mu_convention": mu_convention or desc.get("mu_convention", "standard"),
            "description": desc,
        }
        if desc.get("preset") == "custom" and _is_tabulated(desc):
            return cls._from_tables(desc, chart, **kw)
        source = build_source(desc, chart.dim)
        return cls.from_source(source, chart, **kw)

    @classmethod
    def _from_tables(cls, desc, chart, **kw):
        names = chart.coordinate_names
        comps = {}
        for key in ("g", "p"):
            table = desc.get(key, {})
            vals = np.zeros(chart.shape + (len(triu_pairs(chart.dim)),))
            for k, (i, j) in enumerate(triu_pairs(chart.dim)):
                v = table.get(names[i] + names[j], table.get(names[j] + names[i]))
                if v is None:
                    v = 1.0 if (key == "g" and i == j) else 0.0
                vals[..., k] = _table(v, chart, f"{key}_{names[i]}{names[j]}")
            comps[key] = SymTensorField(chart, vals)
        h = ScalarField(chart, _table(desc.get("h", 0.0), chart, "h"))
        return cls(chart, comps["g"], comps["p"], h, chart.dim, **kw)

    def with_conventions(self, trace_convention=None, mu_convention=None):
        return InitialDataSet(self.chart, self.g, self.p, self.h, self.n,
                              trace_convention or self.trace_convention,
                              mu_convention or self.mu_convention,
                              self.source, self.description)

    # -- grid geometry (finite differences) --------------------------------

    @cached_property
    def grid(self):
        """Finite-difference ambient geometry at the nodes, as an AmbientSample.

        On box charts the sample is in chart components.  On lat-long shells
        it is in Cartesian components: those are smooth across the poles, so
        their differences stay second order there, while the chart components
        (``g_phiphi ~ sin^2 theta``) are not resolved on the first ring.
        Scalars (``R``, ``mu``, ``|J|``, DEC margin) do not depend on the frame.
        """
        ch = self.chart
        g = self.g.full()
        p = self.p.full()
        h = self.h.values
        if ch.topology != "lat-long-sphere-shell":
            dg, ddg = ch.tensor_derivatives(g, second=True)
            dp, _ = ch.tensor_derivatives(p)
            return AmbientSample(g, dg, ddg, p, dp, h, ch.gradient(h), self.mu_convention)
        Ji = self._jacobian_inverse
        G = np.einsum("...ai,...ab,...bj->...ij", Ji, g, Ji)
        P = np.einsum("...ai,...ab,...bj->...ij", Ji, p, Ji)
        dG, ddG = self._cartesian_derivatives(G, second=True)
        dP, _ = self._cartesian_derivatives(P)
        dh, _ = self._cartesian_derivatives(h)
        return AmbientSample(G, dG, ddG, P, dP, h, dh, self.mu_convention)

    @cached_property
    def _jacobian_inverse(self):
        return np.linalg.inv(self.chart.cartesian_jacobian())

    def _cartesian_derivatives(self, F, second=False):
        """Cartesian first (and second) derivatives of node values ``F[..., comps]``.

        Derivative indices are placed before the component indices.
        """
        ch = self.chart
        Ji = self._jacobian_inverse
        nc = F.ndim - ch.dim
        dq = ch.gradient(F)                                   # (..., comps, a)
        dx = np.einsum("...ai,...a->...i", _bcast(Ji, nc), dq)
        dd = None
        if second:
            K = ch.cartesian_hessian()
            Hq = ch.hessian(F) - np.einsum("...iab,...i->...ab", _bcast(K, nc, 3), dx)
            dd = np.einsum("...ai,...ab,...bj->...ij", _bcast(Ji, nc), Hq, _bcast(Ji, nc))
            dd = np.moveaxis(dd, (-2, -1), tuple(range(ch.dim, ch.dim + 2)))
        dx = np.moveaxis(dx, -1, ch.dim)
        return dx, dd

    @cached_property
    def chart_christoffel(self):
        """Christoffel symbols ``Gamma[..., c, a, b]`` in chart components at every node."""
        s = self.grid
        if self.chart.topology != "lat-long-sphere-shell":
            return s.gamma
        Jm = self.chart.cartesian_jacobian()
        K = self.chart.cartesian_hessian()
        inner = K + np.einsum("...ia,...jb,...kij->...kab", Jm, Jm, s.gamma)
        return np.einsum("...ck,...kab->...cab", self._jacobian_inverse, inner)

    def grid_to_chart_covector(self, v):
        """Chart components of a covector given in the :attr:`grid` frame."""
        if self.chart.topology != "lat-long-sphere-shell":
            return v
        return np.einsum("...ia,...i->...a", self.chart.cartesian_jacobian(), v)

    # -- off-grid evaluation ----------------------------------------------

    @property
    def frame(self):
        """Coordinate frame used by :meth:`ambient`: ``cartesian`` or ``chart``."""
        return "cartesian" if self.source is not None else "chart"

    @property
    def supports_complex(self):
        return self.source is not None

    def ambient(self, points, check=True):
        """Ambient sample at ``points`` (shape ``(..., n)``) given in :attr:`frame`."""
        points = np.asarray(points)
        if check:
            self.check_inside(points)
        if self.source is not None:
            v = self.source.evaluate(points)
            return AmbientSample(v["g"], v["dg"], v["ddg"], v["p"], v["dp"], v["h"], v["dh"],
                                 self.mu_convention)
        return self._interpolated(np.real(points))

    def check_inside(self, points):
        """Raise OutOfChartError if frame points leave the chart's closed ranges."""
        pts = np.real(np.asarray(points))
        ch = self.chart
        if self.frame == "cartesian" and ch.topology == "lat-long-sphere-shell":
            r = np.linalg.norm(pts, axis=-1)
            bad = (r < ch.lower[0] * (1 - 1e-12)) | (r > ch.upper[0] * (1 + 1e-12))
        elif self.frame == "cartesian" and ch.topology == "radial-interval":
            r = np.abs(pts[..., 0])
            bad = (r < ch.lower[0]) | (r > ch.upper[0])
        elif ch.topology == "periodic-box" and self.frame == "cartesian":
            # analytic data on a box: the box only bounds non-periodic use
            bad = np.zeros(pts.shape[:-1], dtype=bool)
        else:
            bad = ~ch.contains(pts, tol=1e-12)
        if np.any(bad):
            raise OutOfChartError(f"{int(np.sum(bad))} point(s) outside the chart")

    @cached_property
    def _interpolators(self):
        ch = self.chart
        gs = self.grid
        pad = 3
        axes = []
        for ax, kind, h, lo in zip(ch.axes, ch.kinds, ch.spacing, ch.lower):
            if kind == "periodic":
                n = len(ax)
                ext = lo + (np.arange(-pad, n + pad)) * h
                axes.append(ext)
            else:
                axes.append(ax)

        def wrap(arr):
            for a, kind in enumerate(ch.kinds):
                if kind == "periodic":
                    arr = np.concatenate([np.take(arr, range(-pad, 0), axis=a), arr,
                                          np.take(arr, range(pad), axis=a)], axis=a)
            return arr

        out = {}
        for key in ("g", "dg", "ddg", "p", "dp", "h", "dh"):
            arr = wrap(np.asarray(getattr(gs, key)))
            out[key] = RegularGridInterpolator(tuple(axes), arr, method="cubic",
                                               bounds_error=False, fill_value=None)
        return out

    def _interpolated(self, points):
        ch = self.chart
        q = points.copy()
        for a, kind in enumerate(ch.kinds):
            if kind == "periodic":
                q[..., a] = ch.lower[a] + np.mod(q[..., a] - ch.lower[a], ch.extents[a])
        flat = q.reshape(-1, ch.dim)
        batch = points.shape[:-1]
        vals = {}
        for key, interp in self._interpolators.items():
            v = interp(flat)
            vals[key] = v.reshape(batch + v.shape[1:])
        return AmbientSample(vals["g"], vals["dg"], vals["ddg"], vals["p"], vals["dp"],
                             vals["h"], vals["dh"], self.mu_convention)

    def to_frame(self, chart_points):
        """Map chart coordinates to :attr:`frame` coordinates."""
        if self.frame == "cartesian":
            return self.chart.cartesian_points(chart_points)
        return np.asarray(chart_points)


def _bcast(a, ncomp, rank=2):
    """Insert ``ncomp`` singleton axes between the node axes and ``rank`` tensor axes."""
    nodes = a.ndim - rank
    return a.reshape(a.shape[:nodes] + (1,) * ncomp + a.shape[nodes:])


def _is_tabulated(desc):
    for key in ("g", "p"):
        comps = desc.get(key, {})
        if isinstance(comps, dict) and any(isinstance(v, list) for v in comps.values()):
            return True
    return isinstance(desc.get("h"), list)


def _table(v, chart, name):
    if isinstance(v, (int, float)):
        return np.full(chart.shape, float(v))
    if isinstance(v, str):
        raise ConfigError(f"{name}: tabulated data cannot mix in expressions")
    arr = np.asarray(v, dtype=float)
    if arr.size != chart.size:
        raise ConfigError(f"{name}: {arr.size} values for {chart.size} nodes")
    return arr.reshape(chart.shape)
