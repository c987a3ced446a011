"""Direct Newton solve of ``theta = h`` for radial graphs and torus height graphs."""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import RegularGridInterpolator

from ..errors import ConfigError, NonconvergenceError
from ..surfaces import Surface, SurfaceGrid
from ..surfaces.geometry import expansion_residual
from .linear import factorize, roundoff_floor

__all__ = ["GraphConfig", "GraphSolution", "graph_residual", "graph_jacobian", "pne_graph_solve",
           "resample_surface"]

_CSTEP = 1e-30


@dataclass(frozen=True)
class GraphConfig:
    """Newton controls for :func:`pne_graph_solve`.

    ``fd_jacobian`` replaces the complex-step jet partials by central
    differences (used to cross-check the assembly).
    """

    tol: float = 1e-10
    max_iter: int = 50
    min_damping: float = 2.0 ** -20
    fd_jacobian: bool = False

    def __post_init__(self):
        if not (self.tol > 0 and self.max_iter > 0 and 0 < self.min_damping < 1):
            raise ConfigError("graph solver tolerances must be positive")


@dataclass(frozen=True, eq=False)
class GraphSolution:
    surface: Surface
    residual: float
    iterations: int
    history: tuple
    log: tuple

    def to_json(self):
        return {"residual": self.residual, "iterations": self.iterations,
                "history": list(self.history), "mean_value": float(np.mean(self.surface.values)),
                "min_value": float(self.surface.values.min()),
                "max_value": float(self.surface.values.max())}


def _pointwise(surface, data, F, dF, ddF):
    return expansion_residual(surface.representation, surface.grid.coordinates(), F, dF, ddF,
                              data, surface.orientation, surface.center)


def graph_residual(surface, data):
    """``theta - h`` at the nodes of ``surface``."""
    F, dF, ddF = surface.jets()
    return np.real(_pointwise(surface, data, F, dF, ddF))


def _jet_partials(surface, data, fd=False):
    """Derivatives of the pointwise residual w.r.t. ``F``, ``F_a`` and ``F_ab``.

    Complex-step when the data accept complex points (exact to roundoff),
    central differences on the jets otherwise.
    """
    F, dF, ddF = surface.jets()
    F = F.astype(complex)
    dF = dF.astype(complex)
    ddF = ddF.astype(complex)
    use_fd = fd or not data.supports_complex
    scale = max(1.0, float(np.max(np.abs(F.real))))

    def diff(kind, a=None, b=None):
        if use_fd:
            eps = 1e-6 * scale
            out = []
            for s in (eps, -eps):
                jets = [F.real.copy(), dF.real.copy(), ddF.real.copy()]
                _bump(jets, kind, a, b, s)
                out.append(np.real(_pointwise(surface, data, *jets)))
            return (out[0] - out[1]) / (2 * eps)
        jets = [F.copy(), dF.copy(), ddF.copy()]
        _bump(jets, kind, a, b, 1j * _CSTEP)
        return np.imag(_pointwise(surface, data, *jets)) / _CSTEP

    d0 = diff(0)
    d1 = [diff(1, a) for a in range(2)]
    d2 = {(a, b): diff(2, a, b) for a in range(2) for b in range(a, 2)}
    return d0, d1, d2


def _bump(jets, kind, a, b, s):
    if kind == 0:
        jets[0] = jets[0] + s
    elif kind == 1:
        jets[1][..., a] = jets[1][..., a] + s
    else:
        jets[2][..., a, b] = jets[2][..., a, b] + s
        if a != b:
            jets[2][..., b, a] = jets[2][..., b, a] + s


def graph_jacobian(surface, data, fd=False):
    """Sparse Jacobian of :func:`graph_residual` w.r.t. the node values."""
    grid = surface.grid
    d0, d1, d2 = _jet_partials(surface, data, fd)
    J = sp.diags(d0.ravel())
    for a in range(2):
        J = J + sp.diags(d1[a].ravel()) @ grid.diff_matrix(a, 1)
    for (a, b), c in d2.items():
        J = J + sp.diags(c.ravel()) @ grid.mixed_matrix(a, b)
    return J.tocsr()


def pne_graph_solve(data, initial, cfg=None):
    """Solve ``theta[Sigma] = h`` by damped Newton on the graph values.

    Iteration stops once the max-norm residual is below ``cfg.tol`` or
    below the roundoff floor of the discrete residual (see
    :func:`~pnekit.solvers.linear.roundoff_floor`), whichever is larger.

    Parameters
    ----------
    data : InitialDataSet
    initial : Surface
        Starting graph; its grid, orientation and center are kept.
    cfg : GraphConfig, optional

    Returns
    -------
    GraphSolution

    Raises
    ------
    OutOfChartError
        An iterate leaves the chart of ``data``.
    NonconvergenceError
        Damping floor or iteration cap reached; carries the best iterate.
    """
    cfg = cfg or GraphConfig()
    surf = initial
    res = graph_residual(surf, data)
    if not np.all(np.isfinite(res)):
        raise ConfigError("theta - h is not finite on the initial surface")
    norm = float(np.max(np.abs(res)))
    l2 = float(np.linalg.norm(res))
    history = [norm]
    log = [{"iteration": 0, "residual": norm, "damping": 1.0}]
    it = 0
    while norm >= cfg.tol:
        J = graph_jacobian(surf, data, cfg.fd_jacobian)
        if norm < roundoff_floor(J, surf.values):
            break
        if it >= cfg.max_iter:
            raise NonconvergenceError(f"graph Newton: residual {norm:.3e} after {it} iterations",
                                      iterate=surf, history=history)
        step = factorize(J)(-res.ravel()).reshape(surf.grid.shape)
        t = 1.0
        while True:
            values = surf.values + t * step
            ok = surf.representation == "torus-graph" or np.all(values > 0)
            if ok:
                trial = surf.with_values(values)
                r_trial = graph_residual(trial, data)
                l2_trial = float(np.linalg.norm(r_trial))
                if np.isfinite(l2_trial) and l2_trial < l2:
                    break
            t *= 0.5
            if t < cfg.min_damping:
                raise NonconvergenceError(f"graph Newton: damping floor reached at residual {norm:.3e}",
                                          iterate=surf, history=history)
        surf, res, l2 = trial, r_trial, l2_trial
        norm = float(np.max(np.abs(res)))
        it += 1
        history.append(norm)
        log.append({"iteration": it, "residual": norm, "damping": t})
    return GraphSolution(surf, norm, it, tuple(history), tuple(log))


def resample_surface(surface, counts):
    """Cubic interpolation of a graph onto a grid with ``counts`` nodes."""
    grid = surface.grid
    counts = tuple(int(c) for c in counts)
    if grid.kind == "lat-long":
        new = SurfaceGrid.lat_long(*counts)
        th, ph = grid.axes
        v = surface.values
        n2 = grid.counts[1]
        # continue across the poles by (theta, phi) -> (-theta, phi + pi), then periodically in phi
        shift = np.roll(v, -n2 // 2, axis=1)
        k = min(3, grid.counts[0])
        ext = np.concatenate([shift[k - 1::-1], v, shift[:-k - 1:-1]], axis=0)
        th_ext = np.concatenate([-th[k - 1::-1], th, 2 * np.pi - th[:-k - 1:-1]])
        ext = np.concatenate([ext[:, -3:], ext, ext[:, :3]], axis=1)
        ph_ext = np.concatenate([ph[-3:] - 2 * np.pi, ph, ph[:3] + 2 * np.pi])
    else:
        new = SurfaceGrid.torus(counts, grid.lower, grid.upper)
        (x, y), v = grid.axes, surface.values
        Lx, Ly = (u - l for l, u in zip(grid.lower, grid.upper))
        ext = np.pad(v, 3, mode="wrap")
        th_ext = np.concatenate([x[-3:] - Lx, x, x[:3] + Lx])
        ph_ext = np.concatenate([y[-3:] - Ly, y, y[:3] + Ly])
    interp = RegularGridInterpolator((th_ext, ph_ext), ext, method="cubic")
    values = interp(new.coordinates().reshape(-1, 2)).reshape(new.shape)
    rep = surface.representation
    if rep == "radial-profile-shell":
        rep = "radial-graph"
    return Surface(rep, new, values, surface.orientation, surface.center)
