r"""Extrinsic and intrinsic geometry of graph surfaces in an initial data set.

Conventions
-----------
* ``A(X, Y) = g(D_X nu, Y)``, so a round sphere with outward normal has
  ``A = gamma / r`` and ``H = 2 / r``.
* ``tr_Sigma p = tr_g p - p(nu, nu)``; ``theta = H + tr_Sigma p``.
* ``chi = p|_Sigma + A``; ``chi0`` is its trace-free part.
* ``W`` is the tangent vector dual to ``p(nu, .)``.
* ``Q = 1/2 R_Sigma - mu - J(nu) - 1/2 |chi|^2``.

On spheres ``R_Sigma`` comes from the Gauss equation
``R_Sigma = R - 2 Ric(nu, nu) + H^2 - |A|^2``; on tori it is differenced
from the induced metric.
"""

import csv
from dataclasses import dataclass

import numpy as np

from ..errors import DegenerateSurfaceError, InvalidShellError
from ..fields import kernels
from .surface import embed

__all__ = [
    "SurfaceGeometry",
    "pointwise_geometry",
    "induced_geometry",
    "null_expansion",
    "shear_and_potential",
    "barrier_margins",
    "BarrierMargins",
    "expansion_residual",
]


def _normal_covector(Xa):
    """Covector annihilating both tangent vectors (metric-free cross product)."""
    return np.cross(Xa[..., 0, :], Xa[..., 1, :])


def pointwise_geometry(X, Xa, Xab, amb, orientation=1, n=3, full=True):
    """Surface quantities at each point from embedding jets and an ambient sample.

    All arithmetic is complex-safe.  With ``full=False`` only the pieces
    needed for ``theta - h`` are formed.
    """
    g, g_inv = amb.g, amb.g_inv
    N = orientation * _normal_covector(Xa)
    nrm2 = np.einsum("...ij,...i,...j->...", g_inv, N, N)
    if np.any(np.real(nrm2) <= 1e-300):
        raise DegenerateSurfaceError("tangent plane collapsed")
    nu_cov = N / np.sqrt(nrm2)[..., None]
    nu = np.einsum("...ij,...j->...i", g_inv, nu_cov)
    gam = np.einsum("...ai,...ij,...bj->...ab", Xa, g, Xa)
    det = gam[..., 0, 0] * gam[..., 1, 1] - gam[..., 0, 1] ** 2
    if np.any(np.real(det) <= 0):
        raise DegenerateSurfaceError("induced metric is degenerate")
    gam_inv = np.empty_like(gam)
    gam_inv[..., 0, 0] = gam[..., 1, 1] / det
    gam_inv[..., 1, 1] = gam[..., 0, 0] / det
    gam_inv[..., 0, 1] = gam_inv[..., 1, 0] = -gam[..., 0, 1] / det
    acc = Xab + np.einsum("...kij,...ai,...bj->...abk", amb.gamma, Xa, Xa)
    A = -np.einsum("...k,...abk->...ab", nu_cov, acc)
    H = np.einsum("...ab,...ab->...", gam_inv, A)
    p = amb.p
    tr_p = amb.tr_p
    p_nn = np.einsum("...ij,...i,...j->...", p, nu, nu)
    tr_sigma = tr_p - p_nn
    theta = H + tr_sigma
    out = {"theta": theta, "H": H, "tr_sigma_p": tr_sigma, "h": amb.h, "gamma": gam,
           "gamma_inv": gam_inv, "sqrt_det": np.sqrt(det), "nu": nu, "nu_cov": nu_cov, "A": A}
    if not full:
        return out
    p_sig = np.einsum("...ai,...ij,...bj->...ab", Xa, p, Xa)
    chi = p_sig + A
    chi0 = chi - (theta / (n - 1))[..., None, None] * gam
    W_cov = np.einsum("...i,...ij,...aj->...a", nu, p, Xa)
    W = np.einsum("...ab,...b->...a", gam_inv, W_cov)
    W2 = np.einsum("...a,...a->...", W, W_cov)

    def sq(t):
        return np.einsum("...ac,...bd,...ab,...cd->...", gam_inv, gam_inv, t, t)

    ric_nn = np.einsum("...ij,...i,...j->...", amb.ricci, nu, nu)
    out.update({
        "chi": chi, "chi0": chi0, "chi_sq": sq(chi), "chi0_sq": sq(chi0), "A_sq": sq(A),
        "W_cov": W_cov, "W": W, "W_sq": W2,
        "mu": amb.mu, "J_nu": np.einsum("...i,...i->...", amb.J, nu),
        "R": amb.scalar_curvature, "ric_nn": ric_nn,
        "R_sigma_gauss": amb.scalar_curvature - 2 * ric_nn + H ** 2 - sq(A),
        "nu_h": np.einsum("...i,...i->...", amb.dh, nu),
        "tr_p": tr_p,
    })
    return out


def expansion_residual(representation, base, F, dF, ddF, data, orientation=1, center=(0, 0, 0)):
    """``theta - h`` at points, from graph jets; used by the graph solver."""
    X, Xa, Xab = embed(representation, base, F, dF, ddF, data.frame, center)
    amb = data.ambient(X)
    geo = pointwise_geometry(X, Xa, Xab, amb, orientation, data.n, full=False)
    return geo["theta"] - geo["h"]


@dataclass(frozen=True, eq=False)
class SurfaceGeometry:
    """Per-node geometry of a surface; arrays are shaped like the surface grid."""

    surface: object
    fields: dict
    n: int

    def __getattr__(self, name):
        try:
            return self.__dict__["fields"][name]
        except KeyError:
            raise AttributeError(name) from None

    @property
    def grid(self):
        return self.surface.grid

    def laplacian(self):
        return self.grid.laplacian(self.sqrt_det, self.gamma_inv)

    def area(self):
        return self.grid.integrate(np.ones(self.grid.shape), self.sqrt_det)

    def to_csv(self, path, extra=None):
        """Node coordinates, theta, H, Q, |chi0|^2 and any extra columns."""
        coords = self.grid.coordinates().reshape(-1, 2)
        names = ["theta", "H", "tr_sigma_p", "h", "Q", "chi0_sq", "W_sq", "div_W"]
        cols = [np.real(self.fields[k]).ravel() for k in names]
        for k, v in (extra or {}).items():
            names.append(k)
            cols.append(np.asarray(v, dtype=float).ravel())
        axis = ("theta_coord", "phi_coord") if self.grid.kind == "lat-long" else ("x", "y")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(list(axis) + ["value"] + names)
            for k in range(coords.shape[0]):
                w.writerow([format(float(coords[k, 0]), ".17g"), format(float(coords[k, 1]), ".17g"),
                            format(float(self.surface.values.flat[k]), ".17g")]
                           + [format(float(c[k]), ".17g") for c in cols])


def _intrinsic_scalar_curvature(grid, gam):
    """Scalar curvature of a 2D metric on a periodic grid by finite differences."""
    dg = np.empty(gam.shape[:-2] + (2, 2, 2))
    ddg = np.empty(gam.shape[:-2] + (2, 2, 2, 2))
    for i in range(2):
        for j in range(i, 2):
            d1 = grid.gradient(gam[..., i, j])
            d2 = grid.hessian(gam[..., i, j])
            dg[..., :, i, j] = dg[..., :, j, i] = d1
            ddg[..., :, :, i, j] = ddg[..., :, :, j, i] = d2
    g_inv = np.linalg.inv(gam)
    G = kernels.christoffel(g_inv, dg)
    dG = kernels.christoffel_derivative(g_inv, dg, ddg)
    return kernels.trace(g_inv, kernels.ricci(G, dG))


def induced_geometry(surface, data):
    """:class:`SurfaceGeometry` of ``surface`` in ``data``.

    Raises
    ------
    OutOfChartError
        The surface leaves the data's chart.
    DegenerateSurfaceError
        The tangent plane or induced metric degenerates.
    """
    if data.n != 3:
        raise DegenerateSurfaceError("graph surfaces are implemented for n = 3")
    X, Xa, Xab = surface.embedding(data.frame)
    amb = data.ambient(X)
    f = pointwise_geometry(X, Xa, Xab, amb, surface.orientation, data.n)
    f = {k: np.real(v) for k, v in f.items()}
    if surface.grid.kind == "torus":
        f["R_sigma"] = _intrinsic_scalar_curvature(surface.grid, f["gamma"])
    else:
        f["R_sigma"] = f["R_sigma_gauss"]
    f["Q"] = 0.5 * f["R_sigma"] - f["mu"] - f["J_nu"] - 0.5 * f["chi_sq"]
    f["div_W"] = surface.grid.divergence(f["sqrt_det"], f["W"])
    f["X"] = np.real(X)
    return SurfaceGeometry(surface, f, data.n)


def null_expansion(geom, data=None):
    """``theta = H + tr_Sigma p`` at every node."""
    return geom.H + geom.tr_sigma_p


def shear_and_potential(geom, data=None):
    """``(W, div W, |W|^2, Q)``; ``W[..., a]`` are contravariant grid components."""
    return geom.W, geom.div_W, geom.W_sq, geom.Q


@dataclass(frozen=True)
class BarrierMargins:
    """Barrier margins on the two boundary components of a shell region ``U``.

    ``first`` names which surface plays the boundary component whose
    margin is ``H + (tr_Sigma p - h)``; the other gets ``H - (tr_Sigma p - h)``.
    Mean curvatures use the normal pointing out of ``U``.
    """

    inner: np.ndarray
    outer: np.ndarray
    first: str

    @property
    def ok(self):
        return bool(np.all(self.inner > 0) and np.all(self.outer > 0))

    @property
    def min_inner(self):
        return float(np.min(self.inner))

    @property
    def min_outer(self):
        return float(np.min(self.outer))


def barrier_margins(inner, outer, data, first="inner"):
    """Barrier margins of the shell between two radial surfaces.

    Parameters
    ----------
    inner, outer : Surface
        Radial graphs bounding ``U``; orientation flags are ignored, the
        normal pointing out of ``U`` is used on each.
    first : {"inner", "outer"}
        Which component gets ``H + (tr_Sigma p - h)``.

    Raises
    ------
    InvalidShellError
        If the surfaces touch or are in the wrong order.
    """
    if first not in ("inner", "outer"):
        raise InvalidShellError(f"first must be 'inner' or 'outer', got {first!r}")
    for s in (inner, outer):
        if s.representation == "torus-graph":
            raise InvalidShellError("barrier shells are bounded by radial surfaces")
    if inner.grid == outer.grid:
        touching = np.any(inner.values >= outer.values)
    else:
        touching = inner.values.max() >= outer.values.min()
    if touching:
        raise InvalidShellError("inner surface reaches the outer surface")
    gi = induced_geometry(inner.flipped() if inner.orientation > 0 else inner, data)
    go = induced_geometry(outer if outer.orientation > 0 else outer.flipped(), data)
    si = 1.0 if first == "inner" else -1.0
    m_in = gi.H + si * (gi.tr_sigma_p - gi.h)
    m_out = go.H - si * (go.tr_sigma_p - go.h)
    return BarrierMargins(m_in, m_out, first)
