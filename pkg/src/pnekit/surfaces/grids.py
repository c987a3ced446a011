"""Parameter grids for closed surfaces and their discrete operators.

``lat-long``
    ``theta_i = (i + 1/2) pi / N1``, ``phi_j = 2 pi j / N2`` with ``N2`` even.
    Scalars are continued across a pole by ``(theta, phi) -> (-theta, phi + pi)``.
``torus``
    Doubly periodic box ``[lower, upper)``.

Second-order operators are built from a discrete Dirichlet form so that the
area-weighted Laplacian is exactly symmetric: compact face differences for
the diagonal metric terms and cell-corner differences for the mixed term.
Faces on a pole carry no flux because the area element vanishes there, so
no polar ghost values enter the Laplacian.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..errors import ConfigError
from ..fields.chart import _diff_matrix, _mixed_matrix

__all__ = ["SurfaceGrid"]

KINDS = ("lat-long", "torus")


@dataclass(frozen=True)
class SurfaceGrid:
    kind: str
    counts: tuple
    lower: tuple = (0.0, 0.0)
    upper: tuple = (np.pi, 2 * np.pi)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown surface grid kind {self.kind!r}")
        counts = tuple(int(c) for c in self.counts)
        if len(counts) != 2 or min(counts) < 5:
            raise ConfigError(f"surface grids need two axes of at least 5 nodes, got {counts}")
        if self.kind == "lat-long":
            if counts[1] % 2:
                raise ConfigError("azimuthal node count must be even")
            lower, upper = (0.0, 0.0), (np.pi, 2 * np.pi)
        else:
            lower = tuple(float(v) for v in self.lower)
            upper = tuple(float(v) for v in self.upper)
            if any(u <= l for l, u in zip(lower, upper)):
                raise ConfigError("torus extents must be positive")
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def lat_long(cls, n_theta, n_phi):
        return cls("lat-long", (n_theta, n_phi))

    @classmethod
    def torus(cls, counts, lower, upper):
        return cls("torus", tuple(counts), tuple(lower), tuple(upper))

    @classmethod
    def from_json(cls, desc):
        try:
            if desc["kind"] == "lat-long":
                return cls.lat_long(*desc["counts"])
            return cls.torus(desc["counts"], desc["lower"], desc["upper"])
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"bad surface grid description: {exc}") from exc

    def to_json(self):
        if self.kind == "lat-long":
            return {"kind": "lat-long", "counts": list(self.counts)}
        return {"kind": "torus", "counts": list(self.counts), "lower": list(self.lower),
                "upper": list(self.upper)}

    # chart-like attributes used by the shared stencil builders
    dim = 2

    @property
    def kinds(self):
        return ("polar", "periodic") if self.kind == "lat-long" else ("periodic", "periodic")

    @property
    def shape(self):
        return self.counts

    @property
    def size(self):
        return self.counts[0] * self.counts[1]

    @property
    def spacing(self):
        return tuple((u - l) / n for l, u, n in zip(self.lower, self.upper, self.counts))

    @property
    def axes(self):
        h1, h2 = self.spacing
        off = 0.5 if self.kind == "lat-long" else 0.0
        return (self.lower[0] + (np.arange(self.counts[0]) + off) * h1,
                self.lower[1] + np.arange(self.counts[1]) * h2)

    def coordinates(self):
        return np.stack(np.meshgrid(*self.axes, indexing="ij"), axis=-1)

    @property
    def is_closed(self):
        return True

    # -- pointwise differences (scalars) ------------------------------------

    def diff_matrix(self, axis, order, parity=1):
        return _diff_matrix(self, int(axis), int(order), "reflect", int(parity))

    def mixed_matrix(self, a, b, parity=1):
        if a == b:
            return self.diff_matrix(a, 2, parity)
        inner = -parity if self.kinds[max(a, b)] == "polar" else parity
        return _mixed_matrix(self, min(a, b), max(a, b), "reflect", int(parity), int(inner))

    def apply(self, matrix, values):
        values = np.asarray(values)
        comp = values.shape[2:]
        return (matrix @ values.reshape(self.size, -1)).reshape(self.shape + comp)

    def gradient(self, values, parity=1):
        return np.stack([self.apply(self.diff_matrix(a, 1, parity), values) for a in range(2)], axis=-1)

    def hessian(self, values, parity=1):
        return np.stack([np.stack([self.apply(self.mixed_matrix(a, b, parity), values)
                                   for b in range(2)], axis=-1) for a in range(2)], axis=-2)

    def jets(self, values):
        """``(f, df[..., a], ddf[..., a, b])`` of a scalar node array."""
        return values, self.gradient(values), self.hessian(values)

    # -- conservative operators --------------------------------------------

    def _face_ops(self):
        """Sparse maps node -> faces/corners used by the Dirichlet form."""
        n1, n2 = self.counts
        h1, h2 = self.spacing
        idx = np.arange(self.size).reshape(self.shape)
        polar = self.kind == "lat-long"
        i_lo = idx[:-1] if polar else idx
        i_hi = idx[1:] if polar else np.roll(idx, -1, axis=0)

        def two_point(lo, hi, scale):
            r = np.arange(lo.size)
            return sp.csr_matrix((np.concatenate([-np.ones(lo.size), np.ones(lo.size)]) / scale,
                                  (np.concatenate([r, r]), np.concatenate([lo.ravel(), hi.ravel()]))),
                                 shape=(lo.size, self.size))

        def average(lo, hi):
            r = np.arange(lo.size)
            return sp.csr_matrix((np.full(2 * lo.size, 0.5), (np.concatenate([r, r]),
                                  np.concatenate([lo.ravel(), hi.ravel()]))), shape=(lo.size, self.size))

        D1 = two_point(i_lo, i_hi, h1)
        A1 = average(i_lo, i_hi)
        j_hi = np.roll(idx, -1, axis=1)
        D2 = two_point(idx, j_hi, h2)
        A2 = average(idx, j_hi)
        # corners sit between rows i, i+1 and columns j, j+1
        c00 = i_lo
        c10 = i_hi
        c01 = np.roll(i_lo, -1, axis=1)
        c11 = np.roll(i_hi, -1, axis=1)
        C1 = 0.5 * (two_point(c00, c10, h1) + two_point(c01, c11, h1))
        C2 = 0.5 * (two_point(c00, c01, h2) + two_point(c10, c11, h2))
        Ac = 0.5 * (average(c00, c10) + average(c01, c11))
        return D1, A1, D2, A2, C1, C2, Ac

    def stiffness(self, sqrt_det, g_inv):
        """Symmetric matrix ``K`` with ``u^T K v`` = discrete int <du, dv> dA."""
        D1, A1, D2, A2, C1, C2, Ac = self._face_ops_cached
        h1, h2 = self.spacing
        a = (sqrt_det * g_inv[..., 0, 0]).ravel()
        b = (sqrt_det * g_inv[..., 1, 1]).ravel()
        c = (sqrt_det * g_inv[..., 0, 1]).ravel()
        K = (D1.T @ sp.diags(A1 @ a) @ D1 + D2.T @ sp.diags(A2 @ b) @ D2
             + C1.T @ sp.diags(Ac @ c) @ C2 + C2.T @ sp.diags(Ac @ c) @ C1)
        return (h1 * h2 * K).tocsr()

    def mass(self, sqrt_det):
        h1, h2 = self.spacing
        return h1 * h2 * np.asarray(sqrt_det).ravel()

    def laplacian(self, sqrt_det, g_inv):
        """Nodal Laplace-Beltrami matrix ``-M^{-1} K``."""
        return (-sp.diags(1.0 / self.mass(sqrt_det)) @ self.stiffness(sqrt_det, g_inv)).tocsr()

    def flux_divergence(self, sqrt_det, vec):
        """Matrix ``B`` with ``B phi = div(V phi)`` for the tangent field ``vec[..., a]``.

        Face fluxes use averaged ``sqrt_det * V^a`` and averaged ``phi``;
        ``B @ 1`` is the discrete divergence of ``V``.
        """
        D1, A1, D2, A2, *_ = self._face_ops_cached
        h1, h2 = self.spacing
        F1 = A1 @ (sqrt_det * vec[..., 0]).ravel()
        F2 = A2 @ (sqrt_det * vec[..., 1]).ravel()
        weighted = -(D1.T @ sp.diags(F1) @ A1 + D2.T @ sp.diags(F2) @ A2)
        return (sp.diags(1.0 / np.asarray(sqrt_det).ravel()) @ weighted).tocsr()

    def divergence(self, sqrt_det, vec):
        return (self.flux_divergence(sqrt_det, vec) @ np.ones(self.size)).reshape(self.shape)

    @property
    def _face_ops_cached(self):
        key = "_face_ops_value"
        cache = self.__dict__.get(key)
        if cache is None:
            cache = self._face_ops()
            object.__setattr__(self, key, cache)
        return cache

    def integrate(self, values, sqrt_det):
        return float(np.sum(self.mass(sqrt_det) * np.asarray(values).ravel()))

    # -- resolution change --------------------------------------------------

    def coarsened(self):
        """Grid with half the nodes per axis (counts must allow it)."""
        n1, n2 = self.counts
        if n1 % 2 or n2 % 2 or (self.kind == "lat-long" and (n2 // 2) % 2):
            raise ConfigError(f"grid {self.counts} cannot be halved")
        return SurfaceGrid(self.kind, (n1 // 2, n2 // 2), self.lower, self.upper)

    def restrict(self, values):
        """Node values on :meth:`coarsened` (row pairs averaged on lat-long)."""
        v = np.asarray(values)
        if self.kind == "lat-long":
            return 0.5 * (v[0::2, 0::2] + v[1::2, 0::2])
        return v[0::2, 0::2]
