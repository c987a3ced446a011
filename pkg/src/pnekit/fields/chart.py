"""Coordinate charts and their finite-difference operators.

Three topologies are supported:

``periodic-box``
    Cartesian coordinates, every axis periodic with spacing ``extent / count``.
``lat-long-sphere-shell``
    Coordinates ``(r, theta, phi)``.  ``r`` is a closed interval, ``theta``
    is sampled at half-cell offsets so no node sits on a pole, ``phi`` is
    periodic.
``radial-interval``
    A single closed radial axis.

Derivative operators are sparse matrices acting on C-ordered node arrays.
Interior stencils are centered and second order; closed-interval edges use
one-sided second-order stencils.  On the polar axis scalars may instead be
continued across the pole (``pole="reflect"``), which maps the ghost node
``theta -> -theta`` onto ``phi -> phi + pi``.  Tensor components pick up a
sign ``(-1)^k`` under that map, ``k`` counting theta indices; pass it as
``parity``.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from ..errors import ConfigError

__all__ = ["Chart", "TOPOLOGIES"]

TOPOLOGIES = ("periodic-box", "lat-long-sphere-shell", "radial-interval")
MIN_COUNT = 5

_CENTERED = {
    1: ((-1, -0.5), (1, 0.5)),
    2: ((-1, 1.0), (0, -2.0), (1, 1.0)),
}
# angular axes of lat-long grids: metric factors 1/sin(theta) amplify the
# O(h^2) stencil error to O(h) on the rings next to the poles; fourth-order
# angular stencils keep the result second order there
_CENTERED4 = {
    1: ((-2, 1 / 12), (-1, -2 / 3), (1, 2 / 3), (2, -1 / 12)),
    2: ((-2, -1 / 12), (-1, 4 / 3), (0, -5 / 2), (1, 4 / 3), (2, -1 / 12)),
}
# one-sided second-order stencils at a left edge; right edge mirrors offsets
_ONE_SIDED = {
    1: ((0, -1.5), (1, 2.0), (2, -0.5)),
    2: ((0, 2.0), (1, -5.0), (2, 4.0), (3, -1.0)),
}


@dataclass(frozen=True)
class Chart:
    topology: str
    lower: tuple
    upper: tuple
    counts: tuple

    def __post_init__(self):
        if self.topology not in TOPOLOGIES:
            raise ConfigError(f"unknown chart topology {self.topology!r}")
        object.__setattr__(self, "lower", tuple(float(v) for v in self.lower))
        object.__setattr__(self, "upper", tuple(float(v) for v in self.upper))
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))
        if not (len(self.lower) == len(self.upper) == len(self.counts)):
            raise ConfigError("chart lower/upper/counts lengths differ")
        if any(c < MIN_COUNT for c in self.counts):
            raise ConfigError(f"chart needs at least {MIN_COUNT} nodes per axis, got {self.counts}")
        if any(u <= l for l, u in zip(self.lower, self.upper)):
            raise ConfigError("chart extents must be positive")
        if self.topology == "lat-long-sphere-shell":
            if len(self.counts) != 3:
                raise ConfigError("lat-long shells are three dimensional")
            if self.lower[0] <= 0:
                raise ConfigError("shell inner radius must be positive")
            if self.counts[2] % 2:
                raise ConfigError("azimuthal node count must be even for pole continuation")
        if self.topology == "radial-interval" and len(self.counts) != 1:
            raise ConfigError("radial-interval charts have one axis")

    # -- construction -----------------------------------------------------

    @classmethod
    def periodic_box(cls, extents, counts, lower=None):
        extents = [float(e) for e in extents]
        lower = [0.0] * len(extents) if lower is None else [float(v) for v in lower]
        upper = [l + e for l, e in zip(lower, extents)]
        return cls("periodic-box", tuple(lower), tuple(upper), tuple(counts))

    @classmethod
    def sphere_shell(cls, r_min, r_max, counts):
        return cls("lat-long-sphere-shell", (r_min, 0.0, 0.0), (r_max, np.pi, 2 * np.pi), tuple(counts))

    @classmethod
    def radial_interval(cls, r_min, r_max, count):
        return cls("radial-interval", (r_min,), (r_max,), (count,))

    @classmethod
    def from_json(cls, desc):
        try:
            topo = desc["topology"]
            counts = desc["counts"]
            if topo == "periodic-box":
                if "lower" in desc:
                    return cls(topo, desc["lower"], desc["upper"], counts)
                return cls.periodic_box(desc["extents"], counts)
            if topo == "lat-long-sphere-shell":
                r_min, r_max = desc["radii"]
                return cls.sphere_shell(r_min, r_max, counts)
            if topo == "radial-interval":
                r_min, r_max = desc["radii"]
                return cls.radial_interval(r_min, r_max, counts[0])
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad chart description: {exc}") from exc
        raise ConfigError(f"unknown chart topology {topo!r}")

    def to_json(self):
        if self.topology == "periodic-box":
            return {"topology": self.topology, "lower": list(self.lower),
                    "upper": list(self.upper), "counts": list(self.counts)}
        return {"topology": self.topology, "radii": [self.lower[0], self.upper[0]],
                "counts": list(self.counts)}

    # -- geometry of the grid ----------------------------------------------

    @property
    def dim(self):
        return len(self.counts)

    @property
    def shape(self):
        return self.counts

    @property
    def size(self):
        return int(np.prod(self.counts))

    @property
    def kinds(self):
        if self.topology == "periodic-box":
            return ("periodic",) * self.dim
        if self.topology == "lat-long-sphere-shell":
            return ("interval", "polar", "periodic")
        return ("interval",)

    @property
    def extents(self):
        return tuple(u - l for l, u in zip(self.lower, self.upper))

    @property
    def spacing(self):
        out = []
        for kind, ext, n in zip(self.kinds, self.extents, self.counts):
            out.append(ext / (n - 1) if kind == "interval" else ext / n)
        return tuple(out)

    @property
    def axes(self):
        out = []
        for kind, lo, h, n in zip(self.kinds, self.lower, self.spacing, self.counts):
            offset = 0.5 if kind == "polar" else 0.0
            out.append(lo + (np.arange(n) + offset) * h)
        return tuple(out)

    @property
    def coordinate_names(self):
        if self.topology == "lat-long-sphere-shell":
            return ("r", "theta", "phi")
        if self.topology == "radial-interval":
            return ("r",)
        if self.dim <= 4:
            return ("x", "y", "z", "w")[: self.dim]
        return tuple(f"x{i}" for i in range(self.dim))

    def coordinates(self):
        """Node coordinates, shape ``(*shape, dim)``."""
        return np.stack(np.meshgrid(*self.axes, indexing="ij"), axis=-1)

    def points(self):
        return self.coordinates().reshape(-1, self.dim)

    def is_boundary(self):
        """Boolean mask of nodes on closed-interval edges."""
        mask = np.zeros(self.shape, dtype=bool)
        for a, kind in enumerate(self.kinds):
            if kind == "interval":
                idx = [slice(None)] * self.dim
                idx[a] = 0
                mask[tuple(idx)] = True
                idx[a] = -1
                mask[tuple(idx)] = True
        return mask

    def cartesian_jacobian(self, coords=None):
        """``J[..., i, a] = d x^i / d q^a`` mapping chart to Cartesian coordinates."""
        coords = self.coordinates() if coords is None else np.asarray(coords)
        if self.topology != "lat-long-sphere-shell":
            eye = np.eye(self.dim)
            return np.broadcast_to(eye, coords.shape[:-1] + eye.shape).copy()
        r, th, ph = coords[..., 0], coords[..., 1], coords[..., 2]
        st, ct, sp_, cp = np.sin(th), np.cos(th), np.sin(ph), np.cos(ph)
        J = np.empty(coords.shape[:-1] + (3, 3), dtype=np.result_type(coords, float))
        J[..., 0, 0], J[..., 0, 1], J[..., 0, 2] = st * cp, r * ct * cp, -r * st * sp_
        J[..., 1, 0], J[..., 1, 1], J[..., 1, 2] = st * sp_, r * ct * sp_, r * st * cp
        J[..., 2, 0], J[..., 2, 1], J[..., 2, 2] = ct, -r * st, 0.0
        return J

    def cartesian_hessian(self, coords=None):
        """``K[..., i, a, b] = d^2 x^i / d q^a d q^b``; zero on flat charts."""
        coords = self.coordinates() if coords is None else np.asarray(coords)
        dt = np.result_type(coords, float)
        K = np.zeros(coords.shape[:-1] + (self.dim,) * 3, dtype=dt)
        if self.topology != "lat-long-sphere-shell":
            return K
        r, th, ph = coords[..., 0], coords[..., 1], coords[..., 2]
        st, ct, sp_, cp = np.sin(th), np.cos(th), np.sin(ph), np.cos(ph)
        entries = {
            0: {(0, 1): ct * cp, (0, 2): -st * sp_, (1, 1): -r * st * cp, (1, 2): -r * ct * sp_,
                (2, 2): -r * st * cp},
            1: {(0, 1): ct * sp_, (0, 2): st * cp, (1, 1): -r * st * sp_, (1, 2): r * ct * cp,
                (2, 2): -r * st * sp_},
            2: {(0, 1): -st, (1, 1): -r * ct},
        }
        for i, comp in entries.items():
            for (a, b), v in comp.items():
                K[..., i, a, b] = v
                K[..., i, b, a] = v
        return K

    def cartesian_points(self, coords=None):
        coords = self.coordinates() if coords is None else np.asarray(coords)
        if self.topology != "lat-long-sphere-shell":
            return coords.copy()
        r, th, ph = coords[..., 0], coords[..., 1], coords[..., 2]
        return np.stack([r * np.sin(th) * np.cos(ph), r * np.sin(th) * np.sin(ph), r * np.cos(th)], axis=-1)

    def volume_weights(self):
        """Coordinate cell volumes; on shells the half-offset lat-long quadrature."""
        w = np.full(self.shape, float(np.prod(self.spacing)))
        for a, kind in enumerate(self.kinds):
            if kind == "interval":
                edge = np.ones(self.counts[a])
                edge[[0, -1]] = 0.5
                shape = [1] * self.dim
                shape[a] = -1
                w = w * edge.reshape(shape)
        return w

    def contains(self, coords, tol=0.0):
        """Whether chart coordinates lie inside the closed-interval ranges."""
        coords = np.real(np.asarray(coords))
        ok = np.ones(coords.shape[:-1], dtype=bool)
        for a, kind in enumerate(self.kinds):
            if kind == "interval":
                ok &= (coords[..., a] >= self.lower[a] - tol) & (coords[..., a] <= self.upper[a] + tol)
        return ok

    # -- finite differences ------------------------------------------------

    @property
    def default_pole(self):
        return "reflect" if self.topology == "lat-long-sphere-shell" else "one-sided"

    def parity(self, *indices):
        """Sign of a tensor component under continuation across the pole."""
        if self.topology != "lat-long-sphere-shell":
            return 1
        return -1 if sum(1 for i in indices if i == 1) % 2 else 1

    def diff_matrix(self, axis, order, pole=None, parity=1):
        """Sparse first/second derivative along ``axis``."""
        return _diff_matrix(self, int(axis), int(order), pole or self.default_pole, int(parity))

    def mixed_matrix(self, a, b, pole=None, parity=1):
        if a == b:
            return self.diff_matrix(a, 2, pole, parity)
        a, b = min(a, b), max(a, b)
        inner = -parity if self.kinds[b] == "polar" else parity
        return _mixed_matrix(self, a, b, pole or self.default_pole, int(parity), int(inner))

    def apply(self, matrix, values):
        """Apply a node operator to an array shaped ``(*shape, *components)``."""
        values = np.asarray(values)
        comp = values.shape[self.dim:]
        flat = values.reshape(self.size, -1)
        return (matrix @ flat).reshape(self.shape + comp)

    def gradient(self, values, pole=None, parity=1):
        """First derivatives; new trailing axis indexes the derivative direction."""
        return np.stack([self.apply(self.diff_matrix(a, 1, pole, parity), values)
                         for a in range(self.dim)], axis=-1)

    def hessian(self, values, pole=None, parity=1):
        out = []
        for a in range(self.dim):
            row = [self.apply(self.mixed_matrix(a, b, pole, parity), values) for b in range(self.dim)]
            out.append(np.stack(row, axis=-1))
        return np.stack(out, axis=-2)

    def tensor_derivatives(self, full, second=False):
        """Derivatives of a symmetric 2-tensor with per-component pole parity.

        Returns ``d[..., k, i, j]`` and, if ``second``, ``dd[..., l, k, i, j]``.
        """
        n = self.dim
        d = np.empty(full.shape[:-2] + (n, n, n))
        dd = np.empty(full.shape[:-2] + (n, n, n, n)) if second else None
        for i in range(n):
            for j in range(i, n):
                par = self.parity(i, j)
                comp = full[..., i, j]
                gi = self.gradient(comp, parity=par)
                d[..., :, i, j] = d[..., :, j, i] = gi
                if second:
                    hi = self.hessian(comp, parity=par)
                    dd[..., :, :, i, j] = dd[..., :, :, j, i] = hi
        return d, dd


def _neighbors(chart, idx, axis, offset, pole):
    """Neighbour multi-indices and a validity mask for a stencil offset."""
    n = chart.counts[axis]
    kind = chart.kinds[axis]
    nb = idx.copy()
    nb[axis] = idx[axis] + offset
    valid = np.ones(idx.shape[1], dtype=bool)
    flip = np.zeros(idx.shape[1], dtype=bool)
    if kind == "periodic":
        nb[axis] %= n
    elif kind == "polar" and pole == "reflect":
        lo = nb[axis] < 0
        hi = nb[axis] >= n
        nb[axis] = np.where(lo, -1 - nb[axis], np.where(hi, 2 * n - 1 - nb[axis], nb[axis]))
        flip = lo | hi
        nphi = chart.counts[axis + 1]
        nb[axis + 1] = np.where(flip, (nb[axis + 1] + nphi // 2) % nphi, nb[axis + 1])
    else:
        valid = (nb[axis] >= 0) & (nb[axis] < n)
    return nb, valid, flip


def _centered(chart, axis, order):
    latlong = (getattr(chart, "topology", None) == "lat-long-sphere-shell"
               or getattr(chart, "kind", None) == "lat-long")
    if latlong and chart.kinds[axis] in ("polar", "periodic"):
        return _CENTERED4[order]
    return _CENTERED[order]


@lru_cache(maxsize=256)
def _diff_matrix(chart, axis, order, pole, parity=1):
    if pole not in ("one-sided", "reflect"):
        raise ConfigError(f"unknown pole treatment {pole!r}")
    h = chart.spacing[axis]
    scale = h ** order
    idx = np.indices(chart.shape).reshape(chart.dim, -1)
    rows, cols, vals = [], [], []
    all_valid = np.ones(idx.shape[1], dtype=bool)
    nbrs = []
    for off, c in _centered(chart, axis, order):
        nb, valid, flip = _neighbors(chart, idx, axis, off, pole)
        all_valid &= valid
        nbrs.append((nb, c, np.where(flip, parity, 1)))
    node = np.arange(idx.shape[1])
    for nb, c, sign in nbrs:
        rows.append(node[all_valid])
        cols.append(np.ravel_multi_index(nb[:, all_valid], chart.shape))
        vals.append(sign[all_valid] * c / scale)
    if not all_valid.all():
        n = chart.counts[axis]
        for side in (-1, 1):
            sel = ~all_valid & ((idx[axis] < n // 2) if side == -1 else (idx[axis] >= n // 2))
            for off, c in _ONE_SIDED[order]:
                nb = idx[:, sel].copy()
                nb[axis] = nb[axis] - side * off
                sign = -side if order == 1 else 1.0
                rows.append(node[sel])
                cols.append(np.ravel_multi_index(nb, chart.shape))
                vals.append(np.full(sel.sum(), sign * c / scale))
    m = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(chart.size, chart.size))
    m.sum_duplicates()
    return m


@lru_cache(maxsize=256)
def _mixed_matrix(chart, a, b, pole, parity, inner):
    # d_a d_b: d_b acts first on the given parity, d_a on the result's parity
    return (_diff_matrix(chart, a, 1, pole, inner) @ _diff_matrix(chart, b, 1, pole, parity)).tocsr()
