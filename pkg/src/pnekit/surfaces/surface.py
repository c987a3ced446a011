"""Graph surfaces: radial graphs over a lat-long sphere, height graphs over a torus.

A surface is stored as degrees of freedom on a :class:`SurfaceGrid`.  Its
embedding into the ambient frame of an :class:`InitialDataSet`
(``cartesian`` or ``chart``) is produced from the pointwise jets
``(F, dF, ddF)`` of the graph function by :func:`embed`, which is pure
numpy and accepts complex jets.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError
from .grids import SurfaceGrid

__all__ = ["Surface", "embed", "REPRESENTATIONS"]

REPRESENTATIONS = ("radial-graph", "torus-graph", "radial-profile-shell")


@dataclass(frozen=True, eq=False)
class Surface:
    """A closed graph surface.

    Parameters
    ----------
    representation : {"radial-graph", "torus-graph", "radial-profile-shell"}
    grid : SurfaceGrid
        ``lat-long`` for radial graphs and shells, ``torus`` for height graphs.
    values : ndarray
        Radius ``R`` or height ``u`` at every grid node.  For a
        ``radial-profile-shell`` every entry equals the single radius.
    orientation : int
        ``+1`` selects the normal toward increasing radius or height.
    center : tuple
        Cartesian center of radial graphs.
    """

    representation: str
    grid: SurfaceGrid
    values: np.ndarray
    orientation: int = 1
    center: tuple = field(default=(0.0, 0.0, 0.0))

    def __post_init__(self):
        if self.representation not in REPRESENTATIONS:
            raise ConfigError(f"unknown surface representation {self.representation!r}")
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim == 0:
            vals = np.full(self.grid.shape, float(vals))
        if vals.shape != self.grid.shape:
            raise ConfigError(f"surface values {vals.shape} do not match grid {self.grid.shape}")
        if not np.all(np.isfinite(vals)):
            raise ConfigError("surface values must be finite")
        radial = self.representation != "torus-graph"
        if radial and self.grid.kind != "lat-long":
            raise ConfigError(f"{self.representation} needs a lat-long grid")
        if not radial and self.grid.kind != "torus":
            raise ConfigError("torus-graph needs a torus grid")
        if radial and np.any(vals <= 0):
            raise ConfigError("radial graphs need R > 0 everywhere")
        if self.representation == "radial-profile-shell" and np.ptp(vals) > 0:
            raise ConfigError("a radial-profile-shell has a single radius")
        if self.orientation not in (1, -1):
            raise ConfigError("orientation must be +1 or -1")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    # -- constructors -------------------------------------------------------

    @classmethod
    def sphere(cls, radius, counts=(32, 64), orientation=1, center=(0.0, 0.0, 0.0)):
        grid = SurfaceGrid.lat_long(*counts)
        return cls("radial-graph", grid, np.full(grid.shape, float(radius)), orientation, center)

    @classmethod
    def shell(cls, radius, counts=(16, 32), orientation=1):
        grid = SurfaceGrid.lat_long(*counts)
        return cls("radial-profile-shell", grid, np.full(grid.shape, float(radius)), orientation)

    @classmethod
    def plane(cls, height, counts, lower, upper, orientation=1):
        grid = SurfaceGrid.torus(counts, lower, upper)
        return cls("torus-graph", grid, np.full(grid.shape, float(height)), orientation)

    def with_values(self, values):
        rep = self.representation
        if rep == "radial-profile-shell" and np.ptp(values) > 0:
            rep = "radial-graph"
        return Surface(rep, self.grid, values, self.orientation, self.center)

    def flipped(self):
        return Surface(self.representation, self.grid, self.values, -self.orientation, self.center)

    def on_grid(self, grid, values=None):
        return Surface(self.representation, grid,
                       self.values.flat[0] if values is None else values, self.orientation, self.center)

    @property
    def radius(self):
        """The single radius of a shell (mean radius of other radial graphs)."""
        return float(np.mean(self.values))

    # -- serialization -------------------------------------------------------

    def to_json(self):
        out = {"representation": self.representation, "grid": self.grid.to_json(),
               "orientation": self.orientation}
        if self.representation == "radial-profile-shell":
            out["radius"] = float(self.values.flat[0])
        else:
            out["values"] = [float(v) for v in self.values.ravel()]
        if self.representation != "torus-graph":
            out["center"] = list(self.center)
        return out

    @classmethod
    def from_json(cls, desc):
        try:
            grid = SurfaceGrid.from_json(desc["grid"])
            rep = desc["representation"]
            if rep == "radial-profile-shell":
                values = np.full(grid.shape, float(desc["radius"]))
            else:
                values = np.asarray(desc["values"], dtype=float)
                if values.size != grid.size:
                    raise ConfigError(f"{values.size} surface values for {grid.size} nodes")
                values = values.reshape(grid.shape)
            return cls(rep, grid, values, int(desc.get("orientation", 1)),
                       tuple(desc.get("center", (0.0, 0.0, 0.0))))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad surface description: {exc}") from exc

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=1, sort_keys=True)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json(json.load(fh))

    def same_as(self, other):
        return (self.representation == other.representation and self.grid == other.grid
                and self.orientation == other.orientation and self.center == other.center
                and np.array_equal(self.values, other.values))

    # -- embedding ------------------------------------------------------------

    def jets(self):
        return self.grid.jets(self.values)

    def embedding(self, frame, n=3):
        """Embedding jets ``(X, X_a, X_ab)`` in ``frame`` coordinates."""
        F, dF, ddF = self.jets()
        return embed(self.representation, self.grid.coordinates(), F, dF, ddF, frame, self.center)


def embed(representation, base, F, dF, ddF, frame, center=(0.0, 0.0, 0.0)):
    """Embedding jets of a graph from the jets of its graph function.

    Parameters
    ----------
    base : ndarray (..., 2)
        Grid parameters ``(theta, phi)`` or ``(x, y)``.
    F, dF, ddF : ndarray
        Graph function, its parameter gradient ``(..., 2)`` and Hessian ``(..., 2, 2)``.
    frame : {"cartesian", "chart"}

    Returns
    -------
    X : (..., 3), Xa : (..., 2, 3), Xab : (..., 2, 2, 3)
    """
    dt = np.result_type(F, dF, ddF, float)
    shape = np.shape(F)
    if representation == "torus-graph":
        X = np.empty(shape + (3,), dt)
        X[..., 0], X[..., 1], X[..., 2] = base[..., 0], base[..., 1], F
        Xa = np.zeros(shape + (2, 3), dt)
        Xa[..., 0, 0] = 1.0
        Xa[..., 1, 1] = 1.0
        Xa[..., :, 2] = dF
        Xab = np.zeros(shape + (2, 2, 3), dt)
        Xab[..., 2] = ddF
        return X, Xa, Xab
    th, ph = base[..., 0], base[..., 1]
    if frame == "chart":
        X = np.empty(shape + (3,), dt)
        X[..., 0], X[..., 1], X[..., 2] = F, th, ph
        Xa = np.zeros(shape + (2, 3), dt)
        Xa[..., :, 0] = dF
        Xa[..., 0, 1] = 1.0
        Xa[..., 1, 2] = 1.0
        Xab = np.zeros(shape + (2, 2, 3), dt)
        Xab[..., 0] = ddF
        return X, Xa, Xab
    st, ct, sp_, cp = np.sin(th), np.cos(th), np.sin(ph), np.cos(ph)
    zero = np.zeros_like(st)
    n0 = np.stack([st * cp, st * sp_, ct], axis=-1)
    na = np.stack([np.stack([ct * cp, ct * sp_, -st], axis=-1),
                   np.stack([-st * sp_, st * cp, zero], axis=-1)], axis=-2)
    n_tt = -n0
    n_tp = np.stack([-ct * sp_, ct * cp, zero], axis=-1)
    n_pp = np.stack([-st * cp, -st * sp_, zero], axis=-1)
    nab = np.stack([np.stack([n_tt, n_tp], axis=-2), np.stack([n_tp, n_pp], axis=-2)], axis=-3)
    Fe = F[..., None]
    X = np.asarray(center) + Fe * n0
    Xa = dF[..., :, None] * n0[..., None, :] + Fe[..., None] * na
    Xab = (ddF[..., :, :, None] * n0[..., None, None, :]
           + dF[..., :, None, None] * na[..., None, :, :]
           + dF[..., None, :, None] * na[..., :, None, :]
           + Fe[..., None, None] * nab)
    return X, Xa, Xab
