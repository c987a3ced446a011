r"""Symmetry-reduced oracle for spherically symmetric data.

The data are

.. math::

    g = \lambda(r)\,dr^2 + \rho(r)^2 d\Omega^2, \qquad
    p = p_{rad}(r)\,dr^2 + p_{tan}(r)\,\rho(r)^2 d\Omega^2,

with ``rho = r`` for areal coordinates (isotropic Schwarzschild has
``rho = r (1 + m/2r)^2``).  On the coordinate sphere of radius ``r``

.. math::

    \theta = \pm (n-1)\frac{\rho'}{\rho\sqrt\lambda} + (n-1) p_{tan},

and the Jang equation for a radial graph ``u(r)`` reduces to an ODE
solved here by finite volumes and damped Newton.
"""

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded
from scipy.optimize import bisect

from .errors import ConfigError, NonconvergenceError
from .fields.chart import Chart
from .fields.presets import build_source

__all__ = [
    "SphericalData",
    "RadialProfile",
    "JangODESolution",
    "theta_profile",
    "find_pne_radii",
    "root_details",
    "jang_ode_solve",
    "jang_ode_residual",
    "jang_ode_continuation",
    "DEFAULT_NODES",
]

DEFAULT_NODES = 10_001
_SYMMETRY_TOL = 1e-9


def _unit(n, k):
    e = np.zeros(n)
    e[k] = 1.0
    return e


@dataclass(frozen=True, eq=False)
class SphericalData:
    """Radial functions of a spherically symmetric data set.

    Parameters
    ----------
    n : int
        Ambient dimension.
    r : ndarray
        Uniform radial grid.
    functions : callable
        ``r -> dict`` with arrays ``lam``, ``rho``, ``drho``, ``p_rad``,
        ``p_tan`` and ``h``.
    """

    n: int
    r: np.ndarray
    functions: object
    description: dict = field(default_factory=dict)

    def __post_init__(self):
        r = np.asarray(self.r, dtype=float)
        if r.ndim != 1 or r.size < 3 or r[0] <= 0 or np.any(np.diff(r) <= 0):
            raise ConfigError("radial grid must be increasing with r_min > 0")
        object.__setattr__(self, "r", r)
        vals = self.functions(r)
        lam = vals["lam"]
        if not np.all(np.isfinite(lam[1:-1])) or np.any(lam[1:-1] <= 0):
            raise ConfigError("lambda must be positive on the radial grid")

    def evaluate(self, r):
        return self.functions(np.asarray(r, dtype=float))

    @property
    def r_min(self):
        return float(self.r[0])

    @property
    def r_max(self):
        return float(self.r[-1])

    @classmethod
    def from_functions(cls, n, r_min, r_max, lam=1.0, p_rad=0.0, p_tan=0.0, h=0.0, rho=None,
                       drho=None, nodes=DEFAULT_NODES):
        """From plain callables (or constants) of ``r``."""

        def wrap(f):
            return f if callable(f) else (lambda r, c=float(f): np.full(np.shape(r), c))

        lam_f, pr_f, pt_f, h_f = map(wrap, (lam, p_rad, p_tan, h))
        rho_f = (lambda r: np.asarray(r, dtype=float)) if rho is None else rho
        drho_f = (lambda r: np.ones(np.shape(r))) if drho is None else drho

        def functions(r):
            return {"lam": lam_f(r), "rho": rho_f(r), "drho": drho_f(r), "p_rad": pr_f(r),
                    "p_tan": pt_f(r), "h": h_f(r)}

        return cls(n, np.linspace(r_min, r_max, nodes), functions)

    @classmethod
    def from_json(cls, desc, n=None, nodes=None):
        """Reduce a preset description to radial functions.

        The radial range comes from the chart (``radial-interval`` or
        ``lat-long-sphere-shell``).  The preset is evaluated along two rays
        and rejected unless it is spherically symmetric.
        """
        if "chart" not in desc:
            raise ConfigError("data description needs a chart")
        chart = Chart.from_json(desc["chart"])
        if chart.topology == "periodic-box":
            raise ConfigError("spherical reduction needs a radial chart")
        r_min, r_max = chart.lower[0], chart.upper[0]
        if n is None:
            n = int(desc.get("dimension", 3))
        if nodes is None:
            nodes = chart.counts[0] if chart.topology == "radial-interval" else DEFAULT_NODES
        src = build_source(desc, n)
        e1 = _unit(n, 0)
        t1 = _unit(n, 1)
        e2 = np.ones(n) / np.sqrt(n)
        t2 = np.zeros(n)
        t2[0], t2[1] = 1 / np.sqrt(2), -1 / np.sqrt(2)

        def sample(r, e, t):
            r = np.atleast_1d(np.asarray(r, dtype=float))
            x = r[:, None] * e[None, :]
            with np.errstate(divide="ignore", invalid="ignore"):
                v = src.evaluate(x)
            g, p, dg = np.real(v["g"]), np.real(v["p"]), np.real(v["dg"])
            if e[0] == 1.0:
                # plain components, so an infinite g_rr cannot poison the others
                lam, alpha, dalpha, cross = g[:, 0, 0], g[:, 1, 1], dg[:, 0, 1, 1], g[:, 0, 1]
                p_rad, a, pcross = p[:, 0, 0], p[:, 1, 1], p[:, 0, 1]
            else:
                lam = np.einsum("...ij,i,j->...", g, e, e)
                alpha = np.einsum("...ij,i,j->...", g, t, t)
                dalpha = np.einsum("...kij,k,i,j->...", dg, e, t, t)
                cross = np.einsum("...ij,i,j->...", g, e, t)
                p_rad = np.einsum("...ij,i,j->...", p, e, e)
                a = np.einsum("...ij,i,j->...", p, t, t)
                pcross = np.einsum("...ij,i,j->...", p, e, t)
            h = np.broadcast_to(np.real(v["h"]), r.shape)
            return lam, alpha, dalpha, p_rad, a, h, cross, pcross

        probe = np.linspace(r_min, r_max, 7)[1:-1]
        s1, s2 = sample(probe, e1, t1), sample(probe, e2, t2)
        for a, b in zip(s1[:6], s2[:6]):
            if not np.allclose(a, b, rtol=_SYMMETRY_TOL, atol=_SYMMETRY_TOL):
                raise ConfigError("data are not spherically symmetric")
        if np.max(np.abs(s1[6])) + np.max(np.abs(s1[7])) > _SYMMETRY_TOL:
            raise ConfigError("data are not spherically symmetric")

        def functions(r):
            shape = np.shape(r)
            ra = np.ravel(r)
            lam, alpha, dalpha, p_rad, a, h, _, _ = sample(ra, e1, t1)
            edge = np.isinf(lam) & ~(np.isfinite(alpha) & np.isfinite(dalpha) & np.isfinite(a))
            if edge.any():
                # inf * 0 in the tangential components where g_rr blows up;
                # they are continuous there, so take them just off the edge
                _, al2, da2, _, a2, _, _, _ = sample(ra[edge] * (1 + 1e-12), e1, t1)
                alpha, dalpha, a = alpha.copy(), dalpha.copy(), a.copy()
                alpha[edge], dalpha[edge], a[edge] = al2, da2, a2
            sa = np.sqrt(alpha)
            out = {"lam": lam, "rho": ra * sa, "drho": sa + ra * dalpha / (2 * sa),
                   "p_rad": p_rad, "p_tan": a / alpha, "h": np.array(h, dtype=float)}
            return {k: np.reshape(v, shape) for k, v in out.items()}

        return cls(n, np.linspace(r_min, r_max, nodes), functions, dict(desc))


@dataclass(frozen=True, eq=False)
class RadialProfile:
    """Samples of ``theta - h`` on coordinate spheres plus the exact evaluator."""

    r: np.ndarray
    values: np.ndarray
    evaluator: object = None
    orientation: int = 1

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise ConfigError("profile values must be finite")

    def __call__(self, r):
        return self.evaluator(r)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["r", "theta_minus_h"])
            for r, v in zip(self.r, self.values):
                w.writerow([format(float(r), ".17g"), format(float(v), ".17g")])


def _theta_minus_h(data, r, orientation):
    v = data.evaluate(r)
    n = data.n
    with np.errstate(divide="ignore"):
        inv_sqrt_lam = np.where(np.isinf(v["lam"]), 0.0, 1.0 / np.sqrt(v["lam"]))
    H = orientation * (n - 1) * v["drho"] / v["rho"] * inv_sqrt_lam
    return H + (n - 1) * v["p_tan"] - v["h"]


def theta_profile(data, orientation=1):
    """``theta - h`` on the coordinate spheres of the radial grid.

    ``orientation = +1`` takes the normal toward increasing ``r``.
    """
    if orientation not in (1, -1):
        raise ConfigError("orientation must be +1 or -1")

    def evaluator(r):
        return _theta_minus_h(data, r, orientation)

    return RadialProfile(data.r, evaluator(data.r), evaluator, orientation)


def root_details(profile, rel_tol=1e-10, slope_tol=1e-6):
    """Sign-change roots of a profile with their slopes.

    Returns a list of dicts ``{"radius", "slope", "degenerate"}`` sorted by
    radius; ``degenerate`` marks roots where ``|slope| < slope_tol``.
    """
    r, v = profile.r, profile.values
    f = profile.evaluator
    scale = max(float(np.max(np.abs(v))), 1e-300)
    roots = []
    for k in range(len(r)):
        if abs(v[k]) <= rel_tol * scale:
            roots.append(float(r[k]))
    for k in range(len(r) - 1):
        a, b = v[k], v[k + 1]
        if abs(a) <= rel_tol * scale or abs(b) <= rel_tol * scale:
            continue
        if a * b < 0:
            roots.append(float(bisect(lambda x: float(f(np.array([x]))[0]), r[k], r[k + 1],
                                      xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=400)))
    roots = sorted(set(roots))
    out = []
    for x in roots:
        h = 1e-6 * max(1.0, abs(x))
        lo, hi = max(x - h, r[0]), min(x + h, r[-1])
        slope = float((f(np.array([hi]))[0] - f(np.array([lo]))[0]) / (hi - lo))
        out.append({"radius": x, "slope": slope, "degenerate": bool(abs(slope) < slope_tol)})
    return out


def find_pne_radii(profile):
    """Radii where ``theta = h``, sorted ascending; empty if no sign change."""
    return [d["radius"] for d in root_details(profile)]


# -- radial Jang equation -------------------------------------------------------


@dataclass(frozen=True, eq=False)
class JangODESolution:
    r: np.ndarray
    u: np.ndarray
    tau: float
    residual: float
    iterations: int
    history: tuple

    @property
    def sup_abs(self):
        return float(np.max(np.abs(self.u)))

    @property
    def steepest_radius(self):
        """Node radius of the largest ``|u'|`` (centered differences)."""
        du = np.gradient(self.u, self.r)
        return float(self.r[int(np.argmax(np.abs(du)))])

    @property
    def zero_crossings(self):
        """Radii where ``u`` changes sign, by linear interpolation.

        As ``tau -> 0`` with barrier data ``tau u`` tends to the expansion of
        the coordinate spheres, so a crossing tracks a root of ``theta - h``.
        """
        u, r = self.u, self.r
        k = np.nonzero(np.sign(u[:-1]) * np.sign(u[1:]) < 0)[0]
        return [float(r[i] - u[i] * (r[i + 1] - r[i]) / (u[i + 1] - u[i])) for i in k]


def _bc_pair(bc):
    if bc is None:
        bc = ("dirichlet", 0.0)
    if isinstance(bc, dict):
        left = bc.get("inner", ("dirichlet", 0.0))
        right = bc.get("outer", ("dirichlet", 0.0))
    elif isinstance(bc, (list, tuple)) and len(bc) == 2 and not isinstance(bc[0], str):
        left, right = bc
    else:
        left = right = bc
    out = []
    for side in (left, right):
        if side == "zero-slope" or (isinstance(side, (list, tuple)) and side[0] == "zero-slope"):
            out.append(("zero-slope", 0.0))
        elif isinstance(side, (list, tuple)) and side[0] == "dirichlet":
            out.append(("dirichlet", float(side[1])))
        elif isinstance(side, (int, float)):
            out.append(("dirichlet", float(side)))
        else:
            raise ConfigError(f"bad radial boundary condition {side!r}")
    return tuple(out)


class _Radial:
    """Grid coefficients of the radial Jang operator."""

    def __init__(self, data):
        r = data.r
        self.n = data.n
        self.r = r
        self.dr = float(r[1] - r[0])
        if not np.allclose(np.diff(r), self.dr, rtol=1e-9):
            raise ConfigError("radial Jang solve needs a uniform grid")
        c = data.evaluate(r)
        f = data.evaluate(0.5 * (r[1:] + r[:-1]))
        self.sl = np.sqrt(c["lam"])
        self.lam = c["lam"]
        self.vol = c["rho"] ** (self.n - 1) * self.sl
        self.sl_f = np.sqrt(f["lam"])
        self.area_f = f["rho"] ** (self.n - 1)
        self.pterm_rad = c["p_rad"] / c["lam"]
        self.pterm_tan = (self.n - 1) * c["p_tan"]
        self.h = c["h"]


def _assemble(rad, u, tau, bcs, jacobian=True):
    N = u.size
    dr = rad.dr
    w_f = np.diff(u) / (dr * rad.sl_f)
    s_f = np.sqrt(1 + w_f ** 2)
    F = rad.area_f * w_f / s_f
    dF = rad.area_f / s_f ** 3 / (dr * rad.sl_f)  # dF_{i+1/2}/du_{i+1}
    res = np.empty(N)
    diag = np.zeros(N)
    upper = np.zeros(N)
    lower = np.zeros(N)
    i = np.arange(1, N - 1)
    wc = (u[2:] - u[:-2]) / (2 * dr * rad.sl[i])
    v2 = wc ** 2 / (1 + wc ** 2)
    res[i] = ((F[i] - F[i - 1]) / (dr * rad.vol[i]) + rad.pterm_rad[i] * (1 - v2)
              + rad.pterm_tan[i] - tau * u[i] - rad.h[i])
    if jacobian:
        dv2 = 2 * wc / (1 + wc ** 2) ** 2 / (2 * dr * rad.sl[i])
        diag[i] = -(dF[i] + dF[i - 1]) / (dr * rad.vol[i]) - tau
        upper[i] = dF[i] / (dr * rad.vol[i]) - rad.pterm_rad[i] * dv2
        lower[i] = dF[i - 1] / (dr * rad.vol[i]) + rad.pterm_rad[i] * dv2
    for side, k in ((0, 0), (1, N - 1)):
        kind, val = bcs[side]
        if kind == "dirichlet":
            res[k] = u[k] - val
            diag[k] = 1.0
            continue
        # zero slope: no flux through the end, half-cell control volume
        sign = 1.0 if k == 0 else -1.0
        flux = F[0] if k == 0 else F[-1]
        res[k] = (sign * flux / (0.5 * dr * rad.vol[k]) + rad.pterm_rad[k] + rad.pterm_tan[k]
                  - tau * u[k] - rad.h[k])
        g = (dF[0] if k == 0 else dF[-1]) / (0.5 * dr * rad.vol[k])
        diag[k] = -g - tau
        if k == 0:
            upper[k] = g
        else:
            lower[k] = g
    return res, (lower, diag, upper)


def _banded_solve(bands, rhs):
    lower, diag, upper = bands
    ab = np.zeros((3, diag.size))
    ab[0, 1:] = upper[:-1]
    ab[1] = diag
    ab[2, :-1] = lower[1:]
    return solve_banded((1, 1), ab, rhs)


def jang_ode_residual(data, u, tau, bc=None):
    """Residual of the radial Jang equation, assembled independently of the solver.

    Interior nodes use the nonconservative form
    ``(rho^{n-1} u'/(lam omega))' / (rho^{n-1} sqrt(lam))`` with the flux
    evaluated at cell faces from ``omega = sqrt(1 + u'^2/lam)``; boundary
    rows report the boundary-condition defect.
    """
    bcs = _bc_pair(bc)
    r = data.r
    n = data.n
    u = np.asarray(u, dtype=float)
    dr = r[1] - r[0]
    rf = 0.5 * (r[1:] + r[:-1])
    cf, cc = data.evaluate(rf), data.evaluate(r)
    du_f = (u[1:] - u[:-1]) / dr
    omega_f = np.sqrt(1 + du_f ** 2 / cf["lam"])
    flux = cf["rho"] ** (n - 1) * du_f / (cf["lam"] * omega_f) * np.sqrt(cf["lam"])
    out = np.empty_like(u)
    du_c = np.zeros_like(u)
    du_c[1:-1] = (u[2:] - u[:-2]) / (2 * dr)
    omega2 = 1 + du_c ** 2 / cc["lam"]
    trace = cc["p_rad"] / cc["lam"] + (n - 1) * cc["p_tan"] - cc["p_rad"] * du_c ** 2 / (cc["lam"] ** 2 * omega2)
    meas = cc["rho"] ** (n - 1) * np.sqrt(cc["lam"])
    out[1:-1] = (np.diff(flux) / dr / meas[1:-1] + trace[1:-1] - tau * u[1:-1] - cc["h"][1:-1])
    for k, (kind, val) in zip((0, -1), bcs):
        if kind == "dirichlet":
            out[k] = u[k] - val
        else:
            f = flux[0] if k == 0 else -flux[-1]
            out[k] = f / (0.5 * dr * meas[k]) + trace[k] - tau * u[k] - cc["h"][k]
    return out


def jang_ode_solve(data, tau, bc=None, u0=None, tol=1e-9, max_iter=200, min_damping=2.0 ** -20,
                   rad=None):
    """Solve the radial Jang equation by damped Newton.

    Parameters
    ----------
    data : SphericalData
    tau : float
        Positive regularization constant.
    bc : optional
        ``("dirichlet", value)``, ``"zero-slope"``, a pair of those for the
        inner and outer end, or ``{"inner": ..., "outer": ...}``.  Default
        is Dirichlet zero at both ends.
    u0 : ndarray, optional
        Initial iterate (warm start).

    Raises
    ------
    NonconvergenceError
        When damping falls below ``min_damping`` or ``max_iter`` is reached.
    """
    if not tau > 0:
        raise ConfigError("tau must be positive")
    bcs = _bc_pair(bc)
    N = data.r.size
    if u0 is None and N > 401 and (N - 1) % 2 == 0:
        # grid sequencing: a cold start on a fine grid begins from the coarse solution
        coarse = SphericalData(data.n, data.r[::2], data.functions, data.description)
        u0 = np.interp(data.r, coarse.r,
                       jang_ode_solve(coarse, tau, bc, None, tol, max_iter, min_damping).u)
    rad = rad or _Radial(data)
    u = np.zeros(N) if u0 is None else np.array(u0, dtype=float)
    for k, (kind, val) in zip((0, -1), bcs):
        if kind == "dirichlet":
            u[k] = val
    res, J = _assemble(rad, u, tau, bcs)
    norm = float(np.max(np.abs(res)))
    l2 = float(np.linalg.norm(res))
    history = [norm]
    it = 0

    def target():
        # second differences of u carry roundoff of order eps |u| / dr^2
        floor = 10 * np.finfo(float).eps * max(1.0, float(np.max(np.abs(u)))) / (
            rad.dr ** 2 * float(np.min(rad.lam[np.isfinite(rad.lam)])))
        return max(tol, floor)

    while norm >= target():
        if it >= max_iter:
            raise NonconvergenceError(f"radial Jang solve: {norm:.3e} after {it} iterations",
                                      iterate=u, history=history)
        step = _banded_solve(J, -res)
        t = 1.0
        while True:
            trial = u + t * step
            r_trial, J_trial = _assemble(rad, trial, tau, bcs)
            n_trial = float(np.max(np.abs(r_trial)))
            l2_trial = float(np.linalg.norm(r_trial))
            if np.isfinite(n_trial) and l2_trial < l2:
                break
            t *= 0.5
            if t < min_damping:
                raise NonconvergenceError(
                    f"radial Jang solve: damping floor reached at residual {norm:.3e}",
                    iterate=u, history=history)
        u, res, J, norm, l2 = trial, r_trial, J_trial, n_trial, l2_trial
        history.append(norm)
        it += 1
    return JangODESolution(data.r, u, float(tau), norm, it, tuple(history))


def jang_ode_continuation(data, taus, bc=None, **kw):
    """Warm-started solves along a decreasing ``tau`` schedule.

    ``bc`` may be a callable ``tau -> bc`` for tau-dependent boundary data.
    """
    taus = [float(t) for t in taus]
    if not taus or any(t <= 0 for t in taus) or any(b >= a for a, b in zip(taus, taus[1:])):
        raise ConfigError("tau schedule must be positive and strictly decreasing")
    out = []
    u = None
    rad = _Radial(data)
    for tau in taus:
        b = bc(tau) if callable(bc) else bc
        sol = jang_ode_solve(data, tau, b, u0=u, rad=rad, **kw)
        out.append(sol)
        u = sol.u
    return out
