r"""The capillary-regularized Jang equation on an ambient chart.

.. math::

    \mathcal J_\tau(u) = \Bigl(g^{ij} - \frac{u^i u^j}{\omega^2}\Bigr)
        \Bigl(\frac{\nabla_i\nabla_j u}{\omega} + p_{ij}\Bigr) - \tau u - h,
    \qquad \omega = \sqrt{1 + |Du|^2},

which is ``div(Du/omega) + (g^{ij} - u^i u^j/omega^2) p_ij - tau u - h``
written in nondivergence form.  Solutions of a decreasing ``tau`` schedule
blow up along surfaces with ``theta = h`` (or the reversed orientation);
the steep-gradient set of ``u`` locates them.

Boundary data on shells are either Dirichlet values or barrier data
``+-a/tau`` on the two boundary spheres, with ``a`` a fraction of the
smallest barrier margin.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ..errors import ConfigError, NonconvergenceError, PnekitError
from ..surfaces import Surface, SurfaceGrid, barrier_margins
from .linear import factorize, roundoff_floor

__all__ = [
    "JangConfig",
    "JangState",
    "ContinuationResult",
    "jang_residual",
    "jang_jacobian",
    "jang_newton_solve",
    "tau_continuation",
    "boundary_values",
]

DEFAULT_SCHEDULE = (1.0, 0.5, 0.25, 0.1, 0.05, 0.02, 0.01, 0.005, 0.002)


@dataclass(frozen=True)
class JangConfig:
    """Tolerances and schedule of a Jang continuation.

    Parameters
    ----------
    taus : tuple of float
        Strictly decreasing positive schedule.
    tol : float
        Newton tolerance on the residual max-norm.
    max_iter : int
        Newton iterations per ``tau``.
    min_damping : float
        Smallest step fraction before a solve is declared stalled.
    blowup_threshold : float, optional
        ``sup |u|`` that stops the continuation; defaults to ``1e3`` times
        the chart diameter.
    gradient_threshold : float
        ``max |Du|`` on the steep set above which a blow-up is reported.
    boundary : {"barrier", "dirichlet"}
        Boundary data on charts with closed radial ends.
    barrier_fraction : float
        ``a`` as a fraction of the smallest barrier margin.
    dirichlet_value : float
        Boundary value for ``boundary = "dirichlet"`` (and the barrier fallback).
    """

    taus: tuple = DEFAULT_SCHEDULE
    tol: float = 1e-8
    max_iter: int = 60
    min_damping: float = 2.0 ** -20
    blowup_threshold: float = None
    gradient_threshold: float = 10.0
    boundary: str = "barrier"
    barrier_fraction: float = 0.25
    dirichlet_value: float = 0.0

    def __post_init__(self):
        taus = tuple(float(t) for t in self.taus)
        if not taus or any(t <= 0 for t in taus) or any(b >= a for a, b in zip(taus, taus[1:])):
            raise ConfigError("tau schedule must be nonempty, positive and strictly decreasing")
        object.__setattr__(self, "taus", taus)
        if not (self.tol > 0 and self.max_iter > 0 and 0 < self.min_damping < 1):
            raise ConfigError("Jang tolerances must be positive")
        if self.blowup_threshold is not None and self.blowup_threshold <= 0:
            raise ConfigError("blow-up threshold must be positive")
        if self.boundary not in ("barrier", "dirichlet"):
            raise ConfigError(f"unknown Jang boundary mode {self.boundary!r}")
        if not 0 < self.barrier_fraction < 1:
            raise ConfigError("barrier_fraction must lie in (0, 1)")

    def threshold(self, chart):
        if self.blowup_threshold is not None:
            return float(self.blowup_threshold)
        if chart.topology == "lat-long-sphere-shell":
            diam = 2 * chart.upper[0]
        else:
            diam = float(np.sqrt(sum(e ** 2 for e in chart.extents)))
        return 1e3 * diam


@dataclass(frozen=True, eq=False)
class JangState:
    """Result of one ``tau`` solve.

    ``steep`` marks nodes with ``|Du| >= max(10 median |Du|, max |Du| / 2)``.
    """

    u: np.ndarray
    tau: float
    history: tuple
    converged: bool
    blow_up: bool
    steep: np.ndarray
    grad_norm: np.ndarray
    iterations: int
    log: tuple = ()

    @property
    def sup_abs(self):
        return float(np.max(np.abs(self.u)))

    @property
    def residual(self):
        """Final residual max-norm (``history`` holds the l2 norms that damping decreases)."""
        return float(self.log[-1]["residual"])


@dataclass(frozen=True, eq=False)
class ContinuationResult:
    states: list
    verdict: str
    locus_radius: float = None
    locus_nodes: np.ndarray = None
    locus_surface: Surface = None
    touches_boundary: bool = False
    shell_like: bool = False
    boundary: dict = field(default_factory=dict)
    error: str = None

    def to_json(self):
        return {
            "verdict": self.verdict,
            "locus_radius": self.locus_radius,
            "touches_boundary": self.touches_boundary,
            "shell_like": self.shell_like,
            "boundary": dict(self.boundary),
            "error": self.error,
            "states": [{"tau": s.tau, "iterations": s.iterations, "residual": s.residual,
                        "sup_abs_u": s.sup_abs, "max_grad": float(s.grad_norm.max()),
                        "blow_up": s.blow_up, "steep_nodes": int(s.steep.sum())}
                       for s in self.states],
        }


# -- residual and Jacobian -------------------------------------------------------


class _Geometry:
    """Chart-component coefficients of the Jang operator at the nodes."""

    def __init__(self, data):
        self.chart = data.chart
        g = data.g.full()
        self.g_inv = np.linalg.inv(g)
        self.p = data.p.full()
        self.gamma = np.real(data.chart_christoffel)
        self.h = data.h.values


def _geometry(data):
    cached = data.__dict__.get("_jang_geometry")
    if cached is None:
        cached = _Geometry(data)
        object.__setattr__(data, "_jang_geometry", cached)
    return cached


def _values(u):
    return np.asarray(getattr(u, "values", u), dtype=float)


def _pieces(geo, u):
    ch = geo.chart
    du = ch.gradient(u)
    ddu = ch.hessian(u)
    up = np.einsum("...ij,...j->...i", geo.g_inv, du)
    w2 = 1 + np.einsum("...i,...i->...", du, up)
    om = np.sqrt(w2)
    a = geo.g_inv - up[..., :, None] * up[..., None, :] / w2[..., None, None]
    hess = ddu - np.einsum("...kij,...k->...ij", geo.gamma, du)
    return du, up, w2, om, a, hess


def jang_residual(u, data, tau):
    """Nodewise ``J_tau(u)`` (no boundary rows); ``u`` is an array or ScalarField."""
    geo = _geometry(data)
    u = _values(u)
    _, _, _, om, a, hess = _pieces(geo, u)
    return (np.einsum("...ij,...ij->...", a, hess) / om + np.einsum("...ij,...ij->...", a, geo.p)
            - tau * u - geo.h)


def _contract_da(T, up, w2, g_inv):
    """``(d a^{ij} / d u_k) T_ij`` for symmetric ``T``."""
    Tu = np.einsum("...kl,...lj,...j->...k", g_inv, T, up)
    uTu = np.einsum("...i,...ij,...j->...", up, T, up)
    return -2 * Tu / w2[..., None] + 2 * (uTu / w2 ** 2)[..., None] * up


def jang_jacobian(u, data, tau):
    """Analytic linearization of :func:`jang_residual` as a sparse matrix."""
    geo = _geometry(data)
    ch = geo.chart
    u = _values(u)
    du, up, w2, om, a, hess = _pieces(geo, u)
    m = ch.dim
    aH = np.einsum("...ij,...ij->...", a, hess)
    dk = (-up * (aH / om ** 3)[..., None] + _contract_da(hess, up, w2, geo.g_inv) / om[..., None]
          - np.einsum("...ij,...kij->...k", a, geo.gamma) / om[..., None]
          + _contract_da(geo.p, up, w2, geo.g_inv))
    J = sp.diags(np.full(ch.size, -float(tau)))
    for k in range(m):
        J = J + sp.diags(dk[..., k].ravel()) @ ch.diff_matrix(k, 1)
    for i in range(m):
        for j in range(i, m):
            coef = a[..., i, j] / om * (1.0 if i == j else 2.0)
            J = J + sp.diags(coef.ravel()) @ ch.mixed_matrix(i, j)
    return J.tocsr()


def _boundary_mask(chart):
    if chart.topology == "periodic-box":
        return None, None
    inner = np.zeros(chart.shape, dtype=bool)
    outer = np.zeros(chart.shape, dtype=bool)
    inner[0] = True
    outer[-1] = True
    return inner, outer


def _apply_bc(chart, res, J, u, bc):
    inner, outer = _boundary_mask(chart)
    if inner is None:
        return res, J
    if bc is None:
        raise ConfigError("charts with radial ends need boundary values")
    target = np.zeros(chart.shape)
    target[inner] = np.broadcast_to(bc[0], inner.sum()) if np.ndim(bc[0]) else bc[0]
    target[outer] = np.broadcast_to(bc[1], outer.sum()) if np.ndim(bc[1]) else bc[1]
    mask = (inner | outer).ravel()
    res = res.copy()
    res.flat[mask] = (u - target).ravel()[mask]
    if J is not None:
        keep = sp.diags((~mask).astype(float))
        J = (keep @ J + sp.diags(mask.astype(float))).tocsr()
    return res, J


def _full_residual(data, u, tau, bc, jacobian=True):
    res = jang_residual(u, data, tau)
    J = jang_jacobian(u, data, tau) if jacobian else None
    return _apply_bc(data.chart, res, J, u, bc)


def jang_newton_solve(data, tau, bc=None, cfg=None, u0=None):
    """Damped Newton solve of ``J_tau(u) = 0``.

    Parameters
    ----------
    bc : tuple, optional
        ``(inner, outer)`` Dirichlet values (scalars or arrays over the
        boundary sphere) on shells; ignored on periodic boxes.
    u0 : ndarray, optional
        Initial iterate; boundary rows are overwritten.

    Raises
    ------
    NonconvergenceError
        Damping floor or iteration cap reached; carries the best iterate.
    """
    cfg = cfg or JangConfig()
    if not tau > 0:
        raise ConfigError("tau must be positive")
    ch = data.chart
    if ch.topology == "radial-interval":
        raise ConfigError("the grid Jang solver needs a box or shell chart")
    u = np.zeros(ch.shape) if u0 is None else np.array(_values(u0), dtype=float)
    inner, outer = _boundary_mask(ch)
    if inner is not None:
        if bc is None:
            bc = (cfg.dirichlet_value, cfg.dirichlet_value)
        u[inner] = np.broadcast_to(bc[0], inner.sum()) if np.ndim(bc[0]) else bc[0]
        u[outer] = np.broadcast_to(bc[1], outer.sum()) if np.ndim(bc[1]) else bc[1]
    res, J = _full_residual(data, u, tau, bc)
    norm = float(np.max(np.abs(res)))
    l2 = float(np.linalg.norm(res))
    history = [l2]
    log = [{"tau": float(tau), "iteration": 0, "residual": norm, "residual_l2": l2, "damping": 1.0}]
    it = 0
    while norm >= cfg.tol and norm >= roundoff_floor(J, u):
        if it >= cfg.max_iter:
            raise NonconvergenceError(f"Jang Newton: residual {norm:.3e} after {it} iterations",
                                      iterate=u, history=history)
        step = factorize(J)(-res.ravel()).reshape(ch.shape)
        t = 1.0
        while True:
            trial = u + t * step
            r_trial, _ = _full_residual(data, trial, tau, bc, jacobian=False)
            n_trial = float(np.max(np.abs(r_trial)))
            l2_trial = float(np.linalg.norm(r_trial))
            if np.isfinite(n_trial) and l2_trial < l2:
                break
            t *= 0.5
            if t < cfg.min_damping:
                raise NonconvergenceError(
                    f"Jang Newton: damping floor reached at residual {norm:.3e}",
                    iterate=u, history=history)
        u = trial
        it += 1
        res, J = _full_residual(data, u, tau, bc)
        norm = float(np.max(np.abs(res)))
        l2 = float(np.linalg.norm(res))
        history.append(l2)
        log.append({"tau": float(tau), "iteration": it, "residual": norm, "residual_l2": l2,
                    "damping": t})
    grad = _grad_norm(data, u)
    steep = _steep_set(grad)
    blow = bool(steep.any() and grad.max() >= cfg.gradient_threshold)
    return JangState(u, float(tau), tuple(history), True, blow, steep, grad, it, tuple(log))


def _grad_norm(data, u):
    geo = _geometry(data)
    du = geo.chart.gradient(u)
    return np.sqrt(np.einsum("...ij,...i,...j->...", geo.g_inv, du, du))


def _steep_set(grad):
    med = float(np.median(grad))
    return grad >= max(10 * med, 0.5 * float(grad.max())) if grad.max() > 0 else np.zeros(grad.shape, bool)


# -- boundary data and continuation ---------------------------------------------


def boundary_values(data, cfg, counts=(16, 32)):
    """Boundary data for a shell chart.

    Returns ``(bc_of_tau, info)``.  In barrier mode the barrier margins of
    the two boundary spheres are computed for both orderings; the ordering
    with all margins positive puts ``+a/tau`` on its first component and
    ``-a/tau`` on the other.  Without a valid ordering the Dirichlet value
    is used.
    """
    ch = data.chart
    if ch.topology == "periodic-box":
        return (lambda tau: None), {"mode": "periodic"}
    if cfg.boundary == "dirichlet":
        v = cfg.dirichlet_value
        return (lambda tau: (v, v)), {"mode": "dirichlet", "value": v}
    r0, r1 = ch.lower[0], ch.upper[0]
    nt, nphi = ch.counts[1], ch.counts[2]
    inner = Surface.sphere(r0, (nt, nphi))
    outer = Surface.sphere(r1, (nt, nphi))
    info = {"mode": "barrier"}
    for first in ("inner", "outer"):
        try:
            m = barrier_margins(inner, outer, data, first=first)
        except PnekitError as exc:
            info[f"error_{first}"] = str(exc)
            continue
        info[f"margins_{first}"] = [m.min_inner, m.min_outer]
        if m.ok:
            a = cfg.barrier_fraction * min(m.min_inner, m.min_outer)
            s = 1.0 if first == "inner" else -1.0
            info.update({"first": first, "a": a})
            return (lambda tau: (s * a / tau, -s * a / tau)), info
    v = cfg.dirichlet_value
    info.update({"mode": "dirichlet-fallback", "value": v})
    return (lambda tau: (v, v)), info


def _node_radius(data):
    ch = data.chart
    if ch.topology == "lat-long-sphere-shell":
        return ch.coordinates()[..., 0], np.zeros(3)
    X = ch.coordinates()
    center = np.array([(lo + hi) / 2 for lo, hi in zip(ch.lower, ch.upper)])
    return np.linalg.norm(X - center, axis=-1), center


def _extract_locus(data, state):
    """Best-fit radius, shell test and fitted radial graph of the steep set."""
    ch = data.chart
    steep = state.steep
    if not steep.any():
        return None, False, None, False
    radius, center = _node_radius(data)
    w = state.grad_norm * steep
    R = float(np.sum(w * radius) / np.sum(w))
    spread = float(np.sqrt(np.sum(w * (radius - R) ** 2) / np.sum(w)))
    shell_like = spread < 0.2 * R
    touches = False
    surface = None
    if ch.topology == "lat-long-sphere-shell":
        touches = bool(steep[0].any() or steep[-1].any())
        num = np.sum(w * radius, axis=0)
        den = np.sum(w, axis=0)
        cols = np.where(den > 0, num / np.where(den > 0, den, 1.0), R)
        if shell_like:
            surface = Surface("radial-graph", SurfaceGrid.lat_long(ch.counts[1], ch.counts[2]), cols)
    else:
        touches = bool(np.any(radius[steep] >= 0.5 * min(ch.extents) - max(ch.spacing)))
        if shell_like and ch.dim == 3:
            surface = Surface.sphere(R, (16, 32), center=tuple(center))
    return R, shell_like, surface, touches


def tau_continuation(data, cfg=None, u0=None):
    """Warm-started Jang solves along ``cfg.taus``.

    The run stops at the end of the schedule or once ``sup |u|`` exceeds
    the blow-up threshold.  The verdict is ``blow-up`` when the final state
    has a steep set with ``max |Du| >= cfg.gradient_threshold`` (or the
    threshold was crossed), ``converged-limit`` otherwise.  A nonconvergent
    solve ends the run; earlier states are returned with ``error`` set.
    """
    cfg = cfg or JangConfig()
    bc_of, info = boundary_values(data, cfg)
    limit = cfg.threshold(data.chart)
    states = []
    u = u0
    error = None
    crossed = False
    prev_tau = None
    for tau in cfg.taus:
        if u is not None and info.get("mode") == "barrier" and prev_tau is not None:
            # barrier data scale like 1/tau; so does the interior of the warm start
            u = u * (prev_tau / tau)
        try:
            st = jang_newton_solve(data, tau, bc_of(tau), cfg, u0=u)
        except NonconvergenceError as exc:
            error = f"tau={tau:g}: {exc}"
            break
        states.append(st)
        u = st.u
        prev_tau = tau
        if st.sup_abs > limit:
            crossed = True
            break
    if not states:
        return ContinuationResult([], "nonconvergent", boundary=info, error=error)
    last = states[-1]
    blow = crossed or last.blow_up
    if not blow:
        return ContinuationResult(states, "converged-limit", boundary=info, error=error)
    R, shell_like, surface, touches = _extract_locus(data, last)
    return ContinuationResult(states, "blow-up", R, last.steep, surface, touches, shell_like,
                              info, error)
