import numpy as np
import pytest

from conftest import box_chart, pg, shell_chart
from oracles import PERIODIC_G, PERIODIC_P
from pnekit.errors import ConfigError, NonconvergenceError, OutOfChartError
from pnekit.fields import InitialDataSet
from pnekit.solvers import (GraphConfig, JangConfig, graph_jacobian, graph_residual, jang_jacobian,
                            jang_newton_solve, jang_residual, pne_graph_solve, resample_surface,
                            tau_continuation)
from pnekit.solvers.jang import boundary_values
from pnekit.spherical import SphericalData, find_pne_radii, jang_ode_solve, theta_profile
from pnekit.surfaces import Surface, SurfaceGrid, barrier_margins


def data(desc):
    return InitialDataSet.from_json(desc)


def smooth(X, rng, amp, modes=4):
    out = np.zeros(X.shape[:-1])
    for _ in range(modes):
        k = rng.integers(-2, 3, size=X.shape[-1])
        out += amp * rng.normal() * np.cos(X @ k + rng.uniform(0, 2 * np.pi))
    return out


# -- Jang residual and Newton --


def test_jang_residual_examples():
    d = data({"preset": "minkowski", "chart": box_chart(3)})
    assert np.max(np.abs(jang_residual(np.zeros(d.chart.shape), d, 0.5))) == 0.0
    d = data({"preset": "minkowski", "h": 0.3, "chart": box_chart(3)})
    assert np.max(np.abs(jang_residual(np.full(d.chart.shape, -0.6), d, 0.5))) < 1e-15
    d = data({"preset": "constant-trace", "c": 0.1, "h": 0.05, "chart": box_chart(3)})
    assert np.allclose(jang_residual(np.zeros(d.chart.shape), d, 0.5), 0.3 - 0.05, atol=1e-15)


def test_jang_newton_trivial():
    d = data({"preset": "minkowski", "chart": shell_chart(1.0, 3.0, (7, 6, 8))})
    st = jang_newton_solve(d, 0.5, (0.0, 0.0), JangConfig(boundary="dirichlet"))
    assert st.converged and st.iterations <= 2 and np.max(np.abs(st.u)) == 0.0


def test_jang_newton_periodic_constant():
    d = data({"preset": "minkowski", "h": 0.3, "chart": box_chart(3)})
    st = jang_newton_solve(d, 1.0)
    assert np.max(np.abs(st.u + 0.3)) < 1e-8


def test_jang_grid_matches_radial_ode():
    ref = jang_ode_solve(SphericalData.from_json(pg(chart={"topology": "radial-interval", "radii": [2.5, 6.0],
                                                          "counts": [4801]})), 0.25)
    errs = []
    for nr in (11, 21, 41):
        d = data(pg(chart=shell_chart(2.5, 6.0, (nr, 8, 16))))
        st = jang_newton_solve(d, 0.25, (0.0, 0.0), JangConfig(boundary="dirichlet"))
        assert st.residual < 1e-8
        r = d.chart.coordinates()[:, 0, 0, 0]
        errs.append(np.max(np.abs(st.u - np.interp(r, ref.r, ref.u)[:, None, None])))
        assert np.ptp(st.u, axis=(1, 2)).max() < 1e-12
    assert 3.5 < errs[0] / errs[1] < 4.5 and 3.5 < errs[1] / errs[2] < 4.5


@pytest.mark.parametrize("chart, bc", [(box_chart(3, 10), None),
                                       (shell_chart(1.0, 3.0, (9, 8, 16)), (0.4, -0.2))])
def test_jang_maximum_principle(chart, bc):
    tau = 0.5
    d = data({"preset": "minkowski", "h": "0.3*sin(x) + 0.2*cos(y + z)", "chart": chart})
    st = jang_newton_solve(d, tau, bc, JangConfig(boundary="dirichlet"))
    h = d.h.values
    lo = min([-h.max() / tau, *(bc or ())])
    hi = max([-h.min() / tau, *(bc or ())])
    assert lo - 1e-12 <= st.u.min() and st.u.max() <= hi + 1e-12


@pytest.mark.parametrize("desc", [
    {"preset": "custom", "g": PERIODIC_G, "p": PERIODIC_P, "h": "0.1*sin(x + y)", "chart": box_chart(3, 12)},
    pg(chart=shell_chart(1.5, 4.0, (9, 8, 16))),
])
def test_jang_jacobian_directional(desc):
    d = data(desc)
    X = d.chart.coordinates()
    eps = 1e-6
    for seed in range(10):
        rng = np.random.default_rng(seed)
        u, du = smooth(X, rng, 0.5), smooth(X, rng, 1.0)
        fd = (jang_residual(u + eps * du, d, 0.3) - jang_residual(u - eps * du, d, 0.3)) / (2 * eps)
        Jd = (jang_jacobian(u, d, 0.3) @ du.ravel()).reshape(fd.shape)
        assert np.linalg.norm(fd - Jd) / np.linalg.norm(Jd) <= 1e-6


def test_jang_config_validation():
    with pytest.raises(ConfigError):
        JangConfig(taus=(0.5, 1.0))
    with pytest.raises(ConfigError):
        JangConfig(boundary="neumann")
    with pytest.raises(ConfigError):
        JangConfig(barrier_fraction=1.5)


# -- continuation --


def test_continuation_flat_converges():
    res = tau_continuation(data({"preset": "minkowski", "chart": shell_chart(1.0, 4.0, (11, 8, 16))}))
    assert res.verdict == "converged-limit" and res.error is None
    assert all(s.sup_abs == 0.0 for s in res.states)


def test_continuation_schwarzschild_blowup():
    d = data(pg(chart=shell_chart(1.5, 4.0, (21, 8, 16))))
    res = tau_continuation(d)
    assert res.boundary["mode"] == "barrier" and res.boundary["first"] == "outer"
    assert res.verdict == "blow-up" and res.shell_like and not res.touches_boundary
    assert 1.8 <= res.locus_radius <= 2.2
    sup = [s.sup_abs for s in res.states]
    assert all(b >= a for a, b in zip(sup, sup[1:]))


def test_continuation_constant_trace_no_barrier():
    # the inward-oriented root 2/r = 2c sits at r = 4, but no round shell
    # satisfies the barrier inequalities, so the continuation falls back to
    # Dirichlet data and its steep set sits on the chart boundary
    c = 0.25
    desc = {"preset": "constant-trace", "c": c, "chart": shell_chart(2.0, 8.0, (13, 8, 16))}
    prof = theta_profile(SphericalData.from_json(
        dict(desc, chart={"topology": "radial-interval", "radii": [2.0, 8.0], "counts": [601]})), -1)
    assert find_pne_radii(prof) == [pytest.approx(4.0, abs=1e-10)]
    d = data(desc)
    _, info = boundary_values(d, JangConfig())
    assert info["mode"] == "dirichlet-fallback"
    for r0, r1 in ((2.0, 8.0), (3.0, 5.0), (4.5, 8.0)):
        for first in ("inner", "outer"):
            assert not barrier_margins(Surface.sphere(r0, (6, 8)), Surface.sphere(r1, (6, 8)), d, first).ok
    res = tau_continuation(d)
    assert res.verdict == "blow-up" and res.touches_boundary


# -- graph solver --


def test_graph_flat_sphere():
    d = data({"preset": "minkowski", "h": 0.5, "chart": shell_chart(1.0, 6.0, (6, 6, 8))})
    sol = pne_graph_solve(d, Surface.sphere(3.0, (16, 32)))
    assert np.max(np.abs(sol.surface.values - 4.0)) < 1e-6
    again = pne_graph_solve(d, sol.surface)
    assert again.iterations <= 2


def test_graph_constant_trace_sphere():
    d = data({"preset": "constant-trace", "c": 0.1, "h": 0.7, "chart": shell_chart(1.0, 6.0, (6, 6, 8))})
    sol = pne_graph_solve(d, Surface.sphere(3.0, (16, 32)))
    assert np.max(np.abs(sol.surface.values - 4.0)) < 1e-6


def test_graph_schwarzschild_horizon():
    d = data(pg())
    sol = pne_graph_solve(d, Surface.sphere(2.5, (16, 32)))
    assert np.max(np.abs(sol.surface.values - 2.0)) < 1e-3 * 2.0
    assert sol.residual < 1e-9
    assert pne_graph_solve(d, sol.surface).iterations <= 2
    fd = pne_graph_solve(d, Surface.sphere(2.5, (16, 32)), GraphConfig(fd_jacobian=True))
    assert np.max(np.abs(fd.surface.values - sol.surface.values)) < 1e-8


def test_graph_torus_plane():
    d = data({"preset": "minkowski", "chart": box_chart(3)})
    sol = pne_graph_solve(d, Surface.plane(1.0, (16, 16), (0, 0), (2 * np.pi, 2 * np.pi)))
    assert sol.iterations == 0 and sol.residual == 0.0


def test_graph_jacobian_directional():
    d = data({"preset": "polynomial-perturbation", "seed": 2, "amplitude": 0.02,
              "base": {"preset": "schwarzschild", "mass": 1.0, "slicing": "painleve-gullstrand",
                       "time_orientation": "future"},
              "chart": shell_chart(1.5, 4.0, (9, 8, 16))})
    grid = SurfaceGrid.lat_long(16, 32)
    th, ph = np.moveaxis(grid.coordinates(), -1, 0)
    eps = 1e-6
    for seed in range(10):
        rng = np.random.default_rng(seed)
        R = 2.5 + 0.1 * rng.normal() * np.sin(th) * np.cos(ph + rng.uniform(0, 6)) + 0.05 * rng.normal() * np.cos(th)
        dR = rng.normal() * np.cos(th) + rng.normal() * np.sin(th) ** 2 * np.sin(2 * ph)
        s = Surface("radial-graph", grid, R)
        fd = (graph_residual(s.with_values(R + eps * dR), d) - graph_residual(s.with_values(R - eps * dR), d)) / (2 * eps)
        Jd = (graph_jacobian(s, d) @ dR.ravel()).reshape(fd.shape)
        assert np.linalg.norm(fd - Jd) / np.linalg.norm(Jd) <= 1e-6


def test_graph_leaves_chart():
    d = data({"preset": "minkowski", "h": 0.05, "chart": shell_chart(1.0, 6.0, (6, 6, 8))})
    with pytest.raises(OutOfChartError):
        pne_graph_solve(d, Surface.sphere(3.0, (8, 16)))


def test_graph_nonconvergence_carries_iterate():
    d = data(pg())
    with pytest.raises(NonconvergenceError) as info:
        pne_graph_solve(d, Surface.sphere(2.5, (8, 16)), GraphConfig(max_iter=1))
    assert isinstance(info.value.iterate, Surface)


def test_resample_round_trip():
    grid = SurfaceGrid.lat_long(16, 32)
    th, ph = np.moveaxis(grid.coordinates(), -1, 0)
    s = Surface("radial-graph", grid, 2 + 0.1 * np.sin(th) * np.cos(ph))
    fine = resample_surface(s, (32, 64))
    th2, ph2 = np.moveaxis(fine.grid.coordinates(), -1, 0)
    assert np.max(np.abs(fine.values - (2 + 0.1 * np.sin(th2) * np.cos(ph2)))) < 1e-4
