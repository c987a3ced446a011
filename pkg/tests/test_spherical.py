import csv

import numpy as np
import pytest

from conftest import pg, shell_chart
from pnekit.errors import ConfigError
from pnekit.fields import InitialDataSet
from pnekit.spherical import (SphericalData, find_pne_radii, jang_ode_continuation, jang_ode_residual,
                              jang_ode_solve, root_details, theta_profile)
from pnekit.surfaces import Surface, induced_geometry


def radial(r0, r1, nodes=2001):
    return {"topology": "radial-interval", "radii": [r0, r1], "counts": [nodes]}


def areal(r0=2.0, r1=6.0, nodes=2001):
    return SphericalData.from_json({"preset": "schwarzschild", "mass": 1.0, "chart": radial(r0, r1, nodes)})


def test_flat_profile():
    d = SphericalData.from_functions(3, 0.5, 10.0, nodes=201)
    prof = theta_profile(d)
    assert np.allclose(prof.values, 2 / d.r, rtol=1e-15)
    assert find_pne_radii(prof) == []


def test_schwarzschild_areal_profile():
    d = areal()
    prof = theta_profile(d)
    r = d.r
    assert np.allclose(prof.values, 2 / r * np.sqrt(1 - 2 / r), atol=1e-13)
    assert prof.values[0] == 0.0


def test_schwarzschild_pg_root():
    d = SphericalData.from_json(pg(), nodes=2001)
    roots = find_pne_radii(theta_profile(d))
    assert len(roots) == 1 and abs(roots[0] - 2.0) < 1e-10


def test_isotropic_root():
    # the isotropic horizon sits at r = m/2
    d = SphericalData.from_json({"preset": "schwarzschild", "mass": 1.0, "slicing": "isotropic",
                                 "chart": radial(0.2, 3.0)})
    roots = find_pne_radii(theta_profile(d))
    assert len(roots) == 1 and abs(roots[0] - 0.5) < 1e-10


@pytest.mark.parametrize("c, h, expected", [(0.0, 0.5, 4.0), (0.1, 0.7, 4.0)])
def test_prescribed_expansion_radius(c, h, expected):
    d = SphericalData.from_json({"preset": "constant-trace", "c": c, "h": h, "chart": radial(1.0, 10.0)})
    prof = theta_profile(d)
    assert np.allclose(prof.values, 2 / d.r + 2 * c - h, atol=1e-14)
    roots = find_pne_radii(prof)
    assert len(roots) == 1 and abs(roots[0] - expected) < 1e-10


def test_constant_trace_no_root():
    d = SphericalData.from_json({"preset": "constant-trace", "c": 0.1, "chart": radial(1.0, 10.0)})
    assert np.allclose(theta_profile(d).values, 2 / d.r + 0.2, atol=1e-14)
    assert find_pne_radii(theta_profile(d)) == []


def test_orientation_negates_mean_curvature():
    d = SphericalData.from_json(pg(), nodes=101)
    plus, minus = theta_profile(d, 1), theta_profile(d, -1)
    tr = 0.5 * (plus.values + minus.values)
    assert np.allclose(plus.values - tr, -(minus.values - tr), atol=1e-15)
    assert np.allclose(tr, -2 * np.sqrt(2 / d.r ** 3), atol=1e-14)
    with pytest.raises(ConfigError):
        theta_profile(d, 0)


def test_degenerate_root_flag():
    # h = 2/r + (r - 2)^3 makes theta - h = -(r - 2)^3, a root of zero slope
    d = SphericalData.from_functions(3, 1.0, 3.0, h=lambda r: 2 / r + (r - 2) ** 3, nodes=400)
    det = root_details(theta_profile(d))
    assert len(det) == 1 and abs(det[0]["radius"] - 2.0) < 1e-4
    assert det[0]["degenerate"]
    det = root_details(theta_profile(SphericalData.from_functions(3, 1.0, 10.0, h=0.5, nodes=400)))
    assert not det[0]["degenerate"] and det[0]["slope"] == pytest.approx(-1 / 8, rel=1e-6)


def test_grid_sphere_matches_profile():
    desc = {"preset": "schwarzschild", "mass": 1.0, "slicing": "isotropic",
            "chart": shell_chart(0.3, 3.0, (6, 6, 8))}
    prof = theta_profile(SphericalData.from_json(dict(desc, chart=radial(0.3, 3.0))))
    data = InitialDataSet.from_json(desc)
    for r in (0.5, 1.0, 2.0):
        g = induced_geometry(Surface.sphere(r, (8, 16)), data)
        assert np.allclose(g.theta, prof(np.array([r]))[0], atol=1e-12)


def test_non_symmetric_rejected():
    with pytest.raises(ConfigError):
        SphericalData.from_json({"preset": "polynomial-perturbation", "seed": 1, "amplitude": 0.05,
                                 "base": {"preset": "minkowski"}, "chart": radial(1.0, 2.0)})
    with pytest.raises(ConfigError):
        SphericalData.from_json({"preset": "minkowski",
                                 "chart": {"topology": "periodic-box", "extents": [1, 1, 1], "counts": [5, 5, 5]}})


def test_profile_csv(tmp_path):
    d = SphericalData.from_functions(3, 1.0, 2.0, nodes=11)
    theta_profile(d).to_csv(tmp_path / "p.csv")
    rows = list(csv.reader(open(tmp_path / "p.csv")))
    assert rows[0] == ["r", "theta_minus_h"] and len(rows) == 12
    assert float(rows[1][1]) == 2.0


# -- radial Jang equation --


def test_jang_flat_zero():
    d = SphericalData.from_functions(3, 1.0, 4.0, nodes=201)
    sol = jang_ode_solve(d, 0.5)
    assert np.max(np.abs(sol.u)) == 0.0 and sol.iterations == 0


def test_jang_flat_constant_h_zero_slope():
    c, tau = 0.3, 0.5
    d = SphericalData.from_functions(3, 1.0, 4.0, h=c, nodes=201)
    sol = jang_ode_solve(d, tau, "zero-slope")
    assert np.allclose(sol.u, -c / tau, atol=1e-12)


def test_jang_independent_residual():
    d = SphericalData.from_json(pg(chart=radial(2.5, 6.0, 1201)))
    for bc in (("dirichlet", 0.0), "zero-slope", {"inner": ("dirichlet", -0.3), "outer": "zero-slope"}):
        sol = jang_ode_solve(d, 0.25, bc)
        assert sol.residual < 1e-9
        assert np.max(np.abs(jang_ode_residual(d, sol.u, 0.25, bc))) < 1e-8


def test_jang_second_order():
    desc = pg()
    ref = jang_ode_solve(SphericalData.from_json(dict(desc, chart=radial(2.5, 6.0, 4801))), 0.25)
    errs = []
    for nodes in (151, 301, 601):
        sol = jang_ode_solve(SphericalData.from_json(dict(desc, chart=radial(2.5, 6.0, nodes))), 0.25)
        step = (4801 - 1) // (nodes - 1)
        errs.append(np.max(np.abs(sol.u - ref.u[::step])))
    assert 3.5 < errs[0] / errs[1] < 4.5 and 3.5 < errs[1] / errs[2] < 4.5


def test_jang_schwarzschild_continuation():
    d = SphericalData.from_json(pg(), nodes=1251)
    a = 0.25 * (2 / 4 - 2 * np.sqrt(2 / 64))
    taus = [2.0 ** -k for k in range(11)]
    sols = jang_ode_continuation(d, taus, lambda t: {"inner": ("dirichlet", -a / t), "outer": ("dirichlet", a / t)})
    sup = [s.sup_abs for s in sols]
    assert all(b > a_ for a_, b in zip(sup, sup[1:]))
    dist = [abs(s.zero_crossings[0] - 2.0) for s in sols[7:]]
    assert all(b < a_ for a_, b in zip(dist, dist[1:])) and dist[-1] < 1e-3
    assert all(1.8 <= s.steepest_radius <= 2.2 for s in sols[7:])


def test_jang_bad_inputs():
    d = SphericalData.from_functions(3, 1.0, 4.0, nodes=21)
    with pytest.raises(ConfigError):
        jang_ode_solve(d, 0.0)
    with pytest.raises(ConfigError):
        jang_ode_continuation(d, [0.5, 1.0])
    with pytest.raises(ConfigError):
        jang_ode_solve(d, 1.0, ("neumann", 1.0))
