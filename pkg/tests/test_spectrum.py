from types import SimpleNamespace

import numpy as np
import pytest
import scipy.sparse as sp
from scipy.sparse.linalg import eigsh

from conftest import TWO_PI, box_chart, pg, shell_chart
from oracles import random_positive, rotation_field
from pnekit.errors import DomainError, UnsupportedTopologyError
from pnekit.fields import InitialDataSet
from pnekit.fields.chart import Chart
from pnekit.solvers import pne_graph_solve
from pnekit.spectrum import (assemble_L, conformal_scalar_curvature, intrinsic_scalar_curvature,
                             operator_from_fields, principal_eigenpair, stability_verdict,
                             topology_report)
from pnekit.surfaces import Surface, SurfaceGrid, induced_geometry


def torus(n, extent=TWO_PI):
    return SurfaceGrid.torus((n, n), (0, 0), (extent, extent))


def flat_metric(X):
    m = X.shape[-1]
    return np.broadcast_to(np.eye(m), X.shape[:-1] + (m, m)).copy()


def horizon(counts=(16, 32)):
    return induced_geometry(Surface.sphere(2.0, counts), InitialDataSet.from_json(pg()))


def sym(A):
    A = sp.csr_matrix(A)
    return 0.5 * (A + A.T)


def test_constant_potential_torus():
    res = principal_eigenpair(operator_from_fields(torus(16), np.full((16, 16), 0.3)))
    assert res.eigenvalue == pytest.approx(0.3, abs=1e-12)
    assert np.allclose(res.eigenfunction, 1.0, atol=1e-10)
    assert stability_verdict(res) == "stable"


def test_horizon_eigenvalue():
    g = horizon()
    op = assemble_L(g, InitialDataSet.from_json(pg()))
    res = principal_eigenpair(op)
    assert abs(res.eigenvalue - 0.25) < 0.0025
    assert res.positive and res.imag_bound < 1e-10
    assert stability_verdict(res) == "stable"


def test_drift_matches_dense_oracle():
    grid = torus(32)
    W = rotation_field(grid.coordinates())
    op = operator_from_fields(grid, np.full(grid.shape, 0.4), W, add_div_w=True)
    assert abs(op.matrix - op.matrix.T).max() > 1e-3
    ev = np.linalg.eigvals(op.matrix.toarray())
    ref = ev[np.argmin(ev.real)]
    res = principal_eigenpair(op)
    assert abs(res.eigenvalue - ref.real) <= 1e-8 * abs(ref.real)
    assert abs(res.eigenvalue - 0.4) < 1e-10
    assert np.allclose(res.eigenfunction, 1.0, atol=1e-8)


def test_symmetric_path_matches_eigsh():
    d = InitialDataSet.from_json({"preset": "polynomial-perturbation", "seed": 4, "amplitude": 0.02,
                                  "base": {"preset": "schwarzschild", "mass": 1.0, "slicing": "isotropic"},
                                  "chart": shell_chart(0.3, 3.0, (6, 6, 8))})
    g = induced_geometry(Surface.sphere(0.6, (16, 32)), d)
    op = assemble_L(g, d, drift=False)
    S = op.symmetric_form()
    assert abs(S - S.T).max() < 1e-12 * abs(S).max()
    ref = eigsh(S, k=1, sigma=-10.0, which="LM")[0][0]
    res = principal_eigenpair(op)
    assert abs(res.eigenvalue - ref) <= 1e-8 * max(1.0, abs(ref))


def test_drift_symmetric_part():
    # p = dr (x) T + T (x) dr with T tangential gives W != 0
    d = InitialDataSet.from_json({"preset": "custom", "p": {"xz": "0.2", "yz": "0.1*x"},
                                  "chart": shell_chart(0.5, 3.0, (6, 6, 8))})
    g = induced_geometry(Surface.sphere(1.0, (16, 32)), d)
    assert np.max(np.abs(g.W)) > 0.05
    op = assemble_L(g, d)
    M = op.weighted()
    assert abs(M - M.T).max() > 1e-3
    plain = operator_from_fields(g.grid, op.c0 - g.grid.divergence(g.sqrt_det, g.W), None, g.sqrt_det,
                                 g.gamma_inv)
    assert abs(sym(M) - plain.weighted()).max() < 1e-12 * abs(M).max()


def test_mots_reduction_h_zero():
    d = InitialDataSet.from_json({"preset": "custom", "p": {"xz": "0.2", "yz": "0.1*x"},
                                  "chart": shell_chart(0.5, 3.0, (6, 6, 8))})
    g = induced_geometry(Surface.sphere(1.0, (16, 32)), d)
    op = assemble_L(g, d)
    assert np.all(op.potential_terms["h_terms"] == 0.0)
    divW = g.grid.divergence(g.sqrt_det, g.W)
    assert np.array_equal(op.c0, g.Q - g.W_sq + divW)


def test_verdicts():
    res = principal_eigenpair(operator_from_fields(torus(16), np.zeros((16, 16))))
    assert abs(res.eigenvalue) < 1e-12 and stability_verdict(res) == "stable"
    res = principal_eigenpair(operator_from_fields(torus(16, 1.0), -np.ones((16, 16))))
    assert res.eigenvalue == pytest.approx(-1.0, abs=1e-12)
    assert stability_verdict(res) == "unstable"


def test_open_grid_rejected():
    with pytest.raises(UnsupportedTopologyError):
        operator_from_fields(SimpleNamespace(is_closed=False, shape=(8, 8)), np.zeros((8, 8)))


# -- conformal scalar curvature --


def test_conformal_trivial_factors():
    grid = torus(16)
    X = grid.coordinates()
    gamma = flat_metric(X) * (1 + 0.1 * np.sin(X[..., 0]))[..., None, None]
    S = intrinsic_scalar_curvature(gamma, grid)
    # the discrete Laplacian of a constant vanishes up to roundoff
    assert np.allclose(conformal_scalar_curvature(gamma, np.ones(grid.shape), 3, grid, S=S), S, rtol=0, atol=1e-14)
    out = conformal_scalar_curvature(gamma, np.full(grid.shape, 2.0), 3, grid, S=S)
    assert np.allclose(out, 2.0 ** -2 * S, rtol=0, atol=1e-14)
    with pytest.raises(DomainError):
        conformal_scalar_curvature(gamma, -np.ones(grid.shape), 3, grid, S=S)


def test_conformal_sine_factor():
    errs = []
    for n in (16, 32, 64):
        grid = torus(n)
        X = grid.coordinates()
        f = 1 + 0.1 * np.sin(X[..., 0])
        a = conformal_scalar_curvature(flat_metric(X), f, 3, grid)
        b = intrinsic_scalar_curvature(f[..., None, None] ** 2 * flat_metric(X), grid)
        errs.append(np.max(np.abs(a - b)))
    assert errs[-1] < 1e-3 and 3.5 < errs[1] / errs[2] < 4.5


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_conformal_order_n3(seed):
    errs = []
    for n in (32, 64):
        grid = torus(n)
        X = grid.coordinates()
        f = random_positive(X, seed)
        a = conformal_scalar_curvature(flat_metric(X), f, 3, grid)
        b = intrinsic_scalar_curvature(f[..., None, None] ** 2 * flat_metric(X), grid)
        errs.append(np.max(np.abs(a - b)))
    assert 3.5 <= errs[0] / errs[1] <= 4.5


@pytest.mark.parametrize("seed", [0, 1])
def test_conformal_order_n4(seed):
    errs = []
    for n in (16, 32):
        chart = Chart.from_json(box_chart(3, n))
        X = chart.coordinates()
        f = random_positive(X, seed)
        a = conformal_scalar_curvature(flat_metric(X), f, 4, chart)
        b = intrinsic_scalar_curvature(f[..., None, None] * flat_metric(X), chart)
        errs.append(np.max(np.abs(a - b)))
    assert 3.5 <= errs[0] / errs[1] <= 4.5


def test_gauge_sign_invariance():
    g = induced_geometry(Surface.sphere(2.0, (16, 32)), InitialDataSet.from_json(pg()))
    th = g.grid.coordinates()[..., 0]
    f = 1 + 0.9 * np.cos(th)
    base = conformal_scalar_curvature(g.gamma, f, 3, g.grid, S=g.R_sigma)
    assert (base > 0).any() and (base < 0).any()
    for c in (1e-3, 0.5, 7.0, 1e4):
        scaled = conformal_scalar_curvature(g.gamma, c * f, 3, g.grid, S=g.R_sigma)
        assert np.array_equal(np.sign(scaled), np.sign(base))


# -- topology report --


def test_horizon_positive_type():
    d = InitialDataSet.from_json(pg())
    g = horizon()
    rep = topology_report(g, d)
    assert rep.verdict == "positive-type"
    assert rep.min_S_tilde > 0 and rep.lambda_1 == pytest.approx(0.25, abs=0.0025)


def test_flat_torus_borderline():
    d = InitialDataSet.from_json({"preset": "minkowski", "chart": box_chart(3)})
    g = induced_geometry(Surface.plane(1.0, (16, 16), (0, 0), (TWO_PI, TWO_PI)), d)
    rep = topology_report(g, d)
    assert rep.verdict == "borderline-rigidity"
    assert all(rep.margins[k] <= rep.thresholds[k] for k in rep.margins)
    assert np.max(np.abs(rep.S_tilde)) <= rep.thresholds["S_tilde"]


def test_prescribed_sphere_positive_type():
    d = InitialDataSet.from_json({"preset": "minkowski", "h": 0.2, "chart": shell_chart(5.0, 15.0, (6, 6, 8))})
    sol = pne_graph_solve(d, Surface.sphere(8.0, (16, 32)))
    assert np.max(np.abs(sol.surface.values - 10.0)) < 1e-6
    rep = topology_report(induced_geometry(sol.surface, d), d)
    assert rep.verdict == "positive-type"
    assert set(rep.margins) == {"lambda_1", "chi0_sup", "equality_sup", "f_oscillation"}
    assert rep.to_json()["thresholds"]["S_tilde"] >= 1e-10
