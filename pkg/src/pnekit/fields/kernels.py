r"""Pointwise Riemannian-geometry formulas.

Every function works on arrays with arbitrary leading (node) dimensions and
trailing tensor indices, and accepts complex input so that callers can push
complex-step perturbations through them.

Index conventions::

    dg[..., k, i, j]     = d_k g_ij
    ddg[..., l, k, i, j] = d_l d_k g_ij
    gamma[..., c, a, b]  = Gamma^c_ab
    dgamma[..., e, c, a, b] = d_e Gamma^c_ab
"""

import numpy as np

from ..errors import DegenerateMetricError

DET_FLOOR = 1e-12


def inverse_metric(g, check=True):
    if check:
        det = np.real(np.linalg.det(g))
        if np.any(~np.isfinite(det)) or np.any(det < DET_FLOOR):
            raise DegenerateMetricError(f"metric determinant {np.nanmin(det):.3e} below {DET_FLOOR:g}")
    gi = np.linalg.inv(g)
    # LAPACK inverses are symmetric only to roundoff
    return 0.5 * (gi + np.swapaxes(gi, -1, -2))


def leading_minors_positive(g):
    n = g.shape[-1]
    return all(np.all(np.real(np.linalg.det(g[..., :k, :k])) > 0) for k in range(1, n + 1))


def _first_kind(dg):
    """Gamma_abd = 1/2 (d_a g_bd + d_b g_ad - d_d g_ab), stored [..., a, b, d]."""
    return 0.5 * (dg + np.einsum("...bad->...abd", dg) - np.einsum("...dab->...abd", dg))


def christoffel(g_inv, dg):
    """Gamma^c_ab = 1/2 g^cd (d_a g_bd + d_b g_ad - d_d g_ab)."""
    return np.einsum("...cd,...abd->...cab", g_inv, _first_kind(dg))


def inverse_metric_derivative(g_inv, dg):
    """d_k g^ij = -g^ia d_k g_ab g^bj."""
    return -np.einsum("...ia,...kab,...bj->...kij", g_inv, dg, g_inv)


def christoffel_derivative(g_inv, dg, ddg):
    dginv = inverse_metric_derivative(g_inv, dg)
    lower = _first_kind(dg)
    dlower = 0.5 * (ddg + np.einsum("...ebad->...eabd", ddg) - np.einsum("...edab->...eabd", ddg))
    return (np.einsum("...ecd,...abd->...ecab", dginv, lower)
            + np.einsum("...cd,...eabd->...ecab", g_inv, dlower))


def ricci(gamma, dgamma):
    """R_ab = d_c G^c_ab - d_b G^c_ac + G^c_cd G^d_ab - G^c_bd G^d_ac."""
    return (np.einsum("...ccab->...ab", dgamma)
            - np.einsum("...bcac->...ab", dgamma)
            + np.einsum("...ccd,...dab->...ab", gamma, gamma)
            - np.einsum("...cbd,...dac->...ab", gamma, gamma))


def trace(g_inv, t):
    return np.einsum("...ij,...ij->...", g_inv, t)


def norm_sq(g_inv, t):
    return np.einsum("...ia,...jb,...ij,...ab->...", g_inv, g_inv, t, t)


def covector_norm(g_inv, v):
    return np.sqrt(np.einsum("...ij,...i,...j->...", g_inv, v, v))


def energy_density(scalar_curv, g_inv, p, convention="standard"):
    """mu from the Hamiltonian-constraint combination of R_g and p.

    ``standard``: 1/2 (R - |p|^2 + (tr p)^2); ``literal``: 1/2 R - |p|^2 + (tr p)^2.
    """
    p2 = norm_sq(g_inv, p)
    tr2 = trace(g_inv, p) ** 2
    if convention == "standard":
        return 0.5 * (scalar_curv - p2 + tr2)
    if convention == "literal":
        return 0.5 * scalar_curv - p2 + tr2
    raise ValueError(f"unknown mu convention {convention!r}")


def momentum_density(g_inv, gamma, dg, p, dp):
    """J_k = g^ij nabla_i p_jk - d_k (tr_g p)."""
    cov = (dp - np.einsum("...lij,...lk->...ijk", gamma, p)
           - np.einsum("...lik,...jl->...ijk", gamma, p))
    div = np.einsum("...ij,...ijk->...k", g_inv, cov)
    dtr = (np.einsum("...kij,...ij->...k", inverse_metric_derivative(g_inv, dg), p)
           + np.einsum("...ij,...kij->...k", g_inv, dp))
    return div - dtr


def dec_margin(mu, J, g_inv, h, dh, tr_p, n):
    """mu - |J| + 1/2 (n/(n-1) h^2 - 2 h tr p - 2 |Dh|)."""
    return mu - covector_norm(g_inv, J) + 0.5 * (n / (n - 1) * h ** 2 - 2 * h * tr_p
                                                 - 2 * covector_norm(g_inv, dh))
