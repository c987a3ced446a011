"""Sparse linear solves shared by the Newton loops and the eigensolver."""

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..errors import NonconvergenceError

DIRECT_LIMIT = 100_000


def factorize(A):
    """Callable ``b -> A^{-1} b``.

    Sparse LU up to :data:`DIRECT_LIMIT` unknowns; restarted GMRES with a
    Jacobi preconditioner above (the systems are nonsymmetric).
    """
    A = sp.csc_matrix(A)
    if A.shape[0] <= DIRECT_LIMIT:
        lu = spla.splu(A)
        return lu.solve
    diag = A.diagonal()
    diag = np.where(diag == 0, 1.0, diag)
    M = spla.LinearOperator(A.shape, matvec=lambda x: x / diag, dtype=A.dtype)

    def solve(b):
        x, info = spla.gmres(A, b, M=M, rtol=1e-12, restart=200, maxiter=50)
        if info != 0:
            raise NonconvergenceError(f"GMRES did not converge (info={info})")
        return x

    return solve


def solve(A, b):
    return factorize(A)(b)


def roundoff_floor(J, u):
    """Size of the floating-point noise in a residual with Jacobian ``J`` at ``u``.

    ``eps * max_i sum_j |J_ij| |u_j|``: a Newton loop cannot push the
    max-norm residual much below this, so tolerances under it are raised.
    """
    J = sp.csr_matrix(J)
    return float(np.finfo(float).eps * np.max(abs(J) @ np.abs(np.ravel(u))))
