"""Grid finders: the regularized Jang equation and direct graph Newton solves."""

from .graph import (GraphConfig, GraphSolution, graph_jacobian, graph_residual, pne_graph_solve,
                    resample_surface)
from .jang import (ContinuationResult, JangConfig, JangState, boundary_values, jang_jacobian,
                   jang_newton_solve, jang_residual, tau_continuation)

__all__ = [
    "GraphConfig", "GraphSolution", "graph_residual", "graph_jacobian", "pne_graph_solve",
    "resample_surface", "JangConfig", "JangState", "ContinuationResult", "jang_residual",
    "jang_jacobian", "jang_newton_solve", "tau_continuation", "boundary_values",
]
