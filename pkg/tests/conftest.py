import numpy as np
import pytest

from dgsiac.dg_transport import TransportProblem, apply_transport


def dense_ordinate_solve(problem, j, source_coeffs, t=0.0):
    """Solve ordinate ``j`` by assembling its matrix column by column.

    The matrix comes from :func:`apply_transport` (direct quadrature of the
    weak form), independently of the precomputed sweep blocks.
    ``source_coeffs`` are modal coefficients ``(n_elem, nb)`` of a volume
    source; inflow data of the problem enter through the right-hand side.
    """
    mesh = problem.mesh
    nb = source_coeffs.shape[1]
    n = mesh.n_elem * nb
    A = np.empty((n, n))
    for i in range(n):
        e = np.zeros(n)
        e[i] = 1.0
        A[:, i] = apply_transport(e.reshape(mesh.n_elem, nb), problem, j, homogeneous=True, t=t).ravel()
    bare = TransportProblem(mesh, problem.ordinates, problem.degree, problem.sigma_s,
                            problem.sigma_a, source=None, inflow=problem.inflow)
    b0 = apply_transport(np.zeros((mesh.n_elem, nb)), bare, j, t=t).ravel()
    from dgsiac.numerics_core import BasisSet

    jac = mesh.element_volume / 2**mesh.dim
    mass = BasisSet(problem.degree, mesh.dim).mass_diagonal()
    rhs = (jac * mass * source_coeffs).ravel() - b0
    return np.linalg.solve(A, rhs).reshape(mesh.n_elem, nb)


@pytest.fixture
def dense_solve():
    return dense_ordinate_solve
