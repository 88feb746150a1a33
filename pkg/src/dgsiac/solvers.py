"""Source iteration, diffusion synthetic acceleration and BDF time stepping."""
from __future__ import annotations

import logging
import math
import re
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .dg_transport import DGField, PiecewisePolynomial, TransportOperator, _coef, project_l2
from .numerics_core import tensor_gauss

log = logging.getLogger(__name__)

__all__ = [
    "SolveReport",
    "NonConvergenceError",
    "DiffusionSolver",
    "dsa_correct",
    "source_iteration",
    "solve_steady",
    "BDFState",
    "BDF_COEFFICIENTS",
    "bdf_advance",
    "solve_transient",
    "time_step",
    "default_tolerance",
]

# gamma_0 and history weights (newest first) of BDF1..3
BDF_COEFFICIENTS = {
    1: (1.0, (1.0,)),
    2: (1.5, (2.0, -0.5)),
    3: (11.0 / 6.0, (3.0, -1.5, 1.0 / 3.0)),
}


@dataclass
class SolveReport:
    iterations: int = 0
    final_update: float = math.inf
    history: list = field(default_factory=list)
    wall_time: float = 0.0
    converged: bool = False

    def as_rows(self):
        """``(iteration, update_norm)`` rows for CSV output."""
        return [(i + 1, r) for i, r in enumerate(self.history)]


class NonConvergenceError(RuntimeError):
    def __init__(self, message, report):
        super().__init__(message)
        self.report = report


def default_tolerance(degree):
    return 1e-10 if degree <= 2 else 1e-11


# ---------------------------------------------------------------------------
# diffusion synthetic acceleration
# ---------------------------------------------------------------------------


class DiffusionSolver:
    """Continuous Q1 discretisation of ``-div(D grad u) + sigma_a u = f``.

    ``D = 1 / (3 sigma_t)``.  ``boundary`` selects the treatment of
    non-periodic boundaries: ``"robin"`` (Marshak vacuum condition
    ``D du/dn + u/2 = 0``) or ``"dirichlet"`` (``u = 0``).  The matrix is
    factorised once; systems above ``direct_limit`` unknowns use
    Jacobi-preconditioned conjugate gradients instead.
    """

    def __init__(self, mesh, sigma_t, sigma_a, degree, boundary="robin", method="auto",
                 direct_limit=40000):
        if boundary not in ("robin", "dirichlet"):
            raise ValueError(f"unknown diffusion boundary treatment {boundary!r}")
        self.mesh = mesh
        self.degree = degree
        self.boundary = boundary
        dim = mesh.dim
        counts = np.array(mesh.counts)
        self.node_counts = np.where(
            [mesh.periodic(a) for a in range(dim)], counts, counts + 1
        )
        n_nodes = int(np.prod(self.node_counts))
        self.n_nodes = n_nodes

        nq = max(degree + 2, 2)
        ref, w = tensor_gauss(nq, dim)
        self.ref, self.w = ref, w
        jac = mesh.element_volume / 2**dim
        self.jac = jac
        X = mesh.centers()[:, None, :] + 0.5 * mesh.spacing * ref[None]
        flat = X.reshape(-1, dim)
        sig_t = _coef(sigma_t, flat).reshape(X.shape[:2])
        sig_a = _coef(sigma_a, flat).reshape(X.shape[:2])
        if np.any(sig_t <= 0):
            raise ValueError("DSA requires sigma_t > 0 on the whole domain")
        D = 1.0 / (3.0 * sig_t)

        # bilinear shape functions at quadrature points, corners in C order
        corners = np.array(list(np.ndindex(*(2,) * dim)))  # (nc, dim) in {0,1}
        s = 2 * corners - 1
        N = np.prod(0.5 * (1 + s[:, None, :] * ref[None]), axis=2)  # (nc, nq)
        dN = np.empty((dim, len(corners), len(w)))
        for a in range(dim):
            others = np.prod(
                [0.5 * (1 + s[:, None, b] * ref[None, :, b]) for b in range(dim) if b != a],
                axis=0,
            ) if dim > 1 else np.ones((len(corners), len(w)))
            dN[a] = 0.5 * s[:, None, a] * others * (2.0 / mesh.spacing[a])
        self.N = N
        Ke = jac * (
            np.einsum("aiq,ajq,eq->eij", dN, dN, D * w, optimize=True)
            + np.einsum("iq,jq,eq->eij", N, N, sig_a * w, optimize=True)
        )
        elem_idx = mesh.multi_index(np.arange(mesh.n_elem))
        node_idx = elem_idx[:, None, :] + corners[None]  # (nel, nc, dim)
        for a in range(dim):
            if mesh.periodic(a):
                node_idx[..., a] %= self.node_counts[a]
        conn = np.ravel_multi_index(
            tuple(node_idx[..., a] for a in range(dim)), tuple(self.node_counts)
        )
        self.conn = conn
        rows = np.repeat(conn, len(corners), axis=1).ravel()
        cols = np.tile(conn, (1, len(corners))).ravel()
        A = sp.coo_matrix((Ke.ravel(), (rows, cols)), shape=(n_nodes, n_nodes)).tocsr()

        boundary_nodes = self._boundary_nodes()
        if boundary == "robin" and len(boundary_nodes):
            A = A + self._robin_matrix()
        self.free = np.ones(n_nodes, bool)
        if boundary == "dirichlet":
            self.free[boundary_nodes] = False
        self.A = A[self.free][:, self.free].tocsc()
        n_free = int(self.free.sum())
        if method == "auto":
            method = "direct" if n_free <= direct_limit else "cg"
        self.method = method
        self._lu = spla.splu(self.A) if method == "direct" else None
        self._diag = self.A.diagonal()

    def _boundary_nodes(self):
        mesh = self.mesh
        idx = np.stack(np.unravel_index(np.arange(self.n_nodes), tuple(self.node_counts)), axis=-1)
        on = np.zeros(self.n_nodes, bool)
        for a in range(mesh.dim):
            if not mesh.periodic(a):
                on |= (idx[:, a] == 0) | (idx[:, a] == self.node_counts[a] - 1)
        return np.nonzero(on)[0]

    def _robin_matrix(self):
        """Boundary mass ``int_dX u v / 2`` on non-periodic sides."""
        mesh = self.mesh
        dim = mesh.dim
        rows, cols, vals = [], [], []
        node_idx = np.stack(
            np.unravel_index(np.arange(self.n_nodes), tuple(self.node_counts)), axis=-1
        )
        for a in range(dim):
            if mesh.periodic(a):
                continue
            for end in (0, self.node_counts[a] - 1):
                nodes = np.nonzero(node_idx[:, a] == end)[0]
                if dim == 1:
                    rows.append(nodes)
                    cols.append(nodes)
                    vals.append(np.full(len(nodes), 0.5))
                    continue
                b = 1 - a
                order = nodes[np.argsort(node_idx[nodes, b])]
                hb = mesh.spacing[b]
                for n0, n1 in zip(order[:-1], order[1:]):
                    m = 0.5 * hb / 6.0 * np.array([[2.0, 1.0], [1.0, 2.0]])
                    rows.extend([[n0, n0, n1, n1]])
                    cols.extend([[n0, n1, n0, n1]])
                    vals.append(m.ravel())
        rows = np.concatenate([np.atleast_1d(r) for r in rows])
        cols = np.concatenate([np.atleast_1d(c) for c in cols])
        vals = np.concatenate(vals)
        return sp.coo_matrix((vals, (rows, cols)), shape=(self.n_nodes, self.n_nodes)).tocsr()

    def load(self, values_at_quad):
        """Assemble ``int f N_i`` from values at the solver's quadrature points."""
        le = self.jac * np.einsum("iq,eq->ei", self.N, values_at_quad * self.w)
        return np.bincount(self.conn.ravel(), weights=le.ravel(), minlength=self.n_nodes)

    def solve(self, rhs):
        u = np.zeros(self.n_nodes)
        b = rhs[self.free]
        if not np.any(b):
            return u
        if self._lu is not None:
            x = self._lu.solve(b)
        else:
            M = sp.diags(1.0 / self._diag)
            x, info = spla.cg(self.A, b, rtol=1e-13, atol=0.0, M=M, maxiter=10 * len(b))
            if info != 0:
                raise RuntimeError(f"diffusion CG failed to converge (info={info})")
        res = np.linalg.norm(self.A @ x - b) / np.linalg.norm(b)
        if not res < 1e-12:
            raise RuntimeError(f"diffusion solve reached only {res:.2e} relative residual")
        u[self.free] = x
        return u

    def nodal_to_dg(self, u, basis):
        """Project the continuous Q1 function onto the DG basis (exact for k >= 1)."""
        V, _ = basis.eval(self.ref)
        vals = u[self.conn] @ self.N  # (nel, nq)
        return (vals * self.w) @ V.T / basis.mass_diagonal()


class DSA:
    """Diffusion correction for source iteration on a given transport operator."""

    def __init__(self, operator, boundary="robin"):
        problem = operator.problem
        shift = operator.shift
        self.operator = operator
        sig_t = lambda x: problem.sigma_t(x) + shift
        sig_a = lambda x: _coef(problem.sigma_a, x) + shift
        self.diffusion = DiffusionSolver(
            problem.mesh, sig_t, sig_a, problem.degree, boundary=boundary
        )
        V, _ = operator.basis.eval(self.diffusion.ref)
        self._V = V
        X = problem.mesh.centers()[:, None, :] + 0.5 * problem.mesh.spacing * self.diffusion.ref[None]
        self._sigma_s = _coef(problem.sigma_s, X.reshape(-1, problem.mesh.dim)).reshape(X.shape[:2])

    def correct(self, residual_coeffs):
        r = residual_coeffs @ self._V
        rhs = self.diffusion.load(self._sigma_s * r)
        delta = self.diffusion.solve(rhs)
        return self.diffusion.nodal_to_dg(delta, self.operator.basis)


def dsa_correct(residual, problem, boundary="robin", shift=0.0):
    """Diffusion correction for a density update ``residual``.

    ``residual`` is a :class:`PiecewisePolynomial` (or its coefficients);
    returns the correction as a :class:`PiecewisePolynomial`.
    """
    coeffs = residual.coeffs if isinstance(residual, PiecewisePolynomial) else np.asarray(residual)
    dsa = DSA(TransportOperator(problem, shift=shift), boundary=boundary)
    return PiecewisePolynomial(problem.mesh, problem.degree, dsa.correct(coeffs))


# ---------------------------------------------------------------------------
# source iteration
# ---------------------------------------------------------------------------


def _l2(op, coeffs):
    return float(np.sqrt(op.jac * np.sum(coeffs**2 * op.mass_diag)))


def source_iteration(problem, initial=None, tol=1e-10, use_dsa=True, max_iter=10000, *,
                     operator=None, dsa=None, extra_source=None, t=0.0):
    """Lagged-scattering fixed point iteration, optionally DSA accelerated.

    ``initial`` is a density guess (:class:`PiecewisePolynomial` or
    coefficients).  ``extra_source`` adds per-ordinate source coefficients
    on top of the problem source (used by the BDF driver).  Stops when the
    L2 norm of the density update drops below ``tol``.
    """
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    start = time.perf_counter()
    op = operator or TransportOperator(problem)
    q = op.project_source(t)
    if extra_source is not None:
        q = q + extra_source
    load = op.inflow_load(t)
    nb = op.nb
    if initial is None:
        phi = np.zeros((problem.mesh.n_elem, nb))
    else:
        phi = np.array(initial.coeffs if hasattr(initial, "coeffs") else initial, dtype=float)
    report = SolveReport()

    if not np.any(op.sigma_s_q):
        psi = op.sweep(q, load)
        report.iterations = 1
        report.final_update = 0.0
        report.history.append(0.0)
        report.converged = True
        report.wall_time = time.perf_counter() - start
        return DGField(problem.mesh, problem.ordinates, problem.degree, psi), report

    if use_dsa and dsa is None:
        dsa = DSA(op)
    for it in range(1, max_iter + 1):
        psi = op.sweep(q + op.scatter(phi)[None], load)
        phi_half = op.density(psi)
        if use_dsa:
            phi_new = phi_half + dsa.correct(phi_half - phi)
        else:
            phi_new = phi_half
        update = _l2(op, phi_new - phi)
        phi = phi_new
        report.history.append(update)
        report.iterations = it
        report.final_update = update
        if not np.isfinite(update):
            break
        if update < tol:
            report.converged = True
            break
    report.wall_time = time.perf_counter() - start
    field_ = DGField(problem.mesh, problem.ordinates, problem.degree, psi)
    if not report.converged:
        raise NonConvergenceError(
            f"source iteration did not reach {tol:.1e} in {report.iterations} iterations "
            f"(last update {report.final_update:.3e})",
            report,
        )
    log.debug("source iteration converged in %d iterations", report.iterations)
    return field_, report


def solve_steady(problem, tol=None, use_dsa=True, max_iter=10000):
    """Steady S_N-DG solve by (accelerated) source iteration."""
    tol = default_tolerance(problem.degree) if tol is None else tol
    return source_iteration(problem, tol=tol, use_dsa=use_dsa, max_iter=max_iter)


# ---------------------------------------------------------------------------
# BDF time stepping
# ---------------------------------------------------------------------------


@dataclass
class BDFState:
    """Previous states, newest first, at ``time``, ``time - dt``, ..."""

    history: list
    time: float
    dt: float

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("time step must be positive")


class _Stepper:
    """Cached shifted operator and DSA for a fixed order and step size."""

    def __init__(self, problem, order, dt, use_dsa):
        gamma0, alphas = BDF_COEFFICIENTS[order]
        self.order = order
        self.dt = dt
        self.alphas = alphas
        self.operator = TransportOperator(problem, shift=gamma0 / dt)
        self.dsa = DSA(self.operator) if use_dsa else None


def bdf_advance(state, problem, order, tol=1e-10, use_dsa=True, max_iter=10000, stepper=None):
    """Advance one implicit BDF step of the given order.

    Returns the new :class:`BDFState` and the solve report.
    """
    if order not in BDF_COEFFICIENTS:
        raise ValueError(f"BDF order must be 1, 2 or 3, got {order}")
    if state.dt <= 0:
        raise ValueError("time step must be positive")
    if len(state.history) < order:
        raise ValueError(f"BDF{order} needs {order} history levels, have {len(state.history)}")
    stepper = stepper or _Stepper(problem, order, state.dt, use_dsa)
    hist = sum(a * h for a, h in zip(stepper.alphas, state.history)) / state.dt
    t_new = state.time + state.dt
    guess = problem.ordinates.average(state.history[0])
    psi, report = source_iteration(
        problem, initial=guess, tol=tol, use_dsa=use_dsa, max_iter=max_iter,
        operator=stepper.operator, dsa=stepper.dsa, extra_source=hist, t=t_new,
    )
    keep = max(len(state.history), order)
    new_hist = [psi.coeffs] + list(state.history[: keep - 1])
    return BDFState(new_hist, t_new, state.dt), report


def time_step(rule, h):
    """Step size from a rule such as ``"h"``, ``"0.5h"`` or ``"4h^5/3"``."""
    m = re.fullmatch(
        r"\s*([0-9.eE+-]*)\s*\*?\s*h\s*(?:\^\s*\(?\s*([0-9.]+)(?:\s*/\s*([0-9.]+))?\s*\)?)?\s*",
        rule,
    )
    if not m:
        raise ValueError(f"cannot parse time step rule {rule!r}")
    c = float(m.group(1)) if m.group(1) not in ("", None) else 1.0
    p = 1.0
    if m.group(2):
        p = float(m.group(2)) / (float(m.group(3)) if m.group(3) else 1.0)
    return c * h**p


def solve_transient(problem, t_end, dt, order, exact=None, initial=None, tol=1e-10,
                    use_dsa=True, max_iter=10000):
    """March BDF``order`` from t = 0 to ``t_end``.

    ``problem.source`` and inflow data receive the time argument.  Startup
    levels come from projections of ``exact(x, omega, t)`` when given;
    otherwise from ``initial(x, omega)`` followed by BDF1 sub-steps of
    ``dt / 16``.  The step is shrunk so that an integer number of steps
    lands on ``t_end``.  Returns the final :class:`DGField` and the list
    of per-step reports.
    """
    if dt <= 0:
        raise ValueError("time step must be positive")
    if order not in (1, 2, 3):
        raise ValueError("BDF order must be 1, 2 or 3")
    if exact is None and initial is None:
        raise ValueError("need either an exact solution or initial data")
    mesh, k, ords = problem.mesh, problem.degree, problem.ordinates

    def proj(t):
        if exact is not None:
            return project_l2(lambda x, om: exact(x, om, t), mesh, k, ords).coeffs
        return project_l2(initial, mesh, k, ords).coeffs

    if t_end <= 0:
        return DGField(mesh, ords, k, proj(0.0)), []
    n_steps = max(1, math.ceil(t_end / dt - 1e-9))
    dt = t_end / n_steps
    reports = []

    levels = min(order - 1, n_steps)
    if exact is not None:
        hist = [proj(i * dt) for i in range(levels, -1, -1)]
    else:
        hist = [proj(0.0)]
        sub = _Stepper(problem, 1, dt / 16.0, use_dsa)
        state = BDFState(hist, 0.0, dt / 16.0)
        snapshots = [hist[0]]
        for _ in range(levels):
            for _ in range(16):
                state, rep = bdf_advance(state, problem, 1, tol, use_dsa, max_iter, stepper=sub)
                state = BDFState(state.history[:1], state.time, state.dt)
                reports.append(rep)
            snapshots.append(state.history[0])
        hist = snapshots[::-1]
    if levels == n_steps:
        return DGField(mesh, ords, k, hist[0]), reports

    state = BDFState(hist, levels * dt, dt)
    stepper = _Stepper(problem, order, dt, use_dsa)
    for _ in range(n_steps - levels):
        state, rep = bdf_advance(state, problem, order, tol, use_dsa, max_iter, stepper=stepper)
        reports.append(rep)
    return DGField(mesh, ords, k, state.history[0]), reports
