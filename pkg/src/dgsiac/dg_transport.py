"""Upwind DG discretisation of the discrete-ordinates transport equation.

Each ordinate ``j`` carries a piecewise Q_k field expanded in the modal
Legendre basis.  The per-ordinate operator is

    -(psi, Omega_j . grad tau)_K + <F(psi) . n, tau>_dK + (sigma_t psi, tau)_K

with the upwind flux ``F``.  :class:`TransportOperator` precomputes the
element-local blocks and inverts the operator by sweeping elements in
downwind order; :func:`apply_transport` evaluates the same weak form
directly by quadrature and serves as an independent check.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .angular import OrdinateSet
from .mesh import Mesh
from .numerics_core import BasisSet, legendre_table, tensor_gauss

__all__ = [
    "PiecewisePolynomial",
    "DGField",
    "TransportProblem",
    "TransportOperator",
    "upwind_flux",
    "project_l2",
    "apply_transport",
    "scattering_source",
    "transport_sweep",
    "eval_field",
    "eval_density",
]


def _coef(value, x):
    """Evaluate a constant or callable coefficient at points ``x`` (npts, d)."""
    if callable(value):
        return np.broadcast_to(np.asarray(value(x), dtype=float), x.shape[:1]).astype(float)
    return np.full(x.shape[0], float(value))


@dataclass
class PiecewisePolynomial:
    """A scalar DG function: modal coefficients ``(n_elem, nb)`` on ``mesh``."""

    mesh: Mesh
    degree: int
    coeffs: np.ndarray

    @property
    def basis(self):
        return BasisSet(self.degree, self.mesh.dim)

    def __call__(self, x, side=None):
        x = np.asarray(x, dtype=float)
        scalar = x.ndim == 0 or (x.ndim == 1 and self.mesh.dim > 1)
        pts = x.reshape(-1, self.mesh.dim)
        elem, xi = self.mesh.locate(pts, side=side)
        values, _ = self.basis.eval(xi)
        out = np.einsum("pb,bp->p", self.coeffs[elem], values)
        return float(out[0]) if scalar else out

    def at_reference(self, xi):
        """Values at reference points ``xi`` in every element: ``(n_elem, npts)``."""
        values, _ = self.basis.eval(xi)
        return self.coeffs @ values

    def l2_norm(self):
        jac = self.mesh.element_volume / 2**self.mesh.dim
        m = self.basis.mass_diagonal()
        return float(np.sqrt(jac * np.sum(self.coeffs**2 * m)))


@dataclass
class DGField:
    """Per-ordinate DG coefficients ``(n_ord, n_elem, nb)``."""

    mesh: Mesh
    ordinates: OrdinateSet
    degree: int
    coeffs: np.ndarray

    def __post_init__(self):
        nb = (self.degree + 1) ** self.mesh.dim
        expected = (len(self.ordinates), self.mesh.n_elem, nb)
        if self.coeffs.shape != expected:
            raise ValueError(f"coefficient shape {self.coeffs.shape} != {expected}")

    @classmethod
    def zeros(cls, mesh, ordinates, degree):
        nb = (degree + 1) ** mesh.dim
        return cls(mesh, ordinates, degree, np.zeros((len(ordinates), mesh.n_elem, nb)))

    def ordinate(self, j):
        return PiecewisePolynomial(self.mesh, self.degree, self.coeffs[j])

    def density(self):
        """Discrete angular average, exact coefficient-wise."""
        return PiecewisePolynomial(self.mesh, self.degree, self.ordinates.average(self.coeffs))


@dataclass
class TransportProblem:
    """Steady (or frozen-time) S_N transport problem.

    ``source(x, omega, t)`` and ``inflow(x, omega, t)`` receive points of
    shape ``(npts, dim)`` and a direction of shape ``(dim,)``.  Cross
    sections are constants or callables of ``x``.
    """

    mesh: Mesh
    ordinates: OrdinateSet
    degree: int
    sigma_s: float | Callable = 0.0
    sigma_a: float | Callable = 0.0
    source: Callable | None = None
    inflow: Callable | None = None
    name: str = ""

    def __post_init__(self):
        if self.ordinates.dim > self.mesh.dim:
            self.ordinates = self.ordinates.in_plane() if self.mesh.dim == 2 else self.ordinates
        if self.ordinates.dim != self.mesh.dim:
            raise ValueError(
                f"ordinate set of dimension {self.ordinates.dim} does not match "
                f"a {self.mesh.dim}D mesh"
            )
        if "inflow" in self.mesh.bc and self.inflow is None:
            raise ValueError("mesh has prescribed-inflow boundaries but no inflow data")

    @property
    def directions(self):
        return self.ordinates.directions

    def sigma_t(self, x):
        return _coef(self.sigma_s, x) + _coef(self.sigma_a, x)

    def with_degree(self, degree):
        return TransportProblem(
            self.mesh, self.ordinates, degree, self.sigma_s, self.sigma_a,
            self.source, self.inflow, self.name,
        )


def upwind_flux(trace_minus, trace_plus, omega_n):
    """Upwind flux {Omega psi}.n + |Omega.n|/2 [psi].n on a face.

    ``trace_minus`` is the limit from the side that ``n`` points away from.
    """
    avg = 0.5 * (trace_minus + trace_plus)
    jump = trace_minus - trace_plus
    return omega_n * avg + 0.5 * np.abs(omega_n) * jump


# ---------------------------------------------------------------------------
# quadrature helpers
# ---------------------------------------------------------------------------


def _quad_points(mesh, n):
    ref, w = tensor_gauss(n, mesh.dim)
    centers = mesh.centers()
    X = centers[:, None, :] + 0.5 * mesh.spacing * ref[None, :, :]
    return ref, w, X


def project_l2(f, mesh, degree, ordinates=None, npts=None, t=None):
    """L2 projection onto V_h^k with (k+2)-point Gauss per axis.

    Without ``ordinates`` ``f(x)`` is projected and a
    :class:`PiecewisePolynomial` returned; with ordinates ``f(x, omega)``
    (or ``f(x, omega, t)`` when ``t`` is given) is projected per ordinate.
    """
    basis = BasisSet(degree, mesh.dim)
    ref, w, X = _quad_points(mesh, npts or degree + 2)
    V, _ = basis.eval(ref)
    P = (V * w) / basis.mass_diagonal()[:, None]  # (nb, nq)
    flat = X.reshape(-1, mesh.dim)
    if ordinates is None:
        vals = _coef(f, flat).reshape(X.shape[:2])
        return PiecewisePolynomial(mesh, degree, vals @ P.T)
    if ordinates.dim > mesh.dim:
        ordinates = ordinates.in_plane()
    coeffs = np.empty((len(ordinates), mesh.n_elem, basis.size))
    for j, omega in enumerate(ordinates.directions):
        if t is None:
            vals = f(flat, omega)
        else:
            vals = f(flat, omega, t)
        vals = np.broadcast_to(np.asarray(vals, dtype=float), flat.shape[:1])
        coeffs[j] = vals.reshape(X.shape[:2]) @ P.T
    return DGField(mesh, ordinates, degree, coeffs)


def eval_field(field, j, x, side=None):
    """Value of ordinate ``j`` of ``field`` at ``x`` (one-sided via ``side``)."""
    return field.ordinate(j)(x, side=side)


def eval_density(field, x, side=None):
    return field.density()(x, side=side)


# ---------------------------------------------------------------------------
# direct weak-form evaluation
# ---------------------------------------------------------------------------


def apply_transport(field, problem, j, homogeneous=False, t=0.0, shift=0.0):
    """Weak-form residual of streaming plus removal for ordinate ``j``.

    Returns ``(n_elem, nb)`` entries
    ``-(psi, Omega.grad tau) + <F.n, tau> + ((sigma_t + shift) psi, tau) - (q, tau)``
    with boundary inflow entering through the upwind flux.  With
    ``homogeneous=True`` the source and inflow data are dropped so the map
    is linear.  Scattering is not included.
    """
    mesh, k = problem.mesh, problem.degree
    basis = BasisSet(k, mesh.dim)
    omega = problem.directions[j]
    coeffs = field.coeffs if isinstance(field, DGField) else np.asarray(field, dtype=float)
    if coeffs.ndim == 3:
        coeffs = coeffs[j]
    h = mesh.spacing
    jac = mesh.element_volume / 2**mesh.dim
    nq = k + 2
    ref, w, X = _quad_points(mesh, nq)
    V, G = basis.eval(ref)
    psi_q = coeffs @ V  # (nel, nq)

    sig = problem.sigma_t(X.reshape(-1, mesh.dim)).reshape(X.shape[:2]) + shift
    res = jac * (psi_q * sig * w) @ V.T
    stream = sum(omega[a] * (2.0 / h[a]) * G[a] for a in range(mesh.dim))  # (nb, nq)
    res -= jac * (psi_q * w) @ stream.T
    if not homogeneous and problem.source is not None:
        q = problem.source(X.reshape(-1, mesh.dim), omega, t)
        q = np.broadcast_to(np.asarray(q, dtype=float), (X.shape[0] * X.shape[1],))
        res -= jac * (q.reshape(X.shape[:2]) * w) @ V.T

    # faces
    face_ref, face_w = tensor_gauss(nq, mesh.dim - 1) if mesh.dim > 1 else (np.zeros((1, 0)), np.ones(1))
    for axis in range(mesh.dim):
        others = [a for a in range(mesh.dim) if a != axis]
        scale = float(np.prod([h[a] / 2.0 for a in others]))
        on = omega[axis]

        def face_ref_pts(side):
            pts = np.empty((len(face_w), mesh.dim))
            pts[:, axis] = side
            if others:
                pts[:, others] = face_ref
            return pts

        Vlo, _ = basis.eval(face_ref_pts(1.0))  # trace of the low element
        Vhi, _ = basis.eval(face_ref_pts(-1.0))  # trace of the high element
        faces = [f for f in mesh.faces if f.axis == axis]
        left = np.array([f.left for f in faces])
        right = np.array([f.right for f in faces])
        interior = (left >= 0) & (right >= 0)
        li, ri = left[interior], right[interior]
        flux = upwind_flux(coeffs[li] @ Vlo, coeffs[ri] @ Vhi, on) * face_w * scale
        np.add.at(res, li, flux @ Vlo.T)
        np.add.at(res, ri, -(flux @ Vhi.T))

        for side, elems in (("lower", right[left < 0]), ("upper", left[right < 0])):
            if len(elems) == 0:
                continue
            sgn = -1.0 if side == "lower" else 1.0
            Vin = Vhi if side == "lower" else Vlo
            interior_trace = coeffs[elems] @ Vin
            ext = np.zeros_like(interior_trace)
            if not homogeneous and mesh.bc[axis] == "inflow":
                pts = mesh.from_reference(
                    np.repeat(elems, len(face_w)),
                    np.tile(face_ref_pts(-1.0 if side == "lower" else 1.0), (len(elems), 1)),
                )
                ext = np.asarray(problem.inflow(pts, omega, t), dtype=float).reshape(interior_trace.shape)
            # outward normal is sgn * e_axis
            fl = upwind_flux(interior_trace, ext, sgn * on) * face_w * scale
            np.add.at(res, elems, fl @ Vin.T)
    return res


def scattering_source(field, problem):
    """Coefficients of the projection of sigma_s times the discrete density."""
    density = field.density() if isinstance(field, DGField) else field
    mesh, k = problem.mesh, problem.degree
    if not callable(problem.sigma_s):
        return PiecewisePolynomial(mesh, k, float(problem.sigma_s) * density.coeffs)
    basis = BasisSet(k, mesh.dim)
    ref, w, X = _quad_points(mesh, k + 2)
    V, _ = basis.eval(ref)
    sig = _coef(problem.sigma_s, X.reshape(-1, mesh.dim)).reshape(X.shape[:2])
    vals = (density.coeffs @ V) * sig
    return PiecewisePolynomial(mesh, k, (vals * w) @ V.T / basis.mass_diagonal())


# ---------------------------------------------------------------------------
# precomputed operator and sweep
# ---------------------------------------------------------------------------


def _face_block(k, dim, axis, test_side, trial_side, spacing):
    """Reference face coupling ``int tau_m(test side) phi_n(trial side)``, scaled."""
    L_test, _ = legendre_table(k, np.array(test_side, dtype=float))
    L_trial, _ = legendre_table(k, np.array(trial_side, dtype=float))
    m1 = np.diag(2.0 / (2.0 * np.arange(k + 1) + 1.0))
    out = np.ones((1, 1))
    scale = 1.0
    for a in range(dim):
        if a == axis:
            out = np.kron(out, np.outer(L_test, L_trial))
        else:
            out = np.kron(out, m1)
            scale *= spacing[a] / 2.0
    return scale * out


def _stream_block(k, dim, axis, spacing):
    """``int phi_n d(tau_m)/dx_axis`` over an element, shape (nb, nb) [m, n]."""
    from .numerics_core import gauss_legendre

    q = gauss_legendre(k + 1)
    L, dL = legendre_table(k, q.nodes)
    s1 = (dL * q.weights) @ L.T  # [m, n] = int L_m' L_n
    m1 = np.diag(2.0 / (2.0 * np.arange(k + 1) + 1.0))
    out = np.ones((1, 1))
    scale = 1.0
    for a in range(dim):
        if a == axis:
            out = np.kron(out, s1)
        else:
            out = np.kron(out, m1)
            scale *= spacing[a] / 2.0
    return scale * out


@dataclass
class _Wave:
    elems: np.ndarray  # (n_ord, m)
    upwind: list  # per axis (n_ord, m), ghost index where absent
    ainv: np.ndarray  # (n_ord, m, nb, nb)


class TransportOperator:
    """Precomputed per-ordinate DG blocks with a downwind-ordered sweep.

    ``shift`` adds a constant to sigma_t (implicit time stepping); it does
    not enter the scattering operator.
    """

    def __init__(self, problem, shift=0.0):
        self.problem = problem
        mesh, k = problem.mesh, problem.degree
        self.mesh = mesh
        self.shift = float(shift)
        self.basis = BasisSet(k, mesh.dim)
        nb = self.basis.size
        self.nb = nb
        self.n_ord = len(problem.ordinates)
        self.jac = mesh.element_volume / 2**mesh.dim
        self.mass_diag = self.basis.mass_diagonal()
        self.ref, self.w, self.X = _quad_points(mesh, k + 2)
        self.V, _ = self.basis.eval(self.ref)
        flat = self.X.reshape(-1, mesh.dim)
        self.sigma_t_q = (problem.sigma_t(flat).reshape(self.X.shape[:2]) + self.shift)
        self.sigma_s_q = _coef(problem.sigma_s, flat).reshape(self.X.shape[:2])
        self.sigma_a_q = _coef(problem.sigma_a, flat).reshape(self.X.shape[:2])
        if np.any(self.sigma_s_q < 0) or np.any(self.sigma_a_q < 0):
            raise ValueError("cross sections must be non-negative")
        self.mass_t = self._weighted_mass(self.sigma_t_q)
        self.sigma_s_const = not callable(problem.sigma_s)
        self.mass_s = None if self.sigma_s_const else self._weighted_mass(self.sigma_s_q)

        dirs = problem.directions
        spacing = mesh.spacing
        self.stream = np.zeros((self.n_ord, nb, nb))
        self.couple = np.zeros((self.n_ord, mesh.dim, nb, nb))
        for j, omega in enumerate(dirs):
            for a in range(mesh.dim):
                oa = omega[a]
                if oa == 0.0:
                    continue
                s_out = 1.0 if oa > 0 else -1.0
                self.stream[j] -= oa * _stream_block(k, mesh.dim, a, spacing)
                self.stream[j] += abs(oa) * _face_block(k, mesh.dim, a, s_out, s_out, spacing)
                self.couple[j, a] = -abs(oa) * _face_block(k, mesh.dim, a, -s_out, s_out, spacing)
        blocks = self.stream[:, None] + self.mass_t[None]
        try:
            self.ainv = np.linalg.inv(blocks)
        except np.linalg.LinAlgError:
            raise RuntimeError(
                "singular element matrix in transport sweep (sigma_t = 0 with a "
                "direction tangential to the mesh?)"
            ) from None
        self._periodic = any(mesh.periodic(a) for a in range(mesh.dim))
        self._lu = {}
        if not self._periodic:
            self._waves = self._build_waves()

    # -- assembly helpers ---------------------------------------------------
    def _weighted_mass(self, sig):
        V, w = self.V, self.w
        return self.jac * np.einsum("bq,cq,eq->ebc", V, V, sig * w, optimize=True)

    def _build_waves(self):
        mesh = self.mesh
        counts = np.array(mesh.counts)
        flipped = mesh.multi_index(np.arange(mesh.n_elem))
        wave_of = flipped.sum(axis=1)
        order = np.argsort(wave_of, kind="stable")
        bounds = np.searchsorted(wave_of[order], np.arange(wave_of.max() + 2))
        signs = np.where(self.problem.directions < 0, -1, 1)
        ghost = mesh.n_elem
        waves = []
        for w in range(wave_of.max() + 1):
            F = flipped[order[bounds[w] : bounds[w + 1]]]  # (m, d)
            actual = np.where(signs[:, None, :] > 0, F[None], counts - 1 - F[None])
            elems = mesh.flat_index(actual)
            upwind = []
            for a in range(mesh.dim):
                Fa = F.copy()
                Fa[:, a] -= 1
                valid = Fa[:, a] >= 0
                Fa[~valid, a] = 0
                act = np.where(signs[:, None, :] > 0, Fa[None], counts - 1 - Fa[None])
                nb_idx = np.where(valid[None, :], mesh.flat_index(act), ghost)
                upwind.append(nb_idx)
            jj = np.arange(self.n_ord)[:, None]
            waves.append(_Wave(elems, upwind, self.ainv[jj, elems]))
        return waves

    # -- sources ------------------------------------------------------------
    def project_source(self, t=0.0):
        """Per-ordinate coefficients of the projected external source."""
        src = self.problem.source
        if src is None:
            return np.zeros((self.n_ord, self.mesh.n_elem, self.nb))
        P = (self.V * self.w) / self.mass_diag[:, None]
        flat = self.X.reshape(-1, self.mesh.dim)
        out = np.empty((self.n_ord, self.mesh.n_elem, self.nb))
        for j, omega in enumerate(self.problem.directions):
            vals = np.broadcast_to(np.asarray(src(flat, omega, t), dtype=float), flat.shape[:1])
            out[j] = vals.reshape(self.X.shape[:2]) @ P.T
        return out

    def inflow_load(self, t=0.0):
        """Right-hand side contribution of prescribed inflow traces."""
        mesh, problem = self.mesh, self.problem
        load = np.zeros((self.n_ord, mesh.n_elem, self.nb))
        if "inflow" not in mesh.bc:
            return load
        k = problem.degree
        nq = k + 2
        face_ref, face_w = tensor_gauss(nq, mesh.dim - 1) if mesh.dim > 1 else (np.zeros((1, 0)), np.ones(1))
        idx = mesh.multi_index(np.arange(mesh.n_elem))
        for a in range(mesh.dim):
            if mesh.bc[a] != "inflow":
                continue
            others = [b for b in range(mesh.dim) if b != a]
            scale = float(np.prod([mesh.spacing[b] / 2.0 for b in others]))
            for j, omega in enumerate(problem.directions):
                oa = omega[a]
                if oa == 0.0:
                    continue
                s_in = -1.0 if oa > 0 else 1.0
                layer = 0 if oa > 0 else mesh.counts[a] - 1
                elems = np.nonzero(idx[:, a] == layer)[0]
                pts_ref = np.empty((len(face_w), mesh.dim))
                pts_ref[:, a] = s_in
                if others:
                    pts_ref[:, others] = face_ref
                Vf, _ = self.basis.eval(pts_ref)
                pts = mesh.from_reference(np.repeat(elems, len(face_w)), np.tile(pts_ref, (len(elems), 1)))
                g = np.asarray(problem.inflow(pts, omega, t), dtype=float).reshape(len(elems), -1)
                load[j, elems] += abs(oa) * scale * (g * face_w) @ Vf.T
        return load

    def scatter(self, density_coeffs):
        """Coefficients of Pi(sigma_s * density)."""
        if self.sigma_s_const:
            return float(self.problem.sigma_s) * density_coeffs
        loads = np.einsum("ebc,ec->eb", self.mass_s, density_coeffs)
        return loads / (self.jac * self.mass_diag)

    def density(self, psi):
        return self.problem.ordinates.average(psi)

    # -- inversion ----------------------------------------------------------
    def sweep(self, source_coeffs, load=None, ordinates=None):
        """Solve every per-ordinate system for the given total source.

        ``source_coeffs`` is ``(n_ord, n_elem, nb)`` or ``(n_elem, nb)``
        (isotropic); ``load`` adds boundary right-hand sides.
        """
        mesh = self.mesh
        src = np.broadcast_to(source_coeffs, (self.n_ord, mesh.n_elem, self.nb))
        rhs = self.jac * self.mass_diag * src
        if load is not None:
            rhs = rhs + load
        if self._periodic:
            return self._direct_solve(rhs, ordinates)
        psi = np.zeros((self.n_ord, mesh.n_elem + 1, self.nb))
        jj = np.arange(self.n_ord)[:, None]
        for wave in self._waves:
            r = rhs[jj, wave.elems]
            for a, up in enumerate(wave.upwind):
                r = r - np.einsum("jbc,jmc->jmb", self.couple[:, a], psi[jj, up])
            psi[jj, wave.elems] = np.einsum("jmbc,jmc->jmb", wave.ainv, r)
        return psi[:, :-1]

    def ordinate_matrix(self, j):
        """Sparse global matrix of ordinate ``j`` built from the local blocks."""
        mesh = self.mesh
        nb = self.nb
        n = mesh.n_elem
        rows, cols, vals = [], [], []
        blocks = self.stream[j][None] + self.mass_t
        e = np.arange(n)
        r0 = (e[:, None] * nb + np.arange(nb)[None, :])
        rows.append(np.repeat(r0, nb, axis=1).ravel())
        cols.append(np.tile(r0, (1, nb)).ravel())
        vals.append(blocks.ravel())
        idx = mesh.multi_index(e)
        counts = np.array(mesh.counts)
        for a in range(mesh.dim):
            oa = self.problem.directions[j][a]
            if oa == 0.0:
                continue
            up = idx.copy()
            up[:, a] -= 1 if oa > 0 else -1
            if mesh.periodic(a):
                up[:, a] %= counts[a]
                valid = np.ones(n, bool)
            else:
                valid = (up[:, a] >= 0) & (up[:, a] < counts[a])
            src = mesh.flat_index(np.clip(up, 0, counts - 1))
            er, es = e[valid], src[valid]
            rr = er[:, None] * nb + np.arange(nb)[None, :]
            cc = es[:, None] * nb + np.arange(nb)[None, :]
            rows.append(np.repeat(rr, nb, axis=1).ravel())
            cols.append(np.tile(cc, (1, nb)).ravel())
            vals.append(np.broadcast_to(self.couple[j, a], (len(er), nb, nb)).ravel())
        return sp.csc_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(n * nb, n * nb),
        )

    def _direct_solve(self, rhs, ordinates=None):
        out = np.zeros_like(rhs)
        for j in range(self.n_ord) if ordinates is None else ordinates:
            lu = self._lu.get(j)
            if lu is None:
                lu = self._lu[j] = spla.splu(self.ordinate_matrix(j))
            out[j] = lu.solve(rhs[j].ravel()).reshape(rhs[j].shape)
        return out


def transport_sweep(problem, total_source, j=None, t=0.0, operator=None):
    """Solve the per-ordinate steady systems for a given total source.

    ``total_source`` holds coefficients (``(n_ord, n_elem, nb)`` or an
    isotropic ``(n_elem, nb)`` array, or a :class:`DGField`).  Inflow data
    from the problem are included.  Returns a :class:`DGField`, or the
    ``(n_elem, nb)`` coefficients of ordinate ``j`` if it is given.
    """
    op = operator or TransportOperator(problem)
    src = total_source.coeffs if hasattr(total_source, "coeffs") else np.asarray(total_source)
    psi = op.sweep(src, op.inflow_load(t))
    if j is not None:
        return psi[j]
    return DGField(problem.mesh, problem.ordinates, problem.degree, psi)
