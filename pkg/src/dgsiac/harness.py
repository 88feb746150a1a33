"""Manufactured solutions, error measurement and convergence studies."""
from __future__ import annotations

import csv
import io
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .angular import OrdinateSet, ordinates_slab, ordinates_sphere_cl
from .dg_transport import DGField, PiecewisePolynomial, TransportProblem, _coef
from .mesh import uniform_mesh
from .numerics_core import BasisSet, radau_roots, tensor_gauss
from .siac import SiacFilter, build_kernel
from .solvers import NonConvergenceError, default_tolerance, solve_steady, solve_transient, time_step

log = logging.getLogger(__name__)

__all__ = [
    "ManufacturedCase",
    "ConvergenceTable",
    "mms_steady_2d",
    "mms_transient_2d",
    "mms_slab_1d",
    "gaussian_source_case",
    "gaussian_scattering",
    "error_l2",
    "error_superconvergent_points",
    "interior_mask",
    "margin_cells",
    "run_convergence_study",
    "observed_order",
]

_CSTEP = 1e-30


def _complex_partial(psi, x, omega, t, axis):
    """Exact-to-round-off partial derivative by the complex step."""
    x = np.asarray(x, dtype=complex)
    if axis == "t":
        return np.imag(psi(x, omega, t + 1j * _CSTEP)) / _CSTEP
    dx = np.zeros(x.shape[-1], dtype=complex)
    dx[axis] = 1j * _CSTEP
    return np.imag(psi(x + dx, omega, t)) / _CSTEP


def _fd_partial(psi, x, omega, t, axis, step=2e-3):
    """Sixth-order central difference; independent of the complex step."""
    c = (1 / 60, -3 / 20, 3 / 4)
    total = 0.0
    for m, cm in zip((3, 2, 1), c):
        if axis == "t":
            total = total + cm * (psi(x, omega, t + m * step) - psi(x, omega, t - m * step))
        else:
            d = np.zeros(x.shape[-1])
            d[axis] = m * step
            total = total + cm * (psi(x + d, omega, t) - psi(x - d, omega, t))
    return total / step


@dataclass
class ManufacturedCase:
    """An exact solution ``psi(x, omega, t)`` with its consistent source.

    ``psi`` must accept complex ``x`` and ``t`` (it is differentiated by the
    complex step).  The source for ordinate set S is
    ``d_t psi + omega . grad psi + sigma_t psi - sigma_s avg_S(psi)``, with the
    discrete average, so the S_N system is satisfied exactly.
    """

    name: str
    psi: Callable
    bounds: list
    bc: str = "vacuum"
    sigma_s: float | Callable = 0.0
    sigma_a: float | Callable = 0.0
    ordinates: OrdinateSet | None = None
    time_dependent: bool = False
    t_end: float = 0.0
    metadata: dict = field(default_factory=dict)

    @property
    def dim(self):
        return len(self.bounds)

    def _ords(self, ordinates):
        ords = ordinates or self.ordinates
        if ords is None:
            raise ValueError(f"case {self.name!r} has no default ordinate set")
        if ords.dim > self.dim:
            ords = ords.in_plane()
        return ords

    def density(self, x, t=0.0, ordinates=None):
        """Discrete angular average of the exact solution."""
        ords = self._ords(ordinates)
        x = np.asarray(x, dtype=float)
        vals = [np.broadcast_to(np.real(self.psi(x, om, t)), x.shape[:-1]) for om in ords.directions]
        return ords.average(np.array(vals))

    def source_function(self, ordinates=None):
        ords = self._ords(ordinates)

        def source(x, omega, t=0.0):
            x = np.asarray(x, dtype=float)
            val = np.real(self.psi(x, omega, t))
            if self.time_dependent:
                val_t = _complex_partial(self.psi, x, omega, t, "t")
            else:
                val_t = 0.0
            stream = sum(omega[a] * _complex_partial(self.psi, x, omega, t, a) for a in range(self.dim))
            ss = _coef(self.sigma_s, x)
            st = ss + _coef(self.sigma_a, x)
            return val_t + stream + st * val - ss * self.density(x, t, ords)

        return source

    def inflow_function(self):
        return lambda x, omega, t=0.0: np.real(self.psi(np.asarray(x, dtype=float), omega, t))

    def mesh(self, n):
        counts = [n] * self.dim if np.isscalar(n) else list(n)
        return uniform_mesh(self.bounds, counts, self.bc)

    def problem(self, n, degree, ordinates=None):
        ords = self._ords(ordinates)
        mesh = self.mesh(n)
        return TransportProblem(
            mesh, ords, degree, self.sigma_s, self.sigma_a,
            source=self.source_function(ords),
            inflow=self.inflow_function() if "inflow" in mesh.bc else None,
            name=self.name,
        )

    def residual(self, npts=200, seed=0, ordinates=None):
        """Largest pointwise residual of the equation at random phase-space points.

        Derivatives here come from finite differences, so this checks the
        complex-step source independently.
        """
        ords = self._ords(ordinates)
        rng = np.random.default_rng(seed)
        lo = np.array([b[0] for b in self.bounds])
        hi = np.array([b[1] for b in self.bounds])
        x = lo + (hi - lo) * rng.random((npts, self.dim))
        t = rng.random(npts) * max(self.t_end, 1.0) if self.time_dependent else np.zeros(npts)
        js = rng.integers(0, len(ords), npts)
        q = self.source_function(ords)
        worst = 0.0
        for i in range(npts):
            om = ords.directions[js[i]]
            xi, ti = x[i : i + 1], float(t[i])
            lhs = np.real(self.psi(xi, om, ti))
            dt = _fd_partial(self.psi, xi, om, ti, "t") if self.time_dependent else 0.0
            stream = sum(om[a] * _fd_partial(self.psi, xi, om, ti, a) for a in range(self.dim))
            ss = _coef(self.sigma_s, xi)
            st = ss + _coef(self.sigma_a, xi)
            res = dt + stream + st * lhs - ss * self.density(xi, ti, ords) - q(xi, om, ti)
            worst = max(worst, float(np.max(np.abs(res))))
        return worst

    def self_check(self, tol=1e-10, **kw):
        r = self.residual(**kw)
        if not r < tol:
            raise AssertionError(f"case {self.name!r}: source residual {r:.3e} exceeds {tol:.1e}")
        return r


def _sin2d(x, omega, t):
    return np.sin(np.pi * x[..., 0]) * np.sin(np.pi * x[..., 1])


def mms_steady_2d(variant="constant", ordinates=None):
    """Isotropic ``sin(pi x) sin(pi y)`` on [-1, 1]^2 with vacuum boundaries."""
    if variant == "constant":
        sigma_s = 1.0
    elif variant == "variable":
        def sigma_s(x):
            return 2.0 + np.sin(16 * np.pi * x[..., 0]) * np.sin(16 * np.pi * x[..., 1])
    else:
        raise ValueError(f"variant must be 'constant' or 'variable', got {variant!r}")
    return ManufacturedCase(
        f"steady-2d-{variant}", _sin2d, [(-1.0, 1.0), (-1.0, 1.0)], "vacuum",
        sigma_s, 0.0, ordinates or ordinates_sphere_cl(8, 4),
    )


def mms_transient_2d(ordinates=None, t_end=0.5):
    """``exp(-t) sin(pi x) sin(pi y)`` on [-1, 1]^2, sigma_s = 1."""
    def psi(x, omega, t):
        return np.exp(-t) * _sin2d(x, omega, t)

    return ManufacturedCase(
        "transient-2d", psi, [(-1.0, 1.0), (-1.0, 1.0)], "vacuum", 1.0, 0.0,
        ordinates or ordinates_sphere_cl(8, 4), time_dependent=True, t_end=t_end,
    )


def mms_slab_1d(ordinates=None, sigma_t=2.0, sigma_s=1.0, tilt=0.5):
    """Angle-dependent ``(1 + tilt v) sin(pi x)`` on [0, 1], vacuum boundaries."""
    def psi(x, omega, t):
        return (1.0 + tilt * omega[0]) * np.sin(np.pi * x[..., 0])

    return ManufacturedCase(
        "steady-1d", psi, [(0.0, 1.0)], "vacuum", sigma_s, sigma_t - sigma_s,
        ordinates or ordinates_slab(8),
    )


def gaussian_scattering(x):
    """``99 r^4 (2 - r^4)^2 + 1`` inside the unit disc, 100 outside."""
    r2 = x[..., 0] ** 2 + x[..., 1] ** 2
    r4 = r2**2
    return np.where(r2 <= 1.0, 99.0 * r4 * (2.0 - r4) ** 2 + 1.0, 100.0)


def gaussian_source(x, omega=None, t=0.0):
    return 10.0 / np.pi * np.exp(-100.0 * (x[..., 0] ** 2 + x[..., 1] ** 2))


def gaussian_source_case(n=32, degree=1, ordinates=None, uniform_sigma=None):
    """Steady Gaussian-source problem on [-1, 1]^2 with vacuum boundaries.

    ``uniform_sigma`` replaces the multiscale scattering by a constant.
    """
    mesh = uniform_mesh([(-1.0, 1.0), (-1.0, 1.0)], [n, n], "vacuum")
    sigma = gaussian_scattering if uniform_sigma is None else float(uniform_sigma)
    return TransportProblem(
        mesh, ordinates or ordinates_sphere_cl(20, 10), degree, sigma, 0.0,
        source=gaussian_source, name="gaussian-2d",
    )


# ---------------------------------------------------------------------------
# errors
# ---------------------------------------------------------------------------


def margin_cells(degree, order=None):
    """Kernel half-support in whole cells: ceil((3k + 1) / 2) for order k + 1."""
    n = degree + 1 if order is None else order
    return math.ceil((2 * degree + n) / 2)


def interior_mask(mesh, margin):
    """Elements lying entirely at least ``margin`` (physical) inside the domain."""
    lo = np.array(mesh.lower) + margin
    hi = np.array(mesh.upper) - margin
    c = mesh.centers()
    half = 0.5 * mesh.spacing
    tol = 1e-9 * mesh.h
    return np.all((c - half >= lo - tol) & (c + half <= hi + tol), axis=1)


def error_l2(approx, exact, mesh=None, degree=None, margin=0.0, t=0.0, npts=None):
    """L2 error with (k+3)-point Gauss per axis in each element.

    ``approx`` is a :class:`PiecewisePolynomial` or an array of values
    ``(n_elem, npts^dim)`` at the tensor Gauss points (as produced by
    :class:`~dgsiac.siac.SiacFilter` with default samples).  ``exact(x)``
    takes points of shape ``(m, dim)``.  With ``margin > 0`` only elements
    inside the shrunken box contribute.
    """
    if isinstance(approx, PiecewisePolynomial):
        mesh = approx.mesh
        degree = approx.degree
    if mesh is None or degree is None:
        raise ValueError("sampled values need mesh and degree")
    n = npts or degree + 3
    ref, w = tensor_gauss(n, mesh.dim)
    pts = mesh.centers()[:, None, :] + 0.5 * mesh.spacing * ref[None]
    if isinstance(approx, PiecewisePolynomial):
        vals = approx.at_reference(ref)
    else:
        vals = np.asarray(approx, dtype=float)
    ex = np.asarray(exact(pts.reshape(-1, mesh.dim)), dtype=float).reshape(vals.shape)
    mask = interior_mask(mesh, margin) if margin > 0 else np.ones(mesh.n_elem, bool)
    if not mask.any():
        raise ValueError("interior region is empty")
    diff = (vals - ex)[mask]
    if np.isnan(diff).any():
        raise ValueError("filtered values missing inside the requested region")
    jac = mesh.element_volume / 2**mesh.dim
    return float(np.sqrt(jac * np.sum(diff**2 * w)))


def error_superconvergent_points(field, exact, which="downwind-edge"):
    """Max-abs error of a 1D :class:`DGField` at superconvergent points.

    ``downwind-edge`` samples the upwind-side trace at the downwind face of
    every element (right edge for v > 0, left edge for v < 0);
    ``interior-radau`` samples the interior roots of the degree k+1 Radau
    polynomial anchored at the downwind edge.  ``exact(x, v)`` gives the
    per-ordinate exact solution.
    """
    mesh = field.mesh
    if mesh.dim != 1:
        raise ValueError("superconvergent points are defined for 1D slab fields")
    k = field.degree
    basis = BasisSet(k, 1)
    worst = 0.0
    centers = mesh.centers()[:, 0]
    for j, v in enumerate(field.ordinates.directions[:, 0]):
        if which == "downwind-edge":
            xi = np.array([1.0 if v > 0 else -1.0])
        elif which == "interior-radau":
            roots = radau_roots(k + 1, "right" if v > 0 else "left")
            xi = np.array([r for r in roots if abs(abs(r) - 1.0) > 1e-12], dtype=float)
        else:
            raise ValueError(f"unknown point set {which!r}")
        vals, _ = basis.eval(xi[:, None])
        approx = field.coeffs[j] @ vals  # (n_elem, npts)
        x = centers[:, None] + 0.5 * mesh.spacing[0] * xi[None, :]
        ex = np.asarray(exact(x.reshape(-1, 1), np.array([v])), dtype=float).reshape(approx.shape)
        worst = max(worst, float(np.max(np.abs(approx - ex))))
    return worst


# ---------------------------------------------------------------------------
# convergence tables
# ---------------------------------------------------------------------------


def observed_order(h, e):
    """Successive orders log(e_i/e_{i+1}) / log(h_i/h_{i+1})."""
    h = np.asarray(h, dtype=float)
    e = np.asarray(e, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.log(e[:-1] / e[1:]) / np.log(h[:-1] / h[1:])


def fitted_order(h, e):
    """Least-squares slope of log e against log h."""
    return float(np.polyfit(np.log(h), np.log(e), 1)[0])


def _fmt_seconds(v):
    return f"{v:.6f}" if np.isfinite(v) else ""


CSV_COLUMNS = ("h", "cells", "metric", "error", "order", "solve_seconds", "filter_seconds")


@dataclass
class ConvergenceTable:
    """Rows of (h, cells, metric, error, solve/filter seconds) with derived orders."""

    name: str = ""
    rows: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    def add(self, h, cells, metric, error, solve_seconds=float("nan"), filter_seconds=0.0):
        self.rows.append(
            dict(h=float(h), cells=int(cells), metric=metric, error=float(error),
                 solve_seconds=float(solve_seconds), filter_seconds=float(filter_seconds))
        )

    def metrics(self):
        seen = []
        for r in self.rows:
            if r["metric"] not in seen:
                seen.append(r["metric"])
        return seen

    def series(self, metric):
        rows = sorted((r for r in self.rows if r["metric"] == metric), key=lambda r: -r["h"])
        return rows

    def errors(self, metric):
        return np.array([r["error"] for r in self.series(metric)])

    def hs(self, metric):
        return np.array([r["h"] for r in self.series(metric)])

    def orders(self, metric):
        """Orders between successive rows, defined only where h halves."""
        h, e = self.hs(metric), self.errors(metric)
        out = observed_order(h, e)
        ratio = h[:-1] / h[1:]
        return np.where(np.isclose(ratio, 2.0, rtol=1e-9), out, np.nan)

    def row(self, metric, cells):
        for r in self.rows:
            if r["metric"] == metric and r["cells"] == cells:
                return r
        raise KeyError((metric, cells))

    def to_csv(self, path=None, header=None):
        buf = io.StringIO()
        for line in header or ():
            buf.write(f"# {line}\n")
        for note in self.notes:
            buf.write(f"# note: {note}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for metric in self.metrics():
            orders = self.orders(metric)
            for i, r in enumerate(self.series(metric)):
                o = orders[i - 1] if i > 0 else float("nan")
                w.writerow([
                    f"{r['h']:.10g}", r["cells"], metric, f"{r['error']:.10e}",
                    "" if not np.isfinite(o) else f"{o:.4f}",
                    _fmt_seconds(r["solve_seconds"]), _fmt_seconds(r["filter_seconds"]),
                ])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    def format(self):
        lines = [f"{'cells':>6} {'metric':>14} {'error':>12} {'order':>7} {'solve[s]':>9} {'filter[s]':>9}"]
        for metric in self.metrics():
            orders = self.orders(metric)
            for i, r in enumerate(self.series(metric)):
                o = orders[i - 1] if i > 0 else float("nan")
                lines.append(
                    f"{r['cells']:>6} {metric:>14} {r['error']:12.4e} {o:7.3f} "
                    f"{r['solve_seconds']:9.3f} {r['filter_seconds']:9.4f}"
                )
        return "\n".join(lines)


def _halving(meshes):
    for a, b in zip(meshes[:-1], meshes[1:]):
        if b != 2 * a:
            raise ValueError(f"mesh counts must halve h at each step, got {meshes}")


def run_convergence_study(case, degree, meshes, ordinates=None, filter=True, time_scheme=None,
                          tol=None, margin=None, use_dsa=True, max_iter=10000, check=True):
    """Solve ``case`` on each mesh and tabulate errors of the density.

    Metrics: ``l2`` (whole domain), ``l2_interior`` and, with ``filter``,
    ``l2_filtered`` on the same interior region.  1D slab cases add
    ``edge`` and ``radau`` superconvergent-point errors.  The interior is a
    fixed physical region: the kernel half-support rounded up to whole
    cells of the coarsest mesh (overridable through ``margin``).
    ``time_scheme`` is ``{"order": 3, "dt": "0.5h", "t_end": 0.5}`` for
    transient cases.  Solver failures are recorded in ``notes`` and the
    study continues.
    """
    meshes = [int(m) for m in meshes]
    _halving(meshes)
    if check:
        case.self_check(ordinates=ordinates)
    tol = default_tolerance(degree) if tol is None else tol
    ords = case._ords(ordinates)
    table = ConvergenceTable(case.name)
    coarse = case.mesh(meshes[0])
    if margin is None:
        margin = margin_cells(degree) * coarse.h
    interior = bool(interior_mask(coarse, margin).any())
    if not interior:
        table.notes.append(
            f"coarsest mesh leaves no interior region for margin {margin:.4g}; "
            "interior and filtered metrics skipped"
        )
    if case.time_dependent and time_scheme is None:
        raise ValueError("transient case needs a time scheme")
    if time_scheme is not None and not case.time_dependent:
        raise ValueError("time scheme given for a steady case")
    kernel = build_kernel(degree)
    for n in meshes:
        problem = case.problem(n, degree, ords)
        mesh = problem.mesh
        t_final = 0.0
        start = time.perf_counter()
        try:
            if time_scheme is None:
                psi, report = solve_steady(problem, tol=tol, use_dsa=use_dsa, max_iter=max_iter)
            else:
                t_final = time_scheme.get("t_end", case.t_end)
                dt = time_step(time_scheme.get("dt", "0.5h"), mesh.h)
                psi, _ = solve_transient(
                    problem, t_final, dt, time_scheme.get("order", 3), exact=case.psi,
                    tol=tol, use_dsa=use_dsa, max_iter=max_iter,
                )
        except NonConvergenceError as err:
            table.notes.append(f"cells={n}: {err}")
            log.warning("solve failed on %d cells: %s", n, err)
            continue
        solve_s = time.perf_counter() - start
        rho = psi.density()

        def exact(x, t_final=t_final):
            return case.density(x, t_final, ords)

        table.add(mesh.h, n, "l2", error_l2(rho, exact), solve_s)
        if interior:
            table.add(mesh.h, n, "l2_interior", error_l2(rho, exact, margin=margin), solve_s)
        if mesh.dim == 1:
            ex = lambda x, v, t_final=t_final: np.real(case.psi(x, v, t_final))
            table.add(mesh.h, n, "edge", error_superconvergent_points(psi, ex, "downwind-edge"), solve_s)
            table.add(mesh.h, n, "radau", error_superconvergent_points(psi, ex, "interior-radau"), solve_s)
        if filter and interior:
            start = time.perf_counter()
            filt = SiacFilter(mesh, degree, kernel)
            vals = filt.apply(rho)
            filter_s = time.perf_counter() - start
            err = error_l2(vals, exact, mesh, degree, margin=margin)
            table.add(mesh.h, n, "l2_filtered", err, solve_s, filter_s)
    return table
