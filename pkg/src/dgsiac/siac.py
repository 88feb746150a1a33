"""SIAC kernels and post-processing of DG densities.

The kernel is a symmetric combination of ``r + 1 = 2k + 1`` translated
central B-splines of order ``n = k + 1``.  Coefficients come from the
moment conditions, solved in exact rational arithmetic.  Filtering is an
exact piecewise convolution: every integration region is bounded by mesh
lines and scaled kernel knots so the integrand is a polynomial there.  In 2D
the one-dimensional kernel is applied along a rotated line (Line SIAC).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .dg_transport import PiecewisePolynomial
from .numerics_core import BasisSet, gauss_legendre, tensor_gauss

__all__ = [
    "SiacKernel",
    "SiacFilter",
    "bspline_eval",
    "bspline_moments",
    "build_kernel",
    "filter_point_1d",
    "filter_line_2d",
    "kernel_fourier",
    "divided_difference",
    "diagonal_angle",
]


# ---------------------------------------------------------------------------
# B-splines
# ---------------------------------------------------------------------------


def bspline_eval(n, x):
    """Central B-spline of order ``n`` (support [-n/2, n/2]) by Cox-de Boor."""
    if n < 1:
        raise ValueError("B-spline order must be >= 1")
    x = np.asarray(x, dtype=float)
    knots = np.arange(n + 1) - n / 2.0
    # order-1 pieces: indicators of [t_i, t_{i+1})
    B = [((x >= knots[i]) & (x < knots[i + 1])).astype(float) for i in range(n)]
    for m in range(2, n + 1):
        nxt = []
        for i in range(n + 1 - m):
            left = (x - knots[i]) / (knots[i + m - 1] - knots[i]) * B[i]
            right = (knots[i + m] - x) / (knots[i + m] - knots[i + 1]) * B[i + 1]
            nxt.append(left + right)
        B = nxt
    out = B[0]
    return float(out) if out.ndim == 0 else out


@lru_cache(maxsize=None)
def bspline_moments(n, mmax):
    """Exact moments ``int x^m B_n(x) dx`` for m = 0..mmax as Fractions.

    Uses B_n = B_{n-1} * B_1: moments of a convolution are the binomial
    convolution of the factors' moments.
    """
    half = Fraction(1, 2)
    box = [Fraction(0) if m % 2 else 2 * half ** (m + 1) / (m + 1) for m in range(mmax + 1)]
    mom = list(box)
    for _ in range(n - 1):
        mom = [
            sum(math.comb(m, i) * mom[i] * box[m - i] for i in range(m + 1))
            for m in range(mmax + 1)
        ]
    return tuple(mom)


def _translated_moment(n, offset, m):
    """``int x^m B_n(x - offset) dx`` exactly."""
    mom = bspline_moments(n, m)
    return sum(math.comb(m, i) * offset ** (m - i) * mom[i] for i in range(m + 1))


def _solve_exact(A, b):
    """Gaussian elimination over the rationals with full pivoting."""
    n = len(A)
    M = [list(row) + [rhs] for row, rhs in zip(A, b)]
    perm = list(range(n))
    for col in range(n):
        piv = max(
            ((r, c) for r in range(col, n) for c in range(col, n)),
            key=lambda rc: abs(M[rc[0]][rc[1]]),
        )
        r, c = piv
        if M[r][c] == 0:
            raise RuntimeError("singular SIAC moment system")
        M[col], M[r] = M[r], M[col]
        if c != col:
            for row in M:
                row[col], row[c] = row[c], row[col]
            perm[col], perm[c] = perm[c], perm[col]
        for rr in range(col + 1, n):
            f = M[rr][col] / M[col][col]
            if f:
                M[rr] = [a - f * p for a, p in zip(M[rr], M[col])]
    x = [Fraction(0)] * n
    for i in range(n - 1, -1, -1):
        s = M[i][n] - sum(M[i][j] * x[j] for j in range(i + 1, n))
        x[i] = s / M[i][i]
    out = [Fraction(0)] * n
    for i, p in enumerate(perm):
        out[p] = x[i]
    return out


# ---------------------------------------------------------------------------
# kernel
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SiacKernel:
    """Symmetric SIAC kernel ``K_H(x) = (1/H) sum_g c_g B_n(x/H - o_g)``."""

    order: int
    coeffs: tuple
    offsets: tuple
    H: float = 1.0
    exact_coeffs: tuple = field(default=(), repr=False, compare=False)

    @property
    def r(self):
        return len(self.coeffs) - 1

    @property
    def smoothness(self):
        return self.order - 2

    @property
    def half_width(self):
        """Half of the support width in units of ``H``."""
        return (self.r + self.order) / 2.0

    @property
    def support(self):
        hw = self.half_width * self.H
        return (-hw, hw)

    @property
    def knot_matrix(self):
        """Row g holds the B-spline breaks of translate g (unscaled)."""
        base = np.arange(self.order + 1) - self.order / 2.0
        return np.array([o + base for o in self.offsets])

    def breaks(self):
        """Sorted distinct knots of the scaled kernel."""
        return np.unique(self.knot_matrix.ravel()) * self.H

    def with_scaling(self, H):
        return SiacKernel(self.order, self.coeffs, self.offsets, float(H), self.exact_coeffs)

    def __call__(self, x):
        s = np.asarray(x, dtype=float) / self.H
        out = sum(c * bspline_eval(self.order, s - o) for c, o in zip(self.coeffs, self.offsets))
        return out / self.H

    def moment(self, m):
        """Exact ``int x^m K(x) dx`` for the unscaled kernel (H = 1)."""
        cs = self.exact_coeffs or tuple(Fraction(c) for c in self.coeffs)
        return sum(c * _translated_moment(self.order, Fraction(o), m) for c, o in zip(cs, self.offsets))


def build_kernel(k, H=1.0, order=None):
    """Symmetric kernel with 2k+1 translates reproducing polynomials of degree 2k.

    ``order`` defaults to k + 1 (B-splines of smoothness k - 1).
    """
    if k < 1:
        raise ValueError("SIAC kernel requires k >= 1")
    if H <= 0:
        raise ValueError("kernel scaling must be positive")
    n = k + 1 if order is None else int(order)
    r = 2 * k
    offsets = [Fraction(g) - Fraction(r + 2, 2) for g in range(1, r + 2)]
    A = [[_translated_moment(n, o, m) for o in offsets] for m in range(r + 1)]
    b = [Fraction(1)] + [Fraction(0)] * r
    c = _solve_exact(A, b)
    return SiacKernel(
        n, tuple(float(v) for v in c), tuple(float(o) for o in offsets), float(H), tuple(c)
    )


def kernel_fourier(kernel, xi):
    """Fourier symbol of the unscaled kernel.

    ``sinc(xi/2)^n * (c_mid + 2 sum_g c_g cos(o_g xi))`` with the
    unnormalised sinc.
    """
    xi = np.asarray(xi, dtype=float)
    damp = np.sinc(xi / (2.0 * np.pi)) ** kernel.order
    total = np.zeros_like(xi)
    for c, o in zip(kernel.coeffs, kernel.offsets):
        total = total + c * np.cos(o * xi)
    out = damp * total
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# line integration
# ---------------------------------------------------------------------------


def diagonal_angle(mesh):
    """Angle of the element diagonal, arctan(h_y / h_x)."""
    hx, hy = mesh.spacing
    return float(np.arctan2(hy, hx))


def _segment_breaks(unit_breaks, point, u, h_line, half, lower, spacing):
    """Sorted breakpoints in t: scaled kernel knots and mesh-line crossings."""
    brk = [unit_breaks * h_line]
    for a in range(len(u)):
        if abs(u[a]) < 1e-14:
            continue
        lo_t = point[a] - half * abs(u[a]) - lower[a]
        hi_t = point[a] + half * abs(u[a]) - lower[a]
        i0 = math.floor(lo_t / spacing[a]) - 1
        i1 = math.ceil(hi_t / spacing[a]) + 1
        lines = lower[a] + np.arange(i0, i1 + 1) * spacing[a]
        brk.append((lines - point[a]) / u[a])
    t = np.unique(np.clip(np.concatenate(brk), -half, half))
    keep = np.concatenate([[True], np.diff(t) > 1e-12 * h_line])
    return t[keep]


def _line_quadrature(kernel, points, direction, h_line, lower, spacing, n_gauss):
    """Quadrature for ``int K_{h_line}(-t) u(point + t direction) dt``.

    ``points`` has shape ``(P, dim)`` (a single point is accepted).  The
    kernel is used unscaled (its ``H`` is ignored); ``h_line`` scales it
    along the line.  Returns, for all quadrature nodes, the owning point,
    the unwrapped element multi-index, reference coordinates, weights and
    physical coordinates.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    u = np.asarray(direction, dtype=float)
    lower = np.asarray(lower, dtype=float)
    half = kernel.half_width * h_line
    unit = kernel.with_scaling(1.0)
    unit_breaks = unit.breaks()
    t0, t1, owner = [], [], []
    for p, point in enumerate(points):
        t = _segment_breaks(unit_breaks, point, u, h_line, half, lower, spacing)
        t0.append(t[:-1])
        t1.append(t[1:])
        owner.append(np.full(t.size - 1, p))
    t0, t1, owner = np.concatenate(t0), np.concatenate(t1), np.concatenate(owner)
    q = gauss_legendre(n_gauss)
    mid = 0.5 * (t0 + t1)
    hl = 0.5 * (t1 - t0)
    tg = mid[:, None] + hl[:, None] * q.nodes[None, :]
    wg = hl[:, None] * q.weights[None, :]
    base = points[owner]
    pm = base + mid[:, None] * u  # segment midpoints pick the element
    idx = np.floor((pm - lower) / spacing).astype(int)
    pts = base[:, None, :] + tg[..., None] * u
    xi = np.clip(2.0 * ((pts - lower) / spacing - idx[:, None, :]) - 1.0, -1.0, 1.0)
    kw = wg * unit(-tg / h_line) / h_line
    ng = q.nodes.size
    dim = len(u)
    return (
        np.repeat(owner, ng),
        np.repeat(idx, ng, axis=0),
        xi.reshape(-1, dim),
        kw.ravel(),
        pts.reshape(-1, dim),
    )


def _gauss_count(degree, order, dim):
    # integrand degree along the line: field degree times dim plus kernel degree
    return (dim * degree + order - 1) // 2 + 2


def _evaluate_along(field, kernel, point, direction, h_line, n_gauss=None):
    if isinstance(field, PiecewisePolynomial):
        mesh = field.mesh
        ng = n_gauss or _gauss_count(field.degree, kernel.order, mesh.dim)
        lower = np.array(mesh.lower)
        _, idx, xi, w, _ = _line_quadrature(kernel, point, direction, h_line, lower, mesh.spacing, ng)
        counts = np.array(mesh.counts)
        for a in range(mesh.dim):
            if mesh.periodic(a):
                idx[:, a] %= counts[a]
            elif np.any((idx[:, a] < 0) | (idx[:, a] >= counts[a])):
                raise ValueError(
                    "kernel support leaves the non-periodic domain; restrict to interior points"
                )
        elem = mesh.flat_index(idx)
        values, _ = field.basis.eval(xi)
        u = np.einsum("pb,bp->p", field.coeffs[elem], values)
        return float(np.dot(w, u))
    if callable(field):
        raise TypeError("callable fields need an explicit mesh; use the mesh= argument")
    raise TypeError("field must be a PiecewisePolynomial or a callable")


def _evaluate_callable(f, mesh, kernel, point, direction, h_line, n_gauss):
    lower = np.array(mesh.lower)
    _, _, _, w, pts = _line_quadrature(kernel, point, direction, h_line, lower, mesh.spacing, n_gauss)
    return float(np.dot(w, f(pts)))


def filter_point_1d(field, kernel, xbar, mesh=None, n_gauss=None):
    """Filtered value ``int K_H(xbar - y) u(y) dy`` at a single point.

    ``field`` is a 1D :class:`PiecewisePolynomial`, or a callable ``f(x)``
    with ``x`` of shape ``(npts, 1)`` together with ``mesh`` (whose lines
    split the integration).  ``kernel.H`` is the scaling.
    """
    if isinstance(field, PiecewisePolynomial):
        if field.mesh.dim != 1:
            raise ValueError("filter_point_1d needs a 1D field")
        return _evaluate_along(field, kernel, [xbar], [1.0], kernel.H, n_gauss)
    if mesh is None:
        raise ValueError("callable fields need a mesh")
    return _evaluate_callable(field, mesh, kernel, [xbar], [1.0], kernel.H, n_gauss or 12)


def _line_setup(mesh, kernel, theta):
    hx, hy = mesh.spacing
    if theta is None:
        theta = diagonal_angle(mesh)
        h_line = float(np.hypot(hx, hy)) * kernel.H / mesh.h
    else:
        h_line = kernel.H / max(abs(np.cos(theta)), abs(np.sin(theta)))
    return theta, np.array([np.cos(theta), np.sin(theta)]), h_line


def filter_line_2d(field, kernel, point, theta=None, mesh=None, n_gauss=None):
    """Line-SIAC value at ``point`` of a 2D field.

    The one-dimensional kernel is applied along the line through ``point``
    at angle ``theta`` (default: the element diagonal).  Along the
    diagonal the line scaling is the diagonal length times ``kernel.H/h``,
    so knots fall on mesh-diagonal crossings; for other angles it is
    ``kernel.H / max(|cos|, |sin|)``.
    """
    m = field.mesh if isinstance(field, PiecewisePolynomial) else mesh
    if m is None or m.dim != 2:
        raise ValueError("filter_line_2d needs a 2D field or mesh")
    theta, u, h_line = _line_setup(m, kernel, theta)
    if isinstance(field, PiecewisePolynomial):
        return _evaluate_along(field, kernel, point, u, h_line, n_gauss)
    return _evaluate_callable(field, m, kernel, point, u, h_line, n_gauss or 12)


# ---------------------------------------------------------------------------
# translation-invariant stencils on uniform meshes
# ---------------------------------------------------------------------------


class SiacFilter:
    """Filter a DG density at fixed reference points of every element.

    On a uniform mesh the filtered value at a given reference point is the
    same linear combination of neighbouring elements' coefficients for
    every element, so the stencil is integrated once per sample point and
    applied by shifted gathers.  Samples whose kernel support leaves a
    non-periodic domain come back as NaN.
    """

    def __init__(self, mesh, degree, kernel=None, theta=None, sample_ref=None):
        self.mesh = mesh
        self.degree = degree
        self.kernel = (kernel or build_kernel(degree)).with_scaling(mesh.h)
        self.basis = BasisSet(degree, mesh.dim)
        if sample_ref is None:
            sample_ref, _ = tensor_gauss(degree + 3, mesh.dim)
        self.sample_ref = np.asarray(sample_ref, dtype=float).reshape(-1, mesh.dim)
        if mesh.dim == 1:
            self.theta = None
            self.direction = np.array([1.0])
            self.h_line = self.kernel.H
        else:
            self.theta, self.direction, self.h_line = _line_setup(mesh, self.kernel, theta)
        self._build()

    def _build(self):
        mesh = self.mesh
        ng = _gauss_count(self.degree, self.kernel.order, mesh.dim)
        lower = np.zeros(mesh.dim)
        npts = len(self.sample_ref)
        points = 0.5 * mesh.spacing * (self.sample_ref + 1.0)  # inside element 0
        owner, idx, ref, w, _ = _line_quadrature(
            self.kernel, points, self.direction, self.h_line, lower, mesh.spacing, ng
        )
        values, _ = self.basis.eval(ref)
        offsets, which = np.unique(idx, axis=0, return_inverse=True)
        which = which.ravel()
        # accumulate kernel-weighted basis values per (offset, sample)
        slot = which * npts + owner
        W = np.zeros((len(offsets) * npts, self.basis.size))
        for b in range(self.basis.size):
            W[:, b] = np.bincount(slot, weights=values[b] * w, minlength=len(offsets) * npts)
        self.offsets = offsets
        self.weights = W.reshape(len(offsets), npts, self.basis.size)
        counts = np.array(mesh.counts)
        idx = mesh.multi_index(np.arange(mesh.n_elem))
        self._gather = []
        valid = np.ones(mesh.n_elem, bool)
        for o in self.offsets:
            nb_idx = idx + o
            ok = np.ones(mesh.n_elem, bool)
            for a in range(mesh.dim):
                if mesh.periodic(a):
                    nb_idx[:, a] %= counts[a]
                else:
                    ok &= (nb_idx[:, a] >= 0) & (nb_idx[:, a] < counts[a])
            nb_idx = np.clip(nb_idx, 0, counts - 1)
            self._gather.append(mesh.flat_index(nb_idx))
            valid &= ok
        self.valid = valid  # elements whose samples are all filterable

    @property
    def reach(self):
        """Largest element offset used per axis."""
        return np.abs(self.offsets).max(axis=0)

    def apply(self, density):
        """Filtered values ``(n_elem, n_samples)``; NaN outside the valid region."""
        coeffs = density.coeffs if isinstance(density, PiecewisePolynomial) else np.asarray(density)
        out = np.zeros((self.mesh.n_elem, len(self.sample_ref)))
        for g, W in zip(self._gather, self.weights):
            out += coeffs[g] @ W.T
        out[~self.valid] = np.nan
        return out

    def sample_points(self):
        """Physical coordinates of the samples, ``(n_elem, n_samples, dim)``."""
        c = self.mesh.centers()
        return c[:, None, :] + 0.5 * self.mesh.spacing * self.sample_ref[None]


# ---------------------------------------------------------------------------
# divided differences
# ---------------------------------------------------------------------------


def divided_difference(f, h, order=1, axis=0, coords=None):
    """Central divided difference of order ``order`` with spacing ``h``.

    ``f`` is either an array of samples on a uniform lattice of spacing
    ``h`` along ``axis`` (the result has ``order`` fewer samples and sits
    at the shifted lattice points) or a callable ``f(x)`` with points of
    shape ``(npts, dim)`` (a callable is returned).  A tuple ``order`` is a
    multi-index and composes one axis at a time.
    """
    if isinstance(order, (tuple, list)):
        out = f
        for a, lam in enumerate(order):
            if lam:
                out = divided_difference(out, h[a] if np.ndim(h) else h, lam, axis=a, coords=None)
        return out
    if order < 0:
        raise ValueError("difference order must be non-negative")
    if callable(f):
        def diff(x, f=f, order=order):
            x = np.asarray(x, dtype=float)
            total = 0.0
            for i in range(order + 1):
                shift = np.zeros(x.shape[-1])
                shift[axis] = (order / 2.0 - i) * h
                total = total + (-1) ** i * math.comb(order, i) * f(x + shift)
            return total / h**order
        return diff
    values = np.asarray(f, dtype=float)
    if coords is not None:
        steps = np.diff(np.asarray(coords, dtype=float))
        if not np.allclose(steps, h, rtol=1e-10, atol=0.0):
            raise ValueError("divided differences need uniform spacing equal to h")
    out = values
    for _ in range(order):
        out = np.diff(out, axis=axis) / h
    return out
