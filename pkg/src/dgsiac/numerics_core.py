"""Reference-element polynomial machinery.

Legendre and Radau polynomials on [-1, 1], Gauss-Legendre rules and the
tensor-product modal Legendre basis used for Q_k elements.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "Quadrature",
    "BasisSet",
    "legendre_eval",
    "legendre_deriv",
    "legendre_table",
    "radau_eval",
    "radau_roots",
    "gauss_legendre",
    "basis_eval",
    "tensor_gauss",
]


def legendre_table(kmax, xi):
    """Values and derivatives of L_0..L_kmax at ``xi``.

    Returns two arrays of shape ``(kmax + 1,) + np.shape(xi)``.
    """
    xi = np.asarray(xi, dtype=float)
    vals = np.empty((kmax + 1,) + xi.shape)
    ders = np.empty_like(vals)
    vals[0] = 1.0
    ders[0] = 0.0
    if kmax >= 1:
        vals[1] = xi
        ders[1] = 1.0
    for n in range(1, kmax):
        vals[n + 1] = ((2 * n + 1) * xi * vals[n] - n * vals[n - 1]) / (n + 1)
        # L'_{n+1} = L'_{n-1} + (2n+1) L_n
        ders[n + 1] = ders[n - 1] + (2 * n + 1) * vals[n]
    return vals, ders


def legendre_eval(n, xi):
    """L_n(xi) from the three-term recurrence."""
    if n < 0:
        raise ValueError(f"Legendre degree must be non-negative, got {n}")
    vals, _ = legendre_table(n, xi)
    out = vals[n]
    return float(out) if out.ndim == 0 else out


def legendre_deriv(n, xi):
    """L_n'(xi)."""
    if n < 0:
        raise ValueError(f"Legendre degree must be non-negative, got {n}")
    _, ders = legendre_table(n, xi)
    out = ders[n]
    return float(out) if out.ndim == 0 else out


def radau_eval(k, xi, side):
    """Right (L_k - L_{k-1}) or left (L_k + L_{k-1}) Radau polynomial."""
    if k < 1:
        return np.zeros_like(np.asarray(xi, dtype=float))
    vals, _ = legendre_table(k, xi)
    if side == "right":
        return vals[k] - vals[k - 1]
    if side == "left":
        return vals[k] + vals[k - 1]
    raise ValueError(f"side must be 'left' or 'right', got {side!r}")


@lru_cache(maxsize=None)
def _radau_roots_cached(k, side):
    f = lambda x: float(radau_eval(k, x, side))
    end = 1.0 if side == "right" else -1.0
    grid = np.linspace(-1.0, 1.0, 1001)
    vals = radau_eval(k, grid, side)
    roots = [end]
    for a, b, fa, fb in zip(grid[:-1], grid[1:], vals[:-1], vals[1:]):
        if fa == 0.0 and abs(a) < 1.0:
            roots.append(float(a))
            continue
        if fa * fb >= 0.0:
            continue
        lo, hi = a, b
        while hi - lo > 1e-14:
            mid = 0.5 * (lo + hi)
            fm = f(mid)
            if fm == 0.0:
                lo = hi = mid
                break
            if (fm < 0.0) == (fa < 0.0):
                lo, fa = mid, fm
            else:
                hi = mid
        root = 0.5 * (lo + hi)
        if abs(root - end) > 1e-10:
            roots.append(root)
    roots = sorted(roots)
    if len(roots) != k:
        raise RuntimeError(
            f"Radau root bracketing failed for k={k}, side={side}: "
            f"found {len(roots)} roots, expected {k}"
        )
    return tuple(roots)


def radau_roots(k, side):
    """The k roots of the right (``L_k - L_{k-1}``) or left Radau polynomial.

    Right roots include +1, left roots include -1; sorted ascending.
    """
    if k < 1:
        raise ValueError(f"Radau degree must be >= 1, got {k}")
    if side not in ("left", "right"):
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")
    return list(_radau_roots_cached(int(k), side))


@dataclass(frozen=True)
class Quadrature:
    """Quadrature rule on [-1, 1]."""

    nodes: np.ndarray
    weights: np.ndarray

    def __len__(self):
        return len(self.nodes)

    def integrate(self, f):
        return float(np.dot(self.weights, f(self.nodes)))

    def mapped(self, a, b):
        """Nodes and weights on [a, b]."""
        half = 0.5 * (b - a)
        return a + half * (self.nodes + 1.0), half * self.weights


@lru_cache(maxsize=None)
def _gauss_legendre_cached(n):
    i = np.arange(1, n + 1)
    # Chebyshev-like initial guesses, descending
    x = np.cos(np.pi * (i - 0.25) / (n + 0.5))
    for _ in range(100):
        vals, ders = legendre_table(n, x)
        dx = vals[n] / ders[n]
        x = x - dx
        if np.max(np.abs(dx)) < 1e-16:
            break
    _, ders = legendre_table(n, x)
    w = 2.0 / ((1.0 - x**2) * ders[n] ** 2)
    order = np.argsort(x)
    nodes, weights = x[order], w[order]
    # enforce exact symmetry
    nodes = 0.5 * (nodes - nodes[::-1])
    weights = 0.5 * (weights + weights[::-1])
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def gauss_legendre(n):
    """n-point Gauss-Legendre rule on [-1, 1] (Newton on L_n)."""
    if n < 1:
        raise ValueError(f"number of Gauss points must be >= 1, got {n}")
    nodes, weights = _gauss_legendre_cached(int(n))
    return Quadrature(nodes, weights)


@dataclass(frozen=True)
class BasisSet:
    """Tensor-product Legendre basis of Q_k on [-1, 1]^dim.

    Basis index ``b`` enumerates multi-indices in C order, so in 2D
    ``b = a_x * (k + 1) + a_y``.
    """

    degree: int
    dim: int = 1

    def __post_init__(self):
        if self.degree < 0:
            raise ValueError("basis degree must be >= 0")
        if self.dim not in (1, 2):
            raise ValueError("only 1D and 2D reference elements are supported")

    @property
    def size(self):
        return (self.degree + 1) ** self.dim

    @property
    def multi_indices(self):
        return np.array(list(np.ndindex(*(self.degree + 1,) * self.dim)))

    def mass_diagonal(self):
        """Diagonal of the reference mass matrix, prod_a 2 / (2 n_a + 1)."""
        m1 = 2.0 / (2.0 * np.arange(self.degree + 1) + 1.0)
        out = m1
        for _ in range(self.dim - 1):
            out = np.kron(out, m1)
        return out

    def eval(self, xi):
        """Basis values and gradients at reference points.

        ``xi`` has shape ``(npts, dim)`` (or ``(npts,)`` in 1D).  Returns
        ``values`` of shape ``(nb, npts)`` and ``grads`` of shape
        ``(dim, nb, npts)``.
        """
        xi = np.asarray(xi, dtype=float)
        if xi.ndim == 1 and self.dim == 1:
            xi = xi[:, None]
        if xi.ndim == 1:
            xi = xi[None, :]
        k = self.degree
        tables = [legendre_table(k, xi[:, a]) for a in range(self.dim)]
        if self.dim == 1:
            vals, ders = tables[0]
            return vals, ders[None]
        (vx, dx), (vy, dy) = tables
        values = (vx[:, None, :] * vy[None, :, :]).reshape(self.size, -1)
        gx = (dx[:, None, :] * vy[None, :, :]).reshape(self.size, -1)
        gy = (vx[:, None, :] * dy[None, :, :]).reshape(self.size, -1)
        return values, np.stack([gx, gy])


def basis_eval(basis, xi):
    """Values ``(nb,)`` and gradients ``(dim, nb)`` at a single reference point."""
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    values, grads = basis.eval(xi.reshape(1, basis.dim))
    return values[:, 0], grads[:, :, 0]


def tensor_gauss(n, dim):
    """Tensor Gauss rule on [-1,1]^dim: points ``(n**dim, dim)``, weights."""
    q = gauss_legendre(n)
    if dim == 1:
        return q.nodes[:, None].copy(), q.weights.copy()
    X, Y = np.meshgrid(q.nodes, q.nodes, indexing="ij")
    W = np.outer(q.weights, q.weights)
    return np.column_stack([X.ravel(), Y.ravel()]), W.ravel()
