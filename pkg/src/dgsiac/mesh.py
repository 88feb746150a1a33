"""Uniform axis-aligned tensor meshes in one and two dimensions.

Elements are numbered row-major by axis: in 2D element ``(i, j)`` has index
``i * ny + j``.  Faces are enumerated axis by axis.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

__all__ = ["Mesh", "Face", "uniform_mesh", "BC_KINDS"]

BC_KINDS = ("vacuum", "inflow", "periodic")


class Face(NamedTuple):
    axis: int
    left: int  # element on the low side, or -1 on the lower boundary
    right: int  # element on the high side, or -1 on the upper boundary
    normal: tuple  # unit normal pointing from ``left`` into ``right``
    boundary: str | None  # bc tag for boundary faces, None for interior


@dataclass(frozen=True)
class Mesh:
    lower: tuple
    upper: tuple
    counts: tuple
    bc: tuple
    faces: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        lower = tuple(float(v) for v in self.lower)
        upper = tuple(float(v) for v in self.upper)
        counts = tuple(int(c) for c in self.counts)
        bc = tuple(self.bc)
        if not (len(lower) == len(upper) == len(counts) == len(bc)):
            raise ValueError("bounds, counts and bc must have one entry per axis")
        if len(counts) not in (1, 2):
            raise ValueError("only 1D and 2D meshes are supported")
        for lo, hi in zip(lower, upper):
            if not hi > lo:
                raise ValueError(f"degenerate bounds [{lo}, {hi}]")
        for c in counts:
            if c < 1:
                raise ValueError("element counts must be >= 1")
        for tag in bc:
            if tag not in BC_KINDS:
                raise ValueError(f"unknown boundary condition {tag!r}; use one of {BC_KINDS}")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "bc", bc)
        object.__setattr__(self, "faces", self._build_faces())

    # -- geometry -----------------------------------------------------------
    @property
    def dim(self):
        return len(self.counts)

    @property
    def n_elem(self):
        return int(np.prod(self.counts))

    @property
    def spacing(self):
        return np.array([(u - l) / c for l, u, c in zip(self.lower, self.upper, self.counts)])

    @property
    def h(self):
        return float(np.min(self.spacing))

    @property
    def element_volume(self):
        return float(np.prod(self.spacing))

    @property
    def volume(self):
        return float(np.prod([u - l for l, u in zip(self.lower, self.upper)]))

    def periodic(self, axis):
        return self.bc[axis] == "periodic"

    def multi_index(self, e):
        return np.stack(np.unravel_index(np.asarray(e), self.counts), axis=-1)

    def flat_index(self, idx):
        idx = np.asarray(idx)
        return np.ravel_multi_index(tuple(idx[..., a] for a in range(self.dim)), self.counts)

    def centers(self):
        """Element centres, shape ``(n_elem, dim)``."""
        idx = self.multi_index(np.arange(self.n_elem))
        lo = np.array(self.lower)
        return lo + (idx + 0.5) * self.spacing

    def nodes(self, axis):
        return np.linspace(self.lower[axis], self.upper[axis], self.counts[axis] + 1)

    # -- reference maps -----------------------------------------------------
    def from_reference(self, element, xi):
        """Physical coordinates of reference points ``xi`` in ``element``."""
        xi = np.asarray(xi, dtype=float)
        c = self.centers()[np.asarray(element)]
        return c + 0.5 * self.spacing * xi

    def to_reference(self, element, x, tol=1e-12):
        """Reference coordinates of physical point(s) ``x`` in ``element``."""
        x = np.asarray(x, dtype=float)
        c = self.centers()[np.asarray(element)]
        xi = 2.0 * (x - c) / self.spacing
        if np.any(np.abs(xi) > 1.0 + 2.0 * tol):
            raise ValueError(f"point {x} lies outside element {element}")
        return np.clip(xi, -1.0, 1.0)

    def locate(self, x, side=None):
        """Element indices and reference coordinates for points ``x``.

        ``x`` has shape ``(npts, dim)``.  On an interface ``side='minus'``
        picks the element below the point and ``side='plus'`` the one above
        (the default).  Points outside the domain raise ``ValueError``.
        """
        x = np.asarray(x, dtype=float).reshape(-1, self.dim)
        lo = np.array(self.lower)
        t = (x - lo) / self.spacing
        counts = np.array(self.counts)
        tol = 1e-10
        if np.any(t < -tol) or np.any(t > counts + tol):
            raise ValueError("point outside the mesh domain")
        idx = np.floor(t + tol).astype(int)
        if side == "minus":
            on_face = np.abs(t - np.round(t)) <= tol
            idx = np.where(on_face, np.round(t).astype(int) - 1, idx)
        elif side not in (None, "plus"):
            raise ValueError(f"side must be None, 'minus' or 'plus', got {side!r}")
        idx = np.clip(idx, 0, counts - 1)
        xi = np.clip(2.0 * (t - idx) - 1.0, -1.0, 1.0)
        return self.flat_index(idx), xi

    # -- topology -----------------------------------------------------------
    def _build_faces(self):
        faces = []
        counts = self.counts
        for axis in range(self.dim):
            normal = tuple(1.0 if a == axis else 0.0 for a in range(self.dim))
            n = counts[axis]
            for idx in np.ndindex(*counts[:axis], n + 1, *counts[axis + 1 :]):
                i = idx[axis]
                if self.periodic(axis):
                    if i == n:
                        continue
                    lo = list(idx)
                    lo[axis] = (i - 1) % n
                    hi = list(idx)
                    faces.append(Face(axis, self._flat(lo), self._flat(hi), normal, None))
                    continue
                left = -1 if i == 0 else self._flat(idx[:axis] + (i - 1,) + idx[axis + 1 :])
                right = -1 if i == n else self._flat(idx)
                tag = self.bc[axis] if (i == 0 or i == n) else None
                faces.append(Face(axis, left, right, normal, tag))
        return tuple(faces)

    def _flat(self, idx):
        return int(np.ravel_multi_index(tuple(idx), self.counts))

    def boundary_faces(self):
        return [f for f in self.faces if f.boundary is not None]

    def interior_faces(self):
        return [f for f in self.faces if f.boundary is None]


def uniform_mesh(bounds, counts, bc="vacuum"):
    """Uniform tensor mesh.

    ``bounds`` is ``[(lo, hi), ...]`` per axis (or a single ``(lo, hi)`` pair
    in 1D), ``counts`` the element counts, ``bc`` a tag or one tag per axis.
    """
    bounds = np.asarray(bounds, dtype=float)
    if bounds.ndim == 1:
        bounds = bounds[None, :]
    counts = np.atleast_1d(counts)
    if len(counts) == 1 and len(bounds) > 1:
        counts = np.repeat(counts, len(bounds))
    if isinstance(bc, str):
        bc = (bc,) * len(bounds)
    return Mesh(tuple(bounds[:, 0]), tuple(bounds[:, 1]), tuple(counts), tuple(bc))
