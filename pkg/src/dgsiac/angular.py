"""Discrete-ordinates sets and the discrete angular average."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics_core import gauss_legendre

__all__ = [
    "OrdinateSet",
    "ordinates_slab",
    "ordinates_sphere_cl",
    "angular_average",
    "parse_ordinates",
]


@dataclass(frozen=True)
class OrdinateSet:
    """Directions, positive weights and the measure m(S) they sum to.

    ``directions`` has shape ``(n, dim)``; for slab geometry ``dim == 1`` and
    the single column holds the direction cosines.
    """

    directions: np.ndarray
    weights: np.ndarray
    measure: float
    name: str = ""

    def __post_init__(self):
        d = np.atleast_2d(np.asarray(self.directions, dtype=float))
        if d.shape[0] == 1 and len(self.weights) != 1:
            d = d.T
        w = np.asarray(self.weights, dtype=float)
        if d.shape[0] != w.shape[0]:
            raise ValueError("one weight per direction required")
        if np.any(w <= 0.0):
            raise ValueError("ordinate weights must be strictly positive")
        object.__setattr__(self, "directions", d)
        object.__setattr__(self, "weights", w)

    def __len__(self):
        return len(self.weights)

    @property
    def dim(self):
        return self.directions.shape[1]

    def average(self, values, axis=0):
        """(1/m(S)) sum_j w_j values_j along ``axis``."""
        values = np.asarray(values, dtype=float)
        if values.shape[axis] != len(self):
            raise ValueError(
                f"expected {len(self)} values along axis {axis}, got {values.shape[axis]}"
            )
        return np.tensordot(self.weights, values, axes=([0], [axis])) / self.measure

    def in_plane(self):
        """Project directions onto the (x, y) plane, merging duplicates.

        Ordinates mirrored in Omega_z give identical planar transport, so
        their weights are summed.  The measure is unchanged.
        """
        if self.dim < 3:
            return self
        planar = self.directions[:, :2]
        keys = np.round(planar, 13)
        _, first, inverse = np.unique(keys, axis=0, return_index=True, return_inverse=True)
        inverse = inverse.ravel()
        weights = np.zeros(len(first))
        np.add.at(weights, inverse, self.weights)
        # keep the original ordering of first appearance
        order = np.argsort(first)
        return OrdinateSet(planar[first[order]], weights[order], self.measure, self.name)


def ordinates_slab(n):
    """Gauss-Legendre cosines on [-1, 1]; weights sum to 2."""
    if n < 2:
        raise ValueError(f"slab ordinate count must be >= 2, got {n}")
    q = gauss_legendre(n)
    return OrdinateSet(q.nodes[:, None], q.weights, 2.0, f"gl:{n}")


def ordinates_sphere_cl(n_azimuth, n_polar):
    """Chebyshev-Legendre product rule on the unit sphere.

    Equispaced azimuths ``phi_i = (2i + 1) pi / n_azimuth`` with uniform
    weights times Gauss-Legendre polar cosines; weights sum to 4 pi.
    """
    if n_azimuth < 4 or n_polar < 2:
        raise ValueError("CL rule requires n_azimuth >= 4 and n_polar >= 2")
    q = gauss_legendre(n_polar)
    phi = (2.0 * np.arange(n_azimuth) + 1.0) * np.pi / n_azimuth
    mu = np.repeat(q.nodes, n_azimuth)
    ph = np.tile(phi, n_polar)
    s = np.sqrt(1.0 - mu**2)
    directions = np.column_stack([s * np.cos(ph), s * np.sin(ph), mu])
    weights = np.repeat(q.weights, n_azimuth) * (2.0 * np.pi / n_azimuth)
    return OrdinateSet(directions, weights, 4.0 * np.pi, f"cl:{n_azimuth},{n_polar}")


def angular_average(ordinates, values):
    """Discrete average (1/m(S)) sum_j w_j values_j over the first axis."""
    values = np.asarray(values, dtype=float)
    if values.shape[0] != len(ordinates):
        raise ValueError(
            f"got {values.shape[0]} values for {len(ordinates)} ordinates"
        )
    return ordinates.average(values, axis=0)


def parse_ordinates(spec):
    """Build an ordinate set from ``"gl:N"`` or ``"cl:P,Q"``."""
    kind, _, args = spec.strip().partition(":")
    kind = kind.lower()
    try:
        nums = [int(a) for a in args.split(",")]
    except ValueError:
        raise ValueError(f"bad ordinate spec {spec!r}") from None
    if kind == "gl" and len(nums) == 1:
        return ordinates_slab(nums[0])
    if kind == "cl" and len(nums) == 2:
        return ordinates_sphere_cl(*nums)
    raise ValueError(f"bad ordinate spec {spec!r}; expected 'gl:N' or 'cl:P,Q'")
