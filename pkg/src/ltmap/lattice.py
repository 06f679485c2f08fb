"""Periodic lattice geometry and the phi^4 action.

The target distribution lives on a D-dimensional hypercubic lattice with L
sites per dimension and periodic boundary conditions.  One real scalar sits
on each site, and the Euclidean action is

    S[phi] = sum_x [ 1/2 sum_mu (phi_{x+mu} - phi_x)^2
                     + m0^2/2 phi_x^2 + lambda0/4! phi_x^4 ]

with each directed bond (x, x+mu) counted once.  Sites are indexed row-major:
for D=2, site (row, col) has index row*L + col, and +mu means +1 in
coordinate mu.

All functions are pure and operate on float64 arrays; `action` and
`action_gradient` broadcast over leading batch dimensions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "LatticeGeometry",
    "PhiFourParams",
    "site_index",
    "site_coords",
    "action",
    "action_gradient",
    "local_conditional_unnorm_logdensity",
]


@dataclass(frozen=True)
class PhiFourParams:
    """Bare couplings: mass-squared m0_sq (may be negative) and quartic lambda0 >= 0."""

    m0_sq: float
    lambda0: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.m0_sq) and np.isfinite(self.lambda0)):
            raise ValueError("couplings must be finite")
        if self.lambda0 < 0:
            raise ValueError("lambda0 must be nonnegative (action unbounded below otherwise)")


@dataclass(frozen=True)
class LatticeGeometry:
    """Hypercubic periodic lattice: extent L per dimension, D dimensions.

    Attributes
    ----------
    N : total number of sites, L**D.
    plus, minus : (N, D) int arrays; plus[x, mu] is the site one step from x
        in the +mu direction under periodic wrap, minus[x, mu] the -mu step.
    """

    L: int
    D: int = 2
    N: int = field(init=False, compare=False)
    plus: np.ndarray = field(init=False, repr=False, compare=False)
    minus: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.L < 1 or self.D < 1:
            raise ValueError("L and D must be positive")
        shape = (self.L,) * self.D
        n = self.L**self.D
        coords = np.stack(np.unravel_index(np.arange(n), shape), axis=1)
        plus = np.empty((n, self.D), dtype=np.intp)
        minus = np.empty((n, self.D), dtype=np.intp)
        for mu in range(self.D):
            shifted = coords.copy()
            shifted[:, mu] = (shifted[:, mu] + 1) % self.L
            plus[:, mu] = np.ravel_multi_index(shifted.T, shape)
            shifted[:, mu] = (coords[:, mu] - 1) % self.L
            minus[:, mu] = np.ravel_multi_index(shifted.T, shape)
        plus.setflags(write=False)
        minus.setflags(write=False)
        object.__setattr__(self, "N", int(n))
        object.__setattr__(self, "plus", plus)
        object.__setattr__(self, "minus", minus)

    @property
    def neighbor_table(self) -> np.ndarray:
        """(N, 2D) array of neighbor site ids: +0..+D-1 then -0..-D-1."""
        return np.hstack([self.plus, self.minus])


def site_index(coords, geom: LatticeGeometry) -> int:
    """Row-major site id of a coordinate tuple; raises if out of range."""
    coords = tuple(int(c) for c in coords)
    if len(coords) != geom.D:
        raise ValueError(f"expected {geom.D} coordinates, got {len(coords)}")
    for c in coords:
        if not 0 <= c < geom.L:
            raise ValueError(f"coordinate {c} outside [0, {geom.L})")
    return int(np.ravel_multi_index(coords, (geom.L,) * geom.D))


def site_coords(site: int, geom: LatticeGeometry) -> tuple:
    """Inverse of site_index."""
    if not 0 <= site < geom.N:
        raise ValueError(f"site {site} outside [0, {geom.N})")
    return tuple(int(c) for c in np.unravel_index(site, (geom.L,) * geom.D))


def _check_field(phi, geom: LatticeGeometry) -> np.ndarray:
    phi = np.asarray(phi, dtype=np.float64)
    if phi.shape[-1] != geom.N:
        raise ValueError(f"field has {phi.shape[-1]} sites, geometry has {geom.N}")
    return phi


def action(phi, params: PhiFourParams, geom: LatticeGeometry):
    """Euclidean phi^4 action; broadcasts over leading batch axes of phi."""
    phi = _check_field(phi, geom)
    kinetic = np.zeros(phi.shape[:-1])
    for mu in range(geom.D):
        d = phi[..., geom.plus[:, mu]] - phi
        kinetic = kinetic + 0.5 * np.sum(d * d, axis=-1)
    phi_sq = phi * phi
    potential = 0.5 * params.m0_sq * np.sum(phi_sq, axis=-1)
    potential = potential + (params.lambda0 / 24.0) * np.sum(phi_sq * phi_sq, axis=-1)
    total = kinetic + potential
    return float(total) if total.ndim == 0 else total


def action_gradient(phi, params: PhiFourParams, geom: LatticeGeometry) -> np.ndarray:
    """dS/dphi_y = sum_mu (2 phi_y - phi_{y+mu} - phi_{y-mu}) + m0^2 phi_y + lambda0/6 phi_y^3."""
    phi = _check_field(phi, geom)
    grad = (2.0 * geom.D) * phi
    for mu in range(geom.D):
        grad = grad - phi[..., geom.plus[:, mu]] - phi[..., geom.minus[:, mu]]
    grad = grad + params.m0_sq * phi + (params.lambda0 / 6.0) * phi**3
    return grad


def local_conditional_unnorm_logdensity(site, value, neighbor_values, params: PhiFourParams,
                                        geom: LatticeGeometry):
    """Log of the unnormalized full conditional of one site given its 2D neighbors.

    Because the action couples a site only to its nearest neighbors, the
    conditional density of phi at `site` given everything else depends only
    on the 2D incident bond partners:

        log p(v | rest) = -[ sum_n 1/2 (n - v)^2 + m0^2/2 v^2 + lambda0/4! v^4 ] + const.

    `neighbor_values` must contain exactly 2D entries (with duplicates for
    L=2, where +mu and -mu coincide).  Vectorized over `value`.
    """
    if not 0 <= site < geom.N:
        raise ValueError(f"site {site} outside [0, {geom.N})")
    nv = np.asarray(neighbor_values, dtype=np.float64)
    if nv.shape != (2 * geom.D,):
        raise ValueError(f"expected {2 * geom.D} neighbor values, got shape {nv.shape}")
    v = np.asarray(value, dtype=np.float64)
    bonds = 0.5 * np.sum((nv - v[..., None]) ** 2, axis=-1)
    onsite = 0.5 * params.m0_sq * v**2 + (params.lambda0 / 24.0) * v**4
    out = -(bonds + onsite)
    return float(out) if out.ndim == 0 else out
