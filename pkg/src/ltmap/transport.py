"""Sparse triangular transport map with monotone rectified components.

Component j transforms one base variable z_j into the field value at site
perm[j], conditioned on previously generated field values:

    phi_j = f_j(ctx) + z_j * sum_q w_q * Softplus(g_j(t_q * z_j, ctx)),

the Gauss-Legendre discretization of f_j(ctx) + int_0^{z_j} Softplus(g_j(s,
ctx)) ds. The integrand is positive, so each component is strictly increasing
in z_j and the map has a lower-triangular Jacobian in label order with

    d phi_j / d z_j = Softplus(g_j(z_j, ctx)).

Contexts gather ALREADY-COMPUTED outputs phi at the conditioning labels, so
sampling is a single sweep in label order and inversion never needs to
sequence: contexts come straight from the given field.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .lattice import LatticeGeometry
from .nn import (Mlp, make_mlp, mlp_backward, mlp_forward_cached, mlp_param_arrays,
                 softplus_inv)
from .ordering import (ConditioningSets, NeighborhoodSpec, Ordering, conditioning_sets,
                       dense_conditioning_sets, make_ordering)

__all__ = [
    "QuadratureRule",
    "TriangularMap",
    "MapOutput",
    "gauss_legendre",
    "make_triangular_map",
    "map_n_params",
    "map_get_params",
    "map_set_params",
    "component_forward",
    "component_inverse",
    "map_forward",
    "map_forward_cached",
    "map_backward",
    "map_inverse",
    "map_forward_backward",
    "model_logdensity",
]

MAP_MODES = ("sparse", "dense")


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss-Legendre nodes/weights on [0, 1]."""

    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=np.float64)
        weights = np.asarray(self.weights, dtype=np.float64)
        if nodes.shape != weights.shape or nodes.ndim != 1 or nodes.size < 1:
            raise ValueError("nodes and weights must be equal-length 1-D arrays")
        if np.any(nodes <= 0) or np.any(nodes >= 1) or np.any(np.diff(nodes) <= 0):
            raise ValueError("nodes must be strictly increasing inside (0, 1)")
        if np.any(weights <= 0):
            raise ValueError("weights must be positive")
        nodes.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    @property
    def Q(self) -> int:
        return self.nodes.size


def gauss_legendre(Q: int) -> QuadratureRule:
    """Q-point Gauss-Legendre rule mapped from [-1, 1] to [0, 1]."""
    if Q < 1:
        raise ValueError("Q must be >= 1")
    x, w = np.polynomial.legendre.leggauss(Q)
    return QuadratureRule(nodes=(x + 1.0) / 2.0, weights=w / 2.0)


@dataclass
class TriangularMap:
    """Parameters and structure of the full map.

    f[j] maps the |C(j)| context values to the component shift; g[j] maps
    (z, context) to the pre-rectifier integrand. Labels run over sites in
    `ordering` order; `cond.sets[j]` lists the earlier labels feeding
    component j.
    """

    geom: LatticeGeometry
    ordering: Ordering
    cond: ConditioningSets
    f: list
    g: list
    quad: QuadratureRule
    mode: str = "sparse"
    ordering_name: str = "lexicographic"
    neighborhood_order: int = 1
    start_site: int = 0
    hidden: tuple = (64, 64, 64)
    _offsets: list = field(default=None, repr=False)

    def __post_init__(self):
        n = self.geom.N
        if self.mode not in MAP_MODES:
            raise ValueError(f"mode must be one of {MAP_MODES}")
        if not (len(self.f) == len(self.g) == self.cond.n_sites == n):
            raise ValueError("per-label networks must match the site count")
        for j in range(n):
            c = self.cond.sets[j].size
            if self.f[j].in_dim != c or self.f[j].out_dim != 1:
                raise ValueError(f"f[{j}] must map {c} -> 1")
            if self.g[j].in_dim != c + 1 or self.g[j].out_dim != 1:
                raise ValueError(f"g[{j}] must map {c + 1} -> 1")
            if self.g[j].output_activation != "softplus":
                raise ValueError(f"g[{j}] must have a softplus output")
        # flat-vector offsets of every parameter array, declaration order:
        # for each label, f arrays then g arrays
        offsets = []
        pos = 0
        for j in range(n):
            for arr in mlp_param_arrays(self.f[j]) + mlp_param_arrays(self.g[j]):
                offsets.append((pos, arr))
                pos += arr.size
        self._offsets = offsets
        self._n_params = pos

    @property
    def n_sites(self) -> int:
        return self.geom.N


def make_triangular_map(geom: LatticeGeometry, ordering_name: str = "checkerboard",
                        neighborhood_order: int = 2, mode: str = "sparse",
                        hidden=(64, 64, 64), quad_q: int = 15, rng=None,
                        start_site: int = 0, g_final_scale: float = 1e-2) -> TriangularMap:
    """Build a freshly initialized map.

    The initial map is near-identity: every f head starts at zero and every g
    head starts at Softplus(bias) = 1 plus small random weights, so initial
    samples are approximately standard normal with near-zero log-determinant.
    Pass g_final_scale=0 for the exact identity.
    """
    if rng is None:
        rng = np.random.default_rng()
    ordering = make_ordering(ordering_name, geom, start_site=start_site)
    if mode == "sparse":
        cond = conditioning_sets(ordering, NeighborhoodSpec(order=neighborhood_order), geom)
    elif mode == "dense":
        cond = dense_conditioning_sets(geom.N)
    else:
        raise ValueError(f"mode must be one of {MAP_MODES}")
    f_nets, g_nets = [], []
    for j in range(geom.N):
        c = cond.sets[j].size
        f_nets.append(make_mlp(c, 1, hidden=hidden if c else (), rng=rng,
                               final_weight_scale=0.0))
        g_nets.append(make_mlp(c + 1, 1, hidden=hidden, rng=rng,
                               output_activation="softplus",
                               final_weight_scale=g_final_scale,
                               final_bias=softplus_inv(1.0)))
    return TriangularMap(geom=geom, ordering=ordering, cond=cond, f=f_nets, g=g_nets,
                         quad=gauss_legendre(quad_q), mode=mode,
                         ordering_name=ordering_name,
                         neighborhood_order=neighborhood_order,
                         start_site=start_site, hidden=tuple(hidden))


def map_n_params(tmap: TriangularMap) -> int:
    return tmap._n_params


def map_get_params(tmap: TriangularMap) -> np.ndarray:
    """All trainable scalars as one vector, declaration order."""
    out = np.empty(tmap._n_params)
    for pos, arr in tmap._offsets:
        out[pos:pos + arr.size] = arr.ravel()
    return out


def map_set_params(tmap: TriangularMap, vec: np.ndarray):
    """Write a flat vector back into the live parameter arrays."""
    vec = np.asarray(vec, dtype=np.float64)
    if vec.shape != (tmap._n_params,):
        raise ValueError(f"expected {tmap._n_params} parameters, got {vec.shape}")
    for pos, arr in tmap._offsets:
        arr[...] = vec[pos:pos + arr.size].reshape(arr.shape)


@dataclass(frozen=True)
class MapOutput:
    """phi: (B, N) fields in site order; logdet: (B,) log-Jacobian-determinants."""

    phi: np.ndarray
    logdet: np.ndarray


def _component_batch(tmap: TriangularMap, j: int, zj: np.ndarray, ctx: np.ndarray,
                     want_cache: bool):
    """Evaluate component j on a batch.

    Runs g on Q+1 stacked copies of each sample: the Q quadrature nodes
    t_q * z and, as the extra last row, z itself, whose rectified output is
    the analytic diagonal derivative. Returns (phi_j, diag, cache).
    """
    B = zj.shape[0]
    Q = tmap.quad.Q
    c = ctx.shape[1]
    t_ext = np.concatenate([tmap.quad.nodes, [1.0]])
    g_in = np.empty((B, Q + 1, c + 1))
    g_in[:, :, 0] = zj[:, None] * t_ext
    g_in[:, :, 1:] = ctx[:, None, :]
    f_out, f_cache = mlp_forward_cached(tmap.f[j], ctx)
    g_out, g_cache = mlp_forward_cached(tmap.g[j], g_in.reshape(B * (Q + 1), c + 1))
    r = g_out.reshape(B, Q + 1)
    integral = r[:, :Q] @ tmap.quad.weights
    phi_j = f_out[:, 0] + zj * integral
    diag = r[:, Q]
    cache = (f_cache, g_cache, integral, diag) if want_cache else None
    return phi_j, diag, cache


def component_forward(tmap: TriangularMap, j: int, z_j: float, context):
    """Scalar component evaluation: returns (phi_j, d phi_j / d z_j)."""
    ctx = np.asarray(context, dtype=np.float64).reshape(1, -1)
    c = tmap.cond.sets[j].size
    if ctx.shape[1] != c:
        raise ValueError(f"component {j} expects {c} context values, got {ctx.shape[1]}")
    if not (np.isfinite(z_j) and np.all(np.isfinite(ctx))):
        raise ValueError("non-finite component inputs")
    phi_j, diag, _ = _component_batch(tmap, j, np.array([float(z_j)]), ctx, False)
    return float(phi_j[0]), float(diag[0])


def _forward_impl(tmap: TriangularMap, z: np.ndarray, want_cache: bool):
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2 or z.shape[1] != tmap.n_sites:
        raise ValueError(f"expected z of shape (B, {tmap.n_sites}), got {z.shape}")
    B, n = z.shape
    phi_lab = np.empty((B, n))
    logdet = np.zeros(B)
    caches = [] if want_cache else None
    for j in range(n):
        ctx = phi_lab[:, tmap.cond.sets[j]]
        phi_j, diag, cache = _component_batch(tmap, j, z[:, j], ctx, want_cache)
        if not (np.all(np.isfinite(phi_j)) and np.all(diag > 0)):
            raise FloatingPointError(f"non-finite output at label {j}")
        phi_lab[:, j] = phi_j
        logdet += np.log(diag)
        if want_cache:
            caches.append(cache)
    phi_site = np.empty_like(phi_lab)
    phi_site[:, tmap.ordering.perm] = phi_lab
    return MapOutput(phi=phi_site, logdet=logdet), phi_lab, caches


def map_forward(tmap: TriangularMap, z: np.ndarray) -> MapOutput:
    """Push a (B, N) batch of base variables (label order) through the map."""
    return _forward_impl(tmap, z, want_cache=False)[0]


def model_logdensity(tmap: TriangularMap, z: np.ndarray, logdet: np.ndarray) -> np.ndarray:
    """log p(phi) by change of variables from the standard normal base."""
    z = np.asarray(z, dtype=np.float64)
    n = z.shape[-1]
    log_base = -0.5 * np.sum(z * z, axis=-1) - 0.5 * n * np.log(2.0 * np.pi)
    return log_base - np.asarray(logdet, dtype=np.float64)


def map_forward_cached(tmap: TriangularMap, z: np.ndarray):
    """Forward pass that keeps per-component intermediates for map_backward."""
    out, _, caches = _forward_impl(tmap, z, want_cache=True)
    return out, (np.asarray(z, dtype=np.float64), caches)


def map_backward(tmap: TriangularMap, cache, dphi: np.ndarray,
                 dlogdet: np.ndarray) -> np.ndarray:
    """Gradient of (dphi . phi + dlogdet . logdet) with respect to all parameters.

    `cache` comes from map_forward_cached and is consumed (freed) here. dphi
    is in SITE order, matching map_forward output. Includes the indirect
    paths where an early output feeds later components as context.
    """
    z, caches = cache
    dphi = np.asarray(dphi, dtype=np.float64)
    dlogdet = np.asarray(dlogdet, dtype=np.float64)
    B, n = z.shape
    if dphi.shape != (B, n) or dlogdet.shape != (B,):
        raise ValueError("cotangent shapes do not match forward output")
    Q = tmap.quad.Q
    grad = np.zeros(tmap._n_params)
    dphi_lab = dphi[:, tmap.ordering.perm].copy()
    pos_iter = iter(tmap._offsets)
    label_slots = []
    for j in range(n):
        n_f = len(mlp_param_arrays(tmap.f[j]))
        n_g = len(mlp_param_arrays(tmap.g[j]))
        slots = [next(pos_iter) for _ in range(n_f + n_g)]
        label_slots.append((slots[:n_f], slots[n_f:]))
    for j in range(n - 1, -1, -1):
        f_cache, g_cache, integral, diag = caches[j]
        caches[j] = None  # free as consumed
        dphi_j = dphi_lab[:, j]
        # phi_j = f_j(ctx) + z_j * (r[:, :Q] @ w); logdet += log r[:, Q]
        dr = np.empty((B, Q + 1))
        dr[:, :Q] = (dphi_j * z[:, j])[:, None] * tmap.quad.weights
        dr[:, Q] = dlogdet / diag
        g_dws, g_dbs, g_dx = mlp_backward(tmap.g[j], g_cache, dr.reshape(B * (Q + 1), 1))
        f_dws, f_dbs, f_dx = mlp_backward(tmap.f[j], f_cache, dphi_j[:, None])
        dctx = g_dx.reshape(B, Q + 1, -1)[:, :, 1:].sum(axis=1) + f_dx
        cset = tmap.cond.sets[j]
        if cset.size:
            dphi_lab[:, cset] += dctx
        f_slots, g_slots = label_slots[j]
        for (pos, arr), d in zip(f_slots, _interleave(f_dws, f_dbs)):
            grad[pos:pos + arr.size] += d.ravel()
        for (pos, arr), d in zip(g_slots, _interleave(g_dws, g_dbs)):
            grad[pos:pos + arr.size] += d.ravel()
        if not np.all(np.isfinite(grad)):
            raise FloatingPointError(f"non-finite gradient at label {j}")
    return grad


def map_forward_backward(tmap: TriangularMap, z: np.ndarray, dphi: np.ndarray,
                         dlogdet: np.ndarray):
    """One-call forward plus parameter gradient; returns (MapOutput, gradient)."""
    out, cache = map_forward_cached(tmap, z)
    return out, map_backward(tmap, cache, dphi, dlogdet)


def _interleave(dws, dbs):
    out = []
    for dw, db in zip(dws, dbs):
        out.append(dw)
        out.append(db)
    return out


def component_inverse(tmap: TriangularMap, j: int, phi_j, context,
                      tol: float = 1e-10, max_doublings: int = 200):
    """Solve component j for z given phi_j and context, batched.

    Expands a bracket by doubling, bisects it down, then polishes with
    Newton steps using the analytic derivative; the result satisfies
    |forward(z) - phi_j| < tol.
    """
    ctx = np.atleast_2d(np.asarray(context, dtype=np.float64))
    target = np.atleast_1d(np.asarray(phi_j, dtype=np.float64))
    B = target.shape[0]
    if ctx.shape != (B, tmap.cond.sets[j].size):
        raise ValueError("context shape does not match component and batch")

    def fwd(zv):
        return _component_batch(tmap, j, zv, ctx, False)[:2]

    # residual(z) = forward(z) - target is strictly increasing in z
    lo = np.full(B, -1.0)
    hi = np.full(B, 1.0)
    r_lo = fwd(lo)[0] - target
    r_hi = fwd(hi)[0] - target
    for _ in range(max_doublings):
        bad_lo = r_lo > 0
        bad_hi = r_hi < 0
        if not (bad_lo.any() or bad_hi.any()):
            break
        lo[bad_lo] *= 2.0
        hi[bad_hi] *= 2.0
        if bad_lo.any():
            r_lo[bad_lo] = fwd(lo)[0][bad_lo] - target[bad_lo]
        if bad_hi.any():
            r_hi[bad_hi] = fwd(hi)[0][bad_hi] - target[bad_hi]
    else:
        raise FloatingPointError(f"bracket expansion failed for component {j}")
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        r_mid = fwd(mid)[0] - target
        above = r_mid > 0
        hi = np.where(above, mid, hi)
        lo = np.where(above, lo, mid)
    zv = 0.5 * (lo + hi)
    for _ in range(10):
        val, diag = fwd(zv)
        resid = val - target
        if np.all(np.abs(resid) < tol):
            break
        step = resid / diag
        znew = zv - step
        # keep iterates inside the verified bracket
        znew = np.clip(znew, lo, hi)
        zv = znew
    else:
        val, _ = fwd(zv)
        resid = val - target
        if not np.all(np.abs(resid) < tol):
            raise FloatingPointError(f"inversion stalled for component {j}")
    return zv if np.ndim(phi_j) else float(zv[0])


def map_inverse(tmap: TriangularMap, phi: np.ndarray) -> np.ndarray:
    """Recover z from a (B, N) batch of fields in site order.

    Contexts are field values, so every component inverts independently.
    """
    phi = np.asarray(phi, dtype=np.float64)
    if phi.ndim != 2 or phi.shape[1] != tmap.n_sites:
        raise ValueError(f"expected phi of shape (B, {tmap.n_sites}), got {phi.shape}")
    phi_lab = phi[:, tmap.ordering.perm]
    z = np.empty_like(phi_lab)
    for j in range(tmap.n_sites):
        z[:, j] = component_inverse(tmap, j, phi_lab[:, j], phi_lab[:, tmap.cond.sets[j]])
    return z
