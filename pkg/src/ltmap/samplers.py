"""Asymptotically exact samplers: HMC baseline and map-proposal IMH.

Both samplers adapt a single scalar during burn-in only (HMC: leapfrog step
size toward ~70% acceptance; IMH: base-noise scale toward ~50%), then freeze
it, so the kept portion of every chain is a valid Markov chain for the target
Boltzmann distribution exp(-S).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lattice import LatticeGeometry, PhiFourParams, action, action_gradient
from .metrics import magnetization
from .transport import TriangularMap, map_forward

__all__ = [
    "HmcConfig",
    "ImhConfig",
    "ImhState",
    "ChainRecord",
    "leapfrog",
    "hmc_run",
    "imh_step",
    "imh_run",
]


@dataclass(frozen=True)
class HmcConfig:
    n_leapfrog: int = 10
    step_size: float = 0.1
    target_accept: float = 0.70
    n_total: int = 20000
    n_burnin: int = 2000
    seed: int = 0
    window: int = 100
    adapt_rate: float = 0.5

    def __post_init__(self):
        if self.n_leapfrog < 1 or self.step_size <= 0:
            raise ValueError("need n_leapfrog >= 1 and step_size > 0")
        if not 0 < self.target_accept < 1:
            raise ValueError("target_accept must be in (0, 1)")
        if not 0 <= self.n_burnin <= self.n_total:
            raise ValueError("need 0 <= n_burnin <= n_total")


@dataclass(frozen=True)
class ImhConfig:
    n_total: int = 20000
    n_burnin: int = 2000
    target_accept: float = 0.50
    scale: float = 1.0
    seed: int = 0
    window: int = 100
    adapt_rate: float = 0.5
    min_acceptance: float = 0.01
    chunk: int = 1024

    def __post_init__(self):
        if not 0 <= self.n_burnin <= self.n_total:
            raise ValueError("need 0 <= n_burnin <= n_total")
        if self.scale <= 0 or not 0 < self.target_accept < 1:
            raise ValueError("scale must be positive and target_accept in (0, 1)")


@dataclass(frozen=True)
class ChainRecord:
    """Kept (post burn-in) portion of a chain plus per-sample observables."""

    phi: np.ndarray
    accepted: np.ndarray
    actions: np.ndarray
    magnetizations: np.ndarray
    acceptance_rate: float
    tuned: float  # frozen step size (HMC) or proposal scale (IMH)
    sampler: str
    seed: int

    @property
    def length(self) -> int:
        return self.actions.size


def _make_record(phi, accepted, actions, sampler, tuned, seed) -> ChainRecord:
    phi = np.asarray(phi)
    accepted = np.asarray(accepted, dtype=bool)
    actions = np.asarray(actions)
    return ChainRecord(
        phi=phi, accepted=accepted, actions=actions,
        magnetizations=magnetization(phi) if phi.size else np.empty(0),
        acceptance_rate=float(accepted.mean()) if accepted.size else float("nan"),
        tuned=tuned, sampler=sampler, seed=seed)


def leapfrog(phi, momentum, eps: float, n_steps: int, params: PhiFourParams,
             geom: LatticeGeometry):
    """Volume-preserving, time-reversible leapfrog with force -action_gradient."""
    phi = np.array(phi, dtype=np.float64)
    p = np.array(momentum, dtype=np.float64)
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    p -= 0.5 * eps * action_gradient(phi, params, geom)
    for i in range(n_steps):
        phi += eps * p
        if i != n_steps - 1:
            p -= eps * action_gradient(phi, params, geom)
    p -= 0.5 * eps * action_gradient(phi, params, geom)
    return phi, p


def hmc_run(config: HmcConfig, params: PhiFourParams, geom: LatticeGeometry,
            init_phi=None) -> ChainRecord:
    """HMC chain with Gaussian momentum refresh and Metropolis correction.

    The step size adapts multiplicatively on burn-in windows,
    eps <- eps * exp(rate * (window acceptance - target)), then freezes.
    Non-finite trajectories count as rejections.
    """
    rng = np.random.default_rng(config.seed)
    phi = (rng.standard_normal(geom.N) if init_phi is None
           else np.array(init_phi, dtype=np.float64))
    s_cur = float(action(phi, params, geom))
    eps = config.step_size
    n_keep = config.n_total - config.n_burnin
    kept_phi = np.empty((n_keep, geom.N))
    kept_acc = np.empty(n_keep, dtype=bool)
    kept_act = np.empty(n_keep)
    win_acc = 0
    win_len = 0
    for step in range(config.n_total):
        p = rng.standard_normal(geom.N)
        h_cur = s_cur + 0.5 * float(p @ p)
        phi_new, p_new = leapfrog(phi, p, eps, config.n_leapfrog, params, geom)
        accepted = False
        if np.all(np.isfinite(phi_new)) and np.all(np.isfinite(p_new)):
            s_new = float(action(phi_new, params, geom))
            h_new = s_new + 0.5 * float(p_new @ p_new)
            if np.isfinite(h_new) and np.log(rng.uniform()) < h_cur - h_new:
                phi, s_cur = phi_new, s_new
                accepted = True
        if step < config.n_burnin:
            win_acc += accepted
            win_len += 1
            if win_len == config.window:
                eps *= float(np.exp(config.adapt_rate * (win_acc / win_len
                                                         - config.target_accept)))
                win_acc = 0
                win_len = 0
        else:
            k = step - config.n_burnin
            kept_phi[k] = phi
            kept_acc[k] = accepted
            kept_act[k] = s_cur
    return _make_record(kept_phi, kept_acc, kept_act, "hmc", eps, config.seed)


@dataclass(frozen=True)
class ImhState:
    """Current IMH chain state with the pieces of its cached log weight.

    The weight is stored as components (action, |z|^2, logdet) so it can be
    re-evaluated consistently when the proposal scale changes during burn-in:
    log w'(phi) = -S[phi] - log N(z; 0, scale^2 I) + logdet.
    """

    phi: np.ndarray
    action: float
    z_sqnorm: float
    logdet: float
    scale: float

    def log_weight(self, scale=None) -> float:
        s = self.scale if scale is None else scale
        n = self.phi.size
        log_q_base = -0.5 * self.z_sqnorm / s**2 - 0.5 * n * np.log(2.0 * np.pi * s**2)
        return -self.action - log_q_base + self.logdet


def _action_of(phi, params, geom, action_fn):
    return action_fn(phi) if action_fn is not None else action(phi, params, geom)


def imh_propose_batch(tmap: TriangularMap, n: int, scale: float, rng,
                      params: PhiFourParams, action_fn=None):
    """Draw n independent proposals: returns (phi, actions, z_sqnorm, logdet)."""
    z = scale * rng.standard_normal((n, tmap.n_sites))
    out = map_forward(tmap, z)
    actions = np.atleast_1d(_action_of(out.phi, params, tmap.geom, action_fn))
    return out.phi, actions, np.sum(z * z, axis=1), out.logdet


def imh_step(state: ImhState, tmap: TriangularMap, params: PhiFourParams, rng,
             action_fn=None):
    """One IMH transition; returns (new state, accepted flag).

    Proposals are independent draws pushed through the map; acceptance is
    min(1, w'_proposal / w'_current) with unnormalized importance weights, so
    any additive constant in the action cancels. Non-finite proposal weights
    are automatic rejections.
    """
    phi, actions, zsq, logdet = imh_propose_batch(tmap, 1, state.scale, rng,
                                                  params, action_fn)
    prop = ImhState(phi=phi[0], action=float(actions[0]), z_sqnorm=float(zsq[0]),
                    logdet=float(logdet[0]), scale=state.scale)
    lw_prop = prop.log_weight()
    if not np.isfinite(lw_prop):
        return state, False
    if np.log(rng.uniform()) < lw_prop - state.log_weight():
        return prop, True
    return state, False


def imh_run(config: ImhConfig, tmap: TriangularMap, params: PhiFourParams,
            action_fn=None) -> ChainRecord:
    """IMH chain driven by map proposals.

    Proposals within a burn-in window (and within post-burn-in chunks) are
    generated in one batched map evaluation; the accept/reject scan stays
    sequential, so the chain law is identical to stepwise simulation.

    The multiplicative scale walk explores during burn-in, but the frozen
    scale is the one whose window acceptance came closest to the target.
    Unlike a random-walk step size, IMH acceptance is not monotone in the
    proposal scale: it peaks where the proposal best matches the target, so
    when the target rate is unreachable the walk alone would shrink the scale
    without bound; selecting the best-scoring window keeps the frozen chain
    at the best achievable acceptance instead. Aborts if post-burn-in
    acceptance still collapses below config.min_acceptance (the map is then
    too poor to drive IMH).
    """
    rng = np.random.default_rng(config.seed)
    scale = config.scale
    best_scale = scale
    best_gap = np.inf
    # chain starts from one unconditional proposal draw
    phi0, act0, zsq0, ld0 = imh_propose_batch(tmap, 1, scale, rng, params, action_fn)
    state = ImhState(phi=phi0[0], action=float(act0[0]), z_sqnorm=float(zsq0[0]),
                     logdet=float(ld0[0]), scale=scale)
    n_keep = config.n_total - config.n_burnin
    kept_phi = np.empty((n_keep, tmap.n_sites))
    kept_acc = np.empty(n_keep, dtype=bool)
    kept_act = np.empty(n_keep)
    done = 0
    kept = 0
    kept_accepts = 0
    while done < config.n_total:
        in_burnin = done < config.n_burnin
        if in_burnin:
            batch = min(config.window, config.n_burnin - done)
        else:
            batch = min(config.chunk, config.n_total - done)
        phi_b, act_b, zsq_b, ld_b = imh_propose_batch(tmap, batch, scale, rng,
                                                      params, action_fn)
        log_u = np.log(rng.uniform(size=batch))
        lw_cur = state.log_weight(scale)
        accepted_in_batch = 0
        for i in range(batch):
            lw_prop = (-act_b[i]
                       + 0.5 * zsq_b[i] / scale**2
                       + 0.5 * tmap.n_sites * np.log(2.0 * np.pi * scale**2)
                       + ld_b[i])
            accept = bool(np.isfinite(lw_prop) and log_u[i] < lw_prop - lw_cur)
            if accept:
                state = ImhState(phi=phi_b[i], action=float(act_b[i]),
                                 z_sqnorm=float(zsq_b[i]), logdet=float(ld_b[i]),
                                 scale=scale)
                lw_cur = lw_prop
                accepted_in_batch += 1
            if not in_burnin:
                kept_phi[kept] = state.phi
                kept_acc[kept] = accept
                kept_act[kept] = state.action
                kept += 1
        done += batch
        if in_burnin:
            acc_win = accepted_in_batch / batch
            gap = abs(acc_win - config.target_accept)
            if gap <= best_gap:
                best_gap = gap
                best_scale = scale
            scale *= float(np.exp(config.adapt_rate
                                  * (acc_win - config.target_accept)))
            if done >= config.n_burnin:
                scale = best_scale
            state = ImhState(phi=state.phi, action=state.action,
                             z_sqnorm=state.z_sqnorm, logdet=state.logdet,
                             scale=scale)
        else:
            kept_accepts += accepted_in_batch
            if kept >= 1000 and kept_accepts / kept < config.min_acceptance:
                raise RuntimeError(
                    f"IMH acceptance {kept_accepts / kept:.2%} after {kept} kept "
                    f"steps; the map is too poor a proposal for this target")
    return _make_record(kept_phi, kept_acc, kept_act, "imh", scale, config.seed)
