"""Reverse-KL training of the transport map.

The objective is the variational free energy

    L(theta) = E_{z ~ N(0, I)} [ S[T_theta(z)] - log |det J_T(z)| ],

the KL divergence from the push-forward to the Boltzmann distribution up to
an additive constant. No target samples are needed: every step draws a fresh
base batch, pushes it through the map, and backpropagates the action gradient
and the log-determinant term.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .lattice import LatticeGeometry, PhiFourParams, action, action_gradient
from .metrics import ess, importance_log_weights
from .nn import AdamWState, CosineSchedule, adamw_step, clip_global_norm, cosine_lr
from .transport import (TriangularMap, map_backward, map_forward, map_forward_cached,
                        map_get_params, map_n_params, map_set_params)

__all__ = [
    "TrainConfig",
    "TrainRecord",
    "reverse_kl_loss",
    "train",
    "train_record_csv",
]


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 3000
    batch_size: int = 256
    lr: float = 1e-3
    lr_min: float = 1e-6
    weight_decay: float = 1e-5
    clip_norm: float = 10.0
    seed: int = 0
    ess_every: int = 50
    ess_batch: int = 1024
    checkpoint_every: int = 0  # 0 = final checkpoint only

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")
        if self.ess_every < 1 or self.ess_batch < 1:
            raise ValueError("ESS cadence and batch must be >= 1")


@dataclass
class TrainRecord:
    """Per-epoch training trace; ess is NaN on epochs without an evaluation."""

    loss: np.ndarray
    lr: np.ndarray
    ess: np.ndarray
    wall_time: float = 0.0

    @property
    def n_epochs(self) -> int:
        return self.loss.size

    @property
    def final_ess(self) -> float:
        evaluated = self.ess[np.isfinite(self.ess)]
        if evaluated.size == 0:
            raise ValueError("no ESS evaluations recorded")
        return float(evaluated[-1])


def _loss_and_cotangents(out, params: PhiFourParams, geom: LatticeGeometry):
    """Mean reverse-KL loss over the batch and its (dphi, dlogdet) cotangents."""
    B = out.phi.shape[0]
    actions = action(out.phi, params, geom)
    loss = float(np.mean(actions) - np.mean(out.logdet))
    dphi = action_gradient(out.phi, params, geom) / B
    dlogdet = np.full(B, -1.0 / B)
    return loss, dphi, dlogdet


def reverse_kl_loss(tmap: TriangularMap, z: np.ndarray, params: PhiFourParams):
    """Loss and cotangents on one base batch: returns (loss, (dphi, dlogdet))."""
    out = map_forward(tmap, z)
    loss, dphi, dlogdet = _loss_and_cotangents(out, params, tmap.geom)
    return loss, (dphi, dlogdet)


def model_ess(tmap: TriangularMap, z_eval: np.ndarray, params: PhiFourParams) -> float:
    """ESS of importance weights from the current map on a fixed base batch."""
    out = map_forward(tmap, z_eval)
    lw = importance_log_weights(action(out.phi, params, tmap.geom), z_eval, out.logdet)
    return ess(lw)


def train(tmap: TriangularMap, params: PhiFourParams, config: TrainConfig,
          out_dir=None) -> TrainRecord:
    """Train the map in place; returns the per-epoch record.

    Deterministic for a given config seed. With out_dir set, streams
    `train.csv` and writes "ltm-v1" checkpoints (`map.ltm` at the end, plus
    periodic copies when checkpoint_every > 0). A non-finite loss or gradient
    aborts with the parameters rolled back to the last finite epoch.
    """
    from .io import save_map  # local import: io depends on transport, not on training

    geom = tmap.geom
    rng = np.random.default_rng(config.seed)
    z_eval = rng.standard_normal((config.ess_batch, geom.N))
    schedule = CosineSchedule(lr0=config.lr, lr_min=config.lr_min,
                              total=max(config.epochs, 1))
    opt = AdamWState(n_params=map_n_params(tmap), weight_decay=config.weight_decay)
    losses = np.empty(config.epochs)
    lrs = np.empty(config.epochs)
    ess_trace = np.full(config.epochs, np.nan)

    csv_fh = None
    ckpt_path = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        ckpt_path = out_dir / "map.ltm"
        csv_fh = open(out_dir / "train.csv", "w", encoding="utf-8")
        csv_fh.write("epoch,loss,lr,ess\n")

    start = time.perf_counter()
    try:
        for epoch in range(config.epochs):
            snapshot = map_get_params(tmap)
            lr = cosine_lr(schedule, epoch)
            z = rng.standard_normal((config.batch_size, geom.N))
            try:
                out, cache = map_forward_cached(tmap, z)
                loss, dphi, dlogdet = _loss_and_cotangents(out, params, geom)
                if not np.isfinite(loss):
                    raise FloatingPointError(f"non-finite loss at epoch {epoch}")
                grad = map_backward(tmap, cache, dphi, dlogdet)
            except FloatingPointError:
                map_set_params(tmap, snapshot)
                if ckpt_path is not None:
                    save_map(ckpt_path, tmap)
                raise
            grad = clip_global_norm(grad, config.clip_norm)
            map_set_params(tmap, adamw_step(opt, snapshot, grad, lr))

            losses[epoch] = loss
            lrs[epoch] = lr
            ess_str = ""
            if (epoch + 1) % config.ess_every == 0 or epoch == config.epochs - 1:
                ess_trace[epoch] = model_ess(tmap, z_eval, params)
                ess_str = f"{ess_trace[epoch]:.8g}"
            if csv_fh is not None:
                csv_fh.write(f"{epoch},{loss:.10g},{lr:.10g},{ess_str}\n")
            if (ckpt_path is not None and config.checkpoint_every
                    and (epoch + 1) % config.checkpoint_every == 0):
                save_map(out_dir / f"map_epoch{epoch + 1:06d}.ltm", tmap)
        if ckpt_path is not None:
            save_map(ckpt_path, tmap)
    finally:
        if csv_fh is not None:
            csv_fh.close()
    return TrainRecord(loss=losses, lr=lrs, ess=ess_trace,
                       wall_time=time.perf_counter() - start)


def train_record_csv(record: TrainRecord) -> str:
    """CSV text matching the streamed train.csv: epoch,loss,lr,ess."""
    lines = ["epoch,loss,lr,ess"]
    for e in range(record.n_epochs):
        ess_str = "" if not np.isfinite(record.ess[e]) else f"{record.ess[e]:.8g}"
        lines.append(f"{e},{record.loss[e]:.10g},{record.lr[e]:.10g},{ess_str}")
    return "\n".join(lines) + "\n"
