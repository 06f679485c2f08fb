"""Sampling diagnostics and observables: ESS, magnetization, susceptibility,
energy density, bootstrap confidence intervals, and error-vs-sample-count
sweeps."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .lattice import LatticeGeometry, PhiFourParams, action

__all__ = [
    "BootstrapResult",
    "ErrorScalingRow",
    "ess",
    "importance_log_weights",
    "magnetization",
    "susceptibility",
    "energy",
    "bootstrap_ci",
    "error_vs_samples",
    "error_scaling_csv",
    "ENERGY_DEF",
]

# adopted convention, recorded in every output that reports energies
ENERGY_DEF = "action_density"


def importance_log_weights(actions, z, logdet, scale: float = 1.0) -> np.ndarray:
    """log w'(phi) = -S[phi] - log N(z; 0, scale^2 I) + logdet, up to log Z.

    `z` are the base draws that generated the batch and `logdet` the matching
    log-determinants, so -log N(z) + logdet is -log q(phi) for the push-forward
    proposal q.
    """
    z = np.asarray(z, dtype=np.float64)
    n = z.shape[-1]
    log_q_base = (-0.5 * np.sum(z * z, axis=-1) / scale**2
                  - 0.5 * n * np.log(2.0 * np.pi * scale**2))
    return -np.asarray(actions, dtype=np.float64) - log_q_base + np.asarray(logdet)


def ess(log_weights) -> float:
    """Normalized effective sample size (sum w)^2 / (sum w^2) / M in (0, 1].

    Stabilized by subtracting the max log-weight, which cancels exactly in
    the ratio; unnormalized weights therefore suffice.
    """
    lw = np.asarray(log_weights, dtype=np.float64)
    if lw.ndim != 1 or lw.size < 1:
        raise ValueError("log_weights must be a nonempty 1-D array")
    m = lw.max()
    if m == -np.inf:
        warnings.warn("all importance weights underflowed to zero")
        return 0.0
    # max subtraction pins the largest weight at 1, so the sums cannot vanish
    w = np.exp(lw - m)
    s1 = w.sum()
    s2 = (w * w).sum()
    return float(s1 * s1 / s2 / lw.size)


def magnetization(phi) -> np.ndarray:
    """|volume average of the field|; broadcasts over leading batch axes."""
    m = np.abs(np.mean(np.asarray(phi, dtype=np.float64), axis=-1))
    return float(m) if m.ndim == 0 else m


def susceptibility(mag_series, n_sites: int) -> float:
    """chi_2 = N (<M^2> - <M>^2) over a series of magnetization values."""
    m = np.asarray(mag_series, dtype=np.float64)
    if m.size < 1:
        raise ValueError("empty magnetization series")
    return float(n_sites * np.var(m))


def energy(phi, params: PhiFourParams, geom: LatticeGeometry):
    """Energy per site, defined as the action density S[phi]/N."""
    return np.asarray(action(phi, params, geom)) / geom.N


@dataclass(frozen=True)
class BootstrapResult:
    estimate: float
    lower: float
    upper: float
    n_resamples: int

    @property
    def half_width(self) -> float:
        """Half the interval width; one sigma for a 68% interval."""
        return 0.5 * (self.upper - self.lower)

    @property
    def err_lo(self) -> float:
        return self.estimate - self.lower

    @property
    def err_hi(self) -> float:
        return self.upper - self.estimate


def bootstrap_ci(series, statistic, n_resamples: int = 500, level: float = 0.68,
                 seed: int = 0) -> BootstrapResult:
    """Percentile bootstrap interval of `statistic` over a sample series.

    Resamples the series with replacement at full length; deterministic for a
    given seed.
    """
    x = np.asarray(series, dtype=np.float64)
    if x.ndim != 1 or x.size < 2:
        raise ValueError("series must be 1-D with at least 2 entries")
    if not 0 < level <= 1:
        raise ValueError("level must be in (0, 1]")
    rng = np.random.default_rng(seed)
    stats = np.empty(n_resamples)
    for i in range(n_resamples):
        stats[i] = statistic(x[rng.integers(0, x.size, size=x.size)])
    alpha = 0.5 * (1.0 - level)
    lo, hi = np.quantile(stats, [alpha, 1.0 - alpha])
    return BootstrapResult(estimate=float(statistic(x)), lower=float(lo),
                           upper=float(hi), n_resamples=n_resamples)


@dataclass(frozen=True)
class ErrorScalingRow:
    M: int
    estimate: float
    err_lo: float
    err_hi: float

    @property
    def err(self) -> float:
        return 0.5 * (self.err_lo + self.err_hi)


def error_vs_samples(series, statistic, sizes, n_resamples: int = 500,
                     seed: int = 0) -> list:
    """Bootstrap error of `statistic` on chain prefixes of the given sizes.

    Prefixes (not random subsets) model accumulating samples from a running
    chain. Raises if any requested size exceeds the chain length.
    """
    x = np.asarray(series, dtype=np.float64)
    sizes = sorted(int(m) for m in sizes)
    if not sizes or sizes[0] < 2:
        raise ValueError("sizes must contain integers >= 2")
    if sizes[-1] > x.size:
        raise ValueError(f"requested size {sizes[-1]} exceeds chain length {x.size}")
    rows = []
    for i, m in enumerate(sizes):
        r = bootstrap_ci(x[:m], statistic, n_resamples=n_resamples, seed=seed + i)
        rows.append(ErrorScalingRow(M=m, estimate=r.estimate,
                                    err_lo=r.err_lo, err_hi=r.err_hi))
    return rows


def error_scaling_csv(rows, statistic_name: str, sampler_name: str) -> str:
    """CSV block for error-scaling rows: M,estimate,err_lo,err_hi,statistic,sampler."""
    lines = ["M,estimate,err_lo,err_hi,statistic,sampler"]
    for r in rows:
        lines.append(f"{r.M},{r.estimate:.10g},{r.err_lo:.10g},{r.err_hi:.10g},"
                     f"{statistic_name},{sampler_name}")
    return "\n".join(lines) + "\n"
