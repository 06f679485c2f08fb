"""Command-line pipelines.

Commands: `train` (fit a map, emit train.csv + checkpoint), `sweep-orderings`
(all ordering x neighborhood-order cells, merged ESS table), `sample` (HMC or
map-proposal IMH chain), `compare` (error-vs-samples tables from saved
chains), `fillin` (conditioning-set statistics table).

Exit codes: 0 success, 2 usage or configuration error, 3 data or
compatibility error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .config import (ConfigError, RunConfig, load_run_config, render_config,
                     smoke_overrides)
from .io import ChainFormatError, CheckpointError, load_chain, load_map, save_chain, save_map
from .lattice import LatticeGeometry, PhiFourParams
from .metrics import ENERGY_DEF, error_vs_samples, susceptibility
from .ordering import fill_in_csv, fill_in_stats
from .samplers import HmcConfig, ImhConfig, hmc_run, imh_run
from .training import TrainConfig, train
from .transport import make_triangular_map

__all__ = ["run", "build_parser"]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="ltmap",
        description="Sparse triangular transport-map sampling for 2D phi^4 lattices")
    sub = p.add_subparsers(dest="command", required=True)

    def add_common(sp, needs_config=True):
        if needs_config:
            sp.add_argument("--config", type=Path, default=None,
                            help="run configuration file")
            sp.add_argument("--smoke", action="store_true",
                            help="reduced-scale profile: L=4, 200 epochs, 2000-step chains")
        sp.add_argument("--seed", type=int, default=None, help="override run.seed")
        sp.add_argument("--out", type=Path, default=None, help="output directory")

    sp = sub.add_parser("train", help="train a transport map")
    add_common(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("sweep-orderings",
                        help="train every ordering x neighborhood-order cell")
    add_common(sp)
    sp.set_defaults(func=cmd_sweep_orderings)

    sp = sub.add_parser("sample", help="run a sampler and save the chain")
    add_common(sp)
    sp.add_argument("--sampler", choices=("imh", "hmc"), required=True)
    sp.add_argument("--checkpoint", type=Path, default=None,
                    help="trained map (required for imh)")
    sp.set_defaults(func=cmd_sample)

    sp = sub.add_parser("compare", help="error-vs-samples tables from saved chains")
    sp.add_argument("chains", nargs="+", type=Path,
                    help="chain directories or chain.csv files")
    sp.add_argument("--sizes", type=str, default=None,
                    help="comma-separated sample counts (default: geometric up to chain length)")
    add_common(sp, needs_config=False)
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("fillin", help="conditioning-set statistics table")
    sp.add_argument("--sizes", type=str, default="4,8,12,16",
                    help="comma-separated lattice sizes")
    sp.add_argument("--orderings", type=str,
                    default="lexicographic,checkerboard,maxmin")
    add_common(sp, needs_config=False)
    sp.set_defaults(func=cmd_fillin)
    return p


def _load_config(args, require_L=True) -> RunConfig:
    overrides = {}
    if getattr(args, "smoke", False):
        overrides.update(smoke_overrides())
        require_L = False
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["out"] = str(args.out)
    return load_run_config(path=args.config, overrides=overrides, require_L=require_L)


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "effective_config.toml").write_text(render_config(cfg), encoding="utf-8")
    return out


def _build_map(cfg: RunConfig, geom: LatticeGeometry, seed_key: int = 1):
    rng = np.random.default_rng(np.random.SeedSequence(entropy=cfg.seed,
                                                       spawn_key=(seed_key,)))
    return make_triangular_map(
        geom, ordering_name=cfg.ordering, neighborhood_order=cfg.neighborhood_order,
        mode=cfg.mode, hidden=cfg.hidden, quad_q=cfg.quad_q, rng=rng,
        start_site=cfg.start_site)


def _train_config(cfg: RunConfig, seed: int) -> TrainConfig:
    return TrainConfig(epochs=cfg.epochs, batch_size=cfg.batch_size, lr=cfg.lr,
                       lr_min=cfg.lr_min, weight_decay=cfg.weight_decay,
                       clip_norm=cfg.clip_norm, seed=seed, ess_every=cfg.ess_every,
                       ess_batch=cfg.ess_batch, checkpoint_every=cfg.checkpoint_every)


def cmd_train(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(cfg)
    geom = LatticeGeometry(L=cfg.L, D=cfg.D)
    params = PhiFourParams(m0_sq=cfg.m0_sq, lambda0=cfg.lambda0)
    tmap = _build_map(cfg, geom)
    record = train(tmap, params, _train_config(cfg, cfg.seed), out_dir=out)
    print(f"trained {cfg.epochs} epochs in {record.wall_time:.1f}s; "
          f"final loss {record.loss[-1]:.4f}, final ESS {record.final_ess:.4f}; "
          f"wrote {out / 'train.csv'} and {out / 'map.ltm'}")
    return 0


def cmd_sweep_orderings(args) -> int:
    cfg = _load_config(args)
    if not cfg.sweep_orderings:
        raise ConfigError("sweep.orderings is empty")
    if not cfg.sweep_neighborhood_orders:
        raise ConfigError("sweep.neighborhood_orders is empty")
    out = _out_dir(cfg)
    geom = LatticeGeometry(L=cfg.L, D=cfg.D)
    params = PhiFourParams(m0_sq=cfg.m0_sq, lambda0=cfg.lambda0)
    cells = [(o, k) for o in cfg.sweep_orderings for k in cfg.sweep_neighborhood_orders]
    seeds = np.random.SeedSequence(cfg.seed).generate_state(len(cells))
    rows = []
    failures = []
    for (ordering, order), cell_seed in zip(cells, seeds):
        cell_cfg = RunConfig(**{**cfg.__dict__, "ordering": ordering,
                                "neighborhood_order": order})
        cell_dir = out / f"cell_{ordering}_{order}"
        try:
            tmap = _build_map(cell_cfg, geom)
            record = train(tmap, params, _train_config(cfg, int(cell_seed)),
                           out_dir=cell_dir)
        except Exception as e:  # record and keep sweeping
            failures.append(f"{ordering},{order}: {e}")
            print(f"cell {ordering}/{order} failed: {e}", file=sys.stderr)
            continue
        for epoch in np.flatnonzero(np.isfinite(record.ess)):
            rows.append(f"{ordering},{order},{epoch},{record.ess[epoch]:.8g}")
        print(f"cell {ordering}/{order}: final ESS {record.final_ess:.4f}")
    (out / "sweep_ess.csv").write_text(
        "ordering,nbhd_order,epoch,ess\n" + "".join(r + "\n" for r in rows),
        encoding="utf-8")
    if failures:
        (out / "sweep_failures.txt").write_text("".join(f + "\n" for f in failures),
                                                encoding="utf-8")
    print(f"wrote {out / 'sweep_ess.csv'} ({len(cells) - len(failures)}/{len(cells)} "
          f"cells succeeded)")
    return 0


def cmd_sample(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(cfg)
    geom = LatticeGeometry(L=cfg.L, D=cfg.D)
    params = PhiFourParams(m0_sq=cfg.m0_sq, lambda0=cfg.lambda0)
    meta = {
        "sampler": args.sampler,
        "seed": cfg.seed,
        "L": cfg.L,
        "D": cfg.D,
        "n_sites": geom.N,
        "m0_sq": cfg.m0_sq,
        "lambda0": cfg.lambda0,
        "energy_def": ENERGY_DEF,
    }
    if args.sampler == "hmc":
        record = hmc_run(
            HmcConfig(n_leapfrog=cfg.hmc_n_leapfrog, step_size=cfg.hmc_step_size,
                      target_accept=cfg.hmc_target_accept, n_total=cfg.hmc_n_total,
                      n_burnin=cfg.hmc_n_burnin, seed=cfg.seed, window=cfg.hmc_window),
            params, geom)
        meta["tuned_step_size"] = record.tuned
    else:
        if args.checkpoint is None:
            raise ConfigError("imh sampling requires --checkpoint")
        tmap = load_map(args.checkpoint)
        if tmap.geom.L != cfg.L or tmap.geom.D != cfg.D:
            raise CheckpointError(
                f"checkpoint lattice {tmap.geom.L}^{tmap.geom.D} does not match "
                f"configured {cfg.L}^{cfg.D}")
        record = imh_run(
            ImhConfig(n_total=cfg.imh_n_total, n_burnin=cfg.imh_n_burnin,
                      target_accept=cfg.imh_target_accept, scale=cfg.imh_scale,
                      seed=cfg.seed, window=cfg.imh_window, chunk=cfg.imh_chunk),
            tmap, params)
        meta["tuned_scale"] = record.tuned
        meta["checkpoint"] = str(args.checkpoint)
    meta["acceptance_rate"] = record.acceptance_rate
    meta["kept_samples"] = record.length
    csv_path, _ = save_chain(out, record, meta)
    print(f"{args.sampler}: {record.length} kept samples, acceptance "
          f"{record.acceptance_rate:.3f}; wrote {csv_path}")
    return 0


def _parse_int_list(text: str, what: str):
    try:
        values = tuple(int(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise ConfigError(f"{what} must be comma-separated integers, got {text!r}") from None
    if not values:
        raise ConfigError(f"{what} is empty")
    return values


def cmd_compare(args) -> int:
    out = Path(args.out) if args.out is not None else Path("runs")
    out.mkdir(parents=True, exist_ok=True)
    lines = ["M,estimate,err_lo,err_hi,statistic,sampler,err_ref"]
    for chain_path in args.chains:
        chain = load_chain(chain_path)
        n_sites = chain.meta.get("n_sites")
        if n_sites is None:
            raise ChainFormatError(f"{chain_path}: meta.json lacks n_sites")
        sampler = chain.meta.get("sampler", "unknown")
        m_len = chain.actions.size
        if m_len < 4:
            raise ChainFormatError(f"{chain_path}: chain too short ({m_len} samples)")
        if args.sizes is not None:
            sizes = _parse_int_list(args.sizes, "--sizes")
            if sizes[-1] > m_len:
                raise ChainFormatError(
                    f"{chain_path}: requested size {sizes[-1]} exceeds chain "
                    f"length {m_len}")
        else:
            lo = min(200, max(2, m_len // 10))
            sizes = np.unique(np.geomspace(lo, m_len, num=8).astype(int))
        stats = {
            "energy": (chain.actions / n_sites, np.mean),
            "susceptibility": (chain.magnetizations,
                               lambda m: susceptibility(m, n_sites)),
        }
        for stat_name, (series, statistic) in stats.items():
            rows = error_vs_samples(series, statistic, sizes)
            err0 = rows[0].err
            m0 = rows[0].M
            for r in rows:
                err_ref = err0 * np.sqrt(m0 / r.M)
                lines.append(f"{r.M},{r.estimate:.10g},{r.err_lo:.10g},"
                             f"{r.err_hi:.10g},{stat_name},{sampler},{err_ref:.10g}")
    path = out / "error_scaling.csv"
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    print(f"wrote {path} ({len(lines) - 1} rows)")
    return 0


def cmd_fillin(args) -> int:
    sizes = _parse_int_list(args.sizes, "--sizes")
    orderings = tuple(t.strip() for t in args.orderings.split(",") if t.strip())
    if not orderings:
        raise ConfigError("--orderings is empty")
    if min(sizes) < 3:
        raise ConfigError("--sizes entries must be >= 3")
    if "checkerboard" in orderings and any(s % 2 for s in sizes):
        raise ConfigError("checkerboard requires even sizes; drop it or use even L")
    out = Path(args.out) if args.out is not None else Path("runs")
    out.mkdir(parents=True, exist_ok=True)
    rows = fill_in_stats(orderings, sizes)
    path = out / "fillin.csv"
    path.write_text(fill_in_csv(rows), encoding="utf-8")
    print(f"wrote {path} ({len(rows)} rows)")
    return 0


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (CheckpointError, ChainFormatError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except RuntimeError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(run())
