"""Run configuration: a strict, flat TOML-subset loader with line diagnostics.

Accepted syntax: `[section]` headers, `key = value` lines, `#` comments, and
blank lines. Values may be integers, floats, booleans, double-quoted strings,
or flat arrays of those. Every key must be known, correctly typed, and appear
at most once; violations are reported with the offending line number. All
defaults mirror the reference experimental setup, so a config containing only
`lattice.L` fully specifies a run.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

__all__ = ["ConfigError", "RunConfig", "parse_toml_subset", "load_run_config",
           "render_config", "smoke_overrides"]


class ConfigError(Exception):
    """Invalid configuration; message carries file/line context when known."""


@dataclass(frozen=True)
class RunConfig:
    # lattice
    L: int = 8
    D: int = 2
    # couplings
    m0_sq: float = -4.0
    lambda0: float = 8.0
    # map
    ordering: str = "checkerboard"
    neighborhood_order: int = 3
    mode: str = "sparse"
    quad_q: int = 15
    hidden: tuple = (64, 64, 64)
    start_site: int = 0
    # training
    epochs: int = 3000
    batch_size: int = 256
    lr: float = 1e-3
    lr_min: float = 1e-6
    weight_decay: float = 1e-5
    clip_norm: float = 10.0
    ess_every: int = 50
    ess_batch: int = 1024
    checkpoint_every: int = 0
    # hmc
    hmc_n_leapfrog: int = 10
    hmc_step_size: float = 0.1
    hmc_target_accept: float = 0.70
    hmc_n_total: int = 20000
    hmc_n_burnin: int = 2000
    hmc_window: int = 100
    # imh
    imh_n_total: int = 20000
    imh_n_burnin: int = 2000
    imh_target_accept: float = 0.50
    imh_scale: float = 1.0
    imh_window: int = 100
    imh_chunk: int = 1024
    # sweep
    sweep_orderings: tuple = ("lexicographic", "checkerboard", "maxmin")
    sweep_neighborhood_orders: tuple = (1, 2, 3)
    # run
    seed: int = 0
    out: str = "runs"


# config key -> (RunConfig field, expected python type)
_KEYS = {
    "lattice.L": ("L", int),
    "lattice.D": ("D", int),
    "couplings.m0_sq": ("m0_sq", float),
    "couplings.lambda0": ("lambda0", float),
    "map.ordering": ("ordering", str),
    "map.neighborhood_order": ("neighborhood_order", int),
    "map.mode": ("mode", str),
    "map.quad_q": ("quad_q", int),
    "map.hidden": ("hidden", (int,)),
    "map.start_site": ("start_site", int),
    "training.epochs": ("epochs", int),
    "training.batch_size": ("batch_size", int),
    "training.lr": ("lr", float),
    "training.lr_min": ("lr_min", float),
    "training.weight_decay": ("weight_decay", float),
    "training.clip_norm": ("clip_norm", float),
    "training.ess_every": ("ess_every", int),
    "training.ess_batch": ("ess_batch", int),
    "training.checkpoint_every": ("checkpoint_every", int),
    "hmc.n_leapfrog": ("hmc_n_leapfrog", int),
    "hmc.step_size": ("hmc_step_size", float),
    "hmc.target_accept": ("hmc_target_accept", float),
    "hmc.n_total": ("hmc_n_total", int),
    "hmc.n_burnin": ("hmc_n_burnin", int),
    "hmc.window": ("hmc_window", int),
    "imh.n_total": ("imh_n_total", int),
    "imh.n_burnin": ("imh_n_burnin", int),
    "imh.target_accept": ("imh_target_accept", float),
    "imh.scale": ("imh_scale", float),
    "imh.window": ("imh_window", int),
    "imh.chunk": ("imh_chunk", int),
    "sweep.orderings": ("sweep_orderings", (str,)),
    "sweep.neighborhood_orders": ("sweep_neighborhood_orders", (int,)),
    "run.seed": ("seed", int),
    "run.out": ("out", str),
}

# config sections, in render order
_SECTIONS = ("lattice", "couplings", "map", "training", "hmc", "imh", "sweep", "run")


def _parse_scalar(token: str, path, lineno: int):
    token = token.strip()
    if token.startswith('"'):
        if len(token) < 2 or not token.endswith('"') or '"' in token[1:-1]:
            raise ConfigError(f"{path}:{lineno}: malformed string {token!r}")
        return token[1:-1]
    if token == "true":
        return True
    if token == "false":
        return False
    try:
        return int(token)
    except ValueError:
        pass
    try:
        return float(token)
    except ValueError:
        raise ConfigError(f"{path}:{lineno}: cannot parse value {token!r}") from None


def _strip_comment(line: str) -> str:
    out = []
    in_str = False
    for ch in line:
        if ch == '"':
            in_str = not in_str
        if ch == "#" and not in_str:
            break
        out.append(ch)
    return "".join(out)


def parse_toml_subset(text: str, path="<config>") -> dict:
    """Parse config text into {dotted key: (value, line number)}."""
    entries = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw).strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]") or not line[1:-1].strip():
                raise ConfigError(f"{path}:{lineno}: malformed section header {raw.strip()!r}")
            section = line[1:-1].strip()
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected `key = value`, got {raw.strip()!r}")
        key, _, rhs = line.partition("=")
        key = key.strip()
        rhs = rhs.strip()
        if not key or not rhs:
            raise ConfigError(f"{path}:{lineno}: expected `key = value`, got {raw.strip()!r}")
        full_key = f"{section}.{key}" if section else key
        if full_key in entries:
            raise ConfigError(f"{path}:{lineno}: duplicate key {full_key!r} "
                              f"(first set on line {entries[full_key][1]})")
        if rhs.startswith("["):
            if not rhs.endswith("]"):
                raise ConfigError(f"{path}:{lineno}: unterminated array")
            inner = rhs[1:-1].strip()
            value = tuple(_parse_scalar(t, path, lineno)
                          for t in inner.split(",") if t.strip()) if inner else ()
        else:
            value = _parse_scalar(rhs, path, lineno)
        entries[full_key] = (value, lineno)
    return entries


def _coerce(key, value, expected, path, lineno):
    if isinstance(expected, tuple):  # array of some scalar type
        if not isinstance(value, tuple):
            raise ConfigError(f"{path}:{lineno}: {key} must be an array")
        elem = expected[0]
        out = []
        for v in value:
            out.append(_coerce(key, v, elem, path, lineno))
        return tuple(out)
    if expected is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if not isinstance(value, expected) or isinstance(value, bool) is not (expected is bool):
        raise ConfigError(f"{path}:{lineno}: {key} must be {expected.__name__}, "
                          f"got {value!r}")
    return value


def _validate(cfg: RunConfig, path="<config>"):
    from .ordering import ORDERING_NAMES
    from .transport import MAP_MODES

    def fail(msg):
        raise ConfigError(f"{path}: {msg}")

    if cfg.L < 2:
        fail(f"lattice.L = {cfg.L} must be >= 2")
    if cfg.D < 1:
        fail("lattice.D must be >= 1")
    if cfg.ordering not in ORDERING_NAMES:
        fail(f"map.ordering {cfg.ordering!r} not in {ORDERING_NAMES}")
    if cfg.ordering == "checkerboard" and cfg.L % 2:
        fail(f"map.ordering = checkerboard requires even lattice.L, got {cfg.L}")
    if cfg.mode not in MAP_MODES:
        fail(f"map.mode {cfg.mode!r} not in {MAP_MODES}")
    if cfg.neighborhood_order not in (1, 2, 3):
        fail(f"map.neighborhood_order must be 1, 2, or 3, got {cfg.neighborhood_order}")
    if cfg.quad_q < 1:
        fail("map.quad_q must be >= 1")
    if any(h < 1 for h in cfg.hidden):
        fail("map.hidden widths must be positive")
    if cfg.epochs < 0 or cfg.batch_size < 1:
        fail("training.epochs must be >= 0 and training.batch_size >= 1")
    if not 0 <= cfg.hmc_n_burnin <= cfg.hmc_n_total:
        fail("hmc burn-in must lie within the chain length")
    if not 0 <= cfg.imh_n_burnin <= cfg.imh_n_total:
        fail("imh burn-in must lie within the chain length")
    for name in cfg.sweep_orderings:
        if name not in ORDERING_NAMES:
            fail(f"sweep.orderings entry {name!r} not in {ORDERING_NAMES}")
    for order in cfg.sweep_neighborhood_orders:
        if order not in (1, 2, 3):
            fail(f"sweep.neighborhood_orders entry {order} must be 1, 2, or 3")


def load_run_config(path=None, text=None, overrides=None, require_L=True) -> RunConfig:
    """Build a validated RunConfig from a file (or literal text) plus overrides.

    `overrides` maps RunConfig field names to values applied after the file
    (used for --seed/--out/--smoke). With require_L, a config that never sets
    lattice.L is rejected: everything else has experiment defaults but the
    lattice size must be a deliberate choice.
    """
    src = "<config>" if path is None else str(path)
    if text is None:
        if path is None:
            entries = {}
        else:
            try:
                text = Path(path).read_text(encoding="utf-8")
            except OSError as e:
                raise ConfigError(f"cannot read config {path}: {e}") from e
            entries = parse_toml_subset(text, src)
    else:
        entries = parse_toml_subset(text, src)
    values = {}
    for key, (value, lineno) in entries.items():
        if key not in _KEYS:
            raise ConfigError(f"{src}:{lineno}: unknown key {key!r}")
        field_name, expected = _KEYS[key]
        values[field_name] = _coerce(key, value, expected, src, lineno)
    overrides = overrides or {}
    values.update(overrides)
    if require_L and "L" not in values:
        raise ConfigError(f"{src}: missing required key lattice.L")
    cfg = RunConfig(**values)
    _validate(cfg, src)
    return cfg


def smoke_overrides() -> dict:
    """Reduced-scale profile: small lattice, short training, short chains."""
    return {
        "L": 4,
        "epochs": 200,
        "hmc_n_total": 2000,
        "hmc_n_burnin": 200,
        "imh_n_total": 2000,
        "imh_n_burnin": 200,
        "ess_batch": 256,
    }


def _render_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, str):
        return f'"{v}"'
    if isinstance(v, tuple):
        return "[" + ", ".join(_render_value(x) for x in v) + "]"
    return repr(v)


def render_config(cfg: RunConfig) -> str:
    """Serialize the effective config; load_run_config round-trips it."""
    by_field = {fname: key for key, (fname, _) in _KEYS.items()}
    sections = {s: [] for s in _SECTIONS}
    for f in fields(RunConfig):
        key = by_field[f.name]
        section, _, short = key.partition(".")
        sections[section].append(f"{short} = {_render_value(getattr(cfg, f.name))}")
    blocks = []
    for s in _SECTIONS:
        blocks.append(f"[{s}]\n" + "\n".join(sections[s]))
    return "\n\n".join(blocks) + "\n"
