"""Artifact persistence: map checkpoints, chain CSVs, and run metadata.

Checkpoint container ("ltm-v1"): an 8-byte little-endian uint64 giving the
byte length of a UTF-8 JSON header, the header itself (architecture and
structure: L, D, ordering, neighborhood order, mode, hidden widths, quadrature
Q, activation tags), then every trainable parameter as little-endian float64
in declaration order. A checkpoint is self-describing: loading needs no
config.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .lattice import LatticeGeometry
from .transport import TriangularMap, make_triangular_map, map_get_params, map_set_params

__all__ = [
    "CHECKPOINT_VERSION",
    "ChainFormatError",
    "CheckpointError",
    "LoadedChain",
    "save_map",
    "load_map",
    "map_header",
    "chain_csv",
    "save_chain",
    "load_chain",
]

CHECKPOINT_VERSION = "ltm-v1"


class CheckpointError(Exception):
    """Unreadable or incompatible checkpoint."""


class ChainFormatError(Exception):
    """Malformed chain CSV; carries the offending row number."""

    def __init__(self, message, row=None):
        super().__init__(message if row is None else f"row {row}: {message}")
        self.row = row


def map_header(tmap: TriangularMap) -> dict:
    return {
        "version": CHECKPOINT_VERSION,
        "L": tmap.geom.L,
        "D": tmap.geom.D,
        "ordering": tmap.ordering_name,
        "start_site": tmap.start_site,
        "neighborhood_order": tmap.neighborhood_order,
        "mode": tmap.mode,
        "hidden": list(tmap.hidden),
        "quad_q": tmap.quad.Q,
        "hidden_activation": "gelu",
        "g_output_activation": "softplus",
        "n_params": tmap._n_params,
    }


def save_map(path, tmap: TriangularMap):
    header = json.dumps(map_header(tmap)).encode("utf-8")
    params = np.ascontiguousarray(map_get_params(tmap), dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        fh.write(params.tobytes())


def load_map(path) -> TriangularMap:
    with open(path, "rb") as fh:
        raw_len = fh.read(8)
        if len(raw_len) != 8:
            raise CheckpointError(f"{path}: truncated header length")
        (hlen,) = struct.unpack("<Q", raw_len)
        try:
            header = json.loads(fh.read(hlen).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise CheckpointError(f"{path}: unreadable header: {e}") from e
        if header.get("version") != CHECKPOINT_VERSION:
            raise CheckpointError(
                f"{path}: version {header.get('version')!r}, expected {CHECKPOINT_VERSION!r}")
        body = fh.read()
    geom = LatticeGeometry(L=int(header["L"]), D=int(header["D"]))
    tmap = make_triangular_map(
        geom,
        ordering_name=header["ordering"],
        neighborhood_order=int(header["neighborhood_order"]),
        mode=header["mode"],
        hidden=tuple(header["hidden"]),
        quad_q=int(header["quad_q"]),
        rng=np.random.default_rng(0),
        start_site=int(header["start_site"]),
    )
    params = np.frombuffer(body, dtype="<f8")
    if params.size != tmap._n_params or params.size != int(header["n_params"]):
        raise CheckpointError(
            f"{path}: {params.size} parameters, structure needs {tmap._n_params}")
    map_set_params(tmap, np.asarray(params, dtype=np.float64))
    return tmap


@dataclass(frozen=True)
class LoadedChain:
    """Chain CSV contents plus sidecar metadata."""

    steps: np.ndarray
    accepted: np.ndarray
    actions: np.ndarray
    magnetizations: np.ndarray
    meta: dict


def chain_csv(record) -> str:
    """CSV text for a finished chain: step,accepted,action,magnetization."""
    lines = ["step,accepted,action,magnetization"]
    for i in range(record.actions.size):
        lines.append(f"{i},{int(record.accepted[i])},{record.actions[i]:.10g},"
                     f"{record.magnetizations[i]:.10g}")
    return "\n".join(lines) + "\n"


def save_chain(out_dir, record, meta: dict):
    """Write chain.csv and meta.json into out_dir; returns their paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "chain.csv"
    meta_path = out_dir / "meta.json"
    csv_path.write_text(chain_csv(record), encoding="utf-8")
    meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n",
                         encoding="utf-8")
    return csv_path, meta_path


def load_chain(path) -> LoadedChain:
    """Read a chain directory (or chain.csv path) written by save_chain."""
    path = Path(path)
    csv_path = path / "chain.csv" if path.is_dir() else path
    meta_path = csv_path.with_name("meta.json")
    try:
        text = csv_path.read_text(encoding="utf-8")
    except OSError as e:
        raise ChainFormatError(f"cannot read {csv_path}: {e}") from e
    lines = text.splitlines()
    if not lines or lines[0] != "step,accepted,action,magnetization":
        raise ChainFormatError(f"{csv_path}: bad or missing header", row=1)
    steps, accepted, actions, mags = [], [], [], []
    for row, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise ChainFormatError(f"{csv_path}: expected 4 fields, got {len(parts)}",
                                   row=row)
        try:
            steps.append(int(parts[0]))
            accepted.append(int(parts[1]))
            actions.append(float(parts[2]))
            mags.append(float(parts[3]))
        except ValueError as e:
            raise ChainFormatError(f"{csv_path}: {e}", row=row) from e
    meta = {}
    if meta_path.exists():
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
    return LoadedChain(steps=np.array(steps), accepted=np.array(accepted, dtype=bool),
                       actions=np.array(actions), magnetizations=np.array(mags),
                       meta=meta)
