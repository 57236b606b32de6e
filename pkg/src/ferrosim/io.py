"""Artifact persistence: binary trajectory files and ledger/report CSVs.

Trajectory file layout (version 1):

* ASCII header of ``key = value`` lines terminated by a blank line.  Keys:
  format, version, config_hash, basis_digest, seed, k_max, state_dim
  (complex slots per snapshot), n_snapshots, n_windows, n_channels,
  stopped_at (float or 'none'), failed (0/1), byte_order (little).
* body, little-endian IEEE-754 float64, in order:
  - snapshot times (n_snapshots),
  - states, row-major snapshot x (2 * state_dim) with each complex slot
    stored as (re, im),
  - window-aggregated Brownian increments, row-major
    n_windows x n_channels.

Identical configs produce byte-identical files: every number written is a
pure function of (config, seed).  CSV outputs use 17-significant-digit
formatting so a reload reproduces the doubles exactly.
"""

from __future__ import annotations

import csv

import numpy as np

from .diagnostics import LEDGER_TERMS
from .sde import TrajectoryRecord
from .spectral import get_basis

FORMAT_NAME = "ferrosim-trajectory"
FORMAT_VERSION = 1

#: CSV column layout of the energy ledger: time plus the identity's terms
LEDGER_CSV_COLUMNS = ("time",) + LEDGER_TERMS


def basis_digest(k_max: int) -> str:
    """Digest of the full state block ordering (all five bases)."""
    parts = [get_basis(k_max, s).digest() for s in ("V", "W", "V2", "Grad", "V2")]
    import hashlib

    return hashlib.sha256("|".join(parts).encode()).hexdigest()


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_trajectory(path, record: TrajectoryRecord, config_hash: str, seed: int) -> None:
    times = np.asarray(record.times, dtype="<f8")
    states = np.asarray(record.states)
    windows = np.asarray(record.window_increments, dtype="<f8")
    n_snap, dim = states.shape
    header = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "config_hash": config_hash,
        "basis_digest": basis_digest(record.k_max),
        "seed": seed,
        "k_max": record.k_max,
        "state_dim": dim,
        "n_snapshots": n_snap,
        "n_windows": windows.shape[0],
        "n_channels": windows.shape[1] if windows.ndim == 2 else 0,
        "stopped_at": "none" if record.stopped_at is None else _fmt(record.stopped_at),
        "failed": int(record.failed),
        "byte_order": "little",
    }
    interleaved = np.empty((n_snap, 2 * dim), dtype="<f8")
    interleaved[:, 0::2] = states.real
    interleaved[:, 1::2] = states.imag
    with open(path, "wb") as fh:
        for key, value in header.items():
            fh.write(f"{key} = {value}\n".encode("ascii"))
        fh.write(b"\n")
        fh.write(times.tobytes())
        fh.write(interleaved.tobytes())
        fh.write(windows.astype("<f8").tobytes())


def read_trajectory(path) -> tuple:
    """Returns (header dict, TrajectoryRecord)."""
    with open(path, "rb") as fh:
        header = {}
        while True:
            line = fh.readline()
            if not line or line == b"\n":
                break
            key, _, value = line.decode("ascii").rstrip("\n").partition(" = ")
            header[key] = value
        if header.get("format") != FORMAT_NAME:
            raise ValueError(f"{path}: not a {FORMAT_NAME} file")
        if int(header["version"]) != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported version {header['version']}")
        k_max = int(header["k_max"])
        n_snap = int(header["n_snapshots"])
        dim = int(header["state_dim"])
        n_win = int(header["n_windows"])
        n_ch = int(header["n_channels"])
        body = np.frombuffer(fh.read(), dtype="<f8")
    expected = n_snap + n_snap * 2 * dim + n_win * n_ch
    if body.size != expected:
        raise ValueError(f"{path}: body holds {body.size} doubles, header implies {expected}")
    times = body[:n_snap].copy()
    flat = body[n_snap : n_snap + n_snap * 2 * dim].reshape(n_snap, 2 * dim)
    states = flat[:, 0::2] + 1j * flat[:, 1::2]
    windows = body[n_snap + n_snap * 2 * dim :].reshape(n_win, n_ch).copy()
    if basis_digest(k_max) != header["basis_digest"]:
        raise ValueError(f"{path}: basis ordering digest mismatch (incompatible build?)")
    stopped = None if header["stopped_at"] == "none" else float(header["stopped_at"])
    record = TrajectoryRecord(
        k_max, times, states, stopped, bool(int(header["failed"])), windows, None
    )
    return header, record


def export_ledger_csv(ledger, path, member: int = 0) -> None:
    """One row per step, one column per term of the energy identity."""
    dt = ledger.dt
    with open(path, "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh, quoting=csv.QUOTE_MINIMAL, lineterminator="\n")
        writer.writerow(LEDGER_CSV_COLUMNS)
        if not ledger.columns:
            return
        steps = next(iter(ledger.columns.values())).shape[-1]
        for s in range(steps):
            row = [_fmt(s * dt)]
            for name in LEDGER_TERMS:
                col = ledger.columns[name]
                value = col[member, s] if col.ndim == 2 else col[s]
                row.append(_fmt(value))
            writer.writerow(row)


def read_ledger_csv(path) -> dict:
    with open(path, "r", newline="", encoding="ascii") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        cols = {name: [] for name in header}
        for row in reader:
            for name, value in zip(header, row):
                cols[name].append(float(value))
    return {name: np.asarray(vals) for name, vals in cols.items()}


def export_table_csv(path, columns: list, rows: list) -> None:
    """Generic report table with deterministic float formatting."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, quoting=csv.QUOTE_MINIMAL, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow(
                [_fmt(x) if isinstance(x, float) else str(x) for x in row]
            )
