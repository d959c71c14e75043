"""
Energy CSV files, binary field snapshots and plot-script emission.

Snapshot layout (``SAVF1``), all little endian::

    5 bytes   magic b"SAVF1"
    uint8     dim
    uint32    modes[dim]
    float64   extents[dim]
    float64   time
    uint32    number of components (1 for scalar fields)
    uint16    name length, followed by the UTF-8 field name
    float64   payload, row-major, components outermost
"""

from __future__ import annotations

import csv
import math
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audit import CSV_FIELDS, EnergyRecord

__all__ = [
    "write_energy_csv",
    "read_energy_csv",
    "write_table_csv",
    "Snapshot",
    "write_snapshot",
    "read_snapshot",
    "emit_plot_script",
    "MAGIC",
]

MAGIC = b"SAVF1"


def _fmt(value):
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    if isinstance(value, str):
        return value
    return "%.17g" % value


def write_energy_csv(records, path) -> None:
    """Header plus one row per record, 17 significant digits, LF endings."""
    records = list(records)
    if not records:
        raise ValueError("no records to write")
    write_table_csv(CSV_FIELDS, [r.csv_row() for r in records], path)


def write_table_csv(header, rows, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def read_energy_csv(path) -> list:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != CSV_FIELDS:
            raise ValueError(f"{path}: unexpected header {header}")
        out = []
        for row in reader:
            if len(row) != len(CSV_FIELDS):
                raise ValueError(f"{path}: row with {len(row)} columns")
            step, t, Eo, Em, R, tag, val, res = row
            out.append(EnergyRecord(int(step), float(t), float(Eo), float(Em), float(R),
                                    tag, float(val), float(res)))
        return out


@dataclass(frozen=True, eq=False)
class Snapshot:
    dim: int
    modes: tuple
    extents: tuple
    time: float
    name: str
    data: np.ndarray


_HEAD = struct.Struct("<5sB")


def write_snapshot(path, data, extents, time, name="phi") -> None:
    data = np.ascontiguousarray(data, dtype="<f8")
    extents = tuple(float(e) for e in extents)
    dim = len(extents)
    if data.ndim not in (dim, dim + 1):
        raise ValueError("field rank does not match the number of extents")
    modes = data.shape[-dim:]
    ncomp = 1 if data.ndim == dim else data.shape[0]
    encoded = name.encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_HEAD.pack(MAGIC, dim))
        fh.write(struct.pack(f"<{dim}I", *modes))
        fh.write(struct.pack(f"<{dim}d", *extents))
        fh.write(struct.pack("<dIH", float(time), ncomp, len(encoded)))
        fh.write(encoded)
        fh.write(data.tobytes(order="C"))


def read_snapshot(path) -> Snapshot:
    blob = Path(path).read_bytes()
    magic, dim = _HEAD.unpack_from(blob, 0)
    if magic != MAGIC:
        raise ValueError(f"{path}: not a SAVF1 snapshot")
    off = _HEAD.size
    modes = struct.unpack_from(f"<{dim}I", blob, off)
    off += 4 * dim
    extents = struct.unpack_from(f"<{dim}d", blob, off)
    off += 8 * dim
    time, ncomp, nlen = struct.unpack_from("<dIH", blob, off)
    off += struct.calcsize("<dIH")
    name = blob[off:off + nlen].decode("utf-8")
    off += nlen
    count = math.prod(modes) * ncomp
    if len(blob) - off != 8 * count:
        raise ValueError(f"{path}: payload has {len(blob) - off} bytes, expected {8 * count}")
    data = np.frombuffer(blob, dtype="<f8", count=count, offset=off).astype(float)
    shape = tuple(modes) if ncomp == 1 else (ncomp, *modes)
    return Snapshot(dim, tuple(modes), tuple(extents), time, name, data.reshape(shape))


# -- plot scripts ------------------------------------------------------------

_PRELUDE = '''\
"""Generated by savflow; run with ``python {script}`` from this directory."""
import csv
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

HERE = Path(__file__).resolve().parent


def read_columns(name):
    with open(HERE / name, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return {{key: [row[key] for row in rows] for key in rows[0]}}

'''

_ENERGY = '''
for name in {inputs!r}:
    cols = read_columns(name)
    t = [float(v) for v in cols["t"]]
    fig, ax1 = plt.subplots(figsize=(6, 4))
    ax1.plot(t, [float(v) for v in cols["E_original"]], "b-", label="original energy")
    ax1.set_xlabel("t")
    ax1.set_ylabel("original energy", color="b")
    ax2 = ax1.twinx()
    ax2.plot(t, [float(v) for v in cols["E_modified"]], "r--", label="modified energy")
    ax2.set_ylabel("modified energy", color="r")
    fig.tight_layout()
    fig.savefig(HERE / (Path(name).stem + "_energy.png"), dpi=150)
    plt.close(fig)
'''

_CONVERGENCE = '''
for name in {inputs!r}:
    cols = read_columns(name)
    dt = [float(v) for v in cols["dt"]]
    err = [float(v) for v in cols["error"]]
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.loglog(dt, err, "o-", label=Path(name).stem)
    for order in (1, 2, 3, 4):
        ref = [err[-1] * (d / dt[-1]) ** order for d in dt]
        ax.loglog(dt, ref, ":", color="gray", linewidth=0.8)
        ax.annotate(f"order {{order}}", (dt[0], ref[0]), fontsize=7, color="gray")
    ax.set_xlabel("dt")
    ax.set_ylabel("L2 error")
    ax.legend()
    fig.tight_layout()
    fig.savefig(HERE / (Path(name).stem + "_convergence.png"), dpi=150)
    plt.close(fig)
'''

_FIELD = '''
import struct
import numpy as np


def read_snapshot(name):
    blob = (HERE / name).read_bytes()
    dim = blob[5]
    off = 6
    modes = struct.unpack_from(f"<{{dim}}I", blob, off)
    off += 4 * dim
    extents = struct.unpack_from(f"<{{dim}}d", blob, off)
    off += 8 * dim
    time, ncomp, nlen = struct.unpack_from("<dIH", blob, off)
    off += struct.calcsize("<dIH") + nlen
    data = np.frombuffer(blob, dtype="<f8", offset=off)
    shape = modes if ncomp == 1 else (ncomp, *modes)
    return extents, time, data.reshape(shape)


for name in {inputs!r}:
    extents, time, data = read_snapshot(name)
    if data.ndim == 3 and data.shape[0] == 2:
        # velocity: plot vorticity
        n1, n2 = data.shape[1:]
        k1 = 2 * np.pi * np.fft.fftfreq(n1, extents[0] / n1)[:, None]
        k2 = 2 * np.pi * np.fft.fftfreq(n2, extents[1] / n2)[None, :]
        data = np.real(np.fft.ifft2(1j * k1 * np.fft.fft2(data[1]) - 1j * k2 * np.fft.fft2(data[0])))
    elif data.ndim == 3:
        data = data[:, :, data.shape[2] // 2]
    fig, ax = plt.subplots(figsize=(5, 4.5))
    cs = ax.contourf(data.T, levels=40, cmap="jet", origin="lower",
                     extent=(0, extents[0], 0, extents[1]))
    fig.colorbar(cs, ax=ax)
    ax.set_title(f"t = {{time:g}}")
    ax.set_aspect("equal")
    fig.tight_layout()
    fig.savefig(HERE / (Path(name).stem + ".png"), dpi=150)
    plt.close(fig)
'''

_BODIES = {"energy": _ENERGY, "convergence": _CONVERGENCE, "field": _FIELD}


def emit_plot_script(inputs, kind, script_path) -> Path:
    """Write a matplotlib script rendering ``inputs``.

    Input paths are stored relative to the script's directory, so the output
    folder can be moved as a whole.

    ``energy`` draws a dual-axis trace of both energies per CSV;
    ``convergence`` a log-log error plot per CSV with order 1 to 4 guides;
    ``field`` a filled contour per snapshot (vorticity for 2D velocity).
    """
    if kind not in _BODIES:
        raise ValueError(f"unknown plot kind {kind!r}")
    script_path = Path(script_path)
    base = script_path.parent.resolve()
    names = []
    for p in inputs:
        p = Path(p)
        full = p.resolve()
        if not full.exists():
            raise FileNotFoundError(f"plot input {p} does not exist")
        names.append(Path(os.path.relpath(full, base)).as_posix())
    text = _PRELUDE.format(script=script_path.name) + _BODIES[kind].format(inputs=names)
    with open(script_path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write(text)
    return script_path
