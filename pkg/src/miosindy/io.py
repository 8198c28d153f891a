"""On-disk formats: trajectory CSV, field binary + JSON sidecar, records,
and the aggregated summary CSV."""

import json
import struct
from pathlib import Path

import numpy as np

from .pde import Field
from .systems import Trajectory

_FIELD_MAGIC = b"MSFLD1\x00\x00"


def save_trajectory_csv(traj, path):
    """CSV with header t,x1,...,xd; 17 significant digits (round-trip exact)."""
    path = Path(path)
    header = "t," + ",".join(f"x{i + 1}" for i in range(traj.dim))
    data = np.column_stack([traj.times, traj.states])
    np.savetxt(path, data, fmt="%.17g", delimiter=",", header=header, comments="")
    return path


def load_trajectory_csv(path):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return Trajectory(times=data[:, 0], states=data[:, 1:])


def save_field(fld, base_path):
    """Binary values plus a JSON sidecar with the grid metadata.

    base_path gets suffixes .bin (magic, ndim, dims, row-major doubles) and
    .json (times, grids, periodic flags).
    """
    base = Path(base_path)
    bin_path = base.with_suffix(".bin")
    json_path = base.with_suffix(".json")
    values = np.ascontiguousarray(fld.values, dtype=np.float64)
    with open(bin_path, "wb") as fh:
        fh.write(_FIELD_MAGIC)
        fh.write(struct.pack("<q", values.ndim))
        fh.write(struct.pack(f"<{values.ndim}q", *values.shape))
        fh.write(values.tobytes(order="C"))
    sidecar = {
        "times": [float(t) for t in fld.times],
        "grids": [[float(g) for g in grid] for grid in fld.grids],
        "periodic": list(fld.periodic),
        "n_vars": int(fld.n_vars),
    }
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=1)
    return bin_path, json_path


def load_field(base_path):
    base = Path(base_path)
    with open(base.with_suffix(".json"), "r", encoding="utf-8") as fh:
        sidecar = json.load(fh)
    with open(base.with_suffix(".bin"), "rb") as fh:
        magic = fh.read(len(_FIELD_MAGIC))
        if magic != _FIELD_MAGIC:
            raise ValueError(f"{base}: not a field container")
        ndim, = struct.unpack("<q", fh.read(8))
        shape = struct.unpack(f"<{ndim}q", fh.read(8 * ndim))
        values = np.frombuffer(fh.read(), dtype=np.float64).reshape(shape)
    return Field(grids=tuple(np.asarray(g) for g in sidecar["grids"]),
                 times=np.asarray(sidecar["times"]),
                 values=values, periodic=tuple(sidecar["periodic"]))


def _jsonable(value):
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        v = float(value)
        return v if np.isfinite(v) else repr(v)
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, float) and not np.isfinite(value):
        return repr(value)
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def write_record(record, directory):
    """One JSON file per record; the name encodes its identity."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    name = (f"{record['experiment']}_{record['system']}_"
            f"{record['condition_label']}_t{record['trial']:03d}_"
            f"{record['algorithm']}.json")
    path = directory / name
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(record), fh, indent=1, sort_keys=True)
    return path


def format_float(x):
    """Stable decimal rendering used by summary.csv (12 significant digits)."""
    if isinstance(x, float) and not np.isfinite(x):
        return repr(x)
    return f"{x:.12g}"


def write_summary_csv(rows, columns, path):
    """Deterministic CSV: fixed column order, %.12g floats, sorted rows
    are the caller's responsibility."""
    path = Path(path)
    lines = [",".join(columns)]
    for row in rows:
        cells = []
        for col in columns:
            v = row.get(col, "")
            if isinstance(v, (float, np.floating)):
                cells.append(format_float(float(v)))
            else:
                cells.append(str(v))
        lines.append(",".join(cells))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path
