"""
CSV and JSON writers for trajectories, Wigner grids, reports and manifests.

Every file is written to a temporary sibling first and moved into place with
os.replace, so readers never observe a partial artifact.
"""

from __future__ import annotations

import csv
import io
import logging
import os
import tempfile
from pathlib import Path
from typing import Any, Iterable, Sequence, Union

import numpy as np
import orjson

from .hilbert import DensityOp, FockKet
from .lindblad import Trajectory
from .wigner import WignerGrid

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

_JSON_OPTIONS = orjson.OPT_INDENT_2 | orjson.OPT_SORT_KEYS | orjson.OPT_SERIALIZE_NUMPY


def atomic_write_bytes(path: PathLike, data: bytes) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise
    logger.debug("Exporters.write: %s (%d bytes)", path, len(data))
    return path


def complex_pairs(values: Any) -> Any:
    """Nested [re, im] pairs for complex scalars and arrays."""
    arr = np.asarray(values)
    if arr.ndim == 0:
        z = complex(arr)
        return [z.real, z.imag]
    return np.stack([arr.real, arr.imag], axis=-1).tolist()


def _default(obj: Any) -> Any:
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, np.ndarray):
        return complex_pairs(obj) if np.iscomplexobj(obj) else obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.complexfloating):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"Type is not JSON serializable: {type(obj).__name__}")


def dumps_json(obj: Any) -> bytes:
    return orjson.dumps(obj, default=_default, option=_JSON_OPTIONS)


def write_json(path: PathLike, obj: Any) -> Path:
    return atomic_write_bytes(path, dumps_json(obj) + b"\n")


def _cell(value: Any) -> str:
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".9g")
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    return str(value)


def render_csv(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(list(header))
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    return buf.getvalue().encode("utf-8")


def write_csv(path: PathLike, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    return atomic_write_bytes(path, render_csv(header, rows))


def state_snapshot(state: Union[DensityOp, FockKet]) -> dict:
    if isinstance(state, FockKet):
        return {"kind": "ket", "basis_dims": list(state.basis_dims), "subsystems": list(state.subsystems),
                "amplitudes": complex_pairs(state.amplitudes)}
    return {"kind": "density", "basis_dims": list(state.basis_dims), "subsystems": list(state.subsystems),
            "matrix": complex_pairs(state.matrix)}


def export_trajectory_csv(path: PathLike, trajectory: Trajectory) -> Path:
    header, rows = trajectory.observable_table()
    return write_csv(path, header, rows)


def export_trajectory_json(path: PathLike, trajectory: Trajectory) -> Path:
    return write_json(path, {
        "kind": trajectory.kind,
        "times": trajectory.times,
        "observables": {k: v for k, v in trajectory.observables.items()},
        "states": [state_snapshot(s) for s in trajectory.states],
    })


def export_wigner_csv(path: PathLike, grid: WignerGrid) -> Path:
    rows = (
        (float(x), float(p), float(grid.values[i, j]))
        for i, p in enumerate(grid.p_axis)
        for j, x in enumerate(grid.x_axis)
    )
    return write_csv(path, ["x", "p", "W"], rows)


def export_wigner_json(path: PathLike, grid: WignerGrid) -> Path:
    return write_json(path, {
        "x_axis": grid.x_axis,
        "p_axis": grid.p_axis,
        "values": grid.values,
        "convention": grid.convention,
        "integral": grid.integral(),
    })


def export_matrix_magnitudes_csv(path: PathLike, state: Union[DensityOp, FockKet]) -> Path:
    """|rho_mn| as `m,n,abs` rows."""
    rho = state.projector() if isinstance(state, FockKet) else state
    mags = np.abs(rho.matrix)
    rows = ((m, n, float(mags[m, n])) for m in range(rho.dim) for n in range(rho.dim))
    return write_csv(path, ["m", "n", "abs"], rows)


def export_report_json(path: PathLike, report: Any, include_state: bool = False) -> Path:
    """AmplificationReport scalars, optionally with the final cavity density matrix."""
    payload = report.model_dump(mode="json")
    if include_state and getattr(report, "final_cavity_state", None) is not None:
        payload["final_cavity_state"] = state_snapshot(report.final_cavity_state)
    return write_json(path, payload)
