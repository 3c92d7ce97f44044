"""Run output: VTU snapshots, CSV time series, metadata."""
from __future__ import annotations

import csv
import json
import math
import os
from pathlib import Path

import numpy as np

from .geometry import element_dofs
from .physics import EnergyReport

ENERGY_COLUMNS = ("t", "F_K", "F_GL", "F_H", "F_total", "D_V", "D_R", "Hbar1", "Hbar2", "area", "min_K")
MONITOR_COLUMNS = ("step", "t", "u_norm", "phi_rate", "div_norm", "mass_residual", "D_phi", "energy_residual")
VTK_QUADRATIC_TRIANGLE = 22
OUTPUT_ROOT_ENV = "FLUIDSURF_OUTPUT_ROOT"


def output_dir(name) -> Path:
    """``name`` resolved against $FLUIDSURF_OUTPUT_ROOT when it is relative."""
    p = Path(name)
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not p.is_absolute():
        p = Path(root) / p
    p.mkdir(parents=True, exist_ok=True)
    return p


def _num(x) -> str:
    return f"{x:.17g}"


def _data_array(name, values, ncomp=1, dtype="Float64") -> str:
    flat = np.asarray(values).reshape(-1)
    fmt = _num if dtype == "Float64" else str
    body = " ".join(fmt(v) for v in flat)
    return (
        f'        <DataArray type="{dtype}" Name="{name}" NumberOfComponents="{ncomp}" '
        f'format="ascii">\n          {body}\n        </DataArray>\n'
    )


def nodal_pressure(mesh, p) -> np.ndarray:
    """Vertex pressure extended to edge nodes by averaging the endpoints."""
    p = np.asarray(p, dtype=float)
    return np.concatenate([p, 0.5 * (p[mesh.edges[:, 0]] + p[mesh.edges[:, 1]])])


def write_vtu(state, mesh, path) -> Path:
    """Quadratic-triangle VTK XML unstructured grid (ASCII)."""
    conn = element_dofs(mesh, 2)
    X = np.asarray(state.X)
    npts, ncells = len(X), len(conn)
    if len(state.phi) != npts or np.shape(state.u) != (npts, 3):
        raise ValueError("snapshot fields do not match the node count")
    offsets = 6 * np.arange(1, ncells + 1)
    parts = [
        '<?xml version="1.0"?>\n',
        '<VTKFile type="UnstructuredGrid" version="1.0" byte_order="LittleEndian">\n',
        "  <UnstructuredGrid>\n",
        f'    <Piece NumberOfPoints="{npts}" NumberOfCells="{ncells}">\n',
        f'      <FieldData>\n  {_data_array("TIME", [state.t])}      </FieldData>\n',
        "      <Points>\n",
        _data_array("Points", X, 3),
        "      </Points>\n",
        "      <Cells>\n",
        _data_array("connectivity", conn, 1, "Int64"),
        _data_array("offsets", offsets, 1, "Int64"),
        _data_array("types", np.full(ncells, VTK_QUADRATIC_TRIANGLE), 1, "UInt8"),
        "      </Cells>\n",
        '      <PointData Scalars="phi" Vectors="velocity">\n',
        _data_array("phi", state.phi),
        _data_array("mu", state.mu),
        _data_array("velocity", state.u, 3),
        _data_array("pressure", nodal_pressure(mesh, state.p)),
        _data_array("curvature_H", state.H),
        _data_array("update_Y", state.Y, 3),
        "      </PointData>\n",
        "    </Piece>\n",
        "  </UnstructuredGrid>\n",
        "</VTKFile>\n",
    ]
    path = Path(path)
    path.write_text("".join(parts))
    return path


def read_vtu_counts(path) -> tuple[int, int]:
    """(points, cells) of a file written by :func:`write_vtu`."""
    import xml.etree.ElementTree as ET

    piece = ET.parse(path).getroot().find("UnstructuredGrid/Piece")
    return int(piece.get("NumberOfPoints")), int(piece.get("NumberOfCells"))


def write_pvd(entries, path) -> Path:
    """ParaView collection of (time, file name) pairs."""
    lines = ['<?xml version="1.0"?>\n<VTKFile type="Collection" version="1.0">\n  <Collection>\n']
    for t, name in entries:
        lines.append(f'    <DataSet timestep="{_num(t)}" file="{name}"/>\n')
    lines.append("  </Collection>\n</VTKFile>\n")
    path = Path(path)
    path.write_text("".join(lines))
    return path


def write_energies_csv(report: EnergyReport, path) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ENERGY_COLUMNS)
        for row in report.rows:
            w.writerow([_num(row[c]) for c in ENERGY_COLUMNS])
    return Path(path)


def read_energies_csv(path) -> dict:
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    return {c: np.array([float(r[c]) for r in rows]) for c in ENERGY_COLUMNS}


def write_monitor_csv(monitor, report: EnergyReport, residuals, path) -> Path:
    D_phi = report.column("D_phi")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MONITOR_COLUMNS)
        for i, m in enumerate(monitor):
            r = residuals[i] if i < len(residuals) else math.nan
            w.writerow(
                [m["step"]]
                + [_num(m.get(c, math.nan)) for c in ("t", "u_norm", "phi_rate", "div_norm", "mass_residual")]
                + [_num(D_phi[i + 1]), _num(r)]
            )
    return Path(path)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


def write_metadata(meta: dict, path) -> Path:
    Path(path).write_text(json.dumps(_jsonable(meta), indent=2, sort_keys=True) + "\n")
    return Path(path)
