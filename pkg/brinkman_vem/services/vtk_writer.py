"""
Result files: legacy ASCII VTK cell fields and RFC-4180 CSV tables.
"""

import csv
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Union

import numpy as np
import structlog

from brinkman_vem.models.records import CONVERGENCE_COLUMNS, ConvergenceRecord
from brinkman_vem.services.assembly import DiscreteSolution
from brinkman_vem.services.mesh import PolygonalMesh
from brinkman_vem.services.nitsche import Dirichlet, Slip

logger = structlog.get_logger(__name__)

VTK_POLYGON = 7
TRACE_COLUMNS = ["tag", "cell", "edge", "x", "y", "u1_h", "u2_h", "g1", "g2"]
DOF_COLUMNS = ["kind", "index", "value"]

PathLike = Union[str, Path]


def _prepare(path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _fmt(value: float) -> str:
    return f"{value:.10e}"


def write_vtk(path: PathLike, mesh: PolygonalMesh, solution: DiscreteSolution, title: str = "brinkman-vem") -> Path:
    """Cell-data unstructured grid: velocity, speed, divergence and pressure averages."""
    path = _prepare(path)
    velocity, divergence, pressure = solution.cell_means()
    speed = np.linalg.norm(velocity, axis=1)
    n_cells = mesh.n_cells
    connectivity = sum(len(cell) + 1 for cell in mesh.cells)

    lines: List[str] = [
        "# vtk DataFile Version 4.2",
        title.replace("\n", " ")[:255],
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {mesh.n_vertices} double",
    ]
    lines += [f"{_fmt(x)} {_fmt(y)} 0.0" for x, y in mesh.vertices]
    lines.append(f"CELLS {n_cells} {connectivity}")
    lines += [" ".join(str(v) for v in [len(cell), *cell]) for cell in mesh.cells]
    lines.append(f"CELL_TYPES {n_cells}")
    lines += [str(VTK_POLYGON)] * n_cells
    lines.append(f"CELL_DATA {n_cells}")
    lines.append("VECTORS velocity double")
    lines += [f"{_fmt(u)} {_fmt(v)} 0.0" for u, v in velocity]
    for name, values in (("speed", speed), ("divergence", divergence), ("pressure", pressure)):
        lines.append(f"SCALARS {name} double 1")
        lines.append("LOOKUP_TABLE default")
        lines += [_fmt(value) for value in values]

    path.write_text("\n".join(lines) + "\n")
    logger.info("Wrote VTK file", path=str(path), n_cells=n_cells)
    return path


def write_dofs(path: PathLike, solution: DiscreteSolution) -> Path:
    path = _prepare(path)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(DOF_COLUMNS)
        writer.writerows(("velocity", i, _fmt(v)) for i, v in enumerate(solution.velocity))
        writer.writerows(("pressure", i, _fmt(v)) for i, v in enumerate(solution.pressure))
        if solution.system.mean_constraint:
            writer.writerow(("multiplier", 0, _fmt(solution.multiplier)))
    logger.info("Wrote DOF dump", path=str(path), n_velocity=len(solution.velocity))
    return path


def boundary_trace_rows(solution: DiscreteSolution, tags: Optional[Iterable[str]] = None) -> List[list]:
    """u_h and the prescribed data at the quadrature points of boundary edges.

    Dirichlet edges report g, slip edges g1, free-outflow edges leave the data empty.
    """
    wanted = set(tags) if tags is not None else None
    rows = []
    for view in solution.system.cells:
        u_h = solution.cell_velocity(view.index)
        for edge, trace in view.boundary_traces:
            if wanted is not None and edge.tag not in wanted:
                continue
            condition = solution.system.boundary[edge.tag]
            values = trace.values(u_h)
            if isinstance(condition, Dirichlet):
                data = condition.g(trace.points, trace.normal)
            elif isinstance(condition, Slip):
                data = condition.g1(trace.points, trace.normal)
            else:
                data = None
            for q, (x, y) in enumerate(trace.points):
                prescribed = ["", ""] if data is None else [_fmt(data[q, 0]), _fmt(data[q, 1])]
                rows.append(
                    [edge.tag, view.index, edge.local, _fmt(x), _fmt(y), _fmt(values[q, 0]), _fmt(values[q, 1])]
                    + prescribed
                )
    return rows


def write_boundary_traces(path: PathLike, solution: DiscreteSolution, tags: Optional[Iterable[str]] = None) -> Path:
    path = _prepare(path)
    rows = boundary_trace_rows(solution, tags)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(TRACE_COLUMNS)
        writer.writerows(rows)
    logger.info("Wrote boundary traces", path=str(path), n_points=len(rows))
    return path


def write_convergence(path: PathLike, records: Sequence[ConvergenceRecord]) -> Path:
    path = _prepare(path)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(CONVERGENCE_COLUMNS)
        writer.writerows(record.csv_row() for record in records)
    logger.info("Wrote convergence table", path=str(path), rows=len(records))
    return path
