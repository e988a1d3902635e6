"""
Polygonal meshes.

A mesh is a set of vertices and counter-clockwise vertex loops. Boundary edges
are stored in the orientation of their owning cell together with a tag that
names the boundary condition applied there.
"""

import json
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import structlog
from pydantic import ValidationError
from scipy.optimize import linprog
from scipy.spatial import Delaunay, Voronoi
from scipy.spatial.distance import pdist

from brinkman_vem.core.errors import MeshError, MeshFormatError, MeshGenerationError, TaggingError
from brinkman_vem.models.geometry import (
    BackwardStep,
    CylinderChannel,
    Domain,
    MeshDocument,
    Rectangle,
    TagRule,
)
from brinkman_vem.models.records import MeshQualityReport

logger = structlog.get_logger(__name__)

DEFAULT_TAG = "boundary"
LLOYD_ITERATIONS = 20
NONCONVEX_INDENT = 0.3


class MeshFamily(str, Enum):
    TRIANGLE = "triangle"
    QUAD = "quad"
    VORONOI = "voronoi"
    NONCONVEX = "nonconvex"


@dataclass(frozen=True)
class BoundaryEdge:
    start: int
    end: int
    tag: str
    cell: int
    local: int


def polygon_area(points: np.ndarray) -> float:
    x, y = points[:, 0], points[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def polygon_centroid(points: np.ndarray) -> np.ndarray:
    x, y = points[:, 0], points[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    area = 0.5 * cross.sum()
    return np.array([((x + xn) * cross).sum(), ((y + yn) * cross).sum()]) / (6.0 * area)


def outward_normals(points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Unit outward normals and lengths of the edges of a CCW polygon."""
    d = np.roll(points, -1, axis=0) - points
    lengths = np.hypot(d[:, 0], d[:, 1])
    normals = np.column_stack([d[:, 1], -d[:, 0]]) / lengths[:, None]
    return normals, lengths


def _orientation(p, q, r) -> float:
    return (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])


def _on_segment(p, a, b, tol: float) -> bool:
    ab = b - a
    length2 = float(ab @ ab)
    t = np.clip(float((p - a) @ ab) / length2, 0.0, 1.0)
    return float(np.hypot(*(a + t * ab - p))) <= tol


def _segments_touch(a, b, c, d, tol: float) -> bool:
    o1, o2 = _orientation(a, b, c), _orientation(a, b, d)
    o3, o4 = _orientation(c, d, a), _orientation(c, d, b)
    if o1 * o2 < 0 and o3 * o4 < 0:
        return True
    return any(
        _on_segment(p, s, e, tol) for p, s, e in ((c, a, b), (d, a, b), (a, c, d), (b, c, d))
    )


def _is_simple(points: np.ndarray, tol: float) -> bool:
    n = len(points)
    if n == 3:
        return True
    for i in range(n):
        for j in range(i + 2, n):
            if i == 0 and j == n - 1:
                continue
            if _segments_touch(points[i], points[(i + 1) % n], points[j], points[(j + 1) % n], tol):
                return False
    return True


def kernel_chebyshev(points: np.ndarray) -> Tuple[np.ndarray, float]:
    """Centre and radius of the largest disk inside the polygon kernel."""
    normals, _ = outward_normals(points)
    a_ub = np.column_stack([normals, np.ones(len(points))])
    b_ub = np.einsum("ij,ij->i", normals, points)
    result = linprog(
        c=[0.0, 0.0, -1.0],
        A_ub=a_ub,
        b_ub=b_ub,
        bounds=[(None, None), (None, None), (0.0, None)],
        method="highs",
    )
    if not result.success:
        return polygon_centroid(points), 0.0
    return np.asarray(result.x[:2]), float(result.x[2])


def fan_apex(points: np.ndarray, centroid: np.ndarray, diameter: float) -> np.ndarray:
    """The centroid when it lies strictly inside the kernel, else the kernel centre."""
    normals, _ = outward_normals(points)
    slack = np.einsum("ij,ij->i", normals, centroid - points)
    if np.all(slack < -1e-10 * diameter):
        return centroid
    center, radius = kernel_chebyshev(points)
    if radius <= 1e-12 * diameter:
        raise MeshError("cell is not star-shaped with respect to a disk")
    return center


class PolygonalMesh:
    """Immutable polygonal mesh with per-cell and per-edge geometry."""

    def __init__(
        self,
        vertices: np.ndarray,
        cells: Sequence[Sequence[int]],
        boundary: Mapping[Tuple[int, int], str],
    ):
        vertices = np.array(vertices, dtype=float)
        if vertices.ndim != 2 or vertices.shape[1] != 2:
            raise MeshError("vertices must be an (n, 2) array")
        vertices.setflags(write=False)
        self.vertices = vertices
        self.cells = tuple(np.array(cell, dtype=int) for cell in cells)
        for cell in self.cells:
            cell.setflags(write=False)
        if not self.cells:
            raise MeshError("mesh has no cells")

        self._build_geometry()
        self._build_edges()
        self._attach_boundary(boundary)

    # construction helpers

    def _build_geometry(self) -> None:
        n_vertices = len(self.vertices)
        areas, centroids, diameters = [], [], []
        for c, cell in enumerate(self.cells):
            if len(cell) < 3:
                raise MeshError(f"cell {c} has fewer than 3 vertices")
            if cell.min() < 0 or cell.max() >= n_vertices:
                raise MeshError(f"cell {c} references a vertex out of range")
            if len(set(cell.tolist())) != len(cell):
                raise MeshError(f"cell {c} repeats a vertex")
            points = self.vertices[cell]
            area = polygon_area(points)
            if area <= 0.0:
                raise MeshError(f"cell {c} is not counter-clockwise or has zero area")
            diameter = float(pdist(points).max())
            _, lengths = outward_normals(points)
            if lengths.min() <= 1e-14 * diameter:
                raise MeshError(f"cell {c} has a zero-length edge")
            if not _is_simple(points, 1e-12 * diameter):
                raise MeshError(f"cell {c} is not a simple polygon")
            areas.append(area)
            centroids.append(polygon_centroid(points))
            diameters.append(diameter)
        self.areas = np.array(areas)
        self.centroids = np.array(centroids)
        self.diameters = np.array(diameters)
        for array in (self.areas, self.centroids, self.diameters):
            array.setflags(write=False)

    def _build_edges(self) -> None:
        directed: Dict[Tuple[int, int], Tuple[int, int]] = {}
        edge_index: Dict[Tuple[int, int], int] = {}
        edge_cells: List[List[int]] = []
        cell_edges = []
        for c, cell in enumerate(self.cells):
            ids = []
            for local in range(len(cell)):
                a, b = int(cell[local]), int(cell[(local + 1) % len(cell)])
                if (a, b) in directed:
                    raise MeshError(f"edge ({a}, {b}) is traversed twice in the same direction")
                directed[(a, b)] = (c, local)
                key = (min(a, b), max(a, b))
                if key not in edge_index:
                    edge_index[key] = len(edge_cells)
                    edge_cells.append([])
                edge_id = edge_index[key]
                edge_cells[edge_id].append(c)
                if len(edge_cells[edge_id]) > 2:
                    raise MeshError(f"edge {key} belongs to more than two cells")
                ids.append(edge_id)
            cell_edges.append(np.array(ids, dtype=int))
        self._directed = directed
        self.edge_index = edge_index
        self.edges = np.array(sorted(edge_index, key=edge_index.get), dtype=int).reshape(-1, 2)
        self.edge_cells = tuple(tuple(cells) for cells in edge_cells)
        self.cell_edges = tuple(cell_edges)

    def _attach_boundary(self, boundary: Mapping[Tuple[int, int], str]) -> None:
        expected = {
            (a, b) for (a, b) in self._directed if (b, a) not in self._directed
        }
        given = {(int(a), int(b)): tag for (a, b), tag in boundary.items()}
        missing = expected - set(given)
        extra = set(given) - expected
        if missing:
            raise MeshError(f"boundary edges without a tag: {sorted(missing)[:10]}")
        if extra:
            raise MeshError(f"tagged edges that are not on the boundary: {sorted(extra)[:10]}")

        out_degree: Dict[int, int] = {}
        in_degree: Dict[int, int] = {}
        for a, b in expected:
            out_degree[a] = out_degree.get(a, 0) + 1
            in_degree[b] = in_degree.get(b, 0) + 1
        if out_degree != in_degree:
            raise MeshError("boundary edges do not form closed loops")

        edges = []
        for (a, b), tag in given.items():
            cell, local = self._directed[(a, b)]
            edges.append(BoundaryEdge(a, b, tag, cell, local))
        self.boundary_edges = tuple(sorted(edges, key=lambda e: (e.cell, e.local)))

    @classmethod
    def from_cells(
        cls,
        vertices: np.ndarray,
        cells: Sequence[Sequence[int]],
        default_tag: str = DEFAULT_TAG,
    ) -> "PolygonalMesh":
        """Build a mesh, dropping unreferenced vertices and tagging the boundary."""
        vertices = np.asarray(vertices, dtype=float)
        used = np.unique(np.concatenate([np.asarray(c, dtype=int) for c in cells]))
        renumber = -np.ones(len(vertices), dtype=int)
        renumber[used] = np.arange(len(used))
        cells = [renumber[np.asarray(c, dtype=int)] for c in cells]
        directed = set()
        for cell in cells:
            for i in range(len(cell)):
                directed.add((int(cell[i]), int(cell[(i + 1) % len(cell)])))
        boundary = {(a, b): default_tag for (a, b) in directed if (b, a) not in directed}
        return cls(vertices[used], cells, boundary)

    # queries

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def h(self) -> float:
        return float(self.diameters.max())

    @property
    def mean_h(self) -> float:
        """Mean cell diameter; equals h on the quad and triangle grids."""
        return float(self.diameters.mean())

    @property
    def tags(self) -> List[str]:
        return sorted({edge.tag for edge in self.boundary_edges})

    @property
    def boundary(self) -> Dict[Tuple[int, int], str]:
        return {(e.start, e.end): e.tag for e in self.boundary_edges}

    def cell_points(self, cell: int) -> np.ndarray:
        return self.vertices[self.cells[cell]]

    def edge_midpoint(self, a: int, b: int) -> np.ndarray:
        return 0.5 * (self.vertices[a] + self.vertices[b])

    def with_boundary(self, boundary: Mapping[Tuple[int, int], str]) -> "PolygonalMesh":
        return PolygonalMesh(self.vertices, self.cells, boundary)

    def summary(self) -> Dict[str, Union[int, float, List[str]]]:
        return {
            "n_cells": self.n_cells,
            "n_vertices": self.n_vertices,
            "n_edges": self.n_edges,
            "h": self.h,
            "mean_h": self.mean_h,
            "area": float(self.areas.sum()),
            "tags": self.tags,
        }


# Tagging and quality


def tag_boundary(mesh: PolygonalMesh, rules: Sequence[TagRule]) -> PolygonalMesh:
    """Tag each boundary edge with the first rule whose predicate holds at its midpoint."""
    boundary = {}
    untagged = []
    for edge in mesh.boundary_edges:
        midpoint = tuple(mesh.edge_midpoint(edge.start, edge.end))
        for rule in rules:
            if rule.where.contains(midpoint):
                boundary[(edge.start, edge.end)] = rule.tag
                break
        else:
            untagged.append(edge)
    if untagged:
        listing = ", ".join(
            f"({e.start}, {e.end}) at ({mesh.edge_midpoint(e.start, e.end)[0]:.6g}, "
            f"{mesh.edge_midpoint(e.start, e.end)[1]:.6g})"
            for e in untagged
        )
        raise TaggingError(f"{len(untagged)} boundary edges match no rule: {listing}", untagged)
    logger.debug("Tagged boundary", tags=sorted(set(boundary.values())))
    return mesh.with_boundary(boundary)


def quality(mesh: PolygonalMesh) -> MeshQualityReport:
    edge_ratios, kernel_ratios, star_shaped = [], [], []
    for c in range(mesh.n_cells):
        points = mesh.cell_points(c)
        h_cell = mesh.diameters[c]
        _, lengths = outward_normals(points)
        _, radius = kernel_chebyshev(points)
        edge_ratios.append(float(lengths.min() / h_cell))
        kernel_ratios.append(float(radius / h_cell))
        star_shaped.append(bool(radius > 1e-12 * h_cell))
    return MeshQualityReport(
        edge_ratios=edge_ratios, kernel_ratios=kernel_ratios, star_shaped=star_shaped
    )


# Structured families


def _grid_shape(n_cells: int, width: float, height: float, per_square: int) -> Tuple[int, int]:
    if n_cells % per_square:
        raise MeshGenerationError(f"{n_cells} cells cannot tile a grid of {per_square}-cell squares")
    n_squares = n_cells // per_square
    aspect = width / height
    ny = max(1, int(round(math.sqrt(n_squares / aspect))))
    nx = n_squares // ny
    if nx * ny != n_squares or not math.isclose(nx / ny, aspect, rel_tol=1e-9):
        raise MeshGenerationError(
            f"{n_cells} cells cannot tile a {width:g} x {height:g} rectangle with square cells"
        )
    return nx, ny


def _lattice(xs: np.ndarray, ys: np.ndarray, keep, triangles: bool):
    nx, ny = len(xs) - 1, len(ys) - 1
    xx, yy = np.meshgrid(xs, ys)
    vertices = np.column_stack([xx.ravel(), yy.ravel()])

    def vid(i, j):
        return j * (nx + 1) + i

    cells = []
    for j in range(ny):
        for i in range(nx):
            if not keep(i, j):
                continue
            v00, v10, v11, v01 = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
            if triangles:
                cells.append([v00, v10, v11])
                cells.append([v00, v11, v01])
            else:
                cells.append([v00, v10, v11, v01])
    return vertices, cells


def _grid_coordinates(lo: float, hi: float, n: int) -> np.ndarray:
    return lo + (hi - lo) * (np.arange(n + 1) / n)


def _nonconvex_grid(domain: Rectangle, nx: int, ny: int):
    """Quad grid where every cell owns exactly one interior edge whose midpoint
    is pushed into the cell; the remaining edges are straight or bulge out."""
    if nx < 2 or ny < 2:
        raise MeshGenerationError("the non-convex family needs at least 2 x 2 cells")
    xs = _grid_coordinates(domain.x0, domain.x1, nx)
    ys = _grid_coordinates(domain.y0, domain.y1, ny)
    dx, dy = xs[1] - xs[0], ys[1] - ys[0]
    vertices, _ = _lattice(xs, ys, lambda i, j: False, triangles=False)
    vertices = list(map(tuple, vertices))

    def corner(i, j):
        return j * (nx + 1) + i

    # ("h", i, j): horizontal edge at ys[j] over [xs[i], xs[i+1]];
    # ("v", i, j): vertical edge at xs[i] over [ys[j], ys[j+1]].
    shifts = {}
    for j in range(1, ny):
        for i in range(nx):
            if (i, j) != (nx - 1, 1):
                shifts[("h", i, j)] = (0.0, NONCONVEX_INDENT * dy)
    for i in range(nx - 1):
        shifts[("v", i + 1, 0)] = (-NONCONVEX_INDENT * dx, 0.0)
    shifts[("h", nx - 1, 1)] = (0.0, -NONCONVEX_INDENT * dy)
    shifts[("v", nx - 1, 1)] = (NONCONVEX_INDENT * dx, 0.0)

    midpoint = {}
    for key in sorted(shifts):
        kind, i, j = key
        if kind == "h":
            base = (0.5 * (xs[i] + xs[i + 1]), ys[j])
        else:
            base = (xs[i], 0.5 * (ys[j] + ys[j + 1]))
        midpoint[key] = len(vertices)
        vertices.append((base[0] + shifts[key][0], base[1] + shifts[key][1]))

    cells = []
    for j in range(ny):
        for i in range(nx):
            loop = [corner(i, j)]
            for key, nxt in (
                (("h", i, j), corner(i + 1, j)),
                (("v", i + 1, j), corner(i + 1, j + 1)),
                (("h", i, j + 1), corner(i, j + 1)),
            ):
                if key in midpoint:
                    loop.append(midpoint[key])
                loop.append(nxt)
            if ("v", i, j) in midpoint:
                loop.append(midpoint[("v", i, j)])
            cells.append(loop)
    return np.array(vertices), cells


# Voronoi family


def _bounded_voronoi(points: np.ndarray, domain: Rectangle):
    """Voronoi cells of ``points`` clipped to the rectangle by mirroring the
    points across its four sides."""
    x, y = points[:, 0], points[:, 1]
    mirrored = np.vstack(
        [
            points,
            np.column_stack([2 * domain.x0 - x, y]),
            np.column_stack([2 * domain.x1 - x, y]),
            np.column_stack([x, 2 * domain.y0 - y]),
            np.column_stack([x, 2 * domain.y1 - y]),
        ]
    )
    vor = Voronoi(mirrored)
    regions = []
    for i, seed in enumerate(points):
        region = vor.regions[vor.point_region[i]]
        if -1 in region or len(region) < 3:
            raise MeshGenerationError("unbounded Voronoi region inside the domain")
        index = np.array(region, dtype=int)
        offsets = vor.vertices[index] - seed
        regions.append(index[np.argsort(np.arctan2(offsets[:, 1], offsets[:, 0]))])
    return vor.vertices, regions


def _merge_close_vertices(vertices: np.ndarray, cells, tol: float, priority: np.ndarray):
    """Collapse cell edges shorter than ``tol``; higher priority vertices survive."""
    parent = list(range(len(vertices)))

    def find(v):
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    def rank(v):
        return (priority[v], -v)

    for cell in cells:
        for i in range(len(cell)):
            a, b = find(int(cell[i])), find(int(cell[(i + 1) % len(cell)]))
            if a != b and np.hypot(*(vertices[a] - vertices[b])) < tol:
                keep, drop = (a, b) if rank(a) >= rank(b) else (b, a)
                parent[drop] = keep

    merged = []
    for c, cell in enumerate(cells):
        loop = [find(int(v)) for v in cell]
        loop = [v for i, v in enumerate(loop) if v != loop[i - 1]]
        if len(loop) < 3:
            raise MeshGenerationError(f"cell {c} collapsed while merging short edges")
        merged.append(loop)
    return merged


def _snap_to_rectangle(vertices: np.ndarray, domain: Rectangle, tol: float) -> np.ndarray:
    vertices = vertices.copy()
    x, y = vertices[:, 0], vertices[:, 1]
    for bound, column in ((domain.x0, x), (domain.x1, x), (domain.y0, y), (domain.y1, y)):
        column[np.abs(column - bound) < tol] = bound
    np.clip(x, domain.x0, domain.x1, out=x)
    np.clip(y, domain.y0, domain.y1, out=y)
    return vertices


def _rectangle_priority(vertices: np.ndarray, domain: Rectangle) -> np.ndarray:
    x, y = vertices[:, 0], vertices[:, 1]
    return (
        (x == domain.x0).astype(int)
        + (x == domain.x1)
        + (y == domain.y0)
        + (y == domain.y1)
    )


def _voronoi_rectangle(domain: Rectangle, n_cells: int, rng: np.random.Generator):
    lo = np.array([domain.x0, domain.y0])
    hi = np.array([domain.x1, domain.y1])
    points = lo + rng.random((n_cells, 2)) * (hi - lo)
    for _ in range(LLOYD_ITERATIONS):
        vertices, regions = _bounded_voronoi(points, domain)
        points = np.array([polygon_centroid(vertices[r]) for r in regions])
    vertices, regions = _bounded_voronoi(points, domain)

    scale = math.sqrt(domain.area / n_cells)
    vertices = _snap_to_rectangle(vertices, domain, 1e-9 * scale)
    priority = _rectangle_priority(vertices, domain)
    cells = _merge_close_vertices(vertices, regions, 1e-4 * scale, priority)
    return vertices, cells


def _dedupe_vertices(vertices: np.ndarray, cells):
    index: Dict[Tuple[float, float], int] = {}
    unique = []
    remap = np.empty(len(vertices), dtype=int)
    for i, point in enumerate(map(tuple, vertices)):
        if point not in index:
            index[point] = len(unique)
            unique.append(point)
        remap[i] = index[point]
    return np.array(unique), [[int(remap[v]) for v in cell] for cell in cells]


def _insert_hanging_vertices(vertices: np.ndarray, cells, line_y: float, x_lo: float, x_hi: float):
    """Split cell edges on the line y = line_y by every vertex lying inside them."""
    on_line = np.flatnonzero(
        (vertices[:, 1] == line_y) & (vertices[:, 0] >= x_lo) & (vertices[:, 0] <= x_hi)
    )
    xs = vertices[on_line, 0]
    result = []
    for cell in cells:
        loop = []
        for i, a in enumerate(cell):
            b = cell[(i + 1) % len(cell)]
            loop.append(a)
            if vertices[a, 1] == line_y and vertices[b, 1] == line_y:
                lo, hi = sorted((vertices[a, 0], vertices[b, 0]))
                inside = on_line[(xs > lo) & (xs < hi)]
                order = np.argsort(vertices[inside, 0])
                if vertices[b, 0] < vertices[a, 0]:
                    order = order[::-1]
                loop.extend(int(v) for v in inside[order])
        result.append(loop)
    return result


def _voronoi_step(domain: BackwardStep, n_cells: int, rng: np.random.Generator):
    H = domain.height
    n_top = int(round(n_cells * 9 / 16))
    n_bottom = n_cells - n_top
    if n_top < 1 or n_bottom < 1:
        raise MeshGenerationError("too few cells for the backward step")
    top = Rectangle(x0=0.0, y0=H, x1=9 * H, y1=2 * H)
    bottom = Rectangle(x0=2 * H, y0=0.0, x1=9 * H, y1=H)
    v_top, c_top = _voronoi_rectangle(top, n_top, rng)
    v_bottom, c_bottom = _voronoi_rectangle(bottom, n_bottom, rng)
    offset = len(v_top)
    vertices = np.vstack([v_top, v_bottom])
    cells = [list(c) for c in c_top] + [[v + offset for v in c] for c in c_bottom]
    vertices, cells = _dedupe_vertices(vertices, cells)
    cells = _insert_hanging_vertices(vertices, cells, H, 2 * H, 9 * H)

    x, y = vertices[:, 0], vertices[:, 1]
    priority = (
        (x == 0.0).astype(int)
        + (x == 9 * H)
        + (y == 0.0)
        + (y == 2 * H)
        + ((x == 2 * H) & (y <= H))
        + ((y == H) & (x <= 2 * H))
    )
    cells = _merge_close_vertices(vertices, cells, 1e-4 * math.sqrt(domain.area / n_cells), priority)
    return vertices, cells


# Cylinder channel


def _cylinder_triangles(domain: CylinderChannel, n_cells: int, rng: np.random.Generator):
    L, H, R = domain.length, domain.height, domain.radius
    center = np.array([domain.xc, domain.yc])
    spacing = math.sqrt(4.0 * domain.area / (math.sqrt(3.0) * n_cells))
    if spacing >= R:
        raise MeshGenerationError(
            f"{n_cells} cells are too coarse to resolve the cylinder of radius {R:g}"
        )

    nx = int(math.ceil(L / spacing))
    ny = int(math.ceil(H / spacing))
    sx = L * np.arange(nx + 1) / nx
    sy = H * np.arange(1, ny) / ny
    rectangle = np.vstack(
        [
            np.column_stack([sx, np.zeros_like(sx)]),
            np.column_stack([sx, np.full_like(sx, H)]),
            np.column_stack([np.zeros_like(sy), sy]),
            np.column_stack([np.full_like(sy, L), sy]),
        ]
    )

    n_circle = max(8, int(math.ceil(2.0 * math.pi * R / spacing)))
    angles = 2.0 * math.pi * np.arange(n_circle) / n_circle
    circle = center + R * np.column_stack([np.cos(angles), np.sin(angles)])

    row_height = spacing * math.sqrt(3.0) / 2.0
    rows = int(math.ceil(H / row_height)) + 1
    cols = int(math.ceil(L / spacing)) + 2
    jj, ii = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
    lattice = np.column_stack(
        [(ii + 0.5 * (jj % 2)).ravel() * spacing, jj.ravel() * row_height]
    )
    lattice += rng.uniform(-0.1 * spacing, 0.1 * spacing, size=lattice.shape)
    margin = np.minimum.reduce(
        [lattice[:, 0], L - lattice[:, 0], lattice[:, 1], H - lattice[:, 1]]
    )
    clearance = np.hypot(*(lattice - center).T) - R
    interior = lattice[(margin > 0.5 * spacing) & (clearance > 0.5 * spacing)]

    points = np.vstack([rectangle, circle, interior])
    is_circle = np.zeros(len(points), dtype=bool)
    is_circle[len(rectangle) : len(rectangle) + n_circle] = True

    triangulation = Delaunay(points)
    cells = []
    for simplex in triangulation.simplices:
        if is_circle[simplex].all():
            continue
        tri = points[simplex]
        area = polygon_area(tri)
        if abs(area) < 1e-10 * spacing**2:
            continue
        cells.append(list(simplex) if area > 0 else list(simplex[::-1]))
    return points, cells


def _step_lattice(domain: BackwardStep, n_cells: int, triangles: bool):
    per_unit = 32 if triangles else 16
    m = int(round(math.sqrt(n_cells / per_unit)))
    if m < 1 or per_unit * m * m != n_cells:
        raise MeshGenerationError(
            f"{n_cells} cells cannot tile the backward step; use {per_unit}*m^2 cells"
        )
    H = domain.height
    xs = _grid_coordinates(0.0, 9 * H, 9 * m)
    ys = _grid_coordinates(0.0, 2 * H, 2 * m)
    return _lattice(xs, ys, lambda i, j: not (i < 2 * m and j < m), triangles)


def generate(
    family: Union[MeshFamily, str],
    n_cells: int,
    seed: int = 0,
    domain: Optional[Domain] = None,
) -> PolygonalMesh:
    """Generate a mesh of the given family; ``seed`` fixes all randomness."""
    family = MeshFamily(family)
    domain = domain if domain is not None else Rectangle()
    domain.validate_geometry()
    if n_cells < 4:
        raise MeshGenerationError(f"at least 4 cells are required, got {n_cells}")
    rng = np.random.default_rng(seed)

    if isinstance(domain, Rectangle):
        width, height = domain.x1 - domain.x0, domain.y1 - domain.y0
        if family is MeshFamily.VORONOI:
            vertices, cells = _voronoi_rectangle(domain, n_cells, rng)
        elif family is MeshFamily.NONCONVEX:
            nx, ny = _grid_shape(n_cells, width, height, 1)
            vertices, cells = _nonconvex_grid(domain, nx, ny)
        else:
            triangles = family is MeshFamily.TRIANGLE
            nx, ny = _grid_shape(n_cells, width, height, 2 if triangles else 1)
            xs = _grid_coordinates(domain.x0, domain.x1, nx)
            ys = _grid_coordinates(domain.y0, domain.y1, ny)
            vertices, cells = _lattice(xs, ys, lambda i, j: True, triangles)
    elif isinstance(domain, BackwardStep):
        if family is MeshFamily.VORONOI:
            vertices, cells = _voronoi_step(domain, n_cells, rng)
        elif family in (MeshFamily.QUAD, MeshFamily.TRIANGLE):
            vertices, cells = _step_lattice(domain, n_cells, family is MeshFamily.TRIANGLE)
        else:
            raise MeshGenerationError("the backward step supports quad, triangle and voronoi meshes")
    elif isinstance(domain, CylinderChannel):
        if family is not MeshFamily.TRIANGLE:
            raise MeshGenerationError("the cylinder channel supports triangle meshes only")
        vertices, cells = _cylinder_triangles(domain, n_cells, rng)
    else:
        raise MeshGenerationError(f"unknown domain {domain!r}")

    mesh = PolygonalMesh.from_cells(vertices, cells)
    logger.info("Generated mesh", family=family.value, domain=domain.kind, seed=seed, **mesh.summary())
    return mesh


# mesh-json I/O


def to_document(mesh: PolygonalMesh) -> MeshDocument:
    return MeshDocument(
        vertices=[(float(x), float(y)) for x, y in mesh.vertices],
        cells=[[int(v) for v in cell] for cell in mesh.cells],
        boundary=[{"edge": (e.start, e.end), "tag": e.tag} for e in mesh.boundary_edges],
    )


def write_mesh(mesh: PolygonalMesh, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(to_document(mesh).model_dump(mode="json")), encoding="utf-8")
    logger.info("Wrote mesh", path=str(path), n_cells=mesh.n_cells)
    return path


def from_document(document: MeshDocument) -> PolygonalMesh:
    n_vertices = len(document.vertices)
    for c, cell in enumerate(document.cells):
        for v in cell:
            if not 0 <= v < n_vertices:
                raise MeshFormatError(
                    f"cell {c} references vertex {v}, out of range for {n_vertices} vertices"
                )
    directed = set()
    for cell in document.cells:
        for i in range(len(cell)):
            directed.add((cell[i], cell[(i + 1) % len(cell)]))
    boundary = {}
    for entry in document.boundary:
        a, b = entry.edge
        if (a, b) not in directed and (b, a) in directed:
            a, b = b, a
        boundary[(a, b)] = entry.tag
    try:
        return PolygonalMesh(np.array(document.vertices, dtype=float), document.cells, boundary)
    except MeshError as e:
        raise MeshFormatError(str(e)) from e


def read_mesh(path: Union[str, Path]) -> PolygonalMesh:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise MeshFormatError(f"{path}: {e.strerror}") from e
    except json.JSONDecodeError as e:
        raise MeshFormatError(f"{path}: line {e.lineno} column {e.colno}: {e.msg}") from e
    try:
        document = MeshDocument.model_validate(raw)
    except ValidationError as e:
        first = e.errors()[0]
        location = ".".join(str(part) for part in first["loc"]) or "<root>"
        if first["type"] == "missing":
            raise MeshFormatError(f"{path}: missing key '{location}'") from e
        raise MeshFormatError(f"{path}: {location}: {first['msg']}") from e
    mesh = from_document(document)
    logger.info("Read mesh", path=str(path), n_cells=mesh.n_cells)
    return mesh
