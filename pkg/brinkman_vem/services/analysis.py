"""
Manufactured solutions, discrete error norms, convergence tables and the
well-posedness checks.

Errors of virtual functions are measured through their projections: Pi_0 u_h
for the K^-1 weighted L2 part, Pi_eps u_h for the strain, the exact
polynomial div u_h, and the exact edge traces for the boundary terms.
"""

import math
import time
from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, NamedTuple, Optional, Sequence, Union

import numpy as np
import structlog
from scipy.linalg import eigh, solve as dense_solve

from brinkman_vem.core.errors import ConfigError, ConvergenceError
from brinkman_vem.models.geometry import Domain, TagRule
from brinkman_vem.models.records import ConvergenceRecord
from brinkman_vem.services.assembly import (
    CellView,
    DiscreteSolution,
    ProblemData,
    SaddleSystem,
    assemble,
    solve,
)
from brinkman_vem.services.dataexpr import Neg, ScalarField, differentiate, parse
from brinkman_vem.services.mesh import MeshFamily, PolygonalMesh, generate, tag_boundary
from brinkman_vem.services.nitsche import BoundarySpec, Dirichlet, NitscheParams, Slip
from brinkman_vem.services.polyspace import cell_basis, fan_rule, poly_dim

logger = structlog.get_logger(__name__)

STREAM_FUNCTION = "-256*x^2*(x-1)^2*y*(y-1)*(2*y-1)"
STREAM_PRESSURE = "sin(x-y)"

FieldSource = Union[str, float, ScalarField]


def _field(source: FieldSource) -> ScalarField:
    return source if isinstance(source, ScalarField) else ScalarField(source)


def _permeability_matrix(value) -> np.ndarray:
    value = np.asarray(value, dtype=float)
    return float(value) * np.eye(2) if value.ndim == 0 else value


class ManufacturedCase:
    """An exact (u, p) pair with the data that makes it solve the Brinkman problem.

    The permeability is constant. f = K^-1 u - nu div eps(u) + grad p.
    """

    def __init__(
        self,
        u1: FieldSource,
        u2: FieldSource,
        p: FieldSource,
        nu: float = 1.0,
        permeability=1.0,
    ):
        self.u1, self.u2, self.p = _field(u1), _field(u2), _field(p)
        self.nu = nu
        self.permeability = _permeability_matrix(permeability)
        self._gradient = (self.u1.gradient(), self.u2.gradient())
        self._pressure_gradient = self.p.gradient()
        (u1x, u1y), (u2x, u2y) = self._gradient
        self._second = {
            "u1_xx": u1x.derivative("x"),
            "u1_yy": u1y.derivative("y"),
            "u1_xy": u1x.derivative("y"),
            "u2_xx": u2x.derivative("x"),
            "u2_yy": u2y.derivative("y"),
            "u2_xy": u2x.derivative("y"),
        }

    def with_nu(self, nu: float) -> "ManufacturedCase":
        return ManufacturedCase(self.u1, self.u2, self.p, nu=nu, permeability=self.permeability)

    def with_permeability(self, permeability) -> "ManufacturedCase":
        return ManufacturedCase(self.u1, self.u2, self.p, nu=self.nu, permeability=permeability)

    def velocity(self, points: np.ndarray, normal: Optional[np.ndarray] = None) -> np.ndarray:
        x, y = np.atleast_2d(points).T
        return np.column_stack([self.u1(x, y), self.u2(x, y)])

    def pressure(self, points: np.ndarray) -> np.ndarray:
        x, y = np.atleast_2d(points).T
        return np.broadcast_to(self.p(x, y), x.shape).astype(float)

    def velocity_gradient(self, points: np.ndarray) -> np.ndarray:
        """(n, 2, 2) with entry [q, i, j] = d u_i / d x_j."""
        x, y = np.atleast_2d(points).T
        out = np.empty((len(x), 2, 2))
        for i, row in enumerate(self._gradient):
            for j, derivative in enumerate(row):
                out[:, i, j] = derivative(x, y)
        return out

    def strain(self, points: np.ndarray) -> np.ndarray:
        grad = self.velocity_gradient(points)
        return 0.5 * (grad + grad.transpose(0, 2, 1))

    def divergence(self, points: np.ndarray) -> np.ndarray:
        grad = self.velocity_gradient(points)
        return grad[:, 0, 0] + grad[:, 1, 1]

    def traction(self, points: np.ndarray, normal: np.ndarray) -> np.ndarray:
        """nu eps(u) n."""
        return self.nu * self.strain(points) @ np.asarray(normal, dtype=float)

    def source(self, points: np.ndarray, normal: Optional[np.ndarray] = None) -> np.ndarray:
        x, y = np.atleast_2d(points).T
        d = {name: np.broadcast_to(field(x, y), x.shape) for name, field in self._second.items()}
        div_eps = np.column_stack(
            [
                d["u1_xx"] + 0.5 * d["u1_yy"] + 0.5 * d["u2_xy"],
                0.5 * (d["u1_xy"] + d["u2_xx"]) + d["u2_yy"],
            ]
        )
        px, py = self._pressure_gradient
        grad_p = np.column_stack([np.broadcast_to(px(x, y), x.shape), np.broadcast_to(py(x, y), x.shape)])
        reaction = self.velocity(points) @ np.linalg.inv(self.permeability).T
        return reaction - self.nu * div_eps + grad_p

    def problem(self) -> ProblemData:
        return ProblemData(nu=self.nu, permeability=self.permeability, source=self.source)

    def boundary_spec(self, kinds: Mapping[str, str]) -> BoundarySpec:
        """Boundary data read off the exact solution, per tag: "dirichlet" or "slip"."""
        conditions = {}
        for tag, kind in kinds.items():
            if kind == "dirichlet":
                conditions[tag] = Dirichlet(g=self.velocity)
            elif kind == "slip":
                conditions[tag] = Slip(g1=self.velocity, g2=self.traction)
            else:
                raise ConfigError(
                    f"boundary kind {kind!r} cannot carry manufactured data", location=f"boundary.{tag}"
                )
        return BoundarySpec(conditions)


def stream_function_case(nu: float = 1.0, permeability=1.0) -> ManufacturedCase:
    """u = curl of -256 x^2 (x-1)^2 y (y-1) (2y-1), p = sin(x - y) on the unit square."""
    phi = parse(STREAM_FUNCTION)
    u1 = ScalarField(differentiate(phi, "y"))
    u2 = ScalarField(Neg(differentiate(phi, "x")))
    return ManufacturedCase(u1, u2, STREAM_PRESSURE, nu=nu, permeability=permeability)


# error norms


class ErrorSummary(NamedTuple):
    """Squared error contributions summed over the mesh."""

    volume: float
    boundary: float
    pressure: float
    divergence: float

    @property
    def e_u(self) -> float:
        return math.sqrt(self.volume + self.boundary)

    @property
    def e_u_volume(self) -> float:
        return math.sqrt(self.volume)

    @property
    def e_p(self) -> float:
        return math.sqrt(max(self.pressure, 0.0))

    @property
    def div_norm(self) -> float:
        return math.sqrt(self.divergence)


def _cell_terms(solution: DiscreteSolution, case: ManufacturedCase, view: CellView) -> np.ndarray:
    """[mass, strain, div error, div norm, int d^2, int d, int p, area] with d = p - p_h."""
    system = solution.system
    k = system.order
    dim, dim_km1 = poly_dim(k), poly_dim(k - 1)
    rule = fan_rule(system.mesh.cell_points(view.index), view.apex, 2 * k + 4)
    basis = cell_basis(view.centroid, view.diameter, k)
    values = basis.evaluate(rule.points)
    gx, gy = values @ basis.dx, values @ basis.dy
    w = rule.weights

    u_h = solution.cell_velocity(view.index)
    zero = view.zero_k @ u_h
    eps = view.eps @ u_h
    diff = case.velocity(rule.points) - np.column_stack([values @ zero[:dim], values @ zero[dim:]])
    inverse = np.linalg.inv(view.permeability)
    mass = w @ np.einsum("qi,ij,qj->q", diff, inverse, diff)

    exact = case.strain(rule.points)
    e11 = exact[:, 0, 0] - gx @ eps[:dim]
    e22 = exact[:, 1, 1] - gy @ eps[dim:]
    e12 = exact[:, 0, 1] - 0.5 * (gy @ eps[:dim] + gx @ eps[dim:])
    strain = w @ (e11**2 + e22**2 + 2.0 * e12**2)

    div_h = values[:, :dim_km1] @ (view.divergence @ u_h)
    div_error = w @ (case.divergence(rule.points) - div_h) ** 2
    div_norm = w @ div_h**2

    p = case.pressure(rule.points)
    d = p - values[:, :dim_km1] @ solution.cell_pressure(view.index)
    return np.array([mass, strain, div_error, div_norm, w @ d**2, w @ d, w @ p, w.sum()])


def _boundary_terms(solution: DiscreteSolution, case: ManufacturedCase, view: CellView) -> float:
    total = 0.0
    u_h = solution.cell_velocity(view.index)
    for edge, trace in view.boundary_traces:
        condition = solution.system.boundary[edge.tag]
        diff = case.velocity(trace.points) - trace.values(u_h)
        if isinstance(condition, Dirichlet):
            total += trace.weights @ np.sum(diff**2, axis=1) / trace.length
        elif isinstance(condition, Slip):
            total += trace.weights @ (diff @ trace.normal) ** 2 / trace.length
    return total


def evaluate_errors(solution: DiscreteSolution, case: ManufacturedCase) -> ErrorSummary:
    """All error terms in one pass over the cells.

    With the mean constraint active the exact pressure is compared after
    removing its mean over the domain.
    """
    terms = np.zeros(8)
    boundary = 0.0
    for view in solution.system.cells:
        terms += _cell_terms(solution, case, view)
        boundary += _boundary_terms(solution, case, view)
    mass, strain, div_error, div_norm, d2, d1, p1, area = terms
    shift = p1 / area if solution.system.mean_constraint else 0.0
    pressure = d2 - 2.0 * shift * d1 + shift**2 * area
    return ErrorSummary(
        volume=mass + case.nu * strain + div_error,
        boundary=boundary,
        pressure=pressure,
        divergence=div_norm,
    )


def error_energy(solution: DiscreteSolution, case: ManufacturedCase) -> float:
    return evaluate_errors(solution, case).e_u


def error_pressure(solution: DiscreteSolution, case: ManufacturedCase) -> float:
    return evaluate_errors(solution, case).e_p


def divergence_norm(solution: DiscreteSolution) -> float:
    """||div u_h|| over the domain."""
    system = solution.system
    k = system.order
    dim_km1 = poly_dim(k - 1)
    total = 0.0
    for view in system.cells:
        rule = fan_rule(system.mesh.cell_points(view.index), view.apex, 2 * k)
        values = cell_basis(view.centroid, view.diameter, k - 1).evaluate(rule.points)[:, :dim_km1]
        total += rule.weights @ (values @ solution.divergence(view.index)) ** 2
    return math.sqrt(total)


# convergence tables


def rate(error: float, next_error: float, h: float, next_h: float) -> Optional[float]:
    if error <= 0.0 or next_error <= 0.0:
        return None
    return (math.log(error) - math.log(next_error)) / (math.log(h) - math.log(next_h))


def agree_to_digits(a: float, b: float, digits: int = 3) -> bool:
    """True when a/b rounds to 1 at the given number of significant digits."""
    scale = max(abs(a), abs(b))
    return abs(a - b) <= 0.5 * 10.0 ** (1 - digits) * scale


def rates(records: Sequence[ConvergenceRecord]) -> List[ConvergenceRecord]:
    """Fill r_u and r_p; the first row has no rate."""
    if len(records) < 2:
        raise ConvergenceError(f"rates need at least 2 records, got {len(records)}")
    for previous, current in zip(records, records[1:]):
        if not current.h < previous.h:
            raise ConvergenceError(
                f"mesh size must decrease strictly, got h={previous.h:g} then h={current.h:g}"
            )
    out = [records[0].model_copy(update={"r_u": None, "r_p": None})]
    for previous, current in zip(records, records[1:]):
        out.append(
            current.model_copy(
                update={
                    "r_u": rate(previous.e_u, current.e_u, previous.h, current.h),
                    "r_p": rate(previous.e_p, current.e_p, previous.h, current.h),
                }
            )
        )
    return out


def run_case(
    mesh: PolygonalMesh,
    case: ManufacturedCase,
    order: int,
    kinds: Optional[Mapping[str, str]] = None,
    params: Optional[NitscheParams] = None,
    workers: Optional[int] = None,
):
    """Assemble, solve and measure one manufactured problem; returns (solution, record)."""
    kinds = kinds or {tag: "dirichlet" for tag in mesh.tags}
    system = assemble(
        mesh, order, case.problem(), case.boundary_spec(kinds), params=params, workers=workers
    )
    solution = solve(system)
    errors = evaluate_errors(solution, case)
    record = ConvergenceRecord(
        n_cells=mesh.n_cells,
        h=mesh.mean_h,
        e_u=errors.e_u,
        e_p=errors.e_p,
        div_norm=errors.div_norm,
        e_u_volume=errors.e_u_volume,
        nu=case.nu,
        residual=solution.residual,
    )
    return solution, record


def mesh_ladder(n_start: int, levels: int) -> List[int]:
    """Cell counts multiplying by four per level."""
    if levels < 2:
        raise ConvergenceError(f"a convergence study needs at least 2 levels, got {levels}")
    return [n_start * 4**level for level in range(levels)]


def convergence_study(
    case: ManufacturedCase,
    family: Union[MeshFamily, str],
    order: int,
    levels: int,
    n_start: int,
    seed: int = 0,
    domain: Optional[Domain] = None,
    rules: Optional[Iterable[TagRule]] = None,
    kinds: Optional[Mapping[str, str]] = None,
    params: Optional[NitscheParams] = None,
    workers: Optional[int] = None,
) -> List[ConvergenceRecord]:
    start_time = time.time()
    rules = list(rules or [])
    records = []
    for n_cells in mesh_ladder(n_start, levels):
        mesh = generate(family, n_cells, seed=seed, domain=domain)
        if rules:
            mesh = tag_boundary(mesh, rules)
        _, record = run_case(mesh, case, order, kinds=kinds, params=params, workers=workers)
        logger.info(
            "Convergence level finished",
            family=str(MeshFamily(family).value),
            n_cells=record.n_cells,
            h=record.h,
            e_u=record.e_u,
            e_p=record.e_p,
            nu=case.nu,
        )
        records.append(record)
    table = rates(records)
    logger.info("Convergence study finished", levels=levels, execution_time=time.time() - start_time)
    return table


def nu_sweep(
    case: ManufacturedCase, nus: Iterable[float], **study
) -> Dict[float, List[ConvergenceRecord]]:
    """One convergence table per viscosity on identical meshes."""
    tables = {}
    for nu in nus:
        if not 0.0 < nu <= 1.0:
            raise ConfigError(f"viscosity nu={nu} must lie in (0, 1]", location="nu")
        tables[nu] = convergence_study(case.with_nu(nu), **study)
    return tables


# well-posedness checks


@dataclass(frozen=True)
class CoercivityReport:
    samples: int
    min_velocity_form: float
    min_ratio: float
    threshold: float

    @property
    def passed(self) -> bool:
        return self.min_velocity_form > 0.0 and self.min_ratio >= self.threshold


def sample_coercivity(
    system: SaddleSystem, samples: int = 100, seed: int = 0, threshold: float = 0.25
) -> CoercivityReport:
    """Sample m_h + a_h and a_h against nu||eps||^2 plus the penalty terms."""
    rng = np.random.default_rng(seed)
    parts = system.parts
    a_h = parts["viscous"] + parts["penalty"] + parts["consistency"]
    reference = parts["viscous"] + parts["penalty"]
    min_form, min_ratio = math.inf, math.inf
    for _ in range(samples):
        v = rng.standard_normal(system.n_velocity)
        min_form = min(min_form, float(v @ (system.velocity @ v)))
        min_ratio = min(min_ratio, float(v @ (a_h @ v)) / float(v @ (reference @ v)))
    report = CoercivityReport(samples, min_form, min_ratio, threshold)
    logger.info("Coercivity sampling", samples=samples, min_ratio=min_ratio, passed=report.passed)
    return report


def infsup_constant(system: SaddleSystem) -> float:
    """Smallest singular value of B in the velocity norm against the pressure L2 norm.

    The constant pressure mode is discarded when the mean constraint holds.
    """
    parts = system.parts
    norm = (parts["mass"] + parts["viscous"] + parts["divergence_gram"] + parts["boundary_norm"]).toarray()
    coupling = system.coupling.toarray()
    schur = coupling @ dense_solve(norm, coupling.T, assume_a="pos")
    values = np.sort(eigh(0.5 * (schur + schur.T), parts["pressure_mass"].toarray(), eigvals_only=True))
    if system.mean_constraint:
        values = values[1:]
    beta = math.sqrt(max(values[0], 0.0))
    logger.info("Inf-sup constant", n_cells=system.mesh.n_cells, beta=beta)
    return beta


def boundary_trace_error(solution: DiscreteSolution, tag: str) -> float:
    """L2 misfit of u_h against the prescribed data on the edges of one tag.

    Dirichlet edges compare the full vector, slip edges the normal component.
    """
    condition = solution.system.boundary[tag]
    total = 0.0
    for view in solution.system.cells:
        u_h = solution.cell_velocity(view.index)
        for edge, trace in view.boundary_traces:
            if edge.tag != tag:
                continue
            if isinstance(condition, Dirichlet):
                diff = trace.values(u_h) - condition.g(trace.points, trace.normal)
                total += trace.weights @ np.sum(diff**2, axis=1)
            elif isinstance(condition, Slip):
                diff = (trace.values(u_h) - condition.g1(trace.points, trace.normal)) @ trace.normal
                total += trace.weights @ diff**2
    return math.sqrt(total)
