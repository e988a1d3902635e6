"""
Experiment descriptions read from TOML files.

    order = 2
    nu = 1e-3

    [permeability]
    kappa = 1e8

    [mesh]
    family = "quad"
    n_cells = 1024

    [[tags]]
    tag = "lid"
    where = { kind = "halfplane", a = 0.0, b = -1.0, c = -1.0 }

    [[tags]]
    tag = "wall"
    where = { kind = "everywhere" }

    [boundary.lid]
    kind = "dirichlet"
    g = ["1", "0"]

    [boundary.wall]
    kind = "dirichlet"
"""

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Annotated, Callable, Dict, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from brinkman_vem.core.errors import ConfigError
from brinkman_vem.models.geometry import Domain, TagRule
from brinkman_vem.services.dataexpr import ScalarField, parse

Expression = Union[str, float]
VectorExpression = Tuple[Expression, Expression]


def _check_expressions(values):
    for value in values if isinstance(values, (list, tuple)) else [values]:
        if isinstance(value, str):
            parse(value)
    return values


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class PermeabilityConfig(_Section):
    """Exactly one of a scalar kappa (K = kappa I), a 2x2 matrix or an expression for kappa(x, y)."""

    kappa: Optional[float] = Field(default=None, gt=0)
    matrix: Optional[Tuple[Tuple[float, float], Tuple[float, float]]] = None
    expression: Optional[str] = None

    @model_validator(mode="after")
    def check_one_form(self):
        given = [v for v in (self.kappa, self.matrix, self.expression) if v is not None]
        if len(given) != 1:
            raise ValueError("give exactly one of kappa, matrix or expression")
        if self.matrix is not None:
            matrix = np.array(self.matrix, dtype=float)
            if not np.allclose(matrix, matrix.T) or np.linalg.eigvalsh(matrix).min() <= 0:
                raise ValueError("permeability matrix must be symmetric positive definite")
        if self.expression is not None:
            parse(self.expression)
        return self

    @property
    def is_constant(self) -> bool:
        return self.expression is None

    def value(self) -> Union[float, np.ndarray, Callable[[np.ndarray], float]]:
        if self.kappa is not None:
            return self.kappa
        if self.matrix is not None:
            return np.array(self.matrix, dtype=float)
        field = ScalarField(self.expression)
        return lambda point: field(point[0], point[1])


class NitscheConfig(_Section):
    factor: Optional[float] = Field(default=None, gt=0, description="gamma = factor (k+1)^2")


class MeshConfig(_Section):
    family: Optional[Literal["triangle", "quad", "voronoi", "nonconvex"]] = None
    n_cells: Optional[int] = Field(default=None, ge=4)
    seed: int = 0
    domain: Optional[Domain] = None
    file: Optional[str] = Field(default=None, description="mesh-json file; replaces the generator")

    @model_validator(mode="after")
    def check_source(self):
        if self.file is None and (self.family is None or self.n_cells is None):
            raise ValueError("give either file or both family and n_cells")
        if self.file is not None and self.family is not None:
            raise ValueError("file and family are mutually exclusive")
        return self


class DirichletConfig(_Section):
    kind: Literal["dirichlet"] = "dirichlet"
    g: VectorExpression = ("0", "0")

    parse_expressions = field_validator("g")(_check_expressions)


class SlipConfig(_Section):
    """u.n = g1.n and (nu eps(u) n).t = g2.t."""

    kind: Literal["slip"] = "slip"
    g1: VectorExpression = ("0", "0")
    g2: VectorExpression = ("0", "0")

    parse_expressions = field_validator("g1", "g2")(_check_expressions)


class OutflowConfig(_Section):
    kind: Literal["outflow"] = "outflow"


BoundaryConfig = Annotated[Union[DirichletConfig, SlipConfig, OutflowConfig], Field(discriminator="kind")]


class ExactConfig(_Section):
    u: VectorExpression
    p: Expression

    parse_expressions = field_validator("u", "p")(_check_expressions)


class ConvergenceConfig(_Section):
    levels: int = Field(default=4, ge=2)
    n_start: int = Field(default=64, ge=4, description="cells on the coarsest level")


class RunConfig(_Section):
    order: int = Field(default=2, ge=2, description="polynomial order k")
    nu: float = Field(default=1.0, gt=0, le=1.0, description="viscosity")
    permeability: PermeabilityConfig = Field(default_factory=lambda: PermeabilityConfig(kappa=1.0))
    nitsche: NitscheConfig = Field(default_factory=NitscheConfig)
    mesh: MeshConfig
    tags: List[TagRule] = Field(default_factory=list, description="first matching rule wins")
    boundary: Dict[str, BoundaryConfig]
    source: VectorExpression = ("0", "0")
    exact: Optional[ExactConfig] = None
    convergence: ConvergenceConfig = Field(default_factory=ConvergenceConfig)
    output_dir: Optional[str] = None
    name: str = "run"

    parse_expressions = field_validator("source")(_check_expressions)

    @model_validator(mode="after")
    def check_consistent(self):
        missing = sorted({rule.tag for rule in self.tags} - set(self.boundary))
        if missing:
            raise ValueError(f"tags without a boundary condition: {', '.join(missing)}")
        if self.exact is not None:
            if not self.permeability.is_constant:
                raise ValueError("a manufactured case needs a constant permeability")
            outflow = [tag for tag, c in self.boundary.items() if isinstance(c, OutflowConfig)]
            if outflow:
                raise ValueError(f"outflow tags cannot carry manufactured data: {', '.join(outflow)}")
        return self

    @property
    def boundary_kinds(self) -> Dict[str, str]:
        return {tag: condition.kind for tag, condition in self.boundary.items()}


def _location(error: dict) -> str:
    return ".".join(str(part) for part in error.get("loc", ())) or "<root>"


def parse_run_config(data: dict, source: str = "<config>") -> RunConfig:
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        raise ConfigError(first["msg"], location=f"{source}:{_location(first)}") from e


def load_run_config(path: Union[str, Path]) -> RunConfig:
    path = Path(path)
    try:
        with path.open("rb") as handle:
            data = tomllib.load(handle)
    except FileNotFoundError as e:
        raise ConfigError("file not found", location=str(path)) from e
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"invalid TOML: {e}", location=str(path)) from e
    return parse_run_config(data, str(path))
