import math
from typing import Annotated, List, Literal, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field

from brinkman_vem.core.errors import MeshGenerationError

# Geometric tolerance for predicates, in domain units.
GEOMETRY_TOL = 1e-8


class _Frozen(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


# Domains


class Rectangle(_Frozen):
    kind: Literal["rectangle"] = "rectangle"
    x0: float = 0.0
    y0: float = 0.0
    x1: float = 1.0
    y1: float = 1.0

    @property
    def area(self) -> float:
        return (self.x1 - self.x0) * (self.y1 - self.y0)

    def validate_geometry(self) -> None:
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise MeshGenerationError(
                f"degenerate rectangle [{self.x0}, {self.x1}] x [{self.y0}, {self.y1}]"
            )


class CylinderChannel(_Frozen):
    """Channel (0, L) x (0, H) with a circular hole."""

    kind: Literal["cylinder"] = "cylinder"
    length: float = 0.82
    height: float = 0.41
    xc: float = 0.2
    yc: float = 0.2
    radius: float = 0.05

    @property
    def area(self) -> float:
        return self.length * self.height - math.pi * self.radius**2

    def validate_geometry(self) -> None:
        if self.length <= 0 or self.height <= 0 or self.radius <= 0:
            raise MeshGenerationError("channel length, height and radius must be positive")
        clearance = min(self.xc, self.yc, self.length - self.xc, self.height - self.yc)
        if clearance <= self.radius:
            raise MeshGenerationError("the cylinder must lie strictly inside the channel")


class BackwardStep(_Frozen):
    """(0, 9H) x (0, 2H) minus the step (0, 2H) x (0, H)."""

    kind: Literal["step"] = "step"
    height: float = 1.0

    @property
    def area(self) -> float:
        return 16.0 * self.height**2

    def validate_geometry(self) -> None:
        if self.height <= 0:
            raise MeshGenerationError("step height must be positive")


Domain = Annotated[Union[Rectangle, CylinderChannel, BackwardStep], Field(discriminator="kind")]


# Boundary predicates, evaluated on edge midpoints


class HalfPlane(_Frozen):
    """Points with a*x + b*y <= c."""

    kind: Literal["halfplane"] = "halfplane"
    a: float
    b: float
    c: float

    def contains(self, point: Tuple[float, float]) -> bool:
        scale = math.hypot(self.a, self.b) or 1.0
        return self.a * point[0] + self.b * point[1] <= self.c + GEOMETRY_TOL * scale


class Box(_Frozen):
    kind: Literal["box"] = "box"
    x0: float
    y0: float
    x1: float
    y1: float

    def contains(self, point: Tuple[float, float]) -> bool:
        x, y = point
        return (
            self.x0 - GEOMETRY_TOL <= x <= self.x1 + GEOMETRY_TOL
            and self.y0 - GEOMETRY_TOL <= y <= self.y1 + GEOMETRY_TOL
        )


class Circle(_Frozen):
    """Closed disk membership."""

    kind: Literal["circle"] = "circle"
    xc: float
    yc: float
    radius: float

    def contains(self, point: Tuple[float, float]) -> bool:
        return math.hypot(point[0] - self.xc, point[1] - self.yc) <= self.radius + GEOMETRY_TOL


class Everywhere(_Frozen):
    kind: Literal["everywhere"] = "everywhere"

    def contains(self, point: Tuple[float, float]) -> bool:
        return True


Predicate = Annotated[Union[HalfPlane, Box, Circle, Everywhere], Field(discriminator="kind")]


class TagRule(_Frozen):
    tag: str = Field(..., min_length=1, description="Boundary tag assigned on match")
    where: Predicate = Field(..., description="Predicate on the edge midpoint")


# mesh-json document


class BoundaryEntry(BaseModel):
    model_config = ConfigDict(extra="forbid")

    edge: Tuple[int, int]
    tag: str


class MeshDocument(BaseModel):
    model_config = ConfigDict(extra="forbid")

    vertices: List[Tuple[float, float]]
    cells: List[List[int]]
    boundary: List[BoundaryEntry]
