from typing import List, Optional

from pydantic import BaseModel, Field


class ConvergenceRecord(BaseModel):
    """One row of a convergence table."""

    n_cells: int = Field(..., description="Number of cells N")
    h: float = Field(..., gt=0, description="Mesh size, mean cell diameter")
    e_u: float = Field(..., ge=0, description="Velocity error in the mesh-dependent norm")
    e_p: float = Field(..., ge=0, description="Pressure error in L2")
    div_norm: float = Field(..., ge=0, description="L2 norm of div u_h")
    e_u_volume: Optional[float] = Field(default=None, description="Velocity error without boundary terms")
    r_u: Optional[float] = None
    r_p: Optional[float] = None
    nu: Optional[float] = None
    residual: Optional[float] = Field(default=None, description="Relative residual of the linear solve")

    def csv_row(self) -> List[str]:
        def fmt(value: Optional[float]) -> str:
            return "" if value is None else f"{value:.6e}"

        return [
            str(self.n_cells),
            fmt(self.h),
            fmt(self.e_u),
            "" if self.r_u is None else f"{self.r_u:.4f}",
            fmt(self.e_p),
            "" if self.r_p is None else f"{self.r_p:.4f}",
            fmt(self.div_norm),
            fmt(self.e_u_volume),
        ]


CONVERGENCE_COLUMNS = ["N", "h", "e_u", "r_u", "e_p", "r_p", "div_norm", "e_u_volume"]


class MeshQualityReport(BaseModel):
    """Per-cell shape measures; lists are indexed by cell."""

    edge_ratios: List[float]
    kernel_ratios: List[float]
    star_shaped: List[bool]

    @property
    def min_edge_ratio(self) -> float:
        return min(self.edge_ratios)

    @property
    def min_kernel_ratio(self) -> float:
        return min(self.kernel_ratios)
