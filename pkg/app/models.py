from enum import Enum
from typing import Annotated, Any, Dict, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field


class StrictModel(BaseModel):
    # Scenario files are strict: unknown keys are errors, not silently dropped.
    model_config = ConfigDict(extra="forbid")


class Dimensions(StrictModel):
    n: int = Field(..., description="Dimension of the domain")
    m: int = Field(..., description="Codimension (number of map components)")


class BoxDomain(StrictModel):
    kind: Literal["box"]
    min: List[float]
    max: List[float]


class BallDomain(StrictModel):
    kind: Literal["ball"]
    center: List[float]
    radius: float = Field(..., gt=0)


class HalfSpaceSpec(StrictModel):
    normal: List[float] = Field(..., description="Unit outward normal")
    offset: float = Field(..., description="Half-space is <normal, y> <= offset")


class PolytopeDomain(StrictModel):
    kind: Literal["polytope"]
    halfspaces: List[HalfSpaceSpec]


DomainSpec = Annotated[
    Union[BoxDomain, BallDomain, PolytopeDomain], Field(discriminator="kind")
]


class AffinePsi(StrictModel):
    type: Literal["affine"]
    matrix: List[List[float]] = Field(..., description="m x n matrix A of psi(x) = A x + b")
    offset: List[float] = Field(..., description="Offset vector b (length m)")


class PolynomialTerm(StrictModel):
    exponents: List[int]
    coefficient: float


class PolynomialPsi(StrictModel):
    type: Literal["polynomial"]
    components: List[List[PolynomialTerm]] = Field(
        ..., description="One list of monomial terms per map component"
    )


class CatalogPsi(StrictModel):
    type: Literal["catalog"]
    id: str
    params: Dict[str, Any] = Field(default_factory=dict)


PsiSpec = Annotated[
    Union[AffinePsi, PolynomialPsi, CatalogPsi], Field(discriminator="type")
]


class PerturbationSpec(StrictModel):
    type: Literal["sine_bump"]
    amplitude: float = Field(..., ge=-0.05, le=0.05)


class GridSpec(StrictModel):
    h: float = Field(..., gt=0, description="Uniform lattice spacing")


class TimeSpec(StrictModel):
    safety: float = Field(0.9, gt=0, description="Fraction of the explicit stability limit")
    max_steps: int = Field(200_000, ge=0)
    tol_abs: float = Field(1e-8, ge=0)
    tol_rel: float = Field(1e-6, ge=0)


class OutputSpec(StrictModel):
    diagnostics_every: int = Field(100, ge=1)


class ProblemSpec(StrictModel):
    name: str
    dimensions: Dimensions
    domain: DomainSpec
    psi: PsiSpec
    perturbation: Optional[PerturbationSpec] = None
    grid: GridSpec
    time: TimeSpec = Field(default_factory=TimeSpec)
    outputs: OutputSpec = Field(default_factory=OutputSpec)


class Termination(str, Enum):
    converged = "Converged"
    max_steps = "MaxSteps"
    spacelike_lost = "SpacelikeLost"
    non_finite = "NonFinite"


class ConditionReport(BaseModel):
    n: int
    m: int
    delta: float = Field(..., description="Diameter of the domain")
    sup_d2psi: float = Field(..., description="Sampled sup over the domain of |D^2 psi|")
    sup_d2psi_upper: float = Field(
        ..., description="Upper bound sqrt(sum_beta sigma_max(Hess psi^beta)^2)"
    )
    sup_dpsi_boundary: float = Field(..., description="Sampled sup over the boundary of |D psi|")
    sup_dpsi_domain: float = Field(..., description="Sampled sup over the domain of |D psi|")
    eta0: float = Field(..., description="Maximum of cosh(theta) over the initial graph")
    lhs: float
    satisfied: bool
    initially_spacelike: bool
    sampling_factor: int = 4
    note: str = (
        "The condition is sufficient, not necessary: lhs >= 1 does not predict "
        "that the flow fails."
    )


# Column order of diagnostics.csv follows the field order below.
class DiagnosticsRecord(BaseModel):
    step: int
    t: float
    dt: float
    residual_sup: float
    max_cosh_theta: float
    sup_df: float
    max_principle_margin: float
    boundary_grad_margin: float
    barrier_margin: float
    product_bound_margin: float


class RunReport(BaseModel):
    name: str
    termination: Termination
    steps: int
    t: float
    residual_sup: Optional[float] = None
    sup_df: Optional[float] = None
    condition: Optional[ConditionReport] = None
    condition_error: Optional[str] = None
    offending_node: Optional[List[int]] = None
    offending_lambda: Optional[float] = None
    final_error: Optional[float] = Field(
        None, description="Sup-norm error against the exact solution, when one exists"
    )
    normality_sup: Optional[float] = None
    angle_chain_gap: Optional[float] = None
    normal_slope_margin: Optional[float] = None
    workers: int = 1
    wall_seconds: float = 0.0


class OrderReport(BaseModel):
    name: str
    h: List[float]
    errors: List[Optional[float]]
    terminations: List[Termination]
    order: Optional[float] = None
    fitted: bool = False
    within_band: bool = False
    note: str = ""


class CheckResult(BaseModel):
    name: str
    passed: bool
    detail: str = ""
