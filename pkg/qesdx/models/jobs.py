import re
from enum import Enum
from typing import Dict, List, Optional

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    field_validator,
    model_validator,
)

from qesdx.config import settings

SELECTOR_PATTERN = re.compile(r"^(state:\d+|conj-pair|ground-chain)$")


class Action(str, Enum):
    """Pipelines a job can request.

    Each action dispatches to one path of the job runner.
    """

    SPECTRUM = "spectrum"
    TRANSFORM = "transform"
    CLASSIFY = "classify"
    VERIFY = "verify"
    SAMPLE = "sample"


class ModelParams(BaseModel):
    """Parameters of the radial sextic oscillator.

    Attributes:
        a: Stiffness of the x**6 term (positive)
        s: Origin exponent parameter
        M: Size of the analytic sector minus one
    """

    model_config = ConfigDict(extra="forbid")

    a: float = Field(gt=0.0)
    s: float
    M: int = Field(ge=0)


class GridSpec(BaseModel):
    """Sampling grid for plot data.

    Attributes:
        x_min: Left end of the grid (positive)
        x_max: Right end of the grid
        points: Number of equally spaced points
    """

    model_config = ConfigDict(extra="forbid")

    x_min: float = Field(default=settings.GRID_X_MIN, gt=0.0)
    x_max: float = settings.GRID_X_MAX
    points: int = Field(default=settings.GRID_POINTS, ge=2)

    @model_validator(mode="after")
    def _check_order(self) -> "GridSpec":
        if self.x_max <= self.x_min:
            raise ValueError("grid x_max must exceed x_min")
        return self


class JobOutputs(BaseModel):
    """Output file paths; command-line flags take precedence.

    Attributes:
        report: Path of the JSON report
        csv: Path of the grid samples
    """

    model_config = ConfigDict(extra="forbid")

    report: Optional[str] = None
    csv: Optional[str] = None


class EnergyWindow(BaseModel):
    """Energy window for the numerical spectrum oracle."""

    model_config = ConfigDict(extra="forbid")

    e_lo: float
    e_hi: float

    @model_validator(mode="after")
    def _check_window(self) -> "EnergyWindow":
        if self.e_hi <= self.e_lo:
            raise ValueError("energy window is empty")
        return self


class Job(BaseModel):
    """A single job document.

    Attributes:
        model: Sextic model parameters
        action: Requested pipeline
        chain: Chain selectors: "state:<index>", "conj-pair" or
            "ground-chain"
        grid: Sampling grid
        outputs: Output paths
        numerov: Optional window enabling the numerical spectrum oracle
        tolerance: Residual tolerance override
        waves: Labels of states to sample (default: all)
    """

    model_config = ConfigDict(extra="forbid")

    model: ModelParams
    action: Action
    chain: List[str] = []
    grid: GridSpec = Field(default_factory=GridSpec)
    outputs: JobOutputs = Field(default_factory=JobOutputs)
    numerov: Optional[EnergyWindow] = None
    tolerance: Optional[float] = Field(default=None, gt=0.0)
    waves: List[str] = []

    @field_validator("chain")
    @classmethod
    def _check_selectors(cls, chain: List[str]) -> List[str]:
        for selector in chain:
            if not SELECTOR_PATTERN.match(selector):
                raise ValueError(f"malformed chain selector: {selector!r}")
        if len(chain) > 2:
            raise ValueError("chains longer than two steps are not supported")
        return chain


class NumerovConfig(BaseModel):
    """Box, step and energy window of the shooting solver.

    Attributes:
        x_min: Left end of the integration box (positive)
        x_max: Right end; the quartic-Gaussian tail is negligible there
        step: Integration step
        e_lo: Lower end of the energy window
        e_hi: Upper end of the energy window
        bisection_tol: Energy bracket width at which bisection stops
    """

    model_config = ConfigDict(frozen=True)

    x_min: float = Field(default=settings.NUMEROV_X_MIN, gt=0.0)
    x_max: float
    step: float = Field(default=settings.NUMEROV_STEP, gt=0.0, lt=0.01)
    e_lo: float
    e_hi: float
    bisection_tol: float = Field(
        default=settings.NUMEROV_BISECTION_TOL, gt=0.0
    )

    @model_validator(mode="after")
    def _check_box(self) -> "NumerovConfig":
        if self.x_max <= self.x_min:
            raise ValueError("x_max must exceed x_min")
        if self.e_hi <= self.e_lo:
            raise ValueError("energy window is empty")
        return self

    @classmethod
    def for_stiffness(
        cls, a: float, e_lo: float, e_hi: float, **overrides
    ) -> "NumerovConfig":
        """Default box for stiffness a: a * x_max**4 / 4 reaches the
        configured decay exponent."""
        x_max = (4.0 * settings.NUMEROV_DECAY_EXPONENT / a) ** 0.25
        return cls(x_max=x_max, e_lo=e_lo, e_hi=e_hi, **overrides)


class PolynomialPayload(BaseModel):
    """Coefficient list, lowest power first, as [re, im] pairs."""

    coeffs: List[List[float]] = []


class PotentialPayload(BaseModel):
    """Serialized rational potential V(x) = num(x**2) / den(x**2).

    Attributes:
        label: Name of the potential ("V0", "V1", "V2")
        num: Numerator coefficients
        den: Monic denominator coefficients
        den_roots: Denominator roots as [re, im] pairs
        real: Whether all coefficients are real within tolerance
        poles: Positive real poles in t
        centrifugal: The 1/x**2 coefficient, [re, im]
        text: Display form
    """

    label: str
    num: PolynomialPayload
    den: PolynomialPayload
    den_roots: List[List[float]] = []
    real: bool = True
    poles: List[float] = []
    centrifugal: List[float] = [0.0, 0.0]
    text: str = ""


class StatePayload(BaseModel):
    """Serialized eigenstate of one of the report's potentials.

    Attributes:
        label: Name of the state ("psi0", "phi1", "chi2", ...)
        potential: Label of the potential it solves
        E_re: Real part of the energy
        E_im: Imaginary part of the energy
        a: Stiffness
        k: Multiplicity of the quartic-Gaussian factor
        sigma: Power of x at the origin
        scale: Overall constant, [re, im]
        num: Numerator coefficients (monic)
        den: Denominator coefficients (monic)
        den_roots: Denominator roots
        physical: Real energy and normalizable
        residual: Normalized residual of the Schrodinger equation
        passed: Whether the residual is below tolerance
    """

    label: str
    potential: str
    E_re: float
    E_im: float
    a: float
    k: int
    sigma: float
    scale: List[float]
    num: PolynomialPayload
    den: PolynomialPayload
    den_roots: List[List[float]] = []
    physical: bool = False
    residual: float = 0.0
    passed: bool = True


class Diagnostics(BaseModel):
    """Verification summary of a report.

    Attributes:
        max_residual: Largest state residual
        poles: Positive-t poles of the intermediate potential
        real: Whether the final potential is real
        numerov: Numerical spectra per potential label
        notes: Free-form findings (Jordan deficiency, discrepancies)
    """

    max_residual: float = 0.0
    poles: List[float] = []
    real: bool = True
    numerov: Dict[str, List[float]] = {}
    notes: List[str] = []


class Report(BaseModel):
    """Result of running a job.

    Attributes:
        job: Echo of the job
        passed: Whether every verification passed
        exit_code: Process exit code for the job
        classification: Chain classification, if a chain was built
        potentials: Constructed potentials
        states: Constructed states
        diagnostics: Verification details
        error: Error message for failed jobs
    """

    job: Job
    passed: bool = True
    exit_code: int = 0
    classification: Optional[str] = None
    potentials: List[PotentialPayload] = []
    states: List[StatePayload] = []
    diagnostics: Diagnostics = Field(default_factory=Diagnostics)
    error: Optional[str] = None
