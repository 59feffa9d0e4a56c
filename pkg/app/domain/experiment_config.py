from typing import Annotated, List, Optional, Tuple

from pydantic import BaseModel, BeforeValidator, ConfigDict, Field, field_validator, model_validator

from app.config import settings
from app.domain.models import HartreeStepper, PropagationMethod, SweepLayout


POTENTIAL_PRESETS = ("zero", "delta_v12", "delta_all", "gaussian", "harmonic")
ORBITAL_PRESETS = ("uniform", "site", "gaussian", "plane_wave", "random")


def _split_commas(value):
    """INI values arrive as strings; arrays are comma-separated."""
    if isinstance(value, str):
        value = value.strip()
        if not value:
            return None
        return [item.strip() for item in value.split(",") if item.strip()]
    return value


FloatList = Annotated[List[float], BeforeValidator(_split_commas)]
IntList = Annotated[List[int], BeforeValidator(_split_commas)]


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


# ============================================================================
# Sections
# ============================================================================

class SystemSection(_Section):
    M: int = Field(..., ge=2)
    N1: int = Field(..., ge=1)
    N2: int = Field(..., ge=1)
    spacing: float = Field(1.0, gt=0)


class PotentialsSection(_Section):
    preset: str = "delta_v12"
    g1: float = 1.0
    g2: float = 1.0
    g12: float = 1.0
    U1: Optional[FloatList] = None
    U2: Optional[FloatList] = None
    V1: Optional[FloatList] = None
    V2: Optional[FloatList] = None
    V12: Optional[FloatList] = None

    @field_validator("preset")
    @classmethod
    def _known_preset(cls, v: str) -> str:
        if v not in POTENTIAL_PRESETS:
            raise ValueError(f"unknown preset '{v}', expected one of {', '.join(POTENTIAL_PRESETS)}")
        return v

    def overrides(self) -> dict:
        return {
            name: getattr(self, name)
            for name in ("U1", "U2", "V1", "V2", "V12")
            if getattr(self, name) is not None
        }


class InitialSection(_Section):
    """Orbital presets (e.g. `gaussian:3:1.5`) or explicit comma-separated real amplitudes."""
    u: str = "uniform"
    v: str = "uniform"

    @field_validator("u", "v")
    @classmethod
    def _known_orbital(cls, v: str) -> str:
        v = v.strip()
        if "," in v:
            [float(item) for item in v.split(",")]
        elif v.split(":")[0] not in ORBITAL_PRESETS:
            raise ValueError(f"unknown orbital '{v}', expected one of {', '.join(ORBITAL_PRESETS)} "
                             f"or comma-separated amplitudes")
        return v


class LayoutSection(_Section):
    n: Optional[int] = Field(None, ge=1)
    m: Optional[int] = Field(None, ge=1)
    n1: Optional[int] = Field(None, ge=1)
    n2: Optional[int] = Field(None, ge=1)
    m1: Optional[int] = Field(None, ge=1)
    m2: Optional[int] = Field(None, ge=1)

    def sweep_layout(self) -> SweepLayout:
        """n1, n2 fall back to n and m1, m2 to m (default 1)."""
        return SweepLayout(
            n1=self.n1 or self.n or 1,
            n2=self.n2 or self.n or 1,
            m1=self.m1 or self.m or 1,
            m2=self.m2 or self.m or 1,
        )

    def correlation_slots(self) -> Tuple[int, int]:
        return self.n or self.n1 or 1, self.m or self.m1 or 1


class RunSection(_Section):
    times: FloatList = [0.25, 0.5, 1.0]
    witness_count: int = Field(8, ge=1)
    seed: int = 0
    method: PropagationMethod = PropagationMethod.KRYLOV
    dense_threshold: int = Field(default_factory=lambda: settings.DENSE_THRESHOLD, ge=1)
    krylov_dim: int = Field(default_factory=lambda: settings.KRYLOV_DIM, ge=2)
    krylov_tol: float = Field(default_factory=lambda: settings.KRYLOV_TOL, gt=0)
    hermitian_witnesses: bool = False
    N1_sweep: Optional[IntList] = None
    N2_sweep: Optional[IntList] = None
    hartree_dt: float = Field(1e-3, gt=0)
    hartree_stepper: HartreeStepper = HartreeStepper.RK4
    identity_tol: float = Field(1e-9, gt=0)
    bound_slack: float = Field(1e-9, ge=0)
    ratio_slack: float = Field(1e-6, ge=0)
    trend_factor: float = Field(1.25, ge=1)
    horizon_epsilon: float = Field(0.5, gt=0, lt=1)

    @field_validator("times")
    @classmethod
    def _non_negative_times(cls, v: List[float]) -> List[float]:
        if not v:
            raise ValueError("at least one time is required")
        if any(t < 0 for t in v):
            raise ValueError("times must be non-negative")
        return v

    @model_validator(mode="after")
    def _zipped_sweep(self) -> "RunSection":
        if (self.N1_sweep is None) != (self.N2_sweep is None):
            raise ValueError("N1_sweep and N2_sweep must be given together")
        if self.N1_sweep is not None and len(self.N1_sweep) != len(self.N2_sweep):
            raise ValueError("N1_sweep and N2_sweep must have equal lengths")
        return self


class OutputSection(_Section):
    path: Optional[str] = None
    precision: int = Field(default_factory=lambda: settings.CSV_PRECISION, ge=1, le=17)


# ============================================================================
# Experiment Configuration
# ============================================================================

class ExperimentConfig(_Section):
    system: SystemSection
    potentials: PotentialsSection = PotentialsSection()
    initial: InitialSection = InitialSection()
    layout: LayoutSection = LayoutSection()
    run: RunSection = RunSection()
    output: OutputSection = OutputSection()

    def with_seed(self, seed: Optional[int]) -> "ExperimentConfig":
        if seed is None:
            return self
        return self.model_copy(update={"run": self.run.model_copy(update={"seed": seed})})

    def particle_sweep(self) -> List[Tuple[int, int]]:
        if self.run.N1_sweep is None:
            return [(self.system.N1, self.system.N2)]
        return list(zip(self.run.N1_sweep, self.run.N2_sweep))
