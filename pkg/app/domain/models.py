from enum import Enum
from typing import Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.config import settings
from app.domain.exceptions import DimensionError, IncompatibleOperandsError


# ============================================================================
# Enumerations
# ============================================================================

class Species(str, Enum):
    """Particle species of the binary mixture"""
    A = "A"
    B = "B"


class HamiltonianKind(str, Enum):
    FULL = "full"
    MODIFIED = "modified"


class PropagationMethod(str, Enum):
    DENSE = "dense"
    KRYLOV = "krylov"


class HartreeStepper(str, Enum):
    RK4 = "rk4"
    STRANG = "strang"


# ============================================================================
# Lattice & Particle Content
# ============================================================================

class LatticeGrid(BaseModel):
    """Finite periodic 1D lattice with M sites and lattice constant `spacing`."""
    model_config = ConfigDict(frozen=True)

    M: int = Field(..., ge=2)
    spacing: float = Field(1.0, gt=0)

    def reduce(self, displacement: int) -> int:
        """Symmetric representative of a displacement, in [-floor(M/2), ceil(M/2) - 1]."""
        half = self.M // 2
        return (displacement + half) % self.M - half

    def displacement(self, j: int, k: int) -> int:
        return self.reduce(j - k)

    @property
    def positions(self) -> np.ndarray:
        return np.arange(self.M) * self.spacing


class SpeciesConfig(BaseModel):
    """Particle numbers N1 (species A) and N2 (species B)."""
    model_config = ConfigDict(frozen=True)

    N1: int = Field(..., ge=1)
    N2: int = Field(..., ge=1)

    @property
    def N(self) -> int:
        return self.N1 + self.N2

    @property
    def c1(self) -> float:
        return self.N1 / self.N

    @property
    def c2(self) -> float:
        return self.N2 / self.N

    def count(self, species: Species) -> int:
        return self.N1 if species == Species.A else self.N2

    def slot_axis(self, species: Species, index: int) -> int:
        """Tensor axis of a 1-based slot; A-slots come first, A-slot 1 slowest."""
        if not 1 <= index <= self.count(species):
            raise IncompatibleOperandsError(
                f"{species.value}-slot {index} outside [1, {self.count(species)}]"
            )
        return index - 1 if species == Species.A else self.N1 + index - 1

    def dimension(self, grid: LatticeGrid) -> int:
        return grid.M ** self.N

    def check_dimension(self, grid: LatticeGrid) -> int:
        dim = self.dimension(grid)
        if dim > settings.MAX_DIMENSION:
            raise DimensionError(
                f"Tensor dimension {grid.M}^{self.N} = {dim} exceeds "
                f"MAX_DIMENSION={settings.MAX_DIMENSION}"
            )
        return dim


class SlotSet(BaseModel):
    """Ordered, strictly increasing 1-based slot indices of one species."""
    model_config = ConfigDict(frozen=True)

    species: Species
    indices: Tuple[int, ...] = ()

    @field_validator("indices")
    @classmethod
    def _strictly_increasing(cls, v: Tuple[int, ...]) -> Tuple[int, ...]:
        if any(i < 1 for i in v):
            raise ValueError(f"slot indices are 1-based, got {v}")
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError(f"slot indices must be distinct and strictly increasing, got {v}")
        return v

    @classmethod
    def span(cls, species: Species, first: int, last: int) -> "SlotSet":
        """Slots first..last inclusive (empty when last < first)."""
        return cls(species=species, indices=tuple(range(first, last + 1)))

    def __len__(self) -> int:
        return len(self.indices)

    def axes(self, config: SpeciesConfig) -> Tuple[int, ...]:
        return tuple(config.slot_axis(self.species, i) for i in self.indices)


# ============================================================================
# Potentials
# ============================================================================

_POTENTIAL_FIELDS = ("U1", "U2", "V1", "V2", "V12")


class PotentialSet(BaseModel):
    """
    Trap potentials U1, U2 (per site) and pair potentials V1, V2, V12
    indexed by periodic displacement: V[d % M].
    """
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    U1: np.ndarray
    U2: np.ndarray
    V1: np.ndarray
    V2: np.ndarray
    V12: np.ndarray

    @field_validator(*_POTENTIAL_FIELDS, mode="before")
    @classmethod
    def _as_real_array(cls, v) -> np.ndarray:
        arr = np.array(v, dtype=float).reshape(-1)
        if not np.all(np.isfinite(arr)):
            raise ValueError("potential entries must be finite")
        arr.setflags(write=False)
        return arr

    @model_validator(mode="after")
    def _check_shapes_and_evenness(self) -> "PotentialSet":
        lengths = {getattr(self, name).size for name in _POTENTIAL_FIELDS}
        if len(lengths) != 1:
            raise ValueError(f"all potential arrays must share one length, got {sorted(lengths)}")
        for name in ("V1", "V2", "V12"):
            pair = getattr(self, name)
            reflected = pair[(-np.arange(pair.size)) % pair.size]
            if np.max(np.abs(pair - reflected)) > 1e-12:
                raise ValueError(f"{name} must be even under periodic reflection")
        return self

    @property
    def M(self) -> int:
        return self.U1.size

    @classmethod
    def zeros(cls, M: int) -> "PotentialSet":
        z = np.zeros(M)
        return cls(U1=z, U2=z, V1=z, V2=z, V12=z)

    def replace(self, **arrays) -> "PotentialSet":
        data = {name: getattr(self, name) for name in _POTENTIAL_FIELDS}
        data.update(arrays)
        return PotentialSet(**data)

    def same_as(self, other: "PotentialSet") -> bool:
        return all(
            np.array_equal(getattr(self, name), getattr(other, name))
            for name in _POTENTIAL_FIELDS
        )


# ============================================================================
# Bound Constants
# ============================================================================

class BoundParams(BaseModel):
    """Scalar constants entering both correlation and commutator bounds."""
    model_config = ConfigDict(frozen=True)

    N: int
    N1: int
    N2: int
    n: int = 0
    m: int = 0
    c1: float
    c2: float
    c: float
    Vbig: float  # 24 * max{...}
    Vcal: float  # 12 * max{...}
    Wcal: float  # Vcal / 12
    alpha: float
    opnorm_product: float = 1.0

    @model_validator(mode="after")
    def _check_invariants(self) -> "BoundParams":
        if abs(self.c1 + self.c2 - 1.0) > 1e-12:
            raise ValueError("c1 + c2 must equal 1")
        if self.c != min(self.c1, self.c2) or not 0.0 < self.c < 1.0:
            raise ValueError("c must equal min(c1, c2) and lie in (0, 1)")
        if self.Vbig != 2.0 * self.Vcal or self.Wcal != self.Vcal / 12.0:
            raise ValueError("constants must satisfy Vbig = 2 Vcal and Wcal = Vcal / 12")
        if self.alpha < 0 or self.opnorm_product < 0:
            raise ValueError("alpha and the operator-norm product must be non-negative")
        return self


class SweepLayout(BaseModel):
    """Slot counts: A1 on n1 A-slots, B1 on n2 B-slots, A2 on m1, B2 on m2."""
    model_config = ConfigDict(frozen=True)

    n1: int = Field(1, ge=1)
    n2: int = Field(1, ge=1)
    m1: int = Field(1, ge=1)
    m2: int = Field(1, ge=1)

    @classmethod
    def symmetric(cls, n: int, m: int) -> "SweepLayout":
        return cls(n1=n, n2=n, m1=m, m2=m)

    def check_against(self, config: SpeciesConfig) -> None:
        if self.n1 + self.m1 > config.N1 or self.n2 + self.m2 > config.N2:
            raise IncompatibleOperandsError(
                f"layout {self.as_tuple()} does not fit N1={config.N1}, N2={config.N2}"
            )

    def as_tuple(self) -> Tuple[int, int, int, int]:
        return self.n1, self.n2, self.m1, self.m2


# ============================================================================
# Solver Settings
# ============================================================================

class PropagatorConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    method: PropagationMethod = PropagationMethod.KRYLOV
    krylov_dim: int = Field(default_factory=lambda: settings.KRYLOV_DIM, ge=2)
    substep: Optional[float] = Field(None, gt=0)  # None: sized from ||H||
    tol: float = Field(default_factory=lambda: settings.KRYLOV_TOL, gt=0)
    dense_threshold: int = Field(default_factory=lambda: settings.DENSE_THRESHOLD, ge=1)


class HartreeParams(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    grid: LatticeGrid
    potentials: PotentialSet
    c1: float = Field(..., gt=0, lt=1)
    c2: float = Field(..., gt=0, lt=1)
    dt: float = Field(1e-3, gt=0)
    stepper: HartreeStepper = HartreeStepper.RK4

    @model_validator(mode="after")
    def _check(self) -> "HartreeParams":
        if abs(self.c1 + self.c2 - 1.0) > 1e-12:
            raise ValueError("c1 + c2 must equal 1")
        if self.potentials.M != self.grid.M:
            raise ValueError(f"potentials have {self.potentials.M} sites, grid has {self.grid.M}")
        return self

    @classmethod
    def for_config(cls, grid: LatticeGrid, config: SpeciesConfig, potentials: PotentialSet,
                   **kwargs) -> "HartreeParams":
        """Hartree parameters with the finite-N ratios c_k = N_k / N of `config`."""
        return cls(grid=grid, potentials=potentials, c1=config.c1, c2=config.c2, **kwargs)


# ============================================================================
# Result Rows
# ============================================================================

class LRSweepRow(BaseModel):
    t: float
    n1: int
    n2: int
    m1: int
    m2: int
    N1: int
    N2: int
    sample: int
    measured: float
    bound: float
    ratio: float
    error: Optional[str] = None


class CorrSweepRow(BaseModel):
    t: float
    n: int
    m: int
    N1: int
    N2: int
    sample: int
    abs_corr: float
    bound: float
    ratio: float
    error: Optional[str] = None


class DecompositionRow(BaseModel):
    t: float
    sample: int
    P_re: float
    P_im: float
    Q_re: float
    Q_im: float
    R_re: float
    R_im: float
    corr_re: float
    corr_im: float
    residual: float


class GapRow(BaseModel):
    t: float
    N1: int
    N2: int
    gap_A: float
    gap_B: float
