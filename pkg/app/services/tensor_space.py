"""
First-quantized tensor space of the two-species mixture.

States are complex amplitude vectors of length M^(N1+N2). The slot ordering is
(A-slot 1, ..., A-slot N1, B-slot 1, ..., B-slot N2), row-major with A-slot 1
slowest, so `amplitudes.reshape([M] * (N1 + N2))` exposes one axis per slot.
"""

import logging
import threading
from dataclasses import dataclass, field
from functools import reduce
from typing import Optional, Sequence, Tuple

import numpy as np

from app.domain.exceptions import DimensionError, IncompatibleOperandsError
from app.domain.models import LatticeGrid, SlotSet, Species, SpeciesConfig


logger = logging.getLogger(__name__)

NORM_TOL = 1e-12


# ============================================================================
# States
# ============================================================================

@dataclass(frozen=True, eq=False)
class MixtureState:
    """Amplitudes over the distinguishable tensor space (not necessarily normalized)."""
    amplitudes: np.ndarray
    grid: LatticeGrid
    config: SpeciesConfig
    # (u, v) when the state was built as u^{x N1} (x) v^{x N2}
    factors: Optional[Tuple[np.ndarray, np.ndarray]] = None

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        dim = self.config.check_dimension(self.grid)
        if amps.size != dim:
            raise DimensionError(f"state has {amps.size} amplitudes, expected {dim}")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def dimension(self) -> int:
        return self.amplitudes.size

    @property
    def tensor(self) -> np.ndarray:
        return self.amplitudes.reshape([self.grid.M] * self.config.N)

    @property
    def is_product(self) -> bool:
        return self.factors is not None

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def with_amplitudes(self, amplitudes: np.ndarray) -> "MixtureState":
        """Same grid/config, new amplitudes; product factors are dropped."""
        return MixtureState(amplitudes=amplitudes, grid=self.grid, config=self.config)


def check_compatible(grid: LatticeGrid, config: SpeciesConfig,
                     other_grid: LatticeGrid, other_config: SpeciesConfig) -> None:
    if grid != other_grid or config != other_config:
        raise IncompatibleOperandsError(
            f"incompatible operands: grid {grid} / {other_grid}, config {config} / {other_config}"
        )


def _check_normalized(vec: np.ndarray, name: str) -> np.ndarray:
    vec = np.asarray(vec, dtype=complex).reshape(-1)
    norm = np.linalg.norm(vec)
    if abs(norm - 1.0) > NORM_TOL:
        raise ValueError(f"{name} must be normalized, has norm {norm:.17g}")
    return vec


def product_state(u: np.ndarray, v: np.ndarray, config: SpeciesConfig,
                  grid: LatticeGrid) -> MixtureState:
    """Condensate state u^{x N1} (x) v^{x N2}."""
    u = _check_normalized(u, "u")
    v = _check_normalized(v, "v")
    if u.size != grid.M or v.size != grid.M:
        raise DimensionError(f"orbitals must have {grid.M} entries")
    config.check_dimension(grid)

    amplitudes = reduce(np.kron, [u] * config.N1 + [v] * config.N2)
    u_frozen, v_frozen = u.copy(), v.copy()
    u_frozen.setflags(write=False)
    v_frozen.setflags(write=False)
    return MixtureState(amplitudes, grid, config, factors=(u_frozen, v_frozen))


# ============================================================================
# Slot-Embedded Operators
# ============================================================================

@dataclass(frozen=True, eq=False)
class EmbeddedOperator:
    """A k-particle kernel acting on chosen A-slots and B-slots (A-slots first)."""
    kernel: np.ndarray
    slots_A: SlotSet
    slots_B: SlotSet
    config: SpeciesConfig
    grid: LatticeGrid
    _norm_cache: dict = field(default_factory=dict, repr=False, compare=False)
    _norm_lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def __post_init__(self):
        kernel = np.array(self.kernel, dtype=complex)
        kernel.setflags(write=False)
        object.__setattr__(self, "kernel", kernel)

    @property
    def axes(self) -> Tuple[int, ...]:
        return self.slots_A.axes(self.config) + self.slots_B.axes(self.config)

    @property
    def k(self) -> int:
        return len(self.slots_A) + len(self.slots_B)

    @property
    def norm(self) -> float:
        """Spectral norm of the kernel, computed once."""
        with self._norm_lock:
            if "value" not in self._norm_cache:
                self._norm_cache["value"] = float(np.linalg.norm(self.kernel, 2))
            return self._norm_cache["value"]

    def matvec(self, vectors: np.ndarray, adjoint: bool = False) -> np.ndarray:
        """Apply to a vector of length dim, or to the columns of a (dim, batch) array."""
        M, n = self.grid.M, self.config.N
        batched = vectors.ndim == 2
        batch_shape = [vectors.shape[1]] if batched else []
        tensor = vectors.reshape([M] * n + batch_shape)

        k = self.k
        kernel = self.kernel.conj().T if adjoint else self.kernel
        kernel = kernel.reshape([M] * (2 * k))
        axes = self.axes

        out = np.tensordot(kernel, tensor, axes=(list(range(k, 2 * k)), list(axes)))
        # tensordot puts the k output axes first; move them back into their slots
        out = np.moveaxis(out, list(range(k)), list(axes))
        return out.reshape(vectors.shape)

    def rmatvec(self, vectors: np.ndarray) -> np.ndarray:
        return self.matvec(vectors, adjoint=True)

    def dense(self) -> np.ndarray:
        dim = self.config.dimension(self.grid)
        return self.matvec(np.eye(dim, dtype=complex))


def embed(kernel: np.ndarray, slots_A: Optional[SlotSet], slots_B: Optional[SlotSet],
          config: SpeciesConfig, grid: LatticeGrid) -> EmbeddedOperator:
    """Lift a k-particle kernel to the listed slots, identity elsewhere."""
    slots_A = slots_A if slots_A is not None else SlotSet(species=Species.A)
    slots_B = slots_B if slots_B is not None else SlotSet(species=Species.B)
    if slots_A.species != Species.A or slots_B.species != Species.B:
        raise IncompatibleOperandsError("slots_A must be A-slots and slots_B must be B-slots")
    for slots in (slots_A, slots_B):
        slots.axes(config)  # range check

    kernel = np.asarray(kernel, dtype=complex)
    k = len(slots_A) + len(slots_B)
    expected = grid.M ** k
    if kernel.shape != (expected, expected):
        raise DimensionError(
            f"kernel shape {kernel.shape} does not match {k} slots on M={grid.M} "
            f"(expected {expected}x{expected})"
        )
    config.check_dimension(grid)
    return EmbeddedOperator(kernel, slots_A, slots_B, config, grid)


def embed_on(kernel: np.ndarray, species: Species, indices: Sequence[int],
             config: SpeciesConfig, grid: LatticeGrid) -> EmbeddedOperator:
    """Shorthand for a kernel supported on slots of a single species."""
    slots = SlotSet(species=species, indices=tuple(indices))
    if species == Species.A:
        return embed(kernel, slots, None, config, grid)
    return embed(kernel, None, slots, config, grid)


def apply(op: EmbeddedOperator, psi: MixtureState) -> MixtureState:
    check_compatible(op.grid, op.config, psi.grid, psi.config)
    return psi.with_amplitudes(op.matvec(psi.amplitudes))


def expectation(psi: MixtureState, op: EmbeddedOperator) -> complex:
    """<psi, op psi>."""
    check_compatible(op.grid, op.config, psi.grid, psi.config)
    return complex(np.vdot(psi.amplitudes, op.matvec(psi.amplitudes)))


# ============================================================================
# Reduced Density Matrices & Exchange Symmetry
# ============================================================================

def one_body_rdm(psi: MixtureState, species: Species) -> np.ndarray:
    """Partial trace of |psi><psi| over every slot except slot 1 of `species`."""
    axis = psi.config.slot_axis(species, 1)
    tensor = np.moveaxis(psi.tensor, axis, 0).reshape(psi.grid.M, -1)
    return tensor @ tensor.conj().T


def transposition(psi: MixtureState, species: Species, index: int) -> MixtureState:
    """Exchange of same-species slots `index` and `index + 1`."""
    first = psi.config.slot_axis(species, index)
    second = psi.config.slot_axis(species, index + 1)
    swapped = np.swapaxes(psi.tensor, first, second)
    return psi.with_amplitudes(swapped.reshape(-1))


def symmetry_defect(psi: MixtureState) -> float:
    """max over adjacent same-species transpositions of ||psi - P psi||."""
    defect = 0.0
    for species in Species:
        for index in range(1, psi.config.count(species)):
            exchanged = transposition(psi, species, index)
            defect = max(defect, float(np.linalg.norm(psi.amplitudes - exchanged.amplitudes)))
    return defect


# ============================================================================
# One-Body Kernels & Orbitals
# ============================================================================

def projector(u: np.ndarray) -> np.ndarray:
    """|u><u|"""
    u = np.asarray(u, dtype=complex)
    return np.outer(u, u.conj())


def position_operator(grid: LatticeGrid) -> np.ndarray:
    return np.diag(grid.positions).astype(complex)


def basis_vector(grid: LatticeGrid, site: int) -> np.ndarray:
    e = np.zeros(grid.M, dtype=complex)
    e[site % grid.M] = 1.0
    return e


def orbital_preset(name: str, grid: LatticeGrid) -> np.ndarray:
    """
    Named normalized orbitals:
      uniform | site:K | gaussian:CENTER:WIDTH | plane_wave:Q | random:SEED
    """
    kind, *args = name.strip().split(":")
    M = grid.M
    sites = np.arange(M)

    if kind == "uniform":
        orbital = np.ones(M, dtype=complex)
    elif kind == "site":
        orbital = basis_vector(grid, int(args[0]))
    elif kind == "gaussian":
        center = float(args[0]) if args else (M - 1) / 2
        width = float(args[1]) if len(args) > 1 else max(M / 6, 0.5)
        anchor = int(np.floor(center))
        offsets = np.array([grid.reduce(int(s) - anchor) for s in sites]) - (center - anchor)
        orbital = np.exp(-offsets ** 2 / (2 * width ** 2)).astype(complex)
    elif kind == "plane_wave":
        q = int(args[0])
        orbital = np.exp(2j * np.pi * q * sites / M)
    elif kind == "random":
        rng = np.random.default_rng(int(args[0]) if args else 0)
        orbital = rng.standard_normal(M) + 1j * rng.standard_normal(M)
    else:
        raise ValueError(f"unknown orbital preset '{name}'")

    return orbital / np.linalg.norm(orbital)
