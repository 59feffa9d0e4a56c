"""
Mean-field mixture Hamiltonians on the periodic lattice.

The interaction and trap parts are diagonal in the position basis and are stored
as one vector; the kinetic part is a sum of one-slot lattice Laplacians applied
on the fly with `np.roll`, so a matvec costs O(dim * (N1 + N2)).
"""

import logging
import math
import uuid
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np
import scipy.fft
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator

from app.config import settings
from app.domain.exceptions import DimensionError, IncompatibleOperandsError
from app.domain.models import (
    BoundParams,
    HamiltonianKind,
    LatticeGrid,
    PotentialSet,
    Species,
    SpeciesConfig,
)


logger = logging.getLogger(__name__)

# (axis_a, axis_b, pair potential, prefactor)
PairTerm = Tuple[int, int, np.ndarray, float]


# ============================================================================
# One-Body Operator
# ============================================================================

def _hopping_matrix(M: int) -> np.ndarray:
    """Periodic shift P with (P psi)_j = psi_{j+1}."""
    return np.roll(np.eye(M), 1, axis=1)


def one_body(grid: LatticeGrid, U: np.ndarray) -> np.ndarray:
    """h = -Laplacian + U with (h psi)_j = (2 psi_j - psi_{j+1} - psi_{j-1}) / h^2 + U_j psi_j."""
    U = np.asarray(U, dtype=float)
    if U.shape != (grid.M,) or not np.all(np.isfinite(U)):
        raise ValueError(f"trap potential must be {grid.M} finite reals")
    shift = _hopping_matrix(grid.M)
    laplacian = (2.0 * np.eye(grid.M) - shift - shift.T) / grid.spacing ** 2
    return laplacian + np.diag(U)


# ============================================================================
# Sparse Hamiltonian
# ============================================================================

@dataclass(frozen=True, eq=False)
class SparseHamiltonian:
    grid: LatticeGrid
    config: SpeciesConfig
    potentials: PotentialSet
    diagonal: np.ndarray  # trap + interaction, position basis
    kind: HamiltonianKind = HamiltonianKind.FULL
    n1: int = 0
    n2: int = 0
    key: str = field(default_factory=lambda: uuid.uuid4().hex)

    def __post_init__(self):
        self.diagonal.setflags(write=False)

    @property
    def dimension(self) -> int:
        return self.diagonal.size

    @property
    def shape(self) -> Tuple[int, int]:
        return self.dimension, self.dimension

    def matvec(self, vectors: np.ndarray) -> np.ndarray:
        """H applied to a vector or to the columns of a (dim, batch) array."""
        M, n = self.grid.M, self.config.N
        batch_shape = [vectors.shape[1]] if vectors.ndim == 2 else []
        tensor = vectors.reshape([M] * n + batch_shape)
        diag = self.diagonal.reshape([M] * n + [1] * len(batch_shape))

        out = diag * tensor
        stencil = 1.0 / self.grid.spacing ** 2
        for axis in range(n):
            out = out + stencil * (
                2.0 * tensor - np.roll(tensor, -1, axis=axis) - np.roll(tensor, 1, axis=axis)
            )
        return out.reshape(vectors.shape)

    def as_linear_operator(self) -> LinearOperator:
        return LinearOperator(
            self.shape,
            matvec=self.matvec,
            rmatvec=self.matvec,
            matmat=self.matvec,
            dtype=complex,
        )

    def to_sparse(self) -> sp.csr_matrix:
        """Explicit CSR assembly: Kronecker sum of one-slot Laplacians plus the diagonal."""
        M, n = self.grid.M, self.config.N
        shift = sp.csr_matrix(_hopping_matrix(M))
        laplacian = (2.0 * sp.identity(M, format="csr") - shift - shift.T) / self.grid.spacing ** 2

        total = sp.diags(self.diagonal.astype(complex), format="csr")
        for axis in range(n):
            left = sp.identity(M ** axis, format="csr")
            right = sp.identity(M ** (n - axis - 1), format="csr")
            total = total + sp.kron(sp.kron(left, laplacian), right, format="csr")
        return total.tocsr()

    def to_dense(self, threshold: int = None) -> np.ndarray:
        threshold = threshold or settings.DENSE_THRESHOLD
        if self.dimension > threshold:
            raise DimensionError(
                f"dense Hamiltonian requested for dimension {self.dimension} > {threshold}"
            )
        return self.to_sparse().toarray()

    def norm_upper_bound(self) -> float:
        """Gershgorin bound on ||H||."""
        kinetic = 4.0 * self.config.N / self.grid.spacing ** 2
        return kinetic + float(np.max(np.abs(self.diagonal)))


# ============================================================================
# Assembly
# ============================================================================

def _check_inputs(grid: LatticeGrid, config: SpeciesConfig, potentials: PotentialSet) -> None:
    if potentials.M != grid.M:
        raise IncompatibleOperandsError(
            f"potentials have {potentials.M} sites, grid has {grid.M}"
        )
    config.check_dimension(grid)


def _full_pairs(config: SpeciesConfig, potentials: PotentialSet) -> List[PairTerm]:
    a = lambda i: config.slot_axis(Species.A, i)
    b = lambda r: config.slot_axis(Species.B, r)
    N1, N2, N = config.N1, config.N2, config.N

    pairs: List[PairTerm] = []
    pairs += [(a(i), a(j), potentials.V1, 1.0 / N1)
              for i in range(1, N1 + 1) for j in range(i + 1, N1 + 1)]
    pairs += [(b(r), b(s), potentials.V2, 1.0 / N2)
              for r in range(1, N2 + 1) for s in range(r + 1, N2 + 1)]
    pairs += [(a(i), b(r), potentials.V12, 1.0 / N)
              for i in range(1, N1 + 1) for r in range(1, N2 + 1)]
    return pairs


def _removed_pairs(config: SpeciesConfig, potentials: PotentialSet,
                   n1: int, n2: int) -> List[PairTerm]:
    """The four cross-block sums separating the leading (n1, n2) particles from the rest."""
    a = lambda i: config.slot_axis(Species.A, i)
    b = lambda r: config.slot_axis(Species.B, r)
    N1, N2, N = config.N1, config.N2, config.N

    pairs: List[PairTerm] = []
    pairs += [(a(i), a(j), potentials.V1, 1.0 / N1)
              for i in range(1, n1 + 1) for j in range(n1 + 1, N1 + 1)]
    pairs += [(b(r), b(p), potentials.V2, 1.0 / N2)
              for r in range(1, n2 + 1) for p in range(n2 + 1, N2 + 1)]
    pairs += [(a(i), b(p), potentials.V12, 1.0 / N)
              for i in range(1, n1 + 1) for p in range(n2 + 1, N2 + 1)]
    pairs += [(a(j), b(r), potentials.V12, 1.0 / N)
              for j in range(n1 + 1, N1 + 1) for r in range(1, n2 + 1)]
    return pairs


def _coordinates(M: int, n: int, axis: int) -> np.ndarray:
    shape = [1] * n
    shape[axis] = M
    return np.arange(M).reshape(shape)


def _diagonal(grid: LatticeGrid, config: SpeciesConfig, pairs: Sequence[PairTerm],
              potentials: PotentialSet = None) -> np.ndarray:
    """Position-basis diagonal: traps (when `potentials` given) plus the listed pair terms."""
    M, n = grid.M, config.N
    diag = np.zeros([M] * n)

    if potentials is not None:
        for i in range(1, config.N1 + 1):
            diag = diag + potentials.U1[_coordinates(M, n, config.slot_axis(Species.A, i))]
        for r in range(1, config.N2 + 1):
            diag = diag + potentials.U2[_coordinates(M, n, config.slot_axis(Species.B, r))]

    for axis_a, axis_b, pair, prefactor in pairs:
        displacement = (_coordinates(M, n, axis_a) - _coordinates(M, n, axis_b)) % M
        diag = diag + prefactor * pair[displacement]

    return np.broadcast_to(diag, [M] * n).reshape(-1).copy()


def assemble_full(grid: LatticeGrid, config: SpeciesConfig,
                  potentials: PotentialSet) -> SparseHamiltonian:
    _check_inputs(grid, config, potentials)
    diagonal = _diagonal(grid, config, _full_pairs(config, potentials), potentials)
    H = SparseHamiltonian(grid, config, potentials, diagonal, HamiltonianKind.FULL,
                          config.N1, config.N2)
    logger.info(f"Assembled full Hamiltonian (M={grid.M}, N1={config.N1}, N2={config.N2}, "
                f"dim={H.dimension})")
    return H


def assemble_modified(grid: LatticeGrid, config: SpeciesConfig, potentials: PotentialSet,
                      n1: int, n2: int) -> SparseHamiltonian:
    """Full Hamiltonian without the interactions between the first (n1, n2) particles and the rest."""
    if not 0 <= n1 <= config.N1 or not 0 <= n2 <= config.N2:
        raise IncompatibleOperandsError(
            f"(n1, n2) = ({n1}, {n2}) outside [0, {config.N1}] x [0, {config.N2}]"
        )
    _check_inputs(grid, config, potentials)

    removed = {(a, b) for a, b, _, _ in _removed_pairs(config, potentials, n1, n2)}
    kept = [term for term in _full_pairs(config, potentials) if term[:2] not in removed]
    diagonal = _diagonal(grid, config, kept, potentials)

    H = SparseHamiltonian(grid, config, potentials, diagonal, HamiltonianKind.MODIFIED, n1, n2)
    logger.info(f"Assembled modified Hamiltonian (n1={n1}, n2={n2}, dim={H.dimension}, "
                f"{len(removed)} pair terms removed)")
    return H


def interaction_difference(grid: LatticeGrid, config: SpeciesConfig, potentials: PotentialSet,
                           n1: int, n2: int) -> np.ndarray:
    """Diagonal of H - H^(n1, n2): the removed cross-block interactions."""
    _check_inputs(grid, config, potentials)
    return _diagonal(grid, config, _removed_pairs(config, potentials, n1, n2))


# ============================================================================
# Potentials & Constants
# ============================================================================

def dft_l1_norm(V: np.ndarray) -> float:
    """sum_q |V~(q)| with V~(q) = (1/M) sum_x V(x) exp(-2 pi i q x / M)."""
    V = np.asarray(V, dtype=float)
    return float(np.sum(np.abs(scipy.fft.fft(V))) / V.size)


def potential_preset(name: str, grid: LatticeGrid, g1: float = 1.0, g2: float = 1.0,
                     g12: float = 1.0) -> PotentialSet:
    """
    Named potential sets:
      zero | delta_v12 | delta_all | gaussian | harmonic
    with pair potentials scaled by g1, g2, g12.
    """
    M = grid.M
    delta = np.zeros(M)
    delta[0] = 1.0
    distance = np.array([grid.reduce(d) for d in range(M)]) * grid.spacing
    bump = np.exp(-distance ** 2 / 2.0)
    zeros = np.zeros(M)

    if name == "zero":
        traps, pair1, pair2, pair12 = zeros, zeros, zeros, zeros
    elif name == "delta_v12":
        traps, pair1, pair2, pair12 = zeros, zeros, zeros, delta
    elif name == "delta_all":
        traps, pair1, pair2, pair12 = zeros, delta, delta, delta
    elif name == "gaussian":
        traps, pair1, pair2, pair12 = zeros, bump, bump, bump
    elif name == "harmonic":
        center = (M - 1) / 2.0
        traps = ((np.arange(M) - center) / max(center, 1.0)) ** 2
        pair1, pair2, pair12 = delta, delta, delta
    else:
        raise ValueError(f"unknown potential preset '{name}'")

    return PotentialSet(U1=traps, U2=traps, V1=g1 * pair1, V2=g2 * pair2, V12=g12 * pair12)


def bound_params(config: SpeciesConfig, potentials: PotentialSet, n: int = 0, m: int = 0,
                 opnorms: Sequence[float] = (1.0, 1.0, 1.0, 1.0)) -> BoundParams:
    """Constants c, c_k, 𝖵, 𝒱, 𝒲, alpha_{N,n,m} and the operator-norm product."""
    limit = min(config.N1, config.N2)
    if not (0 <= n < limit and 0 <= m < limit):
        raise IncompatibleOperandsError(f"n={n}, m={m} must lie in [0, {limit})")

    N = config.N
    strength = max(
        float(np.max(np.abs(potentials.V1))),
        float(np.max(np.abs(potentials.V2))),
        dft_l1_norm(potentials.V12),
    )
    Vcal = 12.0 * strength
    alpha = (4.0 * m * n / 9.0) * (8.0 * m * n / N + 4.0 * (4 + 3 * m + 3 * n))

    return BoundParams(
        N=N,
        N1=config.N1,
        N2=config.N2,
        n=n,
        m=m,
        c1=config.c1,
        c2=config.c2,
        c=min(config.c1, config.c2),
        Vbig=24.0 * strength,
        Vcal=Vcal,
        Wcal=Vcal / 12.0,
        alpha=alpha,
        opnorm_product=float(math.prod(opnorms)),
    )
