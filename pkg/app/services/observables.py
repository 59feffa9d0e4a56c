"""
Left-hand sides of the correlation and commutator bounds.

The supremum over bounded operators is replaced by seeded random witnesses
(Ginibre kernels normalized to unit spectral norm). A witness can falsify an
upper bound but never confirm it, so every comparison here is one-sided.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

from app.config import settings
from app.domain.exceptions import (
    ConvergenceError,
    DimensionError,
    IncompatibleOperandsError,
    NumericalError,
)
from app.domain.models import (
    BoundParams,
    CorrSweepRow,
    HamiltonianKind,
    LRSweepRow,
    PropagationMethod,
    PropagatorConfig,
    SlotSet,
    Species,
    SweepLayout,
)
from app.services.bounds import bound_ratio, theorem1_rhs, theorem2_rhs
from app.services.hamiltonian import SparseHamiltonian, bound_params
from app.services.projectors import four_term_expansion
from app.services.propagator import evolve, evolve_vector, heisenberg_dense
from app.services.tensor_space import EmbeddedOperator, MixtureState, check_compatible, embed


logger = logging.getLogger(__name__)


# ============================================================================
# Witnesses
# ============================================================================

def ginibre_kernel(rng: np.random.Generator, size: int, hermitian: bool = False) -> np.ndarray:
    """Complex Gaussian matrix (optionally Hermitized) scaled to unit spectral norm."""
    kernel = (rng.standard_normal((size, size)) + 1j * rng.standard_normal((size, size))) / math.sqrt(2)
    if hermitian:
        kernel = (kernel + kernel.conj().T) / 2
    return kernel / np.linalg.norm(kernel, 2)


@dataclass(frozen=True, eq=False)
class WitnessSample:
    index: int
    A1: np.ndarray
    B1: np.ndarray
    A2: np.ndarray
    B2: np.ndarray

    @property
    def opnorms(self) -> Tuple[float, float, float, float]:
        return tuple(float(np.linalg.norm(k, 2)) for k in (self.A1, self.A2, self.B1, self.B2))


@dataclass
class WitnessSet:
    """Operator tuples for one slot layout, reproducible from (seed, index)."""
    seed: int
    layout: SweepLayout
    M: int
    hermitian: bool = False
    samples: List[WitnessSample] = field(default_factory=list)

    @classmethod
    def generate(cls, seed: int, count: int, layout: SweepLayout, M: int,
                 hermitian: bool = False) -> "WitnessSet":
        witnesses = cls(seed=seed, layout=layout, M=M, hermitian=hermitian)
        witnesses.samples = [witnesses.sample(i) for i in range(count)]
        logger.info(f"Generated {count} witnesses (seed={seed}, layout={layout.as_tuple()}, "
                    f"hermitian={hermitian})")
        return witnesses

    def sample(self, index: int) -> WitnessSample:
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, index]))
        n1, n2, m1, m2 = self.layout.as_tuple()
        return WitnessSample(
            index=index,
            A1=ginibre_kernel(rng, self.M ** n1, self.hermitian),
            B1=ginibre_kernel(rng, self.M ** n2, self.hermitian),
            A2=ginibre_kernel(rng, self.M ** m1, self.hermitian),
            B2=ginibre_kernel(rng, self.M ** m2, self.hermitian),
        )

    def __len__(self) -> int:
        return len(self.samples)


# ============================================================================
# Spectral Norm
# ============================================================================

def spectral_norm(matrix: Optional[np.ndarray] = None,
                  matvec: Optional[Callable[[np.ndarray], np.ndarray]] = None,
                  rmatvec: Optional[Callable[[np.ndarray], np.ndarray]] = None,
                  dim: Optional[int] = None,
                  rtol: Optional[float] = None,
                  max_iter: Optional[int] = None) -> float:
    """
    Largest singular value.

    Dense SVD for explicit matrices up to SVD_THRESHOLD. Otherwise restarted
    Lanczos on C^H C from a seeded start; the top Ritz pair is accepted once
    its residual is below rtol times the eigenvalue, so nearly degenerate
    leading singular values cannot stop the iteration early.
    """
    rtol = rtol or settings.POWER_RTOL
    max_iter = max_iter or settings.POWER_MAX_ITER

    if matrix is not None:
        matrix = np.asarray(matrix)
        if not np.all(np.isfinite(matrix)):
            raise ValueError("matrix has non-finite entries")
        if matrix.size == 0:
            return 0.0
        if max(matrix.shape) <= settings.SVD_THRESHOLD:
            return float(scipy.linalg.svdvals(matrix)[0])
        dim = matrix.shape[1]
        adjoint = matrix.conj().T
        matvec = lambda x: matrix @ x
        rmatvec = lambda x: adjoint @ x

    if matvec is None or rmatvec is None or dim is None:
        raise ValueError("spectral_norm needs a matrix or (matvec, rmatvec, dim)")

    rng = np.random.default_rng(settings.POWER_SEED)
    start = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    start /= np.linalg.norm(start)

    first = float(np.linalg.norm(matvec(start)))
    if first < 1e-14:
        return first
    if dim < 3:
        columns = np.column_stack([matvec(e) for e in np.eye(dim, dtype=complex)])
        return float(scipy.linalg.svdvals(columns)[0])

    gram = scipy.sparse.linalg.LinearOperator(
        (dim, dim), matvec=lambda x: rmatvec(matvec(x)), dtype=complex
    )
    try:
        values, _ = scipy.sparse.linalg.eigsh(
            gram, k=1, which="LA", v0=start, tol=rtol, maxiter=max_iter
        )
    except scipy.sparse.linalg.ArpackNoConvergence as exc:
        found = np.asarray(exc.eigenvalues).real
        estimate = math.sqrt(max(float(found.max()), 0.0)) if found.size else first
        last = exc.eigenvectors[:, -1] if np.size(exc.eigenvectors) else start
        raise ConvergenceError("Lanczos iteration on C^H C did not converge", estimate, max_iter,
                               last_iterate=np.asarray(last)) from exc

    estimate = math.sqrt(max(float(values[-1]), 0.0))
    logger.debug(f"Spectral norm by Lanczos on dimension {dim}: {estimate:.17e}")
    return estimate


# ============================================================================
# Operator Assembly
# ============================================================================

def _slot_count(kernel: np.ndarray, M: int, name: str) -> int:
    kernel = np.asarray(kernel)
    size = kernel.shape[0] if kernel.ndim == 2 else -1
    k = round(math.log(size) / math.log(M)) if size > 0 else -1
    if kernel.ndim != 2 or kernel.shape[0] != kernel.shape[1] or k < 1 or M ** k != size:
        raise DimensionError(f"{name} with shape {kernel.shape} is not a kernel on whole slots of M={M}")
    return k


def _composite(A: np.ndarray, B: np.ndarray, first_A: int, first_B: int,
               H: SparseHamiltonian) -> EmbeddedOperator:
    """A (x) B with A on consecutive A-slots from first_A and B on B-slots from first_B."""
    M = H.grid.M
    k_A = _slot_count(A, M, "A-kernel")
    k_B = _slot_count(B, M, "B-kernel")
    return embed(
        np.kron(A, B),
        SlotSet.span(Species.A, first_A, first_A + k_A - 1),
        SlotSet.span(Species.B, first_B, first_B + k_B - 1),
        H.config,
        H.grid,
    )


def _correlation_operators(H: SparseHamiltonian, A1, B1, A2, B2) -> Tuple[EmbeddedOperator, EmbeddedOperator, int, int]:
    M = H.grid.M
    n = _slot_count(A1, M, "A1")
    m = _slot_count(A2, M, "A2")
    if _slot_count(B1, M, "B1") != n or _slot_count(B2, M, "B2") != m:
        raise IncompatibleOperandsError("B1 must act on as many slots as A1, and B2 as A2")
    limit = min(H.config.N1, H.config.N2)
    if n + m > limit:
        raise IncompatibleOperandsError(f"n + m = {n + m} exceeds min(N1, N2) = {limit}")
    O1 = _composite(A1, B1, 1, 1, H)
    O2 = _composite(A2, B2, n + 1, n + 1, H)
    return O1, O2, n, m


# ============================================================================
# Correlation
# ============================================================================

@dataclass
class CorrelationResult:
    t: float
    value: complex
    abs: float
    bound: float
    params: BoundParams
    bound_applicable: bool = True


def correlation(H: SparseHamiltonian, psi0: MixtureState, t: float,
                A1: np.ndarray, B1: np.ndarray, A2: np.ndarray, B2: np.ndarray,
                cfg: Optional[PropagatorConfig] = None,
                evolved: Optional[MixtureState] = None) -> CorrelationResult:
    """
    <A2B2 A1B1>_t - <A2B2>_t <A1B1>_t on psi_t = exp(-itH) psi0.

    A1/B1 act on slots 1..n of their species, A2/B2 on slots n+1..n+m.
    `evolved` may carry a precomputed psi_t.
    """
    check_compatible(H.grid, H.config, psi0.grid, psi0.config)
    O1, O2, n, m = _correlation_operators(H, A1, B1, A2, B2)

    psi_t = evolved if evolved is not None else evolve(H, psi0, t, cfg)
    amps = psi_t.amplitudes
    first = O1.matvec(amps)
    joint = complex(np.vdot(amps, O2.matvec(first)))
    value = joint - complex(np.vdot(amps, O2.matvec(amps))) * complex(np.vdot(amps, first))

    norms = [float(np.linalg.norm(k, 2)) for k in (A1, A2, B1, B2)]
    params = bound_params(H.config, H.potentials, n=n, m=m, opnorms=norms)
    applicable = psi0.is_product and H.kind == HamiltonianKind.FULL
    if not applicable:
        logger.debug("Correlation bound not applicable: initial state is not a product state")
    return CorrelationResult(
        t=t,
        value=value,
        abs=abs(value),
        bound=theorem1_rhs(params, t),
        params=params,
        bound_applicable=applicable,
    )


# ============================================================================
# Commutator Norm
# ============================================================================

def commutator_norm(H: SparseHamiltonian, t: float,
                    A1: np.ndarray, B1: np.ndarray, A2: np.ndarray, B2: np.ndarray,
                    cfg: Optional[PropagatorConfig] = None) -> float:
    """
    ||[A2B2, exp(itH) A1B1 exp(-itH)]||.

    A1 on A-slots 1..n1, B1 on B-slots 1..n2, A2 on A-slots n1+1..n1+m1,
    B2 on B-slots n2+1..n2+m2. Within the dense threshold the commutator is
    formed explicitly whatever the method; above it the norm is estimated from
    Krylov-propagated matvecs.
    """
    cfg = cfg or PropagatorConfig()
    M = H.grid.M
    n1 = _slot_count(A1, M, "A1")
    n2 = _slot_count(B1, M, "B1")
    m1 = _slot_count(A2, M, "A2")
    m2 = _slot_count(B2, M, "B2")
    SweepLayout(n1=n1, n2=n2, m1=m1, m2=m2).check_against(H.config)

    O1 = _composite(A1, B1, 1, 1, H)
    O2 = _composite(A2, B2, n1 + 1, n2 + 1, H)

    if H.dimension <= cfg.dense_threshold:
        X = heisenberg_dense(H, O1, t, threshold=cfg.dense_threshold)
        Y = O2.dense()
        return spectral_norm(matrix=Y @ X - X @ Y)

    krylov = cfg.model_copy(update={"method": PropagationMethod.KRYLOV})

    def heisenberg(vec: np.ndarray, adjoint: bool) -> np.ndarray:
        forward = evolve_vector(H, vec, t, krylov)
        return evolve_vector(H, O1.matvec(forward, adjoint=adjoint), -t, krylov)

    def matvec(vec: np.ndarray) -> np.ndarray:
        return O2.matvec(heisenberg(vec, False)) - heisenberg(O2.matvec(vec), False)

    def rmatvec(vec: np.ndarray) -> np.ndarray:
        return heisenberg(O2.rmatvec(vec), True) - O2.rmatvec(heisenberg(vec, True))

    return spectral_norm(matvec=matvec, rmatvec=rmatvec, dim=H.dimension)


# ============================================================================
# Projector Decomposition
# ============================================================================

@dataclass
class DecompositionReport:
    t: float
    P: complex
    Q: complex
    R: complex
    correlation: complex

    @property
    def residual(self) -> float:
        return abs(self.P + self.Q + self.R - self.correlation)


def projector_decomposition(H: SparseHamiltonian, psi0: MixtureState, t: float,
                            A1: np.ndarray, B1: np.ndarray, A2: np.ndarray, B2: np.ndarray,
                            cfg: Optional[PropagatorConfig] = None) -> DecompositionReport:
    """
    Split the correlation into the excitation sums P (A only), Q (B only) and R (both).

    With phi1 = exp(itH) A1B1 psi_t and phi2 = exp(itH) (A2B2)^H psi_t the
    correlation is <phi2, (1 - |psi0><psi0|) phi1>, and the condensate
    resolution of identity splits 1 - |psi0><psi0| into the three sums.
    """
    if not psi0.is_product:
        raise IncompatibleOperandsError("projector decomposition requires a product initial state")
    check_compatible(H.grid, H.config, psi0.grid, psi0.config)
    O1, O2, _, _ = _correlation_operators(H, A1, B1, A2, B2)

    psi_t = evolve(H, psi0, t, cfg)
    phi1 = evolve_vector(H, O1.matvec(psi_t.amplitudes), -t, cfg)
    phi2 = evolve_vector(H, O2.rmatvec(psi_t.amplitudes), -t, cfg)

    u, v = psi0.factors
    expansion = four_term_expansion(phi1, u, v, H.config, H.grid)
    corr = correlation(H, psi0, t, A1, B1, A2, B2, cfg, evolved=psi_t)

    return DecompositionReport(
        t=t,
        P=complex(np.vdot(phi2, expansion.excited_A)),
        Q=complex(np.vdot(phi2, expansion.excited_B)),
        R=complex(np.vdot(phi2, expansion.excited_AB)),
        correlation=corr.value,
    )


# ============================================================================
# Witness Sweeps
# ============================================================================

def run_cells(cells: Sequence, worker: Callable, threads: int) -> List:
    if threads <= 1:
        return [worker(cell) for cell in cells]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(worker, cells))


def lr_witness_sweep(H: SparseHamiltonian, times: Sequence[float], layout: SweepLayout,
                     witnesses: WitnessSet, cfg: Optional[PropagatorConfig] = None,
                     threads: int = 1) -> List[LRSweepRow]:
    """Commutator norm against the commutator bound for every (t, witness) cell."""
    layout.check_against(H.config)
    if witnesses.layout != layout:
        raise IncompatibleOperandsError("witness layout does not match the sweep layout")
    n1, n2, m1, m2 = layout.as_tuple()

    def cell(item: Tuple[float, WitnessSample]) -> LRSweepRow:
        t, sample = item
        params = bound_params(H.config, H.potentials, opnorms=sample.opnorms)
        bound = theorem2_rhs(params, layout, t)
        try:
            measured = commutator_norm(H, t, sample.A1, sample.B1, sample.A2, sample.B2, cfg)
            error = None
        except NumericalError as e:
            logger.warning(f"Commutator norm failed at t={t}, sample={sample.index}: {e}")
            measured, error = math.nan, str(e)
        return LRSweepRow(
            t=t, n1=n1, n2=n2, m1=m1, m2=m2, N1=H.config.N1, N2=H.config.N2,
            sample=sample.index, measured=measured, bound=bound,
            ratio=bound_ratio(measured, bound) if error is None else math.nan,
            error=error,
        )

    cells = [(float(t), sample) for t in times for sample in witnesses.samples]
    rows = run_cells(cells, cell, threads)
    return sorted(rows, key=lambda r: (r.t, r.sample))


def corr_witness_sweep(H: SparseHamiltonian, psi0: MixtureState, times: Sequence[float],
                       witnesses: WitnessSet, cfg: Optional[PropagatorConfig] = None,
                       threads: int = 1) -> List[CorrSweepRow]:
    """|correlation| against the correlation bound for every (t, witness) cell."""
    n, m = witnesses.layout.n1, witnesses.layout.m1
    if witnesses.layout != SweepLayout.symmetric(n, m):
        raise IncompatibleOperandsError("correlation witnesses need a symmetric layout (n, n, m, m)")

    def evolved_at(t: float) -> Tuple[float, Optional[MixtureState], Optional[str]]:
        try:
            return t, evolve(H, psi0, t, cfg), None
        except NumericalError as e:
            logger.warning(f"Propagation failed at t={t}: {e}")
            return t, None, str(e)

    states = run_cells([float(t) for t in times], evolved_at, threads)

    def cell(item) -> CorrSweepRow:
        (t, psi_t, failure), sample = item
        params = bound_params(H.config, H.potentials, n=n, m=m, opnorms=sample.opnorms)
        bound = theorem1_rhs(params, t)
        if psi_t is None:
            measured, error = math.nan, failure
        else:
            result = correlation(H, psi0, t, sample.A1, sample.B1, sample.A2, sample.B2,
                                 cfg, evolved=psi_t)
            measured, error = result.abs, None
        return CorrSweepRow(
            t=t, n=n, m=m, N1=H.config.N1, N2=H.config.N2, sample=sample.index,
            abs_corr=measured, bound=bound,
            ratio=bound_ratio(measured, bound) if error is None else math.nan,
            error=error,
        )

    cells = [(state, sample) for state in states for sample in witnesses.samples]
    rows = run_cells(cells, cell, threads)
    return sorted(rows, key=lambda r: (r.t, r.sample))
