"""
Schrödinger propagation psi_t = exp(-itH) psi.

Two methods must agree: a dense eigendecomposition (cached per Hamiltonian,
shared with the Heisenberg picture) and a Lanczos/Krylov exponential with full
reorthogonalization and substeps sized from an estimate of ||H||.
"""

import logging
import math
import threading
from typing import Optional, Tuple

import numpy as np
import scipy.linalg
from cachetools import LRUCache, cached
from cachetools.keys import hashkey

from app.config import settings
from app.domain.exceptions import DimensionError, IncompatibleOperandsError, KrylovBreakdownError
from app.domain.models import PropagationMethod, PropagatorConfig
from app.services.hamiltonian import SparseHamiltonian
from app.services.tensor_space import EmbeddedOperator, MixtureState, check_compatible


logger = logging.getLogger(__name__)


# ============================================================================
# Cached Spectral Data
# ============================================================================

_eigen_cache: LRUCache = LRUCache(maxsize=settings.EIGEN_CACHE_SIZE)
_norm_cache: LRUCache = LRUCache(maxsize=64)


@cached(cache=_eigen_cache, key=lambda H: hashkey(H.key), lock=threading.RLock())
def eigendecomposition(H: SparseHamiltonian) -> Tuple[np.ndarray, np.ndarray]:
    """Eigenvalues and eigenvectors of the dense Hamiltonian (dimension checked by callers)."""
    logger.debug(f"Diagonalizing dense Hamiltonian of dimension {H.dimension}")
    w, Q = scipy.linalg.eigh(H.to_dense(threshold=H.dimension))
    w.setflags(write=False)
    Q.setflags(write=False)
    return w, Q


@cached(cache=_norm_cache, key=lambda H: hashkey(H.key), lock=threading.RLock())
def norm_estimate(H: SparseHamiltonian, iterations: int = 40) -> float:
    """Power-iteration estimate of ||H||, capped by the Gershgorin bound."""
    rng = np.random.default_rng(settings.POWER_SEED)
    x = rng.standard_normal(H.dimension) + 1j * rng.standard_normal(H.dimension)
    x /= np.linalg.norm(x)
    estimate = 0.0
    for _ in range(iterations):
        y = H.matvec(x)
        estimate = float(np.linalg.norm(y))
        if estimate == 0.0:
            break
        x = y / estimate
    # power iteration approaches ||H|| from below; pad before capping
    return min(1.1 * estimate, H.norm_upper_bound()) or 1.0


def _require_dense(H: SparseHamiltonian, threshold: int) -> None:
    if H.dimension > threshold:
        raise DimensionError(
            f"dense propagation requested for dimension {H.dimension} > threshold {threshold}"
        )


# ============================================================================
# Krylov Exponential
# ============================================================================

def _lanczos_expmv(H: SparseHamiltonian, vec: np.ndarray, tau: float, krylov_dim: int,
                   tol: float) -> Tuple[Optional[np.ndarray], float]:
    """
    exp(-i tau H) vec from one Krylov space.

    Returns (result, error estimate); result is None when the estimate did not
    reach `tol` within `krylov_dim` vectors.
    """
    beta0 = float(np.linalg.norm(vec))
    if beta0 == 0.0:
        return vec.copy(), 0.0

    n = vec.size
    basis = np.zeros((n, krylov_dim + 1), dtype=complex)
    alpha = np.zeros(krylov_dim)
    beta = np.zeros(krylov_dim)
    basis[:, 0] = vec / beta0
    scale = H.norm_upper_bound()
    err = math.inf

    for j in range(krylov_dim):
        w = H.matvec(basis[:, j])
        alpha[j] = float(np.real(np.vdot(basis[:, j], w)))
        w = w - alpha[j] * basis[:, j]
        if j > 0:
            w = w - beta[j - 1] * basis[:, j - 1]
        # full reorthogonalization, applied twice
        for _ in range(2):
            w = w - basis[:, :j + 1] @ (basis[:, :j + 1].conj().T @ w)
        b = float(np.linalg.norm(w))

        m = j + 1
        if m == 1:
            y = np.array([np.exp(-1j * tau * alpha[0])])
        else:
            evals, evecs = scipy.linalg.eigh_tridiagonal(alpha[:m], beta[:m - 1])
            y = evecs @ (np.exp(-1j * tau * evals) * evecs[0, :])

        if b <= 1e-14 * max(scale, 1.0):
            # invariant subspace: the projection is exact
            return beta0 * (basis[:, :m] @ y), 0.0

        err = beta0 * b * abs(y[-1])
        if err <= tol:
            return beta0 * (basis[:, :m] @ y), err

        beta[j] = b
        basis[:, j + 1] = w / b

    return None, err


def _krylov_evolve(H: SparseHamiltonian, vec: np.ndarray, t: float,
                   cfg: PropagatorConfig) -> np.ndarray:
    substep = cfg.substep or settings.SUBSTEP_NORM_PRODUCT / norm_estimate(H)
    steps = max(1, math.ceil(abs(t) / substep))
    tau = t / steps
    step_tol = cfg.tol / steps

    def advance(x: np.ndarray, dt: float, depth: int) -> np.ndarray:
        result, err = _lanczos_expmv(H, x, dt, cfg.krylov_dim, step_tol * abs(dt / tau))
        if result is not None:
            return result
        if depth >= settings.KRYLOV_MAX_HALVINGS:
            raise KrylovBreakdownError(
                f"Krylov propagation did not converge with krylov_dim={cfg.krylov_dim} "
                f"after {depth} substep halvings", residual=err
            )
        logger.debug(f"Halving Krylov substep {dt:.3e} (error estimate {err:.3e})")
        return advance(advance(x, dt / 2, depth + 1), dt / 2, depth + 1)

    out = vec
    for _ in range(steps):
        out = advance(out, tau, 0)
    logger.debug(f"Krylov propagation t={t:.6g} in {steps} substeps of {tau:.3e}")
    return out


# ============================================================================
# Public API
# ============================================================================

def evolve_vector(H: SparseHamiltonian, vec: np.ndarray, t: float,
                  cfg: Optional[PropagatorConfig] = None) -> np.ndarray:
    """exp(-itH) applied to a vector or to the columns of a (dim, batch) array."""
    cfg = cfg or PropagatorConfig()
    vec = np.asarray(vec, dtype=complex)
    if vec.shape[0] != H.dimension:
        raise IncompatibleOperandsError(
            f"vector of length {vec.shape[0]} for Hamiltonian of dimension {H.dimension}"
        )
    if t == 0:
        return vec.copy()

    if cfg.method == PropagationMethod.DENSE:
        _require_dense(H, cfg.dense_threshold)
        w, Q = eigendecomposition(H)
        phases = np.exp(-1j * t * w)
        if vec.ndim == 2:
            phases = phases[:, None]
        return Q @ (phases * (Q.conj().T @ vec))

    if vec.ndim == 2:
        return np.column_stack([_krylov_evolve(H, col, t, cfg) for col in vec.T])
    return _krylov_evolve(H, vec, t, cfg)


def evolve(H: SparseHamiltonian, psi: MixtureState, t: float,
           cfg: Optional[PropagatorConfig] = None) -> MixtureState:
    """psi_t = exp(-itH) psi."""
    check_compatible(H.grid, H.config, psi.grid, psi.config)
    if t == 0:
        return psi
    return psi.with_amplitudes(evolve_vector(H, psi.amplitudes, t, cfg))


def propagator_dense(H: SparseHamiltonian, t: float, threshold: Optional[int] = None) -> np.ndarray:
    """Dense unitary exp(-itH)."""
    _require_dense(H, threshold or settings.DENSE_THRESHOLD)
    if t == 0:
        return np.eye(H.dimension, dtype=complex)
    w, Q = eigendecomposition(H)
    return (Q * np.exp(-1j * t * w)) @ Q.conj().T


def heisenberg_dense(H: SparseHamiltonian, op: EmbeddedOperator, t: float,
                     threshold: Optional[int] = None) -> np.ndarray:
    """exp(itH) Op exp(-itH) as a dense matrix."""
    check_compatible(H.grid, H.config, op.grid, op.config)
    _require_dense(H, threshold or settings.DENSE_THRESHOLD)
    dense_op = op.dense()
    if t == 0:
        return dense_op
    U = propagator_dense(H, t, threshold or settings.DENSE_THRESHOLD)
    return U.conj().T @ dense_op @ U
