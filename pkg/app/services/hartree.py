"""
Coupled Hartree system for the mixture orbitals (u, v):

    i du/dt = h1 u + (V1 * |u|^2) u + c2 (V12 * |v|^2) u
    i dv/dt = h2 v + (V2 * |v|^2) v + c1 (V12 * |u|^2) v

with `*` the unweighted periodic lattice convolution, so the system is the exact
mean-field counterpart of the many-body lattice Hamiltonian.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
import scipy.fft
import scipy.linalg

from app.domain.exceptions import IncompatibleOperandsError, StabilityError
from app.domain.models import GapRow, HartreeParams, HartreeStepper, PropagatorConfig, Species
from app.services.hamiltonian import SparseHamiltonian, one_body
from app.services.propagator import evolve
from app.services.tensor_space import MixtureState, one_body_rdm, projector


logger = logging.getLogger(__name__)

MASS_TOL = 1e-8
RK4_STABILITY_MARGIN = 0.5


@dataclass(frozen=True, eq=False)
class HartreeState:
    u: np.ndarray
    v: np.ndarray
    t: float = 0.0

    def masses(self) -> Tuple[float, float]:
        return float(np.linalg.norm(self.u)), float(np.linalg.norm(self.v))


def convolve(V: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """(V * rho)(j) = sum_k V(j - k) rho_k on the periodic lattice."""
    return np.real(scipy.fft.ifft(scipy.fft.fft(V) * scipy.fft.fft(rho)))


# ============================================================================
# One-Body Data
# ============================================================================

@dataclass(frozen=True)
class _OneBody:
    h1: np.ndarray
    h2: np.ndarray
    spectral_radius: float


def _one_body(params: HartreeParams) -> _OneBody:
    h1 = one_body(params.grid, params.potentials.U1)
    h2 = one_body(params.grid, params.potentials.U2)
    radius = max(float(np.max(np.abs(np.linalg.eigvalsh(h)))) for h in (h1, h2))
    return _OneBody(h1, h2, radius)


# ============================================================================
# Right-Hand Side & Energy
# ============================================================================

def _mean_fields(u: np.ndarray, v: np.ndarray, params: HartreeParams) -> Tuple[np.ndarray, np.ndarray]:
    pot = params.potentials
    rho_u = np.abs(u) ** 2
    rho_v = np.abs(v) ** 2
    field_u = convolve(pot.V1, rho_u) + params.c2 * convolve(pot.V12, rho_v)
    field_v = convolve(pot.V2, rho_v) + params.c1 * convolve(pot.V12, rho_u)
    return field_u, field_v


def _rhs(u: np.ndarray, v: np.ndarray, params: HartreeParams,
         ob: _OneBody) -> Tuple[np.ndarray, np.ndarray]:
    field_u, field_v = _mean_fields(u, v, params)
    return -1j * (ob.h1 @ u + field_u * u), -1j * (ob.h2 @ v + field_v * v)


def hartree_rhs(state: HartreeState, params: HartreeParams) -> Tuple[np.ndarray, np.ndarray]:
    """(du/dt, dv/dt)"""
    return _rhs(np.asarray(state.u, dtype=complex), np.asarray(state.v, dtype=complex),
                params, _one_body(params))


def hartree_energy(state: HartreeState, params: HartreeParams) -> float:
    """
    Population-weighted energy conserved by the coupled flow:
      c1 [<u,h1 u> + 1/2 <rho_u, V1*rho_u>] + c2 [<v,h2 v> + 1/2 <rho_v, V2*rho_v>]
      + c1 c2 <rho_u, V12*rho_v>
    """
    pot = params.potentials
    ob = _one_body(params)
    u, v = np.asarray(state.u, dtype=complex), np.asarray(state.v, dtype=complex)
    rho_u, rho_v = np.abs(u) ** 2, np.abs(v) ** 2

    energy_u = np.real(np.vdot(u, ob.h1 @ u)) + 0.5 * rho_u @ convolve(pot.V1, rho_u)
    energy_v = np.real(np.vdot(v, ob.h2 @ v)) + 0.5 * rho_v @ convolve(pot.V2, rho_v)
    cross = rho_u @ convolve(pot.V12, rho_v)
    return float(params.c1 * energy_u + params.c2 * energy_v + params.c1 * params.c2 * cross)


# ============================================================================
# Steppers
# ============================================================================

def _rk4_step(u, v, dt, params, ob):
    k1u, k1v = _rhs(u, v, params, ob)
    k2u, k2v = _rhs(u + 0.5 * dt * k1u, v + 0.5 * dt * k1v, params, ob)
    k3u, k3v = _rhs(u + 0.5 * dt * k2u, v + 0.5 * dt * k2v, params, ob)
    k4u, k4v = _rhs(u + dt * k3u, v + dt * k3v, params, ob)
    return (u + dt / 6 * (k1u + 2 * k2u + 2 * k3u + k4u),
            v + dt / 6 * (k1v + 2 * k2v + 2 * k3v + k4v))


class _StrangStepper:
    """Half nonlinear phase, exact linear step, half nonlinear phase."""

    def __init__(self, params: HartreeParams, ob: _OneBody, dt: float):
        self.params = params
        self.dt = dt
        self.linear = [scipy.linalg.expm(-1j * dt * h) for h in (ob.h1, ob.h2)]

    def _phase(self, u, v, tau):
        # |u|, |v| are constant under the nonlinear part, so the fields are too
        field_u, field_v = _mean_fields(u, v, self.params)
        return np.exp(-1j * tau * field_u) * u, np.exp(-1j * tau * field_v) * v

    def __call__(self, u, v):
        u, v = self._phase(u, v, self.dt / 2)
        u, v = self.linear[0] @ u, self.linear[1] @ v
        return self._phase(u, v, self.dt / 2)


def integrate(state0: HartreeState, params: HartreeParams, T: float) -> List[HartreeState]:
    """
    Trajectory on [state0.t, state0.t + T] with steps of (at most) params.dt,
    first entry the initial state.
    """
    if T < 0:
        raise ValueError(f"integration time must be non-negative, got {T}")
    u = np.asarray(state0.u, dtype=complex).copy()
    v = np.asarray(state0.v, dtype=complex).copy()
    if u.shape != (params.grid.M,) or v.shape != (params.grid.M,):
        raise IncompatibleOperandsError(f"orbitals must have {params.grid.M} entries")
    for name, orbital in (("u", u), ("v", v)):
        if abs(np.linalg.norm(orbital) - 1.0) > MASS_TOL:
            raise ValueError(f"{name} must be normalized")

    steps = max(1, math.ceil(T / params.dt - 1e-9)) if T > 0 else 0
    dt = T / steps if steps else params.dt
    ob = _one_body(params)

    if params.stepper == HartreeStepper.RK4:
        product = dt * ob.spectral_radius
        if product > RK4_STABILITY_MARGIN:
            raise StabilityError(f"rk4 step too large for dt={dt}", product)
        step = lambda a, b: _rk4_step(a, b, dt, params, ob)
    else:
        step = _StrangStepper(params, ob, dt)

    trajectory = [HartreeState(u, v, state0.t)]
    for k in range(1, steps + 1):
        u, v = step(u, v)
        trajectory.append(HartreeState(u, v, state0.t + k * dt))

    drift = max(abs(m - 1.0) for m in trajectory[-1].masses())
    logger.info(f"Hartree {params.stepper.value} integration: {steps} steps of {dt:.3e}, "
                f"mass drift {drift:.2e}")
    if drift > MASS_TOL:
        logger.warning(f"Hartree mass drift {drift:.2e} exceeds {MASS_TOL:.0e}")
    return trajectory


def sample_trajectory(state0: HartreeState, params: HartreeParams,
                      times: Sequence[float]) -> List[HartreeState]:
    """States exactly at the requested (sorted, non-negative) times, integrating piecewise."""
    samples = []
    current = state0
    for t in sorted(float(t) for t in times):
        if t < current.t:
            raise ValueError(f"requested time {t} precedes the initial time {state0.t}")
        if t > current.t:
            current = integrate(current, params, t - current.t)[-1]
            current = HartreeState(current.u, current.v, t)
        samples.append(current)
    return samples


def state_at(trajectory: Sequence[HartreeState], t: float) -> HartreeState:
    """Trajectory entry at time t (within half a step)."""
    times = np.array([s.t for s in trajectory])
    index = int(np.argmin(np.abs(times - t)))
    tolerance = 0.5 * (times[1] - times[0]) if len(times) > 1 else 1e-12
    if abs(times[index] - t) > tolerance + 1e-12:
        raise ValueError(f"time {t} is not covered by the trajectory [{times[0]}, {times[-1]}]")
    return trajectory[index]


# ============================================================================
# Factorization Gap
# ============================================================================

def trace_distance_to_orbital(rdm: np.ndarray, orbital: np.ndarray) -> float:
    """1/2 || rdm - |orbital><orbital| ||_1"""
    difference = rdm - projector(orbital)
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(difference))))


def factorization_gap(H: SparseHamiltonian, psi0: MixtureState, params: HartreeParams,
                      trajectory: Sequence[HartreeState], times: Sequence[float],
                      cfg: PropagatorConfig = None) -> List[GapRow]:
    """Distance of the many-body one-body density matrices from the Hartree orbitals."""
    if not psi0.is_product:
        raise IncompatibleOperandsError("factorization gap requires a product initial state")
    if params.grid != H.grid or not params.potentials.same_as(H.potentials):
        raise IncompatibleOperandsError("Hartree parameters must share grid and potentials with H")
    if abs(params.c1 - H.config.c1) > 1e-12:
        raise IncompatibleOperandsError(
            f"Hartree c1={params.c1} differs from N1/N={H.config.c1} of the many-body system"
        )

    rows = []
    for t in sorted(float(t) for t in times):
        psi_t = evolve(H, psi0, t, cfg)
        hartree_t = state_at(trajectory, t)
        rows.append(GapRow(
            t=t,
            N1=H.config.N1,
            N2=H.config.N2,
            gap_A=trace_distance_to_orbital(one_body_rdm(psi_t, Species.A), hartree_t.u),
            gap_B=trace_distance_to_orbital(one_body_rdm(psi_t, Species.B), hartree_t.v),
        ))
    return rows
