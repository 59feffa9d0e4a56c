"""
Verification suites driven by an ExperimentConfig.

Each runner returns a SweepOutcome (rows in deterministic order, CSV columns,
summary lines, and the first violation or numerical failure if any); writing
the CSV and mapping outcomes to exit codes is left to the CLI.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from pydantic import BaseModel

from app.domain.experiment_config import ExperimentConfig, RunSection
from app.domain.models import (
    BoundParams,
    DecompositionRow,
    GapRow,
    HartreeParams,
    LatticeGrid,
    PotentialSet,
    PropagatorConfig,
    SpeciesConfig,
    SweepLayout,
)
from app.services.bounds import (
    crossover_time,
    effective_bound,
    theorem1_rhs,
    theorem2_rhs,
    trivial_bound,
    validity_horizon,
)
from app.services.hamiltonian import SparseHamiltonian, assemble_full, bound_params, potential_preset
from app.services.hartree import HartreeState, factorization_gap, sample_trajectory
from app.services.observables import (
    WitnessSet,
    corr_witness_sweep,
    run_cells,
    lr_witness_sweep,
    projector_decomposition,
)
from app.services.tensor_space import MixtureState, orbital_preset, product_state


logger = logging.getLogger(__name__)

LR_COLUMNS = ["t", "n1", "n2", "m1", "m2", "N1", "N2", "sample", "measured", "bound", "ratio"]
CORR_COLUMNS = ["t", "n", "m", "N1", "N2", "sample", "abs_corr", "bound", "ratio"]
DECOMPOSITION_COLUMNS = ["t", "P_re", "P_im", "Q_re", "Q_im", "R_re", "R_im",
                         "corr_re", "corr_im", "sample", "residual"]
GAP_COLUMNS = ["t", "N1", "N2", "gap_A", "gap_B"]


# ============================================================================
# Outcome & System Assembly
# ============================================================================

@dataclass
class SweepOutcome:
    command: str
    rows: List[BaseModel]
    columns: List[str]
    summary: List[str] = field(default_factory=list)
    violation: Optional[str] = None
    numerical_failure: Optional[str] = None

    @property
    def passed(self) -> bool:
        return self.violation is None and self.numerical_failure is None


@dataclass
class MixtureSystem:
    grid: LatticeGrid
    config: SpeciesConfig
    potentials: PotentialSet
    u: np.ndarray
    v: np.ndarray
    H: SparseHamiltonian
    psi0: MixtureState


def _orbital(spec: str, grid: LatticeGrid) -> np.ndarray:
    if "," in spec:
        values = np.array([float(item) for item in spec.split(",")], dtype=complex)
        if values.size != grid.M:
            raise ValueError(f"explicit orbital has {values.size} entries, grid has {grid.M}")
        norm = np.linalg.norm(values)
        if norm == 0:
            raise ValueError("explicit orbital must be non-zero")
        return values / norm
    return orbital_preset(spec, grid)


def build_potentials(config: ExperimentConfig, grid: LatticeGrid) -> PotentialSet:
    pot = config.potentials
    potentials = potential_preset(pot.preset, grid, g1=pot.g1, g2=pot.g2, g12=pot.g12)
    overrides = pot.overrides()
    return potentials.replace(**overrides) if overrides else potentials


def build_system(config: ExperimentConfig, N1: Optional[int] = None,
                 N2: Optional[int] = None) -> MixtureSystem:
    """Grid, potentials, orbitals, full Hamiltonian and product initial state."""
    grid = LatticeGrid(M=config.system.M, spacing=config.system.spacing)
    species = SpeciesConfig(N1=N1 or config.system.N1, N2=N2 or config.system.N2)
    potentials = build_potentials(config, grid)
    u = _orbital(config.initial.u, grid)
    v = _orbital(config.initial.v, grid)
    H = assemble_full(grid, species, potentials)
    return MixtureSystem(grid, species, potentials, u, v, H, product_state(u, v, species, grid))


def propagator_config(config: ExperimentConfig) -> PropagatorConfig:
    return PropagatorConfig(
        method=config.run.method,
        krylov_dim=config.run.krylov_dim,
        tol=config.run.krylov_tol,
        dense_threshold=config.run.dense_threshold,
    )


def _envelope_line(params: BoundParams, run: RunSection, rhs: float) -> str:
    """Bound at the last sweep time capped by the trivial bound, and the validity horizon."""
    return (f"effective_bound(t={max(run.times)})={effective_bound(rhs, params):.17e} "
            f"validity_horizon(eps={run.horizon_epsilon})={validity_horizon(params, run.horizon_epsilon):.17e}")


def _first_error(rows) -> Optional[str]:
    for row in rows:
        if getattr(row, "error", None):
            return f"t={row.t} sample={row.sample}: {row.error}"
    return None


# ============================================================================
# Commutator Bound Suite
# ============================================================================

def run_lr_sweep(config: ExperimentConfig, threads: int = 1) -> SweepOutcome:
    system = build_system(config)
    layout = config.layout.sweep_layout()
    layout.check_against(system.config)
    run = config.run
    logger.info(f"LR sweep: M={system.grid.M}, N1={system.config.N1}, N2={system.config.N2}, "
                f"layout={layout.as_tuple()}, {run.witness_count} witnesses, {len(run.times)} times")

    witnesses = WitnessSet.generate(run.seed, run.witness_count, layout, system.grid.M,
                                    hermitian=run.hermitian_witnesses)
    rows = lr_witness_sweep(system.H, run.times, layout, witnesses,
                            propagator_config(config), threads=threads)

    outcome = SweepOutcome("lr-sweep", rows, LR_COLUMNS)
    outcome.numerical_failure = _first_error(rows)
    for row in rows:
        if row.error is None and (row.measured > row.bound + run.bound_slack
                                  or row.ratio > 1.0 + run.ratio_slack):
            outcome.violation = f"commutator bound violated: {row.model_dump_json()}"
            break

    params = bound_params(system.config, system.potentials)
    finite = [row.ratio for row in rows if row.error is None]
    outcome.summary = [
        f"max_ratio={(max(finite) if finite else math.nan):.17e}",
        f"Vcal={params.Vcal:.17e} crossover_time={crossover_time(params, layout):.17e} "
        f"trivial_bound={trivial_bound(params):.17e}",
        _envelope_line(params, run, theorem2_rhs(params, layout, max(run.times))),
    ]
    return outcome


# ============================================================================
# Correlation Bound Suite
# ============================================================================

def run_corr_sweep(config: ExperimentConfig, threads: int = 1) -> SweepOutcome:
    system = build_system(config)
    n, m = config.layout.correlation_slots()
    layout = SweepLayout.symmetric(n, m)
    run = config.run
    logger.info(f"Correlation sweep: N1={system.config.N1}, N2={system.config.N2}, n={n}, m={m}")

    witnesses = WitnessSet.generate(run.seed, run.witness_count, layout, system.grid.M,
                                    hermitian=run.hermitian_witnesses)
    rows = corr_witness_sweep(system.H, system.psi0, run.times, witnesses,
                              propagator_config(config), threads=threads)

    outcome = SweepOutcome("corr-sweep", rows, CORR_COLUMNS)
    outcome.numerical_failure = _first_error(rows)
    for row in rows:
        if row.error is None and (row.abs_corr > row.bound + run.bound_slack
                                  or row.ratio > 1.0 + run.ratio_slack):
            outcome.violation = f"correlation bound violated: {row.model_dump_json()}"
            break

    params = bound_params(system.config, system.potentials, n=n, m=m)
    finite = [row.ratio for row in rows if row.error is None]
    outcome.summary = [
        f"max_ratio={(max(finite) if finite else math.nan):.17e}",
        f"alpha={params.alpha:.17e} Vbig={params.Vbig:.17e} "
        f"crossover_time={crossover_time(params):.17e}",
        _envelope_line(params, run, theorem1_rhs(params, max(run.times))),
    ]
    return outcome


# ============================================================================
# Decomposition Identity
# ============================================================================

def run_decomposition_check(config: ExperimentConfig, threads: int = 1) -> SweepOutcome:
    system = build_system(config)
    n, m = config.layout.correlation_slots()
    run = config.run
    witnesses = WitnessSet.generate(run.seed, run.witness_count, SweepLayout.symmetric(n, m),
                                    system.grid.M, hermitian=run.hermitian_witnesses)
    cfg = propagator_config(config)

    def cell(item) -> DecompositionRow:
        t, sample = item
        report = projector_decomposition(system.H, system.psi0, t, sample.A1, sample.B1,
                                         sample.A2, sample.B2, cfg)
        return DecompositionRow(
            t=t, sample=sample.index,
            P_re=report.P.real, P_im=report.P.imag,
            Q_re=report.Q.real, Q_im=report.Q.imag,
            R_re=report.R.real, R_im=report.R.imag,
            corr_re=report.correlation.real, corr_im=report.correlation.imag,
            residual=report.residual,
        )

    cells = [(t, sample) for t in sorted(float(t) for t in run.times) for sample in witnesses.samples]
    rows = run_cells(cells, cell, threads)

    outcome = SweepOutcome("decomp-check", rows, DECOMPOSITION_COLUMNS)
    worst = max(rows, key=lambda r: r.residual)
    if worst.residual > run.identity_tol:
        outcome.violation = f"decomposition identity violated: {worst.model_dump_json()}"
    outcome.summary = [f"max_residual={worst.residual:.17e}"]
    return outcome


# ============================================================================
# Hartree Comparison
# ============================================================================

def _trend_violations(rows: List[GapRow], factor: float) -> List[str]:
    """Gaps at larger particle numbers should not exceed the previous ones by more than `factor`."""
    notes = []
    for t in sorted({row.t for row in rows}):
        at_t = sorted((r for r in rows if r.t == t), key=lambda r: (r.N1 + r.N2, r.N1))
        for previous, current in zip(at_t, at_t[1:]):
            for species in ("gap_A", "gap_B"):
                before, after = getattr(previous, species), getattr(current, species)
                if after > factor * before + 1e-12:
                    notes.append(f"t={t} {species}: ({previous.N1},{previous.N2})={before:.3e} "
                                 f"-> ({current.N1},{current.N2})={after:.3e}")
    return notes


def run_hartree_compare(config: ExperimentConfig, threads: int = 1) -> SweepOutcome:
    run = config.run
    cfg = propagator_config(config)

    def cell(particles) -> List[GapRow]:
        N1, N2 = particles
        system = build_system(config, N1, N2)
        params = HartreeParams.for_config(system.grid, system.config, system.potentials,
                                          dt=run.hartree_dt, stepper=run.hartree_stepper)
        trajectory = sample_trajectory(HartreeState(system.u, system.v), params, run.times)
        gaps = factorization_gap(system.H, system.psi0, params, trajectory, run.times, cfg)
        logger.info(f"Hartree comparison done for N1={N1}, N2={N2}")
        return gaps

    rows = [row for gaps in run_cells(list(config.particle_sweep()), cell, threads) for row in gaps]
    rows.sort(key=lambda r: (r.t, r.N1 + r.N2, r.N1))
    outcome = SweepOutcome("hartree-compare", rows, GAP_COLUMNS)

    for row in rows:
        if row.t == 0 and max(row.gap_A, row.gap_B) > run.identity_tol:
            outcome.violation = f"non-zero gap at t=0: {row.model_dump_json()}"
            break

    trend = _trend_violations(rows, run.trend_factor)
    outcome.summary = [f"trend={'non-increasing' if not trend else 'violated'} factor={run.trend_factor}"]
    outcome.summary.extend(f"trend_note {note}" for note in trend)
    return outcome


RUNNERS = {
    "lr-sweep": run_lr_sweep,
    "corr-sweep": run_corr_sweep,
    "decomp-check": run_decomposition_check,
    "hartree-compare": run_hartree_compare,
}
