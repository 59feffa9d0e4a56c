from functools import reduce

import numpy as np
import pytest
import scipy.linalg

from app.domain.exceptions import ConvergenceError, IncompatibleOperandsError
from app.domain.models import (
    PotentialSet,
    PropagationMethod,
    PropagatorConfig,
    SpeciesConfig,
    SweepLayout,
)
from app.services.bounds import theorem2_rhs
from app.services.hamiltonian import assemble_full, bound_params, potential_preset
from app.services.observables import (
    WitnessSet,
    commutator_norm,
    corr_witness_sweep,
    correlation,
    lr_witness_sweep,
    projector_decomposition,
    spectral_norm,
)
from app.services.tensor_space import MixtureState, orbital_preset, product_state


DENSE = PropagatorConfig(method=PropagationMethod.DENSE)
KRYLOV = PropagatorConfig(method=PropagationMethod.KRYLOV)
MATRIX_FREE = PropagatorConfig(method=PropagationMethod.KRYLOV, dense_threshold=1)
I2 = np.eye(2)


def dense_pipeline(H, psi0, t, A1, B1, A2, B2):
    """Correlation and commutator from explicit Kronecker products and expm (M=2, N1=N2=2)."""
    U = scipy.linalg.expm(-1j * t * H.to_dense())
    O1 = reduce(np.kron, [A1, I2, B1, I2])
    O2 = reduce(np.kron, [I2, A2, I2, B2])
    psi = U @ psi0.amplitudes
    value = np.vdot(psi, O2 @ O1 @ psi) - np.vdot(psi, O2 @ psi) * np.vdot(psi, O1 @ psi)
    X = U.conj().T @ O1 @ U
    commutator = scipy.linalg.svdvals(O2 @ X - X @ O2)[0]
    return value, commutator


# ============================================================================
# Spectral Norm
# ============================================================================

class TestSpectralNorm:

    def test_identity(self):
        assert spectral_norm(matrix=np.eye(7)) == pytest.approx(1.0)

    def test_rank_one(self, make_orbital):
        x, y = make_orbital(6), make_orbital(6)
        assert spectral_norm(matrix=2.5 * np.outer(x, y.conj())) == pytest.approx(2.5)

    def test_matvec_path_matches_svd(self):
        rng = np.random.default_rng(7)
        C = rng.standard_normal((100, 100)) + 1j * rng.standard_normal((100, 100))
        exact = scipy.linalg.svdvals(C)[0]
        estimate = spectral_norm(matvec=lambda v: C @ v, rmatvec=lambda v: C.conj().T @ v, dim=100)
        assert estimate == pytest.approx(exact, rel=1e-7)

    def test_large_matrix_uses_lanczos(self):
        D = np.diag(np.concatenate([[3.0], np.linspace(0.1, 2.0, 599)]))
        assert spectral_norm(matrix=D) == pytest.approx(3.0, rel=1e-7)

    def test_zero_operator(self):
        assert spectral_norm(matvec=lambda v: 0 * v, rmatvec=lambda v: 0 * v, dim=5) == 0.0

    def test_nearly_degenerate_top_singular_values(self):
        rng = np.random.default_rng(3)
        U, _ = np.linalg.qr(rng.standard_normal((40, 40)) + 1j * rng.standard_normal((40, 40)))
        V, _ = np.linalg.qr(rng.standard_normal((40, 40)) + 1j * rng.standard_normal((40, 40)))
        s = np.concatenate([[1.0, 0.9999], np.linspace(0.9, 0.1, 38)])
        C = (U * s) @ V.conj().T
        estimate = spectral_norm(matvec=lambda v: C @ v, rmatvec=lambda v: C.conj().T @ v, dim=40)
        assert estimate == pytest.approx(1.0, rel=1e-8)

    def test_non_convergence_reports_last_iterate(self):
        d = np.linspace(0.0, 1.0, 1000)
        with pytest.raises(ConvergenceError) as excinfo:
            spectral_norm(matvec=lambda v: d * v, rmatvec=lambda v: d * v, dim=1000, max_iter=1)
        assert excinfo.value.iterations == 1
        assert excinfo.value.last_iterate.shape == (1000,)
        assert 0.0 < excinfo.value.last_estimate <= 1.0 + 1e-12

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            spectral_norm(matrix=np.array([[np.nan, 0.0], [0.0, 1.0]]))


# ============================================================================
# Witnesses
# ============================================================================

class TestWitnessSet:

    def test_unit_norm_and_shapes(self):
        layout = SweepLayout(n1=2, n2=1, m1=1, m2=1)
        witnesses = WitnessSet.generate(11, 4, layout, M=2)
        assert len(witnesses) == 4
        for sample in witnesses.samples:
            assert sample.A1.shape == (4, 4)
            assert sample.B1.shape == (2, 2)
            for norm in sample.opnorms:
                assert abs(norm - 1.0) <= 1e-9

    def test_deterministic_per_seed_and_index(self):
        layout = SweepLayout()
        first = WitnessSet.generate(5, 3, layout, M=3)
        second = WitnessSet.generate(5, 6, layout, M=3)
        for a, b in zip(first.samples, second.samples):
            np.testing.assert_array_equal(a.A1, b.A1)
            np.testing.assert_array_equal(a.B2, b.B2)
        other = WitnessSet.generate(6, 1, layout, M=3)
        assert not np.allclose(other.samples[0].A1, first.samples[0].A1)

    def test_hermitian_option(self):
        sample = WitnessSet.generate(1, 1, SweepLayout(), M=3, hermitian=True).samples[0]
        for kernel in (sample.A1, sample.B1, sample.A2, sample.B2):
            np.testing.assert_allclose(kernel, kernel.conj().T, atol=1e-15)


# ============================================================================
# Commutator Norm
# ============================================================================

class TestCommutatorNorm:

    @pytest.mark.parametrize("cfg", [DENSE, KRYLOV, MATRIX_FREE])
    def test_zero_at_zero_time(self, delta_desk, make_kernel, cfg):
        H, _ = delta_desk
        kernels = [make_kernel(2) for _ in range(4)]
        assert commutator_norm(H, 0.0, *kernels, cfg=cfg) <= 1e-10

    def test_identity_first_block_commutes(self, delta_desk, make_kernel):
        H, _ = delta_desk
        for t in (0.3, 1.0, 2.0):
            assert commutator_norm(H, t, I2, I2, make_kernel(2), make_kernel(2), cfg=DENSE) <= 1e-10

    def test_matches_dense_svd_oracle(self, delta_desk):
        H, psi0 = delta_desk
        sample = WitnessSet.generate(42, 1, SweepLayout(), M=2).samples[0]
        _, expected = dense_pipeline(H, psi0, 1.0, sample.A1, sample.B1, sample.A2, sample.B2)
        measured = commutator_norm(H, 1.0, sample.A1, sample.B1, sample.A2, sample.B2, cfg=DENSE)
        assert measured == pytest.approx(expected, abs=1e-9)

    def test_matrix_free_path_agrees_with_dense(self, delta_desk):
        H, _ = delta_desk
        sample = WitnessSet.generate(3, 1, SweepLayout(), M=2).samples[0]
        kernels = (sample.A1, sample.B1, sample.A2, sample.B2)
        dense = commutator_norm(H, 0.5, *kernels, cfg=DENSE)
        matrix_free = commutator_norm(H, 0.5, *kernels, cfg=MATRIX_FREE)
        assert matrix_free == pytest.approx(dense, rel=1e-6)

    def test_krylov_method_within_threshold_is_dense(self, delta_desk):
        H, _ = delta_desk
        sample = WitnessSet.generate(3, 1, SweepLayout(), M=2).samples[0]
        kernels = (sample.A1, sample.B1, sample.A2, sample.B2)
        assert commutator_norm(H, 0.5, *kernels, cfg=KRYLOV) == commutator_norm(H, 0.5, *kernels, cfg=DENSE)

    def test_within_trivial_and_commutator_bounds(self, delta_desk):
        H, _ = delta_desk
        params = bound_params(H.config, H.potentials)
        for sample in WitnessSet.generate(9, 4, SweepLayout(), M=2).samples:
            for t in (0.05, 0.25, 1.0):
                value = commutator_norm(H, t, sample.A1, sample.B1, sample.A2, sample.B2, cfg=DENSE)
                assert value <= 2.0 + 1e-9
                assert value <= theorem2_rhs(params, SweepLayout(), t) + 1e-9

    def test_slot_overflow(self, delta_desk, make_kernel):
        H, _ = delta_desk
        with pytest.raises(IncompatibleOperandsError):
            commutator_norm(H, 0.5, make_kernel(2, k=2), make_kernel(2), make_kernel(2), make_kernel(2))


# ============================================================================
# Correlation
# ============================================================================

class TestCorrelation:

    def test_zero_at_zero_time(self, delta_desk, make_kernel):
        H, psi0 = delta_desk
        result = correlation(H, psi0, 0.0, *[make_kernel(2) for _ in range(4)], cfg=DENSE)
        assert result.abs <= 1e-12
        assert result.bound == 0.0
        assert result.bound_applicable

    def test_free_evolution_stays_uncorrelated(self, grid3, config22, make_orbital, make_kernel):
        H = assemble_full(grid3, config22, PotentialSet.zeros(3))
        psi0 = product_state(make_orbital(3), make_orbital(3), config22, grid3)
        for t in (0.4, 1.5):
            result = correlation(H, psi0, t, *[make_kernel(3) for _ in range(4)], cfg=DENSE)
            assert result.abs <= 1e-10

    @pytest.mark.parametrize("cfg", [DENSE, KRYLOV])
    def test_matches_dense_pipeline(self, delta_desk, cfg):
        H, psi0 = delta_desk
        sample = WitnessSet.generate(17, 1, SweepLayout(), M=2).samples[0]
        kernels = (sample.A1, sample.B1, sample.A2, sample.B2)
        expected, _ = dense_pipeline(H, psi0, 0.5, *kernels)
        result = correlation(H, psi0, 0.5, *kernels, cfg=cfg)
        assert abs(result.value - expected) <= 1e-9
        assert result.abs == pytest.approx(abs(result.value))

    def test_within_correlation_bound(self, delta_desk):
        H, psi0 = delta_desk
        for sample in WitnessSet.generate(4, 6, SweepLayout(), M=2).samples:
            for t in (0.01, 0.1, 0.5):
                result = correlation(H, psi0, t, sample.A1, sample.B1, sample.A2, sample.B2, cfg=DENSE)
                assert result.abs <= result.bound + 1e-9

    def test_hermitian_kernels_give_real_covariance(self, delta_desk):
        H, psi0 = delta_desk
        sample = WitnessSet.generate(8, 1, SweepLayout(), M=2, hermitian=True).samples[0]
        result = correlation(H, psi0, 0.7, sample.A1, sample.B1, sample.A2, sample.B2, cfg=DENSE)
        assert abs(result.value.imag) <= 1e-9

    def test_non_product_state_flagged(self, delta_desk, make_kernel, rng):
        H, psi0 = delta_desk
        amps = rng.standard_normal(16) + 0j
        psi = MixtureState(amps / np.linalg.norm(amps), psi0.grid, psi0.config)
        result = correlation(H, psi, 0.3, *[make_kernel(2) for _ in range(4)], cfg=DENSE)
        assert not result.bound_applicable

    def test_slot_overflow(self, delta_desk, make_kernel):
        H, psi0 = delta_desk
        with pytest.raises(IncompatibleOperandsError):
            correlation(H, psi0, 0.1, make_kernel(2, k=2), make_kernel(2, k=2),
                        make_kernel(2), make_kernel(2))

    def test_mismatched_block_sizes(self, delta_desk, make_kernel):
        H, psi0 = delta_desk
        with pytest.raises(IncompatibleOperandsError):
            correlation(H, psi0, 0.1, make_kernel(2), make_kernel(2, k=2),
                        make_kernel(2), make_kernel(2))


# ============================================================================
# Projector Decomposition
# ============================================================================

class TestProjectorDecomposition:

    def test_zero_at_zero_time(self, delta_desk, make_kernel):
        H, psi0 = delta_desk
        report = projector_decomposition(H, psi0, 0.0, *[make_kernel(2) for _ in range(4)], cfg=DENSE)
        for value in (report.P, report.Q, report.R):
            assert abs(value) <= 1e-10

    def test_zero_potentials(self, grid2, config22, make_orbital, make_kernel):
        H = assemble_full(grid2, config22, PotentialSet.zeros(2))
        psi0 = product_state(make_orbital(2), make_orbital(2), config22, grid2)
        report = projector_decomposition(H, psi0, 0.9, *[make_kernel(2) for _ in range(4)], cfg=DENSE)
        for value in (report.P, report.Q, report.R):
            assert abs(value) <= 1e-10

    def test_identity_on_interacting_instances(self, grid2, config22, make_orbital, random_potentials):
        witnesses = WitnessSet.generate(2024, 10, SweepLayout(), M=2)
        for sample in witnesses.samples:
            H = assemble_full(grid2, config22, random_potentials(2))
            psi0 = product_state(make_orbital(2), make_orbital(2), config22, grid2)
            report = projector_decomposition(H, psi0, 0.5, sample.A1, sample.B1,
                                             sample.A2, sample.B2, cfg=DENSE)
            assert report.residual <= 1e-10

    def test_identity_with_two_slot_blocks(self, grid2, make_orbital, random_potentials, make_kernel):
        config = SpeciesConfig(N1=3, N2=3)
        H = assemble_full(grid2, config, random_potentials(2))
        psi0 = product_state(make_orbital(2), make_orbital(2), config, grid2)
        kernels = (make_kernel(2, k=2), make_kernel(2, k=2), make_kernel(2), make_kernel(2))
        report = projector_decomposition(H, psi0, 0.4, *kernels, cfg=DENSE)
        assert report.residual <= 1e-10

    def test_non_product_state_rejected(self, delta_desk, make_kernel):
        H, psi0 = delta_desk
        psi = psi0.with_amplitudes(psi0.amplitudes)
        with pytest.raises(IncompatibleOperandsError):
            projector_decomposition(H, psi, 0.5, *[make_kernel(2) for _ in range(4)])


# ============================================================================
# Witness Sweeps
# ============================================================================

class TestSweeps:

    def test_zero_time_rows(self, delta_desk):
        H, _ = delta_desk
        witnesses = WitnessSet.generate(1, 4, SweepLayout(), M=2)
        rows = lr_witness_sweep(H, [0.0], SweepLayout(), witnesses, DENSE)
        assert len(rows) == 4
        for row in rows:
            assert row.measured <= 1e-10
            assert row.bound == 0.0
            assert row.ratio == 0.0
            assert row.error is None

    def test_single_witness_matches_direct_call(self, delta_desk):
        H, _ = delta_desk
        witnesses = WitnessSet.generate(13, 1, SweepLayout(), M=2)
        sample = witnesses.samples[0]
        [row] = lr_witness_sweep(H, [0.6], SweepLayout(), witnesses, DENSE)
        assert row.measured == commutator_norm(H, 0.6, sample.A1, sample.B1, sample.A2, sample.B2, DENSE)

    def test_deterministic_across_reruns_and_threads(self, delta_desk):
        H, _ = delta_desk
        times = [0.25, 0.5, 1.0]
        runs = [
            lr_witness_sweep(H, times, SweepLayout(), WitnessSet.generate(99, 8, SweepLayout(), M=2),
                             DENSE, threads=threads)
            for threads in (1, 1, 4)
        ]
        dumps = [[row.model_dump() for row in rows] for rows in runs]
        assert dumps[0] == dumps[1] == dumps[2]
        assert max(row.ratio for row in runs[0]) <= 1.0 + 1e-6
        assert [(row.t, row.sample) for row in runs[0]] == sorted((row.t, row.sample) for row in runs[0])

    def test_layout_mismatch(self, delta_desk):
        H, _ = delta_desk
        witnesses = WitnessSet.generate(1, 1, SweepLayout(), M=2)
        with pytest.raises(IncompatibleOperandsError):
            lr_witness_sweep(H, [0.1], SweepLayout(n1=2), witnesses, DENSE)

    def test_correlation_sweep(self, delta_desk):
        H, psi0 = delta_desk
        witnesses = WitnessSet.generate(21, 3, SweepLayout(), M=2)
        rows = corr_witness_sweep(H, psi0, [0.0, 0.5], witnesses, DENSE, threads=2)
        assert len(rows) == 6
        for row in rows:
            assert row.abs_corr <= row.bound + 1e-9
            if row.t == 0.0:
                assert row.abs_corr <= 1e-12
                assert row.ratio == 0.0


@pytest.mark.slow
class TestAcceptanceScale:

    @staticmethod
    def desk_system(grid, N1, N2):
        config = SpeciesConfig(N1=N1, N2=N2)
        H = assemble_full(grid, config, potential_preset("delta_v12", grid))
        psi0 = product_state(orbital_preset("random:1", grid), orbital_preset("random:2", grid), config, grid)
        return H, psi0

    def test_commutator_bound_three_per_species(self, grid2):
        H, _ = self.desk_system(grid2, 3, 3)
        witnesses = WitnessSet.generate(5, 16, SweepLayout(), M=2)
        rows = lr_witness_sweep(H, [0.25, 0.5, 1.0], SweepLayout(), witnesses, KRYLOV, threads=4)
        assert len(rows) == 48
        for row in rows:
            assert row.error is None
            assert row.measured <= row.bound + 1e-9

    def test_correlation_bound_three_per_species(self, grid2):
        H, psi0 = self.desk_system(grid2, 3, 3)
        witnesses = WitnessSet.generate(5, 16, SweepLayout(), M=2)
        rows = corr_witness_sweep(H, psi0, [0.25, 0.5, 1.0], witnesses, KRYLOV, threads=4)
        assert len(rows) == 48
        for row in rows:
            assert row.error is None
            assert row.abs_corr <= row.bound + 1e-9

    def test_correlation_does_not_grow_with_particle_number(self, grid2):
        witnesses = WitnessSet.generate(7, 16, SweepLayout(), M=2)
        largest = []
        for N in (2, 3):
            H, psi0 = self.desk_system(grid2, N, N)
            rows = corr_witness_sweep(H, psi0, [0.5], witnesses, DENSE)
            largest.append(max(row.abs_corr for row in rows))
        assert largest[1] <= 1.25 * largest[0]
