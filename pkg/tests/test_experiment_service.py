import math
import textwrap
from pathlib import Path

import numpy as np
import pytest

from app.domain.exceptions import IncompatibleOperandsError
from app.domain.experiment_config import InitialSection, PotentialsSection
from app.domain.models import GapRow, LRSweepRow
from app.repositories.config_repository import ConfigRepository, artifact_header
from app.repositories.result_repository import ResultRepository
from app.services import experiment_service
from app.services.experiment_service import (
    DECOMPOSITION_COLUMNS,
    _trend_violations,
    build_system,
    run_corr_sweep,
    run_decomposition_check,
    run_hartree_compare,
    run_lr_sweep,
)


DESK = """\
    [system]
    M = 2
    N1 = 2
    N2 = 2

    [potentials]
    preset = delta_v12

    [initial]
    u = random:1
    v = random:2

    [run]
    method = dense
    witness_count = 4
    seed = 7
"""


def desk(run_extra: str = "", extra: str = ""):
    text = textwrap.dedent(DESK) + textwrap.dedent(run_extra) + textwrap.dedent(extra)
    return ConfigRepository.parse(text)


def rendered(outcome, config) -> str:
    return ResultRepository().render(outcome.rows, outcome.columns,
                                     artifact_header(config, outcome.command), outcome.summary)


class TestBuildSystem:

    def test_product_initial_state(self):
        system = build_system(desk())
        assert system.psi0.is_product
        assert system.H.dimension == 16
        assert abs(np.linalg.norm(system.u) - 1.0) <= 1e-14

    def test_explicit_orbitals_are_normalized(self):
        config = desk().model_copy(update={"initial": InitialSection(u="3, 4", v="1, 0")})
        system = build_system(config)
        np.testing.assert_allclose(system.u, [0.6, 0.8])

    def test_explicit_orbital_length(self):
        with pytest.raises(ValueError):
            build_system(ConfigRepository.parse("[system]\nM = 3\nN1 = 1\nN2 = 1\n[initial]\nu = 1, 0\n"))

    def test_particle_override(self):
        assert build_system(desk(), N1=1, N2=3).H.dimension == 16


class TestLRSweep:

    def test_zero_time_rows_have_zero_ratio(self):
        outcome = run_lr_sweep(desk("    times = 0\n"))
        assert outcome.passed
        assert len(outcome.rows) == 4
        assert all(row.ratio == 0.0 for row in outcome.rows)
        assert outcome.summary[0] == f"max_ratio={0.0:.17e}"

    def test_passes_on_desk(self):
        outcome = run_lr_sweep(desk())
        assert outcome.passed
        assert len(outcome.rows) == 12
        assert [row.t for row in outcome.rows[:4]] == [0.25] * 4
        assert outcome.summary[2].startswith("effective_bound(t=1.0)=")
        assert "validity_horizon(eps=0.5)=" in outcome.summary[2]

    def test_reruns_are_byte_identical(self):
        config = desk()
        first = rendered(run_lr_sweep(config), config)
        assert rendered(run_lr_sweep(config), config) == first
        assert rendered(run_lr_sweep(config, threads=3), config) == first

    def test_seed_changes_witnesses(self):
        config = desk()
        assert rendered(run_lr_sweep(config), config) != rendered(run_lr_sweep(config.with_seed(8)),
                                                                  config.with_seed(8))

    def test_layout_too_large(self):
        with pytest.raises(IncompatibleOperandsError):
            run_lr_sweep(desk(extra="[layout]\nn1 = 2\n"))

    def test_violation_detected(self, monkeypatch):
        broken = LRSweepRow(t=0.5, n1=1, n2=1, m1=1, m2=1, N1=2, N2=2, sample=0,
                            measured=2.0, bound=1.0, ratio=2.0)
        monkeypatch.setattr(experiment_service, "lr_witness_sweep", lambda *a, **k: [broken])
        outcome = run_lr_sweep(desk())
        assert outcome.violation is not None
        assert outcome.numerical_failure is None

    def test_numerical_failure_recorded(self, monkeypatch):
        failed = LRSweepRow(t=0.5, n1=1, n2=1, m1=1, m2=1, N1=2, N2=2, sample=3,
                            measured=math.nan, bound=1.0, ratio=math.nan, error="Krylov breakdown")
        monkeypatch.setattr(experiment_service, "lr_witness_sweep", lambda *a, **k: [failed])
        outcome = run_lr_sweep(desk())
        assert outcome.violation is None
        assert outcome.numerical_failure == "t=0.5 sample=3: Krylov breakdown"
        assert "max_ratio=nan" in outcome.summary[0]


class TestOtherSuites:

    def test_correlation_sweep(self):
        outcome = run_corr_sweep(desk("    times = 0, 0.5\n"))
        assert outcome.passed
        assert len(outcome.rows) == 8
        assert all(row.abs_corr <= 1e-12 for row in outcome.rows if row.t == 0.0)
        assert outcome.summary[2].startswith("effective_bound(t=0.5)=")

    def test_decomposition_check(self):
        outcome = run_decomposition_check(desk("    times = 0, 0.5\n"))
        assert outcome.passed
        assert len(outcome.rows) == 8
        assert all(row.residual <= 1e-9 for row in outcome.rows)
        assert DECOMPOSITION_COLUMNS[-2:] == ["sample", "residual"]

    def test_hartree_compare(self):
        config = desk("    times = 0, 0.2\n    N1_sweep = 1, 2\n    N2_sweep = 1, 2\n")
        outcome = run_hartree_compare(config)
        assert outcome.violation is None
        assert [(row.t, row.N1) for row in outcome.rows] == [(0.0, 1), (0.0, 2), (0.2, 1), (0.2, 2)]
        assert outcome.summary[0].startswith("trend=")
        assert outcome.rows == run_hartree_compare(config, threads=2).rows

    def test_hartree_without_interaction(self):
        config = desk("    times = 0, 0.5, 1.0\n").model_copy(update={"potentials": PotentialsSection(preset="zero")})
        outcome = run_hartree_compare(config)
        assert outcome.passed
        for row in outcome.rows:
            assert row.gap_A <= 1e-8
            assert row.gap_B <= 1e-8


@pytest.mark.slow
def test_hartree_gap_shrinks_with_particle_number():
    config = ConfigRepository(str(Path(__file__).parents[1] / "configs" / "hartree_compare.ini")).load()
    outcome = run_hartree_compare(config, threads=3)
    assert outcome.passed
    assert outcome.summary[0].startswith("trend=non-increasing")
    at_half = [row for row in outcome.rows if row.t == 0.5]
    assert [(row.N1, row.N2) for row in at_half] == [(1, 1), (2, 2), (3, 3)]
    for previous, current in zip(at_half, at_half[1:]):
        assert current.gap_A <= 1.25 * previous.gap_A
        assert current.gap_B <= 1.25 * previous.gap_B


def test_trend_violations():
    rows = [
        GapRow(t=0.5, N1=1, N2=1, gap_A=0.10, gap_B=0.10),
        GapRow(t=0.5, N1=2, N2=2, gap_A=0.12, gap_B=0.05),
        GapRow(t=0.5, N1=3, N2=3, gap_A=0.20, gap_B=0.04),
    ]
    notes = _trend_violations(rows, 1.25)
    assert len(notes) == 1
    assert notes[0].startswith("t=0.5 gap_A: (2,2)")
