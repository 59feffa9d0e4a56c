import numpy as np
import pytest

from app.domain.models import LatticeGrid, PotentialSet, SpeciesConfig
from app.services.hamiltonian import assemble_full, potential_preset
from app.services.tensor_space import product_state


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def grid2():
    return LatticeGrid(M=2)


@pytest.fixture
def grid3():
    return LatticeGrid(M=3)


@pytest.fixture
def config22():
    return SpeciesConfig(N1=2, N2=2)


@pytest.fixture
def make_orbital(rng):
    """Random normalized complex orbital of a given length."""
    def _make(M: int) -> np.ndarray:
        z = rng.standard_normal(M) + 1j * rng.standard_normal(M)
        return z / np.linalg.norm(z)
    return _make


@pytest.fixture
def make_even(rng):
    """Random real pair potential, even under d -> -d mod M."""
    def _make(M: int, scale: float = 1.0) -> np.ndarray:
        r = rng.standard_normal(M)
        return scale * (r + r[(-np.arange(M)) % M]) / 2
    return _make


@pytest.fixture
def random_potentials(rng, make_even):
    def _make(M: int) -> PotentialSet:
        return PotentialSet(
            U1=rng.uniform(-1, 1, M),
            U2=rng.uniform(-1, 1, M),
            V1=make_even(M),
            V2=make_even(M),
            V12=make_even(M),
        )
    return _make


@pytest.fixture
def make_kernel(rng):
    """Random complex kernel on k slots with unit spectral norm."""
    def _make(M: int, k: int = 1, hermitian: bool = False) -> np.ndarray:
        size = M ** k
        G = rng.standard_normal((size, size)) + 1j * rng.standard_normal((size, size))
        if hermitian:
            G = (G + G.conj().T) / 2
        return G / np.linalg.norm(G, 2)
    return _make


@pytest.fixture
def delta_desk(grid2, config22, make_orbital):
    """M = 2, N1 = N2 = 2, contact V12, random product state."""
    potentials = potential_preset("delta_v12", grid2)
    H = assemble_full(grid2, config22, potentials)
    psi0 = product_state(make_orbital(2), make_orbital(2), config22, grid2)
    return H, psi0
