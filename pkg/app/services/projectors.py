"""
Condensate projector calculus.

p_u = |u><u| and q_u = 1 - p_u act on single slots. For one species,

    1 = p_u^{x Nk} + sum_j p_u^{[1..j-1]} q_u^{[j]}

and the two-species identity is the product of the A- and B-resolutions. All
projector strings are applied slot by slot on the amplitude tensor; no dense
operator is formed.
"""

import logging
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from app.domain.exceptions import DimensionError
from app.domain.models import LatticeGrid, Species, SpeciesConfig
from app.services.tensor_space import projector


logger = logging.getLogger(__name__)


def apply_on_axis(tensor: np.ndarray, kernel: np.ndarray, axis: int) -> np.ndarray:
    """Single-slot kernel applied to one axis of an amplitude tensor."""
    out = np.tensordot(kernel, tensor, axes=([1], [axis]))
    return np.moveaxis(out, 0, axis)


def _as_tensor(vec: np.ndarray, config: SpeciesConfig, grid: LatticeGrid) -> np.ndarray:
    vec = np.asarray(vec, dtype=complex)
    if vec.size != config.dimension(grid):
        raise DimensionError(f"vector of length {vec.size}, expected {config.dimension(grid)}")
    return vec.reshape([grid.M] * config.N)


def projector_strings(vec: np.ndarray, orbital: np.ndarray, species: Species,
                      config: SpeciesConfig, grid: LatticeGrid) -> Tuple[List[np.ndarray], np.ndarray]:
    """
    The terms p^{[1..j-1]} q^{[j]} vec for j = 1..Nk (slots of `species`) and the
    remaining p^{x Nk} vec, as flat vectors.
    """
    p = projector(orbital)
    q = np.eye(grid.M, dtype=complex) - p

    prefix = _as_tensor(vec, config, grid)
    strings = []
    for index in range(1, config.count(species) + 1):
        axis = config.slot_axis(species, index)
        strings.append(apply_on_axis(prefix, q, axis).reshape(-1))
        prefix = apply_on_axis(prefix, p, axis)
    return strings, prefix.reshape(-1)


def resolve_identity(vec: np.ndarray, orbital: np.ndarray, species: Species,
                     config: SpeciesConfig, grid: LatticeGrid) -> np.ndarray:
    """p^{x Nk} vec + sum_j p^{[1..j-1]} q^{[j]} vec; equals vec."""
    strings, condensed = projector_strings(vec, orbital, species, config, grid)
    return condensed + np.sum(strings, axis=0)


@dataclass
class FourTermExpansion:
    """vec = condensed + excited_A + excited_B + excited_AB."""
    condensed: np.ndarray    # p_u^{x N1} p_v^{x N2} vec
    excited_A: np.ndarray    # sum_j1 (p_u.. q_u^{[j1]}) p_v^{x N2} vec
    excited_B: np.ndarray    # sum_j2 p_u^{x N1} (p_v.. q_v^{[j2]}) vec
    excited_AB: np.ndarray   # sum_j1 sum_j2 (p_u.. q_u^{[j1]}) (p_v.. q_v^{[j2]}) vec

    def total(self) -> np.ndarray:
        return self.condensed + self.excited_A + self.excited_B + self.excited_AB


def four_term_expansion(vec: np.ndarray, u: np.ndarray, v: np.ndarray,
                        config: SpeciesConfig, grid: LatticeGrid) -> FourTermExpansion:
    """Two-species resolution of identity applied to `vec`, summed term by term."""
    b_strings, b_condensed = projector_strings(vec, v, Species.B, config, grid)

    # A-strings of the B-condensed part
    a_strings, condensed = projector_strings(b_condensed, u, Species.A, config, grid)
    excited_A = np.sum(a_strings, axis=0)

    excited_B = np.zeros_like(condensed)
    excited_AB = np.zeros_like(condensed)
    for b_term in b_strings:
        a_of_b, condensed_of_b = projector_strings(b_term, u, Species.A, config, grid)
        excited_B += condensed_of_b
        for term in a_of_b:
            excited_AB += term

    return FourTermExpansion(condensed, excited_A, excited_B, excited_AB)
