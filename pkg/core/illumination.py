"""
Receiver Green's functions and the illumination of every interior cell.

With G(w) = P A(w)^-1 and rho = lambda / gamma, a unit source at cell k moves
the inner-loop prox argument by the diagonal entry

    D_k = mean_w [ G^H (G G^H + rho I)^-1 G ]_kk

Cells next to the receivers sit near 1, deep cells far below it. Dividing the
argument by sqrt(D) before the Berhu prox puts every cell on the same footing.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from core.errors import DimensionMismatchError
from core.solvers import receiver_green_functions
from utils.helpers import thread_map

logger = logging.getLogger(__name__)

DEFAULT_ILLUMINATION_FLOOR = 1e-3


@dataclass(frozen=True, eq=False)
class Illumination:
    """
    Green's functions restricted to interior columns (q x Nr x N) and the
    band-averaged illumination diagonal (N).
    """

    greens: np.ndarray
    diagonal: np.ndarray

    def __post_init__(self):
        greens = np.asarray(self.greens, dtype=np.complex128)
        diagonal = np.asarray(self.diagonal, dtype=np.float64)
        if greens.ndim != 3 or diagonal.shape != (greens.shape[2],):
            raise DimensionMismatchError(
                f"Green's functions {greens.shape} do not match an illumination of shape {diagonal.shape}"
            )
        greens.setflags(write=False)
        diagonal.setflags(write=False)
        object.__setattr__(self, "greens", greens)
        object.__setattr__(self, "diagonal", diagonal)

    @property
    def n_frequencies(self):
        return self.greens.shape[0]

    def weights(self, floor=DEFAULT_ILLUMINATION_FLOOR):
        """sqrt(D) with D clipped from below at ``floor`` times its maximum."""
        peak = float(self.diagonal.max()) if self.diagonal.size else 0.0
        if peak <= 0:
            return np.ones_like(self.diagonal)
        return np.sqrt(np.maximum(self.diagonal, floor * peak))


def illumination_diagonal(greens, interior, rho):
    """
    diag(G^H (G G^H + rho I)^-1 G) at the ``interior`` columns of one frequency.

    Args:
        greens (numpy.ndarray): Nr x n_pad Green's functions
        interior (numpy.ndarray): Padded indices of the interior cells
        rho (float): lambda / gamma

    Returns:
        numpy.ndarray: One value in [0, 1) per interior cell
    """
    if not rho > 0:
        raise ValueError(f"rho must be positive, got {rho}")
    gram = greens @ greens.conj().T
    gram[np.diag_indices_from(gram)] += rho
    factor = linalg.cholesky(gram, lower=True)
    whitened = linalg.solve_triangular(factor, greens[:, interior], lower=True)
    return np.sum(np.abs(whitened) ** 2, axis=0)


def compute_illumination(operators, sampling, grid, rho, threads=1):
    """
    Green's functions and illumination for every frequency of the band.

    Args:
        operators (list): One HelmholtzOperator per frequency
        sampling (SamplingOperator): Receiver sampling
        grid (Grid): The grid
        rho (float): lambda / gamma
        threads (int): Worker count over frequencies

    Returns:
        Illumination
    """
    interior = grid.interior_indices

    def one(op):
        greens = receiver_green_functions(op, sampling)
        return greens[:, interior], illumination_diagonal(greens, interior, rho)

    results = thread_map(one, operators, threads)
    greens = np.array([g for g, _ in results])
    diagonal = np.mean([d for _, d in results], axis=0)
    logger.debug(
        "Illumination over %d frequencies: min %.3e, max %.3e", len(results), diagonal.min(), diagonal.max()
    )
    return Illumination(greens=greens, diagonal=diagonal)
