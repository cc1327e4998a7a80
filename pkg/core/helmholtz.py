"""
Discrete Helmholtz operator A(m, w) = Laplacian + w^2 Diag(m) on the padded grid.

The Laplacian is the 5-point stencil written in complex-stretched coordinates
inside the absorbing layers (left, right, bottom). The free surface is a
Dirichlet ghost row one cell above interior row 0, so the top-row stencil has
no north neighbour.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from core.errors import DimensionMismatchError, NonFiniteError

logger = logging.getLogger(__name__)

PML_REFLECTION = 1e-3
PML_ORDER = 2


@dataclass(frozen=True, eq=False)
class HelmholtzOperator:
    """Assembled operator for one angular frequency; immutable once built."""

    grid: object
    omega: float
    matrix: sparse.csr_matrix
    m_snapshot: np.ndarray
    mass: np.ndarray

    @property
    def shape(self):
        return self.matrix.shape


@dataclass(frozen=True, eq=False)
class SamplingOperator:
    """Observation operator P: picks the wavefield at the receiver cells."""

    indices: np.ndarray
    n_pad: int

    @property
    def n_receivers(self):
        return self.indices.size

    def apply(self, u):
        u = np.asarray(u)
        if u.shape != (self.n_pad,):
            raise DimensionMismatchError(f"Wavefield has shape {u.shape}, expected ({self.n_pad},)")
        return u[self.indices]

    def adjoint(self, v):
        v = np.asarray(v)
        if v.shape != (self.n_receivers,):
            raise DimensionMismatchError(f"Data has shape {v.shape}, expected ({self.n_receivers},)")
        out = np.zeros(self.n_pad, dtype=np.result_type(v.dtype, np.complex128))
        out[self.indices] = v
        return out

    def as_matrix(self):
        rows = np.arange(self.n_receivers)
        ones = np.ones(self.n_receivers)
        return sparse.csr_matrix((ones, (rows, self.indices)), shape=(self.n_receivers, self.n_pad))


def build_sampling_operator(acquisition):
    return SamplingOperator(np.asarray(acquisition.padded_receivers), acquisition.grid.n_pad)


def _damping_profile(positions, first, last, width, sigma_max):
    """Quadratic damping as a function of the distance (in cells) outside [first, last]."""
    if width == 0:
        return np.zeros_like(positions, dtype=np.float64)
    depth = np.maximum(first - positions, 0.0) + np.maximum(positions - last, 0.0)
    return sigma_max * (depth / width) ** PML_ORDER


def _stretch_factors(grid, omega, reference_velocity):
    """Complex stretching s = 1 + i sigma / w at integer and half-integer positions."""
    w = grid.pml_width
    if w > 0:
        sigma_max = (PML_ORDER + 1) * reference_velocity * np.log(1.0 / PML_REFLECTION) / (2.0 * w * grid.h)
    else:
        sigma_max = 0.0

    def stretch_x(pos):
        return 1.0 + 1j * _damping_profile(pos, w, w + grid.nx - 1, w, sigma_max) / omega

    def stretch_z(pos):
        return 1.0 + 1j * _damping_profile(pos, -np.inf, grid.nz - 1, w, sigma_max) / omega

    return stretch_x, stretch_z


def assemble(model, omega, reference_velocity=None):
    """
    Assemble A(m, w) on the padded grid.

    Args:
        model (Model): Squared-slowness model on the interior grid
        omega (float): Angular frequency in rad/s
        reference_velocity (float or None): Velocity used to scale the PML damping,
            defaults to the largest velocity allowed by the model bounds

    Returns:
        HelmholtzOperator: The assembled operator
    """
    if not omega > 0:
        raise ValueError(f"Angular frequency must be positive, got {omega}")
    if not np.all(np.isfinite(model.m)):
        raise NonFiniteError("Model contains non-finite values")

    grid = model.grid
    nzp, nxp = grid.padded_shape
    h2 = grid.h ** 2
    if reference_velocity is None:
        reference_velocity = model.reference_velocity
    stretch_x, stretch_z = _stretch_factors(grid, omega, reference_velocity)

    i, j = np.meshgrid(np.arange(nzp), np.arange(nxp), indexing="ij")
    i = i.ravel()
    j = j.ravel()
    k = i * nxp + j

    sx = stretch_x(j.astype(np.float64))
    sz = stretch_z(i.astype(np.float64))
    w_east = 1.0 / (h2 * sx * stretch_x(j + 0.5))
    w_west = 1.0 / (h2 * sx * stretch_x(j - 0.5))
    w_south = 1.0 / (h2 * sz * stretch_z(i + 0.5))
    w_north = 1.0 / (h2 * sz * stretch_z(i - 0.5))

    mass = omega ** 2 * grid.extend(model.m)
    diagonal = mass - (w_east + w_west + w_south + w_north)

    rows = [k]
    cols = [k]
    vals = [diagonal]
    # Neighbours outside the padded grid (and the ghost row above the surface) are zero.
    for valid, offset, weight in (
        (j < nxp - 1, 1, w_east),
        (j > 0, -1, w_west),
        (i < nzp - 1, nxp, w_south),
        (i > 0, -nxp, w_north),
    ):
        rows.append(k[valid])
        cols.append(k[valid] + offset)
        vals.append(weight[valid])

    matrix = sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(grid.n_pad, grid.n_pad),
        dtype=np.complex128,
    )
    matrix.sort_indices()
    mass.setflags(write=False)
    return HelmholtzOperator(grid, float(omega), matrix, np.array(model.m), mass)


def apply(op, u):
    """Return A u."""
    u = np.asarray(u)
    if u.shape != (op.grid.n_pad,):
        raise DimensionMismatchError(f"Wavefield has shape {u.shape}, expected ({op.grid.n_pad},)")
    return op.matrix @ u


def apply_adjoint(op, v):
    """Return A^H v."""
    v = np.asarray(v)
    if v.shape != (op.grid.n_pad,):
        raise DimensionMismatchError(f"Field has shape {v.shape}, expected ({op.grid.n_pad},)")
    return np.conj(op.matrix.T @ np.conj(v))


def laplacian_action(op, u):
    """Return the (stretched) Laplacian part of A applied to u, i.e. A u - w^2 m u."""
    return apply(op, u) - op.mass * u


def jacobian_action(model, omega, u):
    """
    Diagonal of dA/dm . u restricted to the interior.

    Since dA/dm_j = w^2 e_j e_j^T, the map dm -> (dA/dm . u) dm is w^2 Diag(u) dm;
    it is returned as the vector w^2 u over interior cells.

    Args:
        model (Model): Model defining the grid
        omega (float): Angular frequency in rad/s
        u (numpy.ndarray): Wavefield on the padded grid

    Returns:
        numpy.ndarray: Complex diagonal, one entry per interior cell
    """
    grid = model.grid
    u = np.asarray(u)
    if u.shape != (grid.n_pad,):
        raise DimensionMismatchError(f"Wavefield has shape {u.shape}, expected ({grid.n_pad},)")
    return omega ** 2 * grid.restrict(u)
