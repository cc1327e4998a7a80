"""
Spatial grid, subsurface model and acquisition geometry.

Interior cells are indexed (i, j) with i the depth index and j the horizontal
index. The padded grid appends ``pml_width`` absorbing cells on the left, right
and bottom; the top row is a free surface and gets no padding. All flat indices
are row-major over the padded grid: ``k = i_pad * nx_pad + j_pad``.
"""

import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.ndimage import gaussian_filter

from core.errors import ConfigError, DimensionMismatchError, NonFiniteError

logger = logging.getLogger(__name__)

MIN_POINTS_PER_WAVELENGTH = 10.0


@dataclass(frozen=True)
class Grid:
    """Uniform square-cell grid with absorbing padding on three sides."""

    nz: int
    nx: int
    h: float
    pml_width: int = 20

    def __post_init__(self):
        if self.nz < 3 or self.nx < 3:
            raise ConfigError(f"Grid needs at least 3x3 cells, got {self.nz}x{self.nx}")
        if not self.h > 0:
            raise ConfigError(f"Grid spacing must be positive, got {self.h}")
        if self.pml_width < 0:
            raise ConfigError(f"PML width must be non-negative, got {self.pml_width}")

    @property
    def n(self):
        return self.nz * self.nx

    @property
    def shape(self):
        return (self.nz, self.nx)

    @property
    def nz_pad(self):
        return self.nz + self.pml_width

    @property
    def nx_pad(self):
        return self.nx + 2 * self.pml_width

    @property
    def n_pad(self):
        return self.nz_pad * self.nx_pad

    @property
    def padded_shape(self):
        return (self.nz_pad, self.nx_pad)

    @cached_property
    def interior_indices(self):
        """Padded flat index of every interior cell, in interior row-major order."""
        i, j = np.meshgrid(np.arange(self.nz), np.arange(self.nx), indexing="ij")
        flat = i.ravel() * self.nx_pad + (j.ravel() + self.pml_width)
        flat.setflags(write=False)
        return flat

    def embed(self, interior):
        """Place an interior vector on the padded grid, zero in the PML."""
        interior = np.asarray(interior)
        if interior.shape != (self.n,):
            raise DimensionMismatchError(f"Expected {self.n} interior values, got {interior.shape}")
        padded = np.zeros(self.n_pad, dtype=interior.dtype)
        padded[self.interior_indices] = interior
        return padded

    def restrict(self, padded):
        """Extract the interior cells of a padded vector."""
        padded = np.asarray(padded)
        if padded.shape != (self.n_pad,):
            raise DimensionMismatchError(f"Expected {self.n_pad} padded values, got {padded.shape}")
        return padded[self.interior_indices]

    def extend(self, interior):
        """Extend an interior field into the PML by edge replication."""
        field = np.asarray(interior).reshape(self.shape)
        w = self.pml_width
        return np.pad(field, ((0, w), (w, w)), mode="edge").ravel()

    def interior_position(self, index):
        """Return (z, x) in meters of an interior flat index."""
        i, j = divmod(int(index), self.nx)
        return i * self.h, j * self.h

    def interior_index_at(self, z, x):
        """Nearest interior flat index for a (z, x) position in meters."""
        i = int(round(z / self.h))
        j = int(round(x / self.h))
        if not (0 <= i < self.nz and 0 <= j < self.nx):
            raise ConfigError(f"Position (z={z} m, x={x} m) lies outside the interior grid")
        return i * self.nx + j


def flat_index(i, j, grid):
    """
    Row-major flat index of padded cell (i, j).

    Args:
        i (int): Depth index on the padded grid
        j (int): Horizontal index on the padded grid
        grid (Grid): The grid

    Returns:
        int: The flat index ``i * nx_pad + j``
    """
    if not (0 <= i < grid.nz_pad and 0 <= j < grid.nx_pad):
        raise IndexError(f"Cell ({i}, {j}) is outside the padded grid {grid.padded_shape}")
    return int(i) * grid.nx_pad + int(j)


def unflat_index(k, grid):
    """Inverse of :func:`flat_index`."""
    if not (0 <= k < grid.n_pad):
        raise IndexError(f"Flat index {k} is outside the padded grid of {grid.n_pad} cells")
    i, j = divmod(int(k), grid.nx_pad)
    return i, j


def velocity_to_slowness_squared(velocity):
    return 1.0 / np.square(np.asarray(velocity, dtype=np.float64))


def slowness_squared_to_velocity(m):
    return 1.0 / np.sqrt(np.asarray(m, dtype=np.float64))


def _frozen_vector(values, n, name):
    array = np.array(values, dtype=np.float64).ravel()
    if array.shape != (n,):
        raise DimensionMismatchError(f"{name} has {array.size} values, grid has {n} cells")
    if not np.all(np.isfinite(array)):
        raise NonFiniteError(f"{name} contains non-finite values")
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class Model:
    """Squared-slowness model (s^2/m^2) with box bounds on the interior grid."""

    grid: Grid
    m: np.ndarray
    m_min: np.ndarray
    m_max: np.ndarray

    def __post_init__(self):
        n = self.grid.n
        object.__setattr__(self, "m", _frozen_vector(self.m, n, "m"))
        object.__setattr__(self, "m_min", _frozen_vector(self.m_min, n, "m_min"))
        object.__setattr__(self, "m_max", _frozen_vector(self.m_max, n, "m_max"))
        if np.any(self.m <= 0) or np.any(self.m_min <= 0):
            raise ConfigError("Squared slowness must be strictly positive")
        if np.any(self.m_min > self.m_max):
            raise ConfigError("Lower model bound exceeds upper bound")

    @classmethod
    def from_velocity(cls, grid, velocity, v_min, v_max):
        """Build a model from velocities (m/s); bounds are given as velocities too."""
        velocity = np.asarray(velocity, dtype=np.float64)
        if velocity.ndim == 1 and velocity.size == grid.n:
            velocity = velocity.reshape(grid.shape)
        velocity = np.broadcast_to(velocity, grid.shape).ravel()
        m = velocity_to_slowness_squared(velocity)
        m_min = np.full(grid.n, velocity_to_slowness_squared(v_max))
        m_max = np.full(grid.n, velocity_to_slowness_squared(v_min))
        return cls(grid, m, m_min, m_max)

    @property
    def velocity(self):
        return slowness_squared_to_velocity(self.m)

    def with_m(self, m):
        return Model(self.grid, m, self.m_min, self.m_max)

    def projected(self):
        """Return the model clipped onto its bound set."""
        return self.with_m(np.clip(self.m, self.m_min, self.m_max))

    @property
    def reference_velocity(self):
        """Largest velocity the bounds allow; used for the PML damping profile."""
        return float(slowness_squared_to_velocity(np.min(self.m_min)))


def build_gradient_model(grid, velocity_top, velocity_gradient, v_min, v_max, anomaly=None):
    """
    Velocity increasing linearly with depth, optionally with a rectangular anomaly.

    Args:
        grid (Grid): The grid
        velocity_top (float): Velocity at the surface (m/s)
        velocity_gradient (float): Velocity increase per meter of depth (1/s)
        v_min (float): Lower velocity bound (m/s)
        v_max (float): Upper velocity bound (m/s)
        anomaly (tuple or None): (z0, z1, x0, x1, dv) box in meters with a velocity perturbation

    Returns:
        Model: The model, clipped into its bounds
    """
    depth = np.arange(grid.nz) * grid.h
    velocity = np.repeat((velocity_top + velocity_gradient * depth)[:, None], grid.nx, axis=1)
    if anomaly is not None:
        z0, z1, x0, x1, dv = anomaly
        z = depth[:, None]
        x = (np.arange(grid.nx) * grid.h)[None, :]
        inside = (z >= z0) & (z <= z1) & (x >= x0) & (x <= x1)
        velocity = velocity + dv * inside
    velocity = np.clip(velocity, v_min, v_max)
    return Model.from_velocity(grid, velocity, v_min, v_max)


def smooth_model(model, sigma_cells):
    """
    Gaussian-smooth a model in velocity to build a starting model.

    Args:
        model (Model): The model to smooth
        sigma_cells (float): Standard deviation of the Gaussian kernel in cells

    Returns:
        Model: Smoothed model with the same bounds
    """
    if sigma_cells <= 0:
        return model
    velocity = gaussian_filter(model.velocity.reshape(model.grid.shape), sigma=sigma_cells, mode="nearest")
    m = velocity_to_slowness_squared(velocity.ravel())
    return model.with_m(np.clip(m, model.m_min, model.m_max))


@dataclass(frozen=True, eq=False)
class Acquisition:
    """Receiver positions (interior flat indices) and angular frequencies (rad/s)."""

    grid: Grid
    receivers: np.ndarray
    omegas: np.ndarray
    record_duration: float = 1.0

    def __post_init__(self):
        receivers = np.array(self.receivers, dtype=np.int64).ravel()
        omegas = np.array(self.omegas, dtype=np.float64).ravel()
        if receivers.size == 0:
            raise ConfigError("Acquisition needs at least one receiver")
        if np.unique(receivers).size != receivers.size:
            raise ConfigError("Receiver indices must be distinct")
        if np.any(receivers < 0) or np.any(receivers >= self.grid.n):
            raise ConfigError("Receiver indices must lie inside the interior grid")
        if omegas.size == 0:
            raise ConfigError("Acquisition needs at least one frequency")
        if np.any(omegas <= 0) or np.any(np.diff(omegas) <= 0):
            raise ConfigError("Frequencies must be positive and strictly increasing")
        receivers.setflags(write=False)
        omegas.setflags(write=False)
        object.__setattr__(self, "receivers", receivers)
        object.__setattr__(self, "omegas", omegas)

    @property
    def n_receivers(self):
        return self.receivers.size

    @property
    def n_frequencies(self):
        return self.omegas.size

    @property
    def frequencies_hz(self):
        return self.omegas / (2.0 * np.pi)

    @property
    def padded_receivers(self):
        return self.grid.interior_indices[self.receivers]


def frequency_band(f_min, f_max, f_step):
    """Angular frequencies for a band given in Hz, both ends included."""
    if f_step <= 0:
        raise ConfigError(f"Frequency step must be positive, got {f_step}")
    if f_max < f_min:
        raise ConfigError(f"Empty frequency band [{f_min}, {f_max}] Hz")
    count = int(np.floor((f_max - f_min) / f_step + 1e-9)) + 1
    return 2.0 * np.pi * (f_min + f_step * np.arange(count))


def receiver_line(grid, depth, x_start=None, x_stop=None, spacing=None):
    """
    Interior indices of a horizontal receiver line.

    Args:
        grid (Grid): The grid
        depth (float): Receiver depth in meters (must be below the free surface row)
        x_start (float or None): First receiver position in meters
        x_stop (float or None): Last receiver position in meters
        spacing (float or None): Receiver spacing in meters, defaults to one cell

    Returns:
        numpy.ndarray: Interior flat indices of the receivers
    """
    i = int(round(depth / grid.h))
    if i < 1 or i >= grid.nz:
        raise ConfigError(f"Receiver depth {depth} m must fall on interior rows 1..{grid.nz - 1}")
    x_start = 0.0 if x_start is None else x_start
    x_stop = (grid.nx - 1) * grid.h if x_stop is None else x_stop
    step = max(1, int(round((spacing or grid.h) / grid.h)))
    j = np.arange(int(round(x_start / grid.h)), int(round(x_stop / grid.h)) + 1, step)
    j = j[(j >= 0) & (j < grid.nx)]
    return i * grid.nx + j


def points_per_wavelength(model, acquisition):
    """Grid points per minimum wavelength for the slowest velocity and highest frequency."""
    f_max = acquisition.frequencies_hz.max()
    return float(model.velocity.min() / (f_max * model.grid.h))


def check_dispersion(model, acquisition):
    """Warn when the grid samples the shortest wavelength with fewer than ten points."""
    ppw = points_per_wavelength(model, acquisition)
    if ppw < MIN_POINTS_PER_WAVELENGTH:
        logger.warning(
            "Only %.1f grid points per minimum wavelength (need %.0f); expect numerical dispersion",
            ppw, MIN_POINTS_PER_WAVELENGTH,
        )
    return ppw
