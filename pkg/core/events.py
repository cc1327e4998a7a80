"""
Event sets, peak picking on the mean-source image, and comparison with known events.
"""

import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy.ndimage import maximum_filter
from scipy.optimize import linear_sum_assignment

from core.errors import ConfigError, DimensionMismatchError, EmptyPickSetError, NonFiniteError

logger = logging.getLogger(__name__)

DEFAULT_PEAK_THRESHOLD = 0.3
DEFAULT_MIN_DISTANCE_CELLS = 3


@dataclass(frozen=True, eq=False)
class EventSet:
    """
    Picked events: interior flat indices (the columns of Phi), a q x p matrix of
    complex signatures and one confidence value per event.
    """

    locations: np.ndarray
    signatures: np.ndarray
    confidence: np.ndarray

    def __post_init__(self):
        locations = np.array(self.locations, dtype=np.int64).ravel()
        confidence = np.array(self.confidence, dtype=np.float64).ravel()
        signatures = np.array(self.signatures, dtype=np.complex128)
        p = locations.size
        if signatures.ndim != 2 or signatures.shape[1] != p:
            raise DimensionMismatchError(f"Signatures must be q x {p}, got {signatures.shape}")
        if confidence.size != p:
            raise DimensionMismatchError(f"Expected {p} confidence values, got {confidence.size}")
        if np.unique(locations).size != p:
            raise ValueError("Event locations must be distinct")
        if not np.all(np.isfinite(signatures)):
            raise NonFiniteError("Event signatures contain non-finite values")
        for array in (locations, confidence, signatures):
            array.setflags(write=False)
        object.__setattr__(self, "locations", locations)
        object.__setattr__(self, "signatures", signatures)
        object.__setattr__(self, "confidence", confidence)

    @classmethod
    def empty(cls, n_frequencies):
        return cls(np.zeros(0, dtype=np.int64), np.zeros((n_frequencies, 0)), np.zeros(0))

    @property
    def p(self):
        return self.locations.size

    @property
    def n_frequencies(self):
        return self.signatures.shape[0]

    def with_signatures(self, signatures):
        return EventSet(self.locations, signatures, self.confidence)

    def positions(self, grid):
        """(p, 2) array of (z, x) in meters."""
        if self.p == 0:
            return np.zeros((0, 2))
        return np.array([grid.interior_position(k) for k in self.locations], dtype=np.float64)

    def to_frame(self, grid):
        positions = self.positions(grid)
        return pd.DataFrame({
            "event_id": np.arange(1, self.p + 1),
            "z (m)": positions[:, 0],
            "x (m)": positions[:, 1],
            "confidence": self.confidence,
        })

    def signatures_frame(self, frequencies_hz):
        """Long table with one row per (frequency, event)."""
        frequencies_hz = np.asarray(frequencies_hz, dtype=np.float64)
        if frequencies_hz.size != self.n_frequencies:
            raise DimensionMismatchError("Frequency list does not match the signature matrix")
        q, p = self.signatures.shape
        values = self.signatures.ravel()
        return pd.DataFrame({
            "frequency (Hz)": np.repeat(frequencies_hz, p),
            "event_id": np.tile(np.arange(1, p + 1), q),
            "real": values.real,
            "imag": values.imag,
            "amplitude": np.abs(values),
            "phase (rad)": np.angle(values),
        })


def events_from_positions(grid, positions, signatures=None):
    """
    Build an event set from (z, x) positions in meters.

    Args:
        grid (Grid): The grid
        positions: Sequence of (z, x) pairs in meters
        signatures (numpy.ndarray or None): q x p signatures, zeros with q = 1 when omitted

    Returns:
        EventSet: Events snapped to the nearest interior cells
    """
    locations = [grid.interior_index_at(z, x) for z, x in positions]
    if len(set(locations)) != len(locations):
        raise ConfigError("Two events fall on the same grid cell")
    p = len(locations)
    if signatures is None:
        signatures = np.zeros((1, p), dtype=np.complex128)
    return EventSet(np.array(locations, dtype=np.int64), signatures, np.ones(p))


def pick_events(mean_source, grid, threshold=DEFAULT_PEAK_THRESHOLD, min_distance=None, n_frequencies=1):
    """
    Pick events as local maxima of |mean source|.

    Candidates are maxima over their 8-neighbourhood with amplitude at least
    ``threshold`` times the global maximum. They are accepted greedily by
    descending amplitude (ties in scan order) when at least ``min_distance``
    meters away from every accepted pick.

    Args:
        mean_source (numpy.ndarray): Interior mean-source vector (real or complex)
        grid (Grid): The grid
        threshold (float): Fraction of the global maximum, in (0, 1)
        min_distance (float or None): Minimum pick separation in meters, defaults to 3 cells
        n_frequencies (int): Row count of the zeroed signature matrix

    Returns:
        EventSet: The picks with zero signatures and peak amplitudes as confidence
    """
    if not 0 < threshold < 1:
        raise ConfigError(f"Peak threshold must lie in (0, 1), got {threshold}")
    if min_distance is None:
        min_distance = DEFAULT_MIN_DISTANCE_CELLS * grid.h

    amplitude = np.abs(np.asarray(mean_source))
    if amplitude.shape != (grid.n,):
        raise DimensionMismatchError(f"Mean source has shape {amplitude.shape}, expected ({grid.n},)")
    if not np.all(np.isfinite(amplitude)):
        raise NonFiniteError("Mean source contains non-finite values")
    peak = amplitude.max()
    if peak <= 0:
        raise EmptyPickSetError("Mean source is identically zero")

    image = amplitude.reshape(grid.shape)
    local_max = image == maximum_filter(image, size=3, mode="constant", cval=0.0)
    candidates = np.flatnonzero(local_max.ravel() & (amplitude >= threshold * peak) & (amplitude > 0))
    order = candidates[np.lexsort((candidates, -amplitude[candidates]))]

    accepted = []
    accepted_xy = []
    for k in order:
        z, x = grid.interior_position(k)
        if all(np.hypot(z - za, x - xa) >= min_distance for za, xa in accepted_xy):
            accepted.append(k)
            accepted_xy.append((z, x))

    if not accepted:
        raise EmptyPickSetError("No local maximum above threshold")
    locations = np.array(accepted, dtype=np.int64)
    logger.debug("Picked %d events out of %d candidates", locations.size, candidates.size)
    return EventSet(locations, np.zeros((n_frequencies, locations.size)), amplitude[locations])


def fit_signatures(greens, data, locations):
    """
    Least-squares signatures for events at fixed cells, one frequency at a time.

    Args:
        greens (numpy.ndarray): q x Nr x N receiver Green's functions on interior columns
        data (numpy.ndarray): q x Nr observed spectra
        locations: Interior flat indices of the events

    Returns:
        tuple: (q x p signatures, misfit sum_w ||d - G s||^2)
    """
    data = np.asarray(data, dtype=np.complex128)
    locations = np.asarray(locations, dtype=np.int64).ravel()
    if greens.shape[:2] != data.shape:
        raise DimensionMismatchError(f"Green's functions {greens.shape} do not match data {data.shape}")
    if locations.size == 0:
        return np.zeros((data.shape[0], 0), dtype=np.complex128), float(np.sum(np.abs(data) ** 2))
    columns = greens[:, :, locations]
    signatures = (np.linalg.pinv(columns) @ data[:, :, None])[:, :, 0]
    residual = data - (columns @ signatures[:, :, None])[:, :, 0]
    return signatures, float(np.sum(np.abs(residual) ** 2))


def _neighbours(k, grid):
    i, j = divmod(int(k), grid.nx)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if (di or dj) and 0 <= i + di < grid.nz and 0 <= j + dj < grid.nx:
                yield (i + di) * grid.nx + (j + dj)


def relocate_events(greens, data, locations, grid, max_sweeps=10):
    """
    Move each event to the neighbouring cell that lowers the signature-fit misfit.

    Events are visited in order and moved one cell at a time; a sweep without
    a move ends the search.

    Returns:
        tuple: (relocated interior indices, misfit)
    """
    locations = [int(k) for k in np.asarray(locations, dtype=np.int64).ravel()]
    _, misfit = fit_signatures(greens, data, locations)
    for sweep in range(max_sweeps):
        moved = 0
        for e in range(len(locations)):
            best = locations[e]
            for k in _neighbours(locations[e], grid):
                if k in locations:
                    continue
                trial = locations[:e] + [k] + locations[e + 1:]
                _, trial_misfit = fit_signatures(greens, data, trial)
                if trial_misfit < misfit * (1.0 - 1e-9):
                    misfit, best = trial_misfit, k
            if best != locations[e]:
                locations[e] = best
                moved += 1
        logger.debug("Relocation sweep %d: %d events moved, misfit %.3e", sweep + 1, moved, misfit)
        if not moved:
            break
    return np.array(locations, dtype=np.int64), misfit


def prune_events(greens, data, locations, factor=10.0, tolerance=1e-3):
    """
    Drop events whose removal barely raises the signature-fit misfit.

    The event with the smallest misfit increase goes while that increase stays
    below ``factor`` times the misfit per receiver or ``tolerance`` times the
    data energy. At least one event is kept.

    Returns:
        tuple: (kept positions into ``locations``, misfit)
    """
    data = np.asarray(data, dtype=np.complex128)
    locations = np.asarray(locations, dtype=np.int64).ravel()
    kept = list(range(locations.size))
    _, misfit = fit_signatures(greens, data, locations)
    energy = float(np.sum(np.abs(data) ** 2))
    n_receivers = data.shape[1]
    while len(kept) > 1:
        trials = []
        for position in kept:
            rest = [locations[i] for i in kept if i != position]
            trials.append((fit_signatures(greens, data, rest)[1], position))
        trial_misfit, position = min(trials)
        if trial_misfit - misfit > max(factor * misfit / n_receivers, tolerance * energy):
            break
        logger.debug("Pruned event at cell %d, misfit %.3e -> %.3e", locations[position], misfit, trial_misfit)
        kept.remove(position)
        misfit = trial_misfit
    return np.array(kept, dtype=np.int64), misfit


def match_events(picked_positions, true_positions):
    """
    Pair picks with true events by minimum total distance.

    Args:
        picked_positions: (p, 2) array of (z, x) meters
        true_positions: (t, 2) array of (z, x) meters

    Returns:
        list: (pick index, true index, distance in meters) tuples, at most min(p, t) of them
    """
    picked = np.asarray(picked_positions, dtype=np.float64).reshape(-1, 2)
    truth = np.asarray(true_positions, dtype=np.float64).reshape(-1, 2)
    if picked.shape[0] == 0 or truth.shape[0] == 0:
        return []
    cost = np.linalg.norm(picked[:, None, :] - truth[None, :, :], axis=-1)
    rows, cols = linear_sum_assignment(cost)
    return [(int(r), int(c), float(cost[r, c])) for r, c in zip(rows, cols)]


def signature_error(estimated, true):
    """Relative l2 error ||est - true|| / ||true|| across the band."""
    estimated = np.asarray(estimated)
    true = np.asarray(true)
    norm = np.linalg.norm(true)
    if norm == 0:
        return float(np.linalg.norm(estimated))
    return float(np.linalg.norm(estimated - true) / norm)


def signature_correlation(estimated, true):
    """Normalized correlation |<est, true>| / (||est|| ||true||), 0 when either is zero."""
    estimated = np.asarray(estimated)
    true = np.asarray(true)
    denominator = np.linalg.norm(estimated) * np.linalg.norm(true)
    if denominator == 0:
        return 0.0
    return float(np.abs(np.vdot(true, estimated)) / denominator)
