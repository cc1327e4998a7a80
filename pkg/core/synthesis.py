"""
Synthetic data: Ricker source spectra, forward-modeled receiver spectra,
additive noise at a target SNR, and time-domain seismogram synthesis.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from core import helmholtz
from core.errors import ConfigError, DimensionMismatchError, NonFiniteError
from core.events import EventSet
from core.solvers import solve_wave_equation
from utils.helpers import thread_map

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SourceEvent:
    """A point source at (z, x) meters with a Ricker signature."""

    z: float
    x: float
    f_central: float
    t_central: float
    amplitude: float = 1.0

    def __post_init__(self):
        if not self.f_central > 0:
            raise ConfigError(f"Ricker central frequency must be positive, got {self.f_central}")


@dataclass(eq=False)
class SpectraData:
    """Receiver spectra: one complex Nr vector per angular frequency."""

    omegas: np.ndarray
    receivers: np.ndarray
    values: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.omegas = np.asarray(self.omegas, dtype=np.float64).ravel()
        self.receivers = np.asarray(self.receivers, dtype=np.int64).ravel()
        self.values = np.asarray(self.values, dtype=np.complex128)
        expected = (self.omegas.size, self.receivers.size)
        if self.values.shape != expected:
            raise DimensionMismatchError(f"Spectra have shape {self.values.shape}, expected {expected}")
        if not np.all(np.isfinite(self.values)):
            raise NonFiniteError("Spectra contain non-finite values")

    @property
    def n_frequencies(self):
        return self.omegas.size

    @property
    def n_receivers(self):
        return self.receivers.size

    @property
    def frequencies_hz(self):
        return self.omegas / (2.0 * np.pi)

    def check_acquisition(self, acquisition):
        """Raise unless the spectra were recorded with ``acquisition``."""
        if not np.array_equal(self.receivers, acquisition.receivers):
            raise ConfigError("Data receivers do not match the configured acquisition")
        if self.omegas.size != acquisition.omegas.size or not np.allclose(self.omegas, acquisition.omegas, rtol=1e-12):
            raise ConfigError("Data frequencies do not match the configured acquisition")

    def scaled(self, factor):
        return SpectraData(self.omegas, self.receivers, self.values * factor, dict(self.metadata))


def ricker_spectrum(f_central, t_central, omega, normalize=True):
    """
    Ricker wavelet spectrum delayed by ``t_central``.

    Args:
        f_central (float): Central (peak) frequency in Hz
        t_central (float): Central time in seconds
        omega: Angular frequency (scalar or array) in rad/s
        normalize (bool): Scale to unit peak amplitude at omega = 2 pi f_central

    Returns:
        complex or numpy.ndarray: W(omega)
    """
    if not f_central > 0:
        raise ValueError(f"Central frequency must be positive, got {f_central}")
    omega = np.asarray(omega, dtype=np.float64)
    omega_p = 2.0 * np.pi * f_central
    ratio = (omega / omega_p) ** 2
    if normalize:
        amplitude = ratio * np.exp(1.0 - ratio)
    else:
        amplitude = 2.0 * omega ** 2 / (np.sqrt(np.pi) * omega_p ** 3) * np.exp(-ratio)
    spectrum = amplitude * np.exp(-1j * omega * t_central)
    return spectrum if spectrum.ndim else complex(spectrum)


def event_signatures(events, omegas):
    """q x p matrix of Ricker spectra for a list of SourceEvent."""
    omegas = np.asarray(omegas, dtype=np.float64)
    if not events:
        return np.zeros((omegas.size, 0), dtype=np.complex128)
    columns = [ev.amplitude * ricker_spectrum(ev.f_central, ev.t_central, omegas) for ev in events]
    return np.column_stack(columns)


def true_event_set(grid, events, omegas):
    """EventSet holding the planted events and their exact signatures."""
    locations = [grid.interior_index_at(ev.z, ev.x) for ev in events]
    if len(set(locations)) != len(locations):
        raise ConfigError("Two synthetic events fall on the same grid cell")
    return EventSet(np.array(locations, dtype=np.int64), event_signatures(events, omegas), np.ones(len(events)))


def add_noise(values, snr_db, rng):
    """
    Add circular complex Gaussian noise at an exact dataset SNR.

    Args:
        values (numpy.ndarray): Clean complex data
        snr_db (float): Target 10 log10(signal power / noise power)
        rng (numpy.random.Generator): Random source

    Returns:
        numpy.ndarray: Noisy data
    """
    values = np.asarray(values, dtype=np.complex128)
    signal_power = np.mean(np.abs(values) ** 2)
    if signal_power == 0:
        return values.copy()
    noise = (rng.standard_normal(values.shape) + 1j * rng.standard_normal(values.shape)) / np.sqrt(2.0)
    noise_power = np.mean(np.abs(noise) ** 2)
    noise *= np.sqrt(signal_power / (noise_power * 10.0 ** (snr_db / 10.0)))
    return values + noise


def measured_snr_db(clean, noisy):
    clean = np.asarray(clean)
    noise = np.asarray(noisy) - clean
    return float(10.0 * np.log10(np.mean(np.abs(clean) ** 2) / np.mean(np.abs(noise) ** 2)))


def forward_wavefields(model, acquisition, source_for_frequency, threads=1):
    """Solve A(m, w) u = b(w) for every frequency; returns the list of padded wavefields."""

    def solve_one(index):
        omega = acquisition.omegas[index]
        op = helmholtz.assemble(model, omega)
        return solve_wave_equation(op, source_for_frequency(index))

    return thread_map(solve_one, range(acquisition.n_frequencies), threads)


def synthesize_data(true_model, events, acquisition, seed=None, snr_db=None, threads=1):
    """
    Forward-model receiver spectra for a set of point sources.

    Args:
        true_model (Model): Model used for the forward solves
        events (list): SourceEvent instances (may be empty)
        acquisition (Acquisition): Receivers and frequencies
        seed (int or None): Seed of the noise generator
        snr_db (float or None): Target SNR in dB, no noise when None
        threads (int): Concurrent frequency solves

    Returns:
        SpectraData: d(w) = P A(m, w)^-1 Phi s(w), plus noise when requested
    """
    grid = true_model.grid
    omegas = acquisition.omegas
    truth = true_event_set(grid, events, omegas)
    padded_locations = grid.interior_indices[truth.locations]
    sampling = helmholtz.build_sampling_operator(acquisition)

    if truth.p == 0:
        values = np.zeros((acquisition.n_frequencies, acquisition.n_receivers), dtype=np.complex128)
    else:
        def source(index):
            b = np.zeros(grid.n_pad, dtype=np.complex128)
            b[padded_locations] = truth.signatures[index]
            return b

        logger.info("Forward modeling %d events at %d frequencies", truth.p, acquisition.n_frequencies)
        fields = forward_wavefields(true_model, acquisition, source, threads)
        values = np.array([sampling.apply(u) for u in fields])

    clean = values
    if snr_db is not None:
        rng = np.random.default_rng(seed)
        values = add_noise(values, snr_db, rng)
        if np.any(clean):
            logger.info("Added noise at %.2f dB SNR", measured_snr_db(clean, values))

    metadata = {
        "seed": seed,
        "snr_db": snr_db,
        "events": [
            {"z": ev.z, "x": ev.x, "f_central": ev.f_central, "t_central": ev.t_central, "amplitude": ev.amplitude}
            for ev in events
        ],
        "record_duration": acquisition.record_duration,
    }
    return SpectraData(omegas, acquisition.receivers, values, metadata)


def time_axis(duration, dt):
    """Uniform time samples in [0, duration)."""
    if not (duration > 0 and dt > 0):
        raise ConfigError(f"Record duration and sampling must be positive, got {duration}, {dt}")
    return np.arange(int(round(duration / dt))) * dt


def synthesize_seismograms(values, omegas, times):
    """
    Real traces from a band of spectral samples.

    Each trace is sum_k Re(D_k exp(i w_k t)), i.e. the Hermitian-symmetric
    inverse transform with zeros outside the sampled band.

    Args:
        values (numpy.ndarray): q x Nr complex spectra
        omegas (numpy.ndarray): q angular frequencies
        times (numpy.ndarray): Uniform time axis in seconds

    Returns:
        numpy.ndarray: Nr x Nt real seismograms
    """
    values = np.atleast_2d(np.asarray(values, dtype=np.complex128))
    omegas = np.asarray(omegas, dtype=np.float64).ravel()
    times = np.asarray(times, dtype=np.float64).ravel()
    if values.shape[0] != omegas.size:
        raise DimensionMismatchError(f"{values.shape[0]} spectral rows for {omegas.size} frequencies")
    if times.size > 2 and not np.allclose(np.diff(times), times[1] - times[0]):
        raise ValueError("Time axis must be uniform")
    phase = np.exp(1j * np.outer(omegas, times))
    return (values.T @ phase).real
