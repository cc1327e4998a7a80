"""
ADMM wavefield-reconstruction inversion for event location.

One outer iteration:
    1. inner loop: mean source by Berhu prox, then wavefields re-solved with it
    2. peak picking on the illumination-compensated mean source
    3. pick refinement: one-cell relocation and pruning by signature-fit misfit
    4. joint wavefield / signature update for the picked events
    5. optional TV-regularized, bound-constrained model update
    6. dual ascent on the wave-equation and observation constraints
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from core import helmholtz
from core.errors import ConfigError, EmptyPickSetError
from core.events import DEFAULT_PEAK_THRESHOLD, EventSet, pick_events, prune_events, relocate_events
from core.grid import check_dispersion
from core.illumination import DEFAULT_ILLUMINATION_FLOOR, compute_illumination
from core.regularization import BerhuParams, TVSubproblem, berhu_prox, solve_tv_quadratic
from core.solvers import AugmentedSystem, FactorizationCache, StackedSystem, solve_augmented, solve_stacked
from utils.helpers import thread_map

logger = logging.getLogger(__name__)

# record key -> table header (with units)
HISTORY_COLUMNS = {
    "outer_iteration": "outer_iteration",
    "data_residual": "data_residual (rel)",
    "wave_residual": "wave_residual (rel)",
    "source_change": "source_change (rel)",
    "n_events": "n_events",
    "locations": "locations (cell index)",
    "model_change": "model_change (rel)",
    "tv_converged": "tv_converged",
    "tv_iterations": "tv_iterations",
}


def history_table(records):
    """Per-iteration records as a DataFrame with unit-bearing headers."""
    frame = pd.DataFrame(list(records), columns=list(HISTORY_COLUMNS))
    return frame.rename(columns=HISTORY_COLUMNS)


@dataclass(frozen=True)
class InversionConfig:
    """
    Algorithm parameters.

    ``lam`` of None selects 1 / mean(w^4); ``gamma`` of None selects
    ``gamma_ratio * lam``. ``source_weight`` of None makes the prox step
    ``auto_source_fraction`` of the largest compensated prox argument at every
    inner iteration; ``berhu_epsilon`` of None makes the Berhu breakpoint
    ``berhu_fraction`` of it. ``tv_weight`` is relative to the quadratic's scale.
    """

    lam: float = None
    gamma: float = None
    gamma_ratio: float = 1e4
    n_inner: int = 10
    n_outer: int = 5
    update_model: bool = True
    peak_threshold: float = DEFAULT_PEAK_THRESHOLD
    peak_min_distance: float = None
    tv_weight: float = 0.05
    source_weight: float = None
    auto_source_fraction: float = 0.1
    berhu_epsilon: float = None
    berhu_fraction: float = 0.2
    compensate_illumination: bool = True
    illumination_floor: float = DEFAULT_ILLUMINATION_FLOOR
    refine_picks: bool = True
    relocation_sweeps: int = 10
    prune_factor: float = 10.0
    prune_tolerance: float = 1e-3
    source_tolerance: float = 1e-3
    data_tolerance: float = 1e-2
    tv_max_iter: int = 200
    tv_tolerance: float = 1e-5
    solver: str = "direct"
    threads: int = 1

    def __post_init__(self):
        if self.lam is not None and not self.lam > 0:
            raise ConfigError(f"lambda must be positive, got {self.lam}")
        if self.gamma is not None and not self.gamma > 0:
            raise ConfigError(f"gamma must be positive, got {self.gamma}")
        if not self.gamma_ratio > 0:
            raise ConfigError(f"gamma_ratio must be positive, got {self.gamma_ratio}")
        if self.n_inner < 1 or self.n_outer < 1:
            raise ConfigError("n_inner and n_outer must be at least 1")
        if not 0 < self.peak_threshold < 1:
            raise ConfigError(f"peak_threshold must lie in (0, 1), got {self.peak_threshold}")
        if self.peak_min_distance is not None and self.peak_min_distance < 0:
            raise ConfigError("peak_min_distance must be nonnegative")
        if self.tv_weight < 0:
            raise ConfigError("tv_weight must be nonnegative")
        if self.source_weight is not None and not self.source_weight > 0:
            raise ConfigError("source_weight must be positive")
        if not 0 < self.auto_source_fraction < 1:
            raise ConfigError("auto_source_fraction must lie in (0, 1)")
        if self.berhu_epsilon is not None and not self.berhu_epsilon > 0:
            raise ConfigError("berhu_epsilon must be positive")
        if not self.berhu_fraction > 0:
            raise ConfigError("berhu_fraction must be positive")
        if not 0 < self.illumination_floor <= 1:
            raise ConfigError("illumination_floor must lie in (0, 1]")
        if self.relocation_sweeps < 0:
            raise ConfigError("relocation_sweeps must be nonnegative")
        if self.prune_factor < 0 or self.prune_tolerance < 0:
            raise ConfigError("prune_factor and prune_tolerance must be nonnegative")
        if self.solver not in ("direct", "iterative"):
            raise ConfigError(f"solver must be 'direct' or 'iterative', got {self.solver!r}")
        if self.threads < 1:
            raise ConfigError("threads must be at least 1")

    def penalties(self, omegas):
        """Resolve (lambda, gamma) for a frequency list."""
        omegas = np.asarray(omegas, dtype=np.float64)
        lam = self.lam if self.lam is not None else 1.0 / float(np.mean(omegas ** 4))
        gamma = self.gamma if self.gamma is not None else self.gamma_ratio * lam
        return lam, gamma


@dataclass(eq=False)
class InversionState:
    """Mutable iterate of the algorithm; mutated only between phases."""

    model: object
    acquisition: object
    data: np.ndarray
    lam: float
    gamma: float
    wavefields: list
    dual_b: list
    dual_d: list
    mean_source: np.ndarray
    events: EventSet
    prox_argument: np.ndarray = None
    compensated_source: np.ndarray = None
    model_version: int = 0
    iteration: int = 0
    history: list = field(default_factory=list)
    event_history: list = field(default_factory=list)
    factorizations: FactorizationCache = field(default_factory=FactorizationCache)
    _operators: dict = field(default_factory=dict)
    _illumination: tuple = None

    @property
    def grid(self):
        return self.model.grid

    @property
    def omegas(self):
        return self.acquisition.omegas

    @property
    def n_frequencies(self):
        return self.acquisition.n_frequencies

    def operator(self, index):
        """A(m, w) at the current model, assembled once per model version."""
        key = (index, self.model_version)
        op = self._operators.get(key)
        if op is None:
            op = helmholtz.assemble(self.model, self.omegas[index])
            self._operators[key] = op
        return op

    def illumination(self, threads=1):
        """Green's functions and illumination at the current model, computed once per model version."""
        if self._illumination is None or self._illumination[0] != self.model_version:
            operators = [self.operator(index) for index in range(self.n_frequencies)]
            sampling = helmholtz.build_sampling_operator(self.acquisition)
            illumination = compute_illumination(operators, sampling, self.grid, self.lam / self.gamma, threads)
            self._illumination = (self.model_version, illumination)
        return self._illumination[1]

    def set_model(self, model):
        """Install a new model and drop every operator and factorization built on the old one."""
        self.model = model
        self.model_version += 1
        self._operators.clear()
        self.factorizations.clear()
        self._illumination = None

    def padded_event_source(self, index):
        """Phi s(w) on the padded grid."""
        b = np.zeros(self.grid.n_pad, dtype=np.complex128)
        if self.events.p:
            b[self.grid.interior_indices[self.events.locations]] = self.events.signatures[index]
        return b


@dataclass(eq=False)
class InversionResult:
    events: EventSet
    model: object
    history: pd.DataFrame
    converged: bool
    state: InversionState
    event_history: list


def _data_matrix(data, acquisition):
    values = getattr(data, "values", data)
    values = np.asarray(values, dtype=np.complex128)
    expected = (acquisition.n_frequencies, acquisition.n_receivers)
    if values.shape != expected:
        raise ConfigError(f"Data has shape {values.shape}, acquisition expects {expected}")
    return values


def initialize_state(model, acquisition, data, config):
    """State with zero duals, zero wavefields and no events."""
    values = _data_matrix(data, acquisition)
    lam, gamma = config.penalties(acquisition.omegas)
    grid = model.grid
    q = acquisition.n_frequencies
    zeros_pad = [np.zeros(grid.n_pad, dtype=np.complex128) for _ in range(q)]
    return InversionState(
        model=model,
        acquisition=acquisition,
        data=values,
        lam=lam,
        gamma=gamma,
        wavefields=[u.copy() for u in zeros_pad],
        dual_b=zeros_pad,
        dual_d=[np.zeros(acquisition.n_receivers, dtype=np.complex128) for _ in range(q)],
        mean_source=np.zeros(grid.n, dtype=np.complex128),
        compensated_source=np.zeros(grid.n, dtype=np.complex128),
        events=EventSet.empty(q),
    )


def _stacked_solve(state, config, index, rhs_top):
    op = state.operator(index)
    sampling = helmholtz.build_sampling_operator(state.acquisition)
    system = StackedSystem(op, sampling, state.lam, state.gamma, rhs_top, np.sqrt(state.gamma) * state.data[index])
    key = (float(state.omegas[index]), state.model_version, ())
    return solve_stacked(system, state.factorizations, key, config.solver)


def reconstruct_initial_wavefield(model, acquisition, data, config, state=None):
    """
    Data-assimilated wavefields with no source: [sqrt(lam) A; sqrt(gamma) P] u = [0; sqrt(gamma) d].

    Args:
        model (Model): Current model
        acquisition (Acquisition): Receivers and frequencies
        data: SpectraData or q x Nr complex array
        config (InversionConfig): Algorithm parameters
        state (InversionState or None): State whose operator and factorization caches are reused

    Returns:
        list: One padded wavefield per frequency
    """
    if state is None:
        state = initialize_state(model, acquisition, data, config)
    zero = np.zeros(state.grid.n_pad, dtype=np.complex128)
    return thread_map(lambda k: _stacked_solve(state, config, k, zero), range(state.n_frequencies), config.threads)


def source_compensation(state, config):
    """Per-cell divisor of the prox argument: sqrt of the floored illumination, or ones."""
    if not config.compensate_illumination:
        return np.ones(state.grid.n)
    return state.illumination(config.threads).weights(config.illumination_floor)


def estimate_mean_source(state, config):
    """
    Berhu-sparsified mean source over the frequency band.

    The prox argument x = (1/q) sum_w [A u(w) + mu_b(w) / lam], restricted to
    the interior, is stored on ``state.prox_argument``. The prox acts on x / w,
    with w from :func:`source_compensation`, and its output is stored on
    ``state.compensated_source``; the mean source is w times that output.

    With automatic parameters the step and breakpoint follow the peak of
    x / w at every call. Cells above ``auto_source_fraction + berhu_fraction``
    of the peak then settle at a fixed share of it while weaker cells are
    thresholded away over the inner iterations.

    Returns:
        numpy.ndarray: Mean source on the interior grid
    """
    grid = state.grid
    q = state.n_frequencies
    argument = np.zeros(grid.n, dtype=np.complex128)
    for index in range(q):
        op = state.operator(index)
        argument += grid.restrict(op.matrix @ state.wavefields[index] + state.dual_b[index] / state.lam)
    argument /= q
    state.prox_argument = argument

    if not np.any(argument):
        state.compensated_source = np.zeros_like(argument)
        return np.zeros_like(argument)
    weights = source_compensation(state, config)
    scaled = argument / weights
    peak = float(np.abs(scaled).max())
    if config.source_weight is not None:
        alpha = config.source_weight / (state.lam * q)
    else:
        alpha = config.auto_source_fraction * peak
    epsilon = config.berhu_epsilon if config.berhu_epsilon is not None else config.berhu_fraction * peak
    state.compensated_source = berhu_prox(scaled, BerhuParams(epsilon=epsilon, alpha=alpha))
    return weights * state.compensated_source


def reconstruct_wavefield_with_source(state, config, mean_source):
    """Wavefields re-solved with the mean source on the wave-equation rows (no dual terms)."""
    rhs_top = np.sqrt(state.lam) * state.grid.embed(np.asarray(mean_source, dtype=np.complex128))
    return thread_map(
        lambda k: _stacked_solve(state, config, k, rhs_top), range(state.n_frequencies), config.threads
    )


def inner_location_loop(state, config):
    """
    Alternate mean-source estimation and wavefield re-solves ``n_inner`` times.

    Returns:
        tuple: (mean source, list of wavefields); both are also stored on ``state``
    """
    for inner in range(config.n_inner):
        mean_source = estimate_mean_source(state, config)
        state.mean_source = mean_source
        state.wavefields = reconstruct_wavefield_with_source(state, config, mean_source)
        logger.debug(
            "Inner iteration %d: %d cells above 1%% of the peak",
            inner + 1, source_support(mean_source),
        )
    return state.mean_source, state.wavefields


def source_support(mean_source, fraction=0.01):
    """Number of cells with |b| above ``fraction`` of the maximum."""
    amplitude = np.abs(mean_source)
    peak = amplitude.max() if amplitude.size else 0.0
    if peak == 0:
        return 0
    return int(np.count_nonzero(amplitude > fraction * peak))


def pick(state, config):
    """Peak picking on the compensated mean source; an empty pick set gives an empty EventSet."""
    image = state.compensated_source if state.compensated_source is not None else state.mean_source
    try:
        return pick_events(
            image,
            state.grid,
            threshold=config.peak_threshold,
            min_distance=config.peak_min_distance,
            n_frequencies=state.n_frequencies,
        )
    except EmptyPickSetError as exc:
        logger.warning("No events picked: %s", exc)
        return EventSet.empty(state.n_frequencies)


def _refined_locations(greens, data, events, grid, config):
    locations, _ = relocate_events(greens, data, events.locations, grid, config.relocation_sweeps)
    kept, misfit = prune_events(greens, data, locations, config.prune_factor, config.prune_tolerance)
    return locations[kept], events.confidence[kept], misfit


def refine_picks(state, config, picks, previous=None):
    """
    Relocate and prune picks against the observed spectra.

    Each pick moves to a neighbouring cell while that lowers the least-squares
    signature-fit misfit under the current model, then picks that explain less
    than the pruning thresholds are dropped. When ``previous`` events are
    given they are refined the same way and kept if they fit better.

    Returns:
        EventSet: Refined picks with zero signatures
    """
    if not config.refine_picks or picks.p == 0:
        return picks
    greens = state.illumination(config.threads).greens
    locations, confidence, misfit = _refined_locations(greens, state.data, picks, state.grid, config)
    if previous is not None and previous.p:
        old_locations, old_confidence, old_misfit = _refined_locations(
            greens, state.data, previous, state.grid, config
        )
        if old_misfit < misfit:
            logger.info("Previous events fit better (%.3e < %.3e); keeping them", old_misfit, misfit)
            locations, confidence, misfit = old_locations, old_confidence, old_misfit
    logger.info("Refined %d picks to %d events, fit misfit %.3e", picks.p, locations.size, misfit)
    return EventSet(locations, np.zeros((state.n_frequencies, locations.size)), confidence)


def joint_update_wavefields_signatures(state, config):
    """
    Solve the bordered system in (u, s) for the picked events at every frequency.

    The right-hand side is [-mu_b / sqrt(lam); sqrt(gamma) d - mu_d / sqrt(gamma)],
    which makes (u, s) the exact minimizer of the augmented Lagrangian.

    Returns:
        tuple: (list of wavefields, q x p signature matrix)
    """
    events = state.events
    if events.p == 0:
        raise ValueError("Joint update needs at least one picked event")
    sampling = helmholtz.build_sampling_operator(state.acquisition)
    padded = state.grid.interior_indices[events.locations]
    location_key = tuple(int(k) for k in padded)

    def solve_one(index):
        op = state.operator(index)
        rhs_top = -state.dual_b[index] / np.sqrt(state.lam)
        rhs_bottom = np.sqrt(state.gamma) * state.data[index] - state.dual_d[index] / np.sqrt(state.gamma)
        stacked = StackedSystem(op, sampling, state.lam, state.gamma, rhs_top, rhs_bottom)
        key = (float(state.omegas[index]), state.model_version, location_key)
        return solve_augmented(AugmentedSystem(stacked, padded), state.factorizations, key, config.solver)

    results = thread_map(solve_one, range(state.n_frequencies), config.threads)
    wavefields = [u for u, _ in results]
    signatures = np.array([s for _, s in results])
    return wavefields, signatures


def build_model_subproblem(state, config=None):
    """
    Diagonal Hessian and gradient of the wave-equation penalty in m.

    h_j = sum_w w^4 |u_j|^2 and g_j = 2 sum_w Re[conj(w^2 u_j) (Phi s - mu_b/lam - Lap u)_j]
    over interior cells, so lam (m^T H m - g^T m) matches
    lam sum_w ||A(m) u - Phi s + mu_b/lam||^2 up to a constant.

    Returns:
        TVSubproblem: With the absolute TV weight derived from ``config.tv_weight``
    """
    config = config or InversionConfig()
    grid = state.grid
    h = np.zeros(grid.n)
    g = np.zeros(grid.n)
    for index in range(state.n_frequencies):
        op = state.operator(index)
        u = state.wavefields[index]
        jac = helmholtz.jacobian_action(state.model, op.omega, u)
        residual = state.padded_event_source(index) - state.dual_b[index] / state.lam - helmholtz.laplacian_action(op, u)
        h += np.abs(jac) ** 2
        g += 2.0 * np.real(np.conj(jac) * grid.restrict(residual))

    model = state.model
    bound_range = float(np.max(model.m_max) - np.min(model.m_min))
    tv_weight = config.tv_weight * state.lam * float(np.mean(h)) * bound_range
    return TVSubproblem(
        h=h,
        g=g,
        lam=state.lam,
        m_min=model.m_min,
        m_max=model.m_max,
        tv_weight=tv_weight,
        shape=grid.shape,
        m_start=np.array(model.m),
    )


def update_model(state, config):
    """
    Solve the bound-constrained TV model subproblem.

    Returns:
        tuple: (Model, TVResult or None); the model is returned untouched when the
        update is disabled or no cell is illuminated
    """
    if not config.update_model:
        return state.model, None
    sub = build_model_subproblem(state, config)
    if not np.any(sub.h):
        logger.warning("Wavefields vanish everywhere; model left unchanged")
        return state.model, None
    result = solve_tv_quadratic(sub, max_iter=config.tv_max_iter, tol=config.tv_tolerance)
    return state.model.with_m(result.m), result


def update_duals(state, config=None):
    """
    Dual ascent: mu_b += lam (A u - Phi s), mu_d += gamma (P u - d), with A at the current model.

    Returns:
        tuple: (list of mu_b, list of mu_d)
    """
    sampling = helmholtz.build_sampling_operator(state.acquisition)
    dual_b = []
    dual_d = []
    for index in range(state.n_frequencies):
        u = state.wavefields[index]
        op = state.operator(index)
        dual_b.append(state.dual_b[index] + state.lam * (op.matrix @ u - state.padded_event_source(index)))
        dual_d.append(state.dual_d[index] + state.gamma * (sampling.apply(u) - state.data[index]))
    return dual_b, dual_d


def predicted_data(state):
    """P u(w) for the current wavefields, q x Nr."""
    sampling = helmholtz.build_sampling_operator(state.acquisition)
    return np.array([sampling.apply(u) for u in state.wavefields])


def data_residual(state):
    """sum_w ||P u - d|| / sum_w ||d||."""
    misfit = sum(np.linalg.norm(p - d) for p, d in zip(predicted_data(state), state.data))
    total = sum(np.linalg.norm(d) for d in state.data)
    if total == 0:
        return float(misfit)
    return float(misfit / total)


def wave_residual(state):
    """sum_w ||A u - Phi s|| / sum_w ||Phi s|| (absolute when there is no source)."""
    misfit = 0.0
    total = 0.0
    for index in range(state.n_frequencies):
        b = state.padded_event_source(index)
        misfit += np.linalg.norm(state.operator(index).matrix @ state.wavefields[index] - b)
        total += np.linalg.norm(b)
    return float(misfit / total) if total > 0 else float(misfit)


def _relative_change(new, old):
    old_norm = np.linalg.norm(old)
    change = np.linalg.norm(new - old)
    if old_norm == 0:
        return 0.0 if change == 0 else float("inf")
    return float(change / old_norm)


def run_outer_iteration(state, config):
    """
    One pass of the algorithm; returns the history record of the iteration.
    """
    state.iteration += 1
    previous_source = state.mean_source.copy()
    previous_events = state.events

    inner_location_loop(state, config)
    picks = pick(state, config)
    logger.info("Outer iteration %d: %d events picked", state.iteration, picks.p)
    state.events = refine_picks(state, config, picks, previous_events)

    if state.events.p:
        state.wavefields, signatures = joint_update_wavefields_signatures(state, config)
        state.events = state.events.with_signatures(signatures)

    previous_model = state.model
    new_model, tv_result = update_model(state, config)
    model_change = 0.0
    if new_model is not previous_model:
        model_change = _relative_change(new_model.m, previous_model.m)
        state.set_model(new_model)
        logger.info("Model updated, relative change %.3e", model_change)

    state.dual_b, state.dual_d = update_duals(state, config)

    record = {
        "outer_iteration": state.iteration,
        "data_residual": data_residual(state),
        "wave_residual": wave_residual(state),
        "source_change": _relative_change(state.mean_source, previous_source),
        "n_events": state.events.p,
        "locations": ";".join(str(int(k)) for k in state.events.locations),
        "model_change": model_change,
        "tv_converged": True if tv_result is None else bool(tv_result.converged),
        "tv_iterations": 0 if tv_result is None else int(tv_result.iterations),
    }
    state.history.append(record)
    state.event_history.append(state.events)
    return record


def run_inversion(model0, acquisition, data, config, on_iteration=None):
    """
    Locate events (and optionally update the model) from receiver spectra.

    Args:
        model0 (Model): Starting model
        acquisition (Acquisition): Receivers and frequencies
        data: SpectraData or q x Nr complex array
        config (InversionConfig): Algorithm parameters
        on_iteration (callable or None): Called as ``on_iteration(state, record)`` after every outer iteration

    Returns:
        InversionResult: Final events and model, the history table and the convergence flag
    """
    if hasattr(data, "check_acquisition"):
        data.check_acquisition(acquisition)
    check_dispersion(model0, acquisition)

    state = initialize_state(model0, acquisition, data, config)
    logger.info(
        "Starting inversion: %d frequencies, %d receivers, lambda=%.3e, gamma=%.3e",
        state.n_frequencies, acquisition.n_receivers, state.lam, state.gamma,
    )
    state.wavefields = reconstruct_initial_wavefield(model0, acquisition, data, config, state=state)

    converged = False
    for _ in range(config.n_outer):
        record = run_outer_iteration(state, config)
        logger.info(
            "Iteration %d: data residual %.3e, source change %.3e",
            record["outer_iteration"], record["data_residual"], record["source_change"],
        )
        if on_iteration is not None:
            on_iteration(state, record)
        if record["source_change"] < config.source_tolerance and record["data_residual"] < config.data_tolerance:
            converged = True
            break

    if not converged:
        logger.warning("Inversion stopped after %d outer iterations without meeting the tolerances", state.iteration)
    history = history_table(state.history)
    return InversionResult(state.events, state.model, history, converged, state, list(state.event_history))
