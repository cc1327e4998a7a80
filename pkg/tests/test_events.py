import numpy as np
import pytest

from core.errors import ConfigError, DimensionMismatchError, EmptyPickSetError
from core.events import (
    EventSet,
    events_from_positions,
    fit_signatures,
    match_events,
    pick_events,
    prune_events,
    relocate_events,
    signature_correlation,
    signature_error,
)
from core.grid import Grid


def _brute_force_maxima(image, threshold):
    nz, nx = image.shape
    peak = image.max()
    found = set()
    for i in range(nz):
        for j in range(nx):
            value = image[i, j]
            if value < threshold * peak or value <= 0:
                continue
            neighbours = [
                image[i + di, j + dj]
                for di in (-1, 0, 1)
                for dj in (-1, 0, 1)
                if (di or dj) and 0 <= i + di < nz and 0 <= j + dj < nx
            ]
            if all(value >= other for other in neighbours):
                found.add(i * nx + j)
    return found


def test_single_nonzero_is_picked():
    grid = Grid(10, 10, 5.0, 2)
    source = np.zeros(grid.n)
    source[34] = 2.5
    events = pick_events(source, grid, n_frequencies=3)
    assert events.locations.tolist() == [34]
    assert events.confidence.tolist() == [2.5]
    assert events.signatures.shape == (3, 1)
    assert not np.any(events.signatures)


def test_close_equal_peaks_keep_first_in_scan_order():
    grid = Grid(10, 10, 1.0, 2)
    source = np.zeros(grid.n)
    source[grid.interior_index_at(5, 3)] = 1.0
    source[grid.interior_index_at(5, 5)] = 1.0
    events = pick_events(source, grid, min_distance=3.0)
    assert events.locations.tolist() == [grid.interior_index_at(5, 3)]


def test_far_peaks_are_both_kept_by_amplitude():
    grid = Grid(10, 10, 1.0, 2)
    source = np.zeros(grid.n, dtype=np.complex128)
    source[grid.interior_index_at(2, 2)] = 1.0j
    source[grid.interior_index_at(7, 7)] = -3.0
    events = pick_events(source, grid)
    assert events.locations.tolist() == [grid.interior_index_at(7, 7), grid.interior_index_at(2, 2)]


def test_spikes_on_smooth_background():
    grid = Grid(30, 30, 1.0, 2)
    i, j = np.meshgrid(np.arange(30), np.arange(30), indexing="ij")
    image = 0.5 * np.exp(-((i - 15.0) ** 2 + (j - 15.0) ** 2) / (2 * 6.0 ** 2))
    spikes = [(5, 5), (5, 24), (24, 5), (22, 22)]
    for si, sj in spikes:
        image[si, sj] += 3.0
    events = pick_events(image.ravel(), grid, threshold=0.3)
    expected = {si * 30 + sj for si, sj in spikes}
    assert set(events.locations.tolist()) == expected
    assert _brute_force_maxima(image, 0.3) == expected


def test_threshold_validation():
    grid = Grid(5, 5, 1.0, 1)
    with pytest.raises(ConfigError):
        pick_events(np.ones(grid.n), grid, threshold=1.0)
    with pytest.raises(ConfigError):
        pick_events(np.ones(grid.n), grid, threshold=0.0)


def test_zero_source_is_an_empty_pick_set():
    grid = Grid(5, 5, 1.0, 1)
    with pytest.raises(EmptyPickSetError):
        pick_events(np.zeros(grid.n), grid)


def test_pick_rejects_wrong_length():
    grid = Grid(5, 5, 1.0, 1)
    with pytest.raises(DimensionMismatchError):
        pick_events(np.ones(grid.n + 1), grid)


def test_event_set_validation():
    with pytest.raises(ValueError):
        EventSet([3, 3], np.zeros((2, 2)), [1.0, 1.0])
    with pytest.raises(DimensionMismatchError):
        EventSet([1, 2], np.zeros((2, 3)), [1.0, 1.0])
    with pytest.raises(DimensionMismatchError):
        EventSet([1, 2], np.zeros((2, 2)), [1.0])


def test_event_set_is_read_only():
    events = EventSet([1, 2], np.zeros((2, 2)), [1.0, 1.0])
    with pytest.raises(ValueError):
        events.signatures[0, 0] = 1.0


def test_empty_event_set():
    events = EventSet.empty(4)
    assert events.p == 0
    assert events.n_frequencies == 4
    assert events.positions(Grid(3, 3, 1.0)).shape == (0, 2)


def test_event_tables():
    grid = Grid(5, 5, 10.0, 1)
    signatures = np.array([[1.0 + 1.0j, 2.0], [0.0, -1.0j]])
    events = EventSet([6, 18], signatures, [0.5, 0.25])
    frame = events.to_frame(grid)
    assert list(frame.columns) == ["event_id", "z (m)", "x (m)", "confidence"]
    assert frame["z (m)"].tolist() == [10.0, 30.0]
    assert frame["x (m)"].tolist() == [10.0, 30.0]
    table = events.signatures_frame([5.0, 7.0])
    assert len(table) == 4
    assert table["frequency (Hz)"].tolist() == [5.0, 5.0, 7.0, 7.0]
    assert table["event_id"].tolist() == [1, 2, 1, 2]
    assert table["amplitude"].iloc[0] == pytest.approx(np.sqrt(2.0))
    with pytest.raises(DimensionMismatchError):
        events.signatures_frame([5.0])


def test_with_signatures_keeps_locations():
    events = EventSet([4], np.zeros((2, 1)), [1.0])
    updated = events.with_signatures(np.ones((2, 1)))
    assert updated.locations.tolist() == [4]
    assert np.all(updated.signatures == 1.0)


def test_events_from_positions():
    grid = Grid(10, 10, 5.0, 2)
    events = events_from_positions(grid, [(10.0, 20.0), (31.0, 9.0)])
    assert events.locations.tolist() == [2 * 10 + 4, 6 * 10 + 2]
    with pytest.raises(ConfigError):
        events_from_positions(grid, [(10.0, 20.0), (11.0, 21.0)])


def test_match_events_minimum_cost():
    picked = [(0.0, 0.0), (100.0, 100.0), (50.0, 0.0)]
    truth = [(98.0, 100.0), (1.0, 0.0)]
    pairs = sorted(match_events(picked, truth))
    assert [(p, t) for p, t, _ in pairs] == [(0, 1), (1, 0)]
    assert pairs[0][2] == pytest.approx(1.0)
    assert match_events([], truth) == []


def test_signature_metrics():
    true = np.array([1.0 + 1.0j, 2.0, -1.0j])
    assert signature_error(true, true) == 0.0
    assert signature_correlation(true * np.exp(0.3j) * 2.0, true) == pytest.approx(1.0)
    assert signature_error(np.zeros(3), true) == pytest.approx(1.0)
    assert signature_correlation(np.zeros(3), true) == 0.0


def _random_greens(rng, q=3, n_receivers=12, n=25):
    shape = (q, n_receivers, n)
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def _exact_data(greens, locations, signatures):
    return (greens[:, :, locations] @ signatures[:, :, None])[:, :, 0]


def test_fit_signatures_recovers_exact_sources(rng):
    greens = _random_greens(rng)
    signatures = rng.standard_normal((3, 2)) + 1j * rng.standard_normal((3, 2))
    data = _exact_data(greens, [12, 4], signatures)
    fitted, misfit = fit_signatures(greens, data, [12, 4])
    assert np.allclose(fitted, signatures, rtol=1e-10, atol=0.0)
    assert misfit < 1e-20 * np.sum(np.abs(data) ** 2)


def test_fit_signatures_without_events(rng):
    greens = _random_greens(rng)
    data = rng.standard_normal((3, 12)) + 0j
    fitted, misfit = fit_signatures(greens, data, [])
    assert fitted.shape == (3, 0)
    assert misfit == pytest.approx(np.sum(np.abs(data) ** 2))
    with pytest.raises(DimensionMismatchError):
        fit_signatures(greens, data[:, :5], [1])


def test_relocation_moves_an_offset_event(rng):
    grid = Grid(5, 5, 1.0, 1)
    greens = _random_greens(rng)
    signatures = rng.standard_normal((3, 2)) + 1j * rng.standard_normal((3, 2))
    data = _exact_data(greens, [12, 4], signatures)
    locations, misfit = relocate_events(greens, data, [18, 4], grid)
    assert locations.tolist() == [12, 4]
    assert misfit < 1e-20 * np.sum(np.abs(data) ** 2)


def test_relocation_without_sweeps_stays_put(rng):
    grid = Grid(5, 5, 1.0, 1)
    greens = _random_greens(rng)
    data = _exact_data(greens, [12], np.ones((3, 1)))
    locations, _ = relocate_events(greens, data, [18], grid, max_sweeps=0)
    assert locations.tolist() == [18]


def test_pruning_drops_an_event_that_explains_nothing(rng):
    greens = _random_greens(rng)
    signatures = rng.standard_normal((3, 2)) + 1j * rng.standard_normal((3, 2))
    data = _exact_data(greens, [12, 4], signatures)
    kept, misfit = prune_events(greens, data, [12, 20, 4])
    assert kept.tolist() == [0, 2]
    assert misfit < 1e-20 * np.sum(np.abs(data) ** 2)


def test_pruning_keeps_one_event(rng):
    greens = _random_greens(rng)
    data = np.zeros((3, 12), dtype=np.complex128)
    kept, _ = prune_events(greens, data, [3, 7, 11])
    assert kept.size == 1
