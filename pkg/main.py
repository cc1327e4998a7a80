import argparse
import logging
import os
import sys

import numpy as np
import pandas as pd

# Add project root to sys.path to allow importing from project modules
project_root = os.path.dirname(os.path.abspath(__file__))
sys.path.insert(0, project_root)

from config.run_config import load_run_config
from core.errors import SeisLocError
from core.grid_handler import GridFileHandler
from core.inversion import predicted_data, run_inversion
from core.report_processor import ReportProcessor
from core.result_writer import ResultWriter
from core.synthesis import synthesize_data, synthesize_seismograms, time_axis, true_event_set
from utils.helpers import require_file, setup_logging

logger = logging.getLogger("seisloc")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NOT_CONVERGED = 4


def seismogram_frame(values, omegas, receivers, times):
    """Traces as a table: one time column, one column per receiver."""
    traces = synthesize_seismograms(values, omegas, times)
    frame = pd.DataFrame(traces.T, columns=[f"receiver_{int(r)}" for r in receivers])
    frame.insert(0, "time (s)", times)
    return frame


def _load(args, **extra):
    overrides = {"seed": args.seed, "threads": args.threads, "output": args.output}
    overrides.update(extra)
    return load_run_config(args.config, overrides)


def command_forward(args):
    """Synthesize receiver spectra for the configured events."""
    run_config = _load(args)
    acquisition = run_config.build_acquisition()
    true_model = run_config.build_true_model()
    writer = ResultWriter(run_config.output_dir)

    print(f"Synthesizing {len(run_config.events)} events at {acquisition.n_frequencies} frequencies...")
    spectra = synthesize_data(
        true_model, list(run_config.events), acquisition,
        seed=run_config.seed, snr_db=run_config.snr_db, threads=run_config.inversion.threads,
    )
    GridFileHandler.write_spectra(spectra, run_config.data_path)
    print(f"Data written to {run_config.data_path}")

    truth = true_event_set(run_config.grid, list(run_config.events), acquisition.omegas)
    writer.write_model(true_model, "true_model.bin", "model used for synthesis")
    writer.write_table(truth.to_frame(run_config.grid), "true_events.csv", "planted events")
    writer.write_table(
        truth.signatures_frame(acquisition.frequencies_hz), "true_signatures.csv", "planted event spectra"
    )
    times = time_axis(run_config.record_duration, run_config.dt)
    writer.write_table(
        seismogram_frame(spectra.values, spectra.omegas, spectra.receivers, times),
        "seismograms_observed.csv", "observed traces",
    )
    writer.finalize(complete=True)
    print(f"\nSuccess! Results saved to {run_config.output_dir}")
    return EXIT_OK


def command_invert(args, update_model=None):
    """Run the inversion; ``locate`` is the same with the model update forced off."""
    run_config = _load(args, update_model=update_model)
    data_path = require_file(run_config.data_path, "Data file")
    spectra = GridFileHandler.read_spectra(data_path)
    acquisition = run_config.build_acquisition()
    spectra.check_acquisition(acquisition)
    model0 = run_config.build_initial_model()
    grid = run_config.grid
    writer = ResultWriter(run_config.output_dir)

    def on_iteration(state, record):
        if not args.snapshots:
            return
        k = record["outer_iteration"]
        writer.write_grid(
            grid, np.vstack([state.mean_source, state.prox_argument]),
            f"mean_source_{k:03d}.bin", f"mean source and prox argument, iteration {k}", dtype="c16",
        )
        writer.write_model(state.model, f"model_{k:03d}.bin", f"model after iteration {k}")

    print(f"Inverting {spectra.n_frequencies} frequencies from {spectra.n_receivers} receivers...")
    try:
        result = run_inversion(model0, acquisition, spectra, run_config.inversion, on_iteration=on_iteration)
    except SeisLocError:
        if writer.entries:
            writer.finalize(complete=False, status="failed")
        raise

    events_by_iteration = []
    signatures_by_iteration = []
    for k, events in enumerate(result.event_history, start=1):
        frame = events.to_frame(grid)
        frame.insert(0, "outer_iteration", k)
        events_by_iteration.append(frame)
        frame = events.signatures_frame(acquisition.frequencies_hz)
        frame.insert(0, "outer_iteration", k)
        signatures_by_iteration.append(frame)

    writer.write_table(result.events.to_frame(grid), "events.csv", "picked events")
    writer.write_table(
        result.events.signatures_frame(acquisition.frequencies_hz), "signatures.csv", "event spectra"
    )
    writer.write_table(pd.concat(events_by_iteration, ignore_index=True), "events_by_iteration.csv",
                       "picked events per outer iteration")
    writer.write_table(pd.concat(signatures_by_iteration, ignore_index=True), "signatures_by_iteration.csv",
                       "event spectra per outer iteration")
    writer.write_table(result.history, "history.csv", "iteration history")
    writer.write_model(result.model, "model_final.bin", "final model")
    writer.write_grid(grid, result.state.mean_source, "mean_source_final.bin", "final mean source", dtype="c16")

    times = time_axis(run_config.record_duration, run_config.dt)
    writer.write_table(seismogram_frame(spectra.values, spectra.omegas, spectra.receivers, times),
                       "seismograms_observed.csv", "observed traces")
    writer.write_table(seismogram_frame(predicted_data(result.state), spectra.omegas, spectra.receivers, times),
                       "seismograms_predicted.csv", "data-assimilated traces")

    status = "ok" if result.converged else "not converged"
    writer.finalize(complete=True, status=status)
    print(f"\nPicked {result.events.p} events; results saved to {run_config.output_dir}")
    if not result.converged:
        print("Warning: tolerances not met within n_outer iterations")
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def command_locate(args):
    return command_invert(args, update_model=False)


def command_report(args):
    """Summarize a finished run, comparing with the true events when the data are synthetic."""
    run_config = _load(args)
    output_dir = run_config.output_dir
    metadata = {}
    if run_config.data_path and os.path.exists(run_config.data_path + ".json"):
        metadata = GridFileHandler.read_spectra(run_config.data_path).metadata

    tables = ReportProcessor.build_report(output_dir, metadata, run_config.tolerance_m)
    for line in tables.pop("lines"):
        print(line)

    GridFileHandler.write_table(tables["Residuals"], os.path.join(output_dir, "residuals.csv"))
    report_file = GridFileHandler.write_multiple_sheets(tables, os.path.join(output_dir, "report.xlsx"))
    print(f"\nReport written to {report_file}")
    return EXIT_OK


COMMANDS = {
    "forward": command_forward,
    "invert": command_invert,
    "locate": command_locate,
    "report": command_report,
}


def build_parser():
    parser = argparse.ArgumentParser(
        description="Locate microseismic events and update the velocity model from frequency-domain data."
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    helps = {
        "forward": "synthesize receiver spectra for the configured events",
        "invert": "locate events and update the model",
        "locate": "locate events with the model held fixed",
        "report": "summarize the outputs of a run",
    }
    for name, help_text in helps.items():
        sub = subparsers.add_parser(name, help=help_text)
        sub.add_argument("--config", required=True, help="run configuration (INI)")
        sub.add_argument("--output", help="output directory (overrides paths.output)")
        sub.add_argument("--seed", type=int, help="random seed (overrides synthesis.seed)")
        sub.add_argument("--threads", type=int, help="concurrent frequency solves")
        sub.add_argument("--snapshots", action="store_true", help="write per-iteration grids")
        sub.add_argument("-v", "--verbose", action="count", default=0, help="more logging")
        sub.add_argument("-q", "--quiet", action="store_true", help="warnings only")
    return parser


def main(argv=None):
    """Main entry point for the application."""
    args = build_parser().parse_args(argv)
    setup_logging(-1 if args.quiet else args.verbose)
    try:
        return COMMANDS[args.command](args)
    except SeisLocError as e:
        print(f"Error: {e}", file=sys.stderr)
        return e.exit_code
    except FileNotFoundError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as e:
        print(f"\nAn error occurred: {str(e)}", file=sys.stderr)
        import traceback
        traceback.print_exc()
        return 1


if __name__ == "__main__":
    sys.exit(main())
