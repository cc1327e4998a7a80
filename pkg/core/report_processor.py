import logging
import os

import numpy as np
import pandas as pd

from core.events import match_events, signature_correlation, signature_error
from core.grid_handler import GridFileHandler
from core.synthesis import ricker_spectrum

logger = logging.getLogger(__name__)

EVENT_COLUMNS = ["event_id", "z (m)", "x (m)", "confidence"]
TRUTH_COLUMNS = ["true_event_id", "true z (m)", "true x (m)", "f_central (Hz)", "t_central (s)", "amplitude"]


class ReportProcessor:
    """
    Builds the summary tables of the ``report`` command from the files a run wrote.
    """

    @staticmethod
    def validate_dataframe(df, required_columns):
        """
        Validate that a DataFrame has the required columns.

        Args:
            df (pandas.DataFrame): The DataFrame to validate
            required_columns (list): List of required column names

        Returns:
            tuple: (bool, list) - Success status and list of missing columns
        """
        available_columns = df.columns.tolist()
        missing_columns = [col for col in required_columns if col not in available_columns]
        return len(missing_columns) == 0, missing_columns

    @staticmethod
    def truth_frame(metadata):
        """
        True events from a spectra provenance record.

        Args:
            metadata (dict): Sidecar content with an ``events`` list

        Returns:
            pandas.DataFrame: One row per true event (empty when none are known)
        """
        events = (metadata or {}).get("events") or []
        rows = [
            {
                "true_event_id": idx + 1,
                "true z (m)": float(ev["z"]),
                "true x (m)": float(ev["x"]),
                "f_central (Hz)": float(ev["f_central"]),
                "t_central (s)": float(ev["t_central"]),
                "amplitude": float(ev.get("amplitude", 1.0)),
            }
            for idx, ev in enumerate(events)
        ]
        return pd.DataFrame(rows, columns=TRUTH_COLUMNS)

    @staticmethod
    def compare_events(events_df, truth_df, tolerance_m):
        """
        Match picked events to true events and measure location errors.

        Args:
            events_df (pandas.DataFrame): Picked events (events.csv layout)
            truth_df (pandas.DataFrame): True events (see :meth:`truth_frame`)
            tolerance_m (float): Location error accepted as a hit, in meters

        Returns:
            pandas.DataFrame: Picks with their matched true event, error and pass flag;
            unmatched picks are flagged as spurious
        """
        result = events_df[EVENT_COLUMNS].copy()
        result["true_event_id"] = np.nan
        result["location error (m)"] = np.nan
        result["within tolerance"] = False

        pairs = match_events(
            events_df[["z (m)", "x (m)"]].to_numpy(dtype=float),
            truth_df[["true z (m)", "true x (m)"]].to_numpy(dtype=float),
        )
        for pick_idx, true_idx, distance in pairs:
            result.loc[result.index[pick_idx], "true_event_id"] = int(truth_df["true_event_id"].iloc[true_idx])
            result.loc[result.index[pick_idx], "location error (m)"] = distance
            result.loc[result.index[pick_idx], "within tolerance"] = bool(distance <= tolerance_m)
        result["within tolerance"] = result["within tolerance"].astype(bool)
        return result

    @staticmethod
    def compare_signatures(signatures_df, comparison_df, truth_df):
        """
        Signature error and correlation of every matched pick against its true Ricker spectrum.

        Args:
            signatures_df (pandas.DataFrame): signatures.csv layout
            comparison_df (pandas.DataFrame): Output of :meth:`compare_events`
            truth_df (pandas.DataFrame): True events

        Returns:
            pandas.DataFrame: event_id, true_event_id, signature error (rel), signature correlation
        """
        rows = []
        matched = comparison_df.dropna(subset=["true_event_id"])
        for _, row in matched.iterrows():
            sig = signatures_df[signatures_df["event_id"] == row["event_id"]].sort_values("frequency (Hz)")
            if sig.empty:
                continue
            estimated = sig["real"].to_numpy() + 1j * sig["imag"].to_numpy()
            omegas = 2.0 * np.pi * sig["frequency (Hz)"].to_numpy()
            truth = truth_df[truth_df["true_event_id"] == row["true_event_id"]].iloc[0]
            expected = truth["amplitude"] * ricker_spectrum(truth["f_central (Hz)"], truth["t_central (s)"], omegas)
            rows.append({
                "event_id": int(row["event_id"]),
                "true_event_id": int(row["true_event_id"]),
                "signature error (rel)": signature_error(estimated, expected),
                "signature correlation": signature_correlation(estimated, expected),
            })
        return pd.DataFrame(
            rows, columns=["event_id", "true_event_id", "signature error (rel)", "signature correlation"]
        )

    @staticmethod
    def iteration_summary(events_by_iteration, signatures_by_iteration, truth_df):
        """
        Mean location error and mean signature correlation per outer iteration.

        Returns:
            pandas.DataFrame: outer_iteration, n_events, mean location error (m), mean signature correlation
        """
        rows = []
        if events_by_iteration is None or events_by_iteration.empty:
            return pd.DataFrame(
                rows, columns=["outer_iteration", "n_events", "mean location error (m)", "mean signature correlation"]
            )
        for iteration, picks in events_by_iteration.groupby("outer_iteration"):
            comparison = ReportProcessor.compare_events(picks, truth_df, np.inf)
            errors = comparison["location error (m)"].dropna()
            correlation = np.nan
            if signatures_by_iteration is not None and not truth_df.empty:
                sigs = signatures_by_iteration[signatures_by_iteration["outer_iteration"] == iteration]
                sig_table = ReportProcessor.compare_signatures(sigs, comparison, truth_df)
                if not sig_table.empty:
                    correlation = float(sig_table["signature correlation"].mean())
            rows.append({
                "outer_iteration": int(iteration),
                "n_events": len(picks),
                "mean location error (m)": float(errors.mean()) if not errors.empty else np.nan,
                "mean signature correlation": correlation,
            })
        return pd.DataFrame(rows)

    @staticmethod
    def residual_curves(history_df):
        """Residual columns of the iteration history, ready for external plotting."""
        columns = [c for c in history_df.columns if c == "outer_iteration" or "(rel)" in c]
        return history_df[columns].copy()

    @staticmethod
    def summary_lines(comparison_df, signature_df, history_df, tolerance_m):
        """
        Human-readable summary of a run.

        Returns:
            list: Lines of text
        """
        lines = [f"Picked events: {len(comparison_df)}"]
        has_truth = bool(comparison_df["true_event_id"].notna().any())
        for _, row in comparison_df.iterrows():
            line = f"  #{int(row['event_id'])}: z={row['z (m)']:.1f} m, x={row['x (m)']:.1f} m, confidence={row['confidence']:.3g}"
            if not pd.isna(row["true_event_id"]):
                status = "ok" if row["within tolerance"] else "off"
                line += f" -> true #{int(row['true_event_id'])}, error {row['location error (m)']:.1f} m ({status})"
            elif has_truth:
                line += " -> spurious"
            lines.append(line)
        if has_truth:
            hits = int(comparison_df["within tolerance"].sum())
            lines.append(f"Within {tolerance_m:g} m of a true event: {hits} of {len(comparison_df)}")
        for _, row in signature_df.iterrows():
            lines.append(
                f"  signature #{int(row['event_id'])}: relative error {row['signature error (rel)']:.3f}, "
                f"correlation {row['signature correlation']:.3f}"
            )
        if not history_df.empty:
            last = history_df.iloc[-1]
            lines.append(
                f"Outer iterations: {len(history_df)}, final data residual {last['data_residual (rel)']:.3e}"
            )
        return lines

    @staticmethod
    def build_report(output_dir, metadata, tolerance_m):
        """
        Read the outputs of a run and assemble every report table.

        Args:
            output_dir (str): Directory written by ``invert`` or ``locate``
            metadata (dict): Provenance of the data (true events when synthetic)
            tolerance_m (float): Location tolerance in meters

        Returns:
            dict: {sheet name: DataFrame} plus the text summary under "lines"
        """
        events_df = GridFileHandler.read_table(os.path.join(output_dir, "events.csv"))
        is_valid, missing = ReportProcessor.validate_dataframe(events_df, EVENT_COLUMNS)
        if not is_valid:
            raise ValueError(f"events.csv is missing columns: {missing}")
        history_df = GridFileHandler.read_table(os.path.join(output_dir, "history.csv"))
        signatures_df = GridFileHandler.read_table(os.path.join(output_dir, "signatures.csv"))

        events_by_iteration = None
        signatures_by_iteration = None
        path = os.path.join(output_dir, "events_by_iteration.csv")
        if os.path.exists(path):
            events_by_iteration = GridFileHandler.read_table(path)
        path = os.path.join(output_dir, "signatures_by_iteration.csv")
        if os.path.exists(path):
            signatures_by_iteration = GridFileHandler.read_table(path)

        truth_df = ReportProcessor.truth_frame(metadata)
        comparison = ReportProcessor.compare_events(events_df, truth_df, tolerance_m)
        signature_table = ReportProcessor.compare_signatures(signatures_df, comparison, truth_df)
        iterations = ReportProcessor.iteration_summary(events_by_iteration, signatures_by_iteration, truth_df)
        return {
            "Events": comparison,
            "Signatures": signature_table,
            "Iterations": iterations,
            "Residuals": ReportProcessor.residual_curves(history_df),
            "Truth": truth_df,
            "lines": ReportProcessor.summary_lines(comparison, signature_table, history_df, tolerance_m),
        }
