import json
import os

import numpy as np
import pandas as pd
from openpyxl.styles import Font, PatternFill

from core.errors import DimensionMismatchError, GridFormatError, NonFiniteError
from core.grid import Grid, Model
from core.synthesis import SpectraData

HEADER_SIZE = 64
GRID_MAGIC = "SLGRID"
DATA_MAGIC = "SLDATA"
DTYPES = {"f8": np.dtype("<f8"), "c16": np.dtype("<c16")}

PASS_FILL = PatternFill(start_color="C6E0B4", end_color="C6E0B4", fill_type="solid")
FAIL_FILL = PatternFill(start_color="F8CBAD", end_color="F8CBAD", fill_type="solid")


def _encode_header(magic, fields):
    text = " ".join([magic] + [f"{key}={value}" for key, value in fields.items()])
    if len(text) > HEADER_SIZE - 1:
        raise GridFormatError(f"Header '{text}' does not fit in {HEADER_SIZE} bytes")
    return (text.ljust(HEADER_SIZE - 1) + "\n").encode("ascii")


def _decode_header(raw, magic, required):
    if len(raw) < HEADER_SIZE:
        raise GridFormatError("File is shorter than its header")
    try:
        tokens = raw[:HEADER_SIZE].decode("ascii").split()
    except UnicodeDecodeError as exc:
        raise GridFormatError("Header is not ASCII text") from exc
    if not tokens or tokens[0] != magic:
        raise GridFormatError(f"Bad magic word, expected {magic}")
    fields = {}
    for token in tokens[1:]:
        key, sep, value = token.partition("=")
        if not sep:
            raise GridFormatError(f"Malformed header token '{token}'")
        fields[key] = value
    missing = [key for key in required if key not in fields]
    if missing:
        raise GridFormatError(f"Header is missing {', '.join(missing)}")
    return fields


def _parse_int(fields, key):
    try:
        return int(fields[key])
    except ValueError as exc:
        raise GridFormatError(f"Header value {key}={fields[key]} is not an integer") from exc


def _dtype(fields):
    if fields["dtype"] not in DTYPES:
        raise GridFormatError(f"Unsupported dtype '{fields['dtype']}'")
    return DTYPES[fields["dtype"]]


def _read_bytes(file_path):
    if not os.path.exists(file_path):
        raise FileNotFoundError(f"File not found: {file_path}")
    with open(file_path, "rb") as handle:
        return handle.read()


def _ensure_parent(file_path):
    output_dir = os.path.dirname(file_path)
    if output_dir and not os.path.exists(output_dir):
        os.makedirs(output_dir)


class GridFileHandler:
    """
    Reads and writes gridded fields, models, receiver spectra and result tables.
    """

    @staticmethod
    def write_grid(grid, fields, file_path, dtype="f8"):
        """
        Write one or more interior fields to a binary grid file.

        Args:
            grid (Grid): The grid the fields live on
            fields (numpy.ndarray): Array of shape (nfields, N) or (N,)
            file_path (str): Output path
            dtype (str): "f8" for real fields, "c16" for complex fields

        Returns:
            str: The written path
        """
        values = np.atleast_2d(np.asarray(fields))
        if values.shape[1] != grid.n:
            raise DimensionMismatchError(f"Fields have {values.shape[1]} values, grid has {grid.n} cells")
        if dtype not in DTYPES:
            raise GridFormatError(f"Unsupported dtype '{dtype}'")
        header = _encode_header(GRID_MAGIC, {
            "nz": grid.nz,
            "nx": grid.nx,
            "h": repr(float(grid.h)),
            "pml": grid.pml_width,
            "nfields": values.shape[0],
            "dtype": dtype,
        })
        _ensure_parent(file_path)
        with open(file_path, "wb") as handle:
            handle.write(header)
            handle.write(values.astype(DTYPES[dtype]).tobytes())
        return file_path

    @staticmethod
    def read_grid(file_path):
        """
        Read a binary grid file.

        Args:
            file_path (str): Path to the file

        Returns:
            tuple: (Grid, numpy.ndarray of shape (nfields, N))
        """
        raw = _read_bytes(file_path)
        fields = _decode_header(raw, GRID_MAGIC, ["nz", "nx", "h", "pml", "nfields", "dtype"])
        nz, nx = _parse_int(fields, "nz"), _parse_int(fields, "nx")
        pml, nfields = _parse_int(fields, "pml"), _parse_int(fields, "nfields")
        try:
            h = float(fields["h"])
        except ValueError as exc:
            raise GridFormatError(f"Header value h={fields['h']} is not a number") from exc
        dtype = _dtype(fields)
        grid = Grid(nz, nx, h, pml)

        payload = raw[HEADER_SIZE:]
        expected = nfields * grid.n * dtype.itemsize
        if len(payload) != expected:
            raise DimensionMismatchError(
                f"Header declares {nfields} x {nz}x{nx} values ({expected} bytes), payload has {len(payload)} bytes"
            )
        values = np.frombuffer(payload, dtype=dtype).reshape(nfields, grid.n).copy()
        if not np.all(np.isfinite(values)):
            raise NonFiniteError(f"Non-finite values in {file_path}")
        return grid, values

    @staticmethod
    def write_model(model, file_path):
        """Write m, m_min and m_max as a three-field real grid file."""
        fields = np.vstack([model.m, model.m_min, model.m_max])
        return GridFileHandler.write_grid(model.grid, fields, file_path, "f8")

    @staticmethod
    def read_model(file_path):
        """
        Read a model written by :meth:`write_model`.

        Returns:
            Model: The model, bit-identical to the one written
        """
        grid, values = GridFileHandler.read_grid(file_path)
        if values.shape[0] != 3 or np.iscomplexobj(values):
            raise GridFormatError("A model file holds exactly three real fields (m, m_min, m_max)")
        return Model(grid, values[0], values[1], values[2])

    @staticmethod
    def write_spectra(spectra, file_path):
        """
        Write receiver spectra plus a JSON provenance sidecar ``<file>.json``.

        Returns:
            str: The written path
        """
        header = _encode_header(DATA_MAGIC, {
            "nr": spectra.n_receivers,
            "nf": spectra.n_frequencies,
            "dtype": "c16",
        })
        _ensure_parent(file_path)
        with open(file_path, "wb") as handle:
            handle.write(header)
            handle.write(spectra.omegas.astype("<f8").tobytes())
            handle.write(spectra.receivers.astype("<i8").tobytes())
            handle.write(spectra.values.astype("<c16").tobytes())
        with open(file_path + ".json", "w", encoding="utf-8") as handle:
            json.dump(spectra.metadata, handle, indent=2, sort_keys=True)
        return file_path

    @staticmethod
    def read_spectra(file_path):
        """
        Read receiver spectra and, when present, their provenance sidecar.

        Returns:
            SpectraData: The spectra
        """
        raw = _read_bytes(file_path)
        fields = _decode_header(raw, DATA_MAGIC, ["nr", "nf", "dtype"])
        nr, nf = _parse_int(fields, "nr"), _parse_int(fields, "nf")
        if fields["dtype"] != "c16":
            raise GridFormatError("Spectra must be stored as c16")
        payload = raw[HEADER_SIZE:]
        expected = nf * 8 + nr * 8 + nf * nr * 16
        if len(payload) != expected:
            raise DimensionMismatchError(f"Header declares nr={nr}, nf={nf} ({expected} bytes), payload has {len(payload)}")
        omegas = np.frombuffer(payload[:nf * 8], dtype="<f8").copy()
        receivers = np.frombuffer(payload[nf * 8:nf * 8 + nr * 8], dtype="<i8").copy()
        values = np.frombuffer(payload[nf * 8 + nr * 8:], dtype="<c16").reshape(nf, nr).copy()
        if not (np.all(np.isfinite(values)) and np.all(np.isfinite(omegas))):
            raise NonFiniteError(f"Non-finite values in {file_path}")

        metadata = {}
        sidecar = file_path + ".json"
        if os.path.exists(sidecar):
            with open(sidecar, encoding="utf-8") as handle:
                metadata = json.load(handle)
        return SpectraData(omegas, receivers, values, metadata)

    @staticmethod
    def write_table(df, file_path):
        """Write a DataFrame to CSV (headers carry the units)."""
        _ensure_parent(file_path)
        df.to_csv(file_path, index=False)
        return file_path

    @staticmethod
    def read_table(file_path):
        if not os.path.exists(file_path):
            raise FileNotFoundError(f"File not found: {file_path}")
        return pd.read_csv(file_path)

    @staticmethod
    def write_multiple_sheets(dfs_dict, output_file, status_column="within tolerance"):
        """
        Write multiple DataFrames to an Excel file, each in its own sheet, with formatting.

        Header rows are bold; cells of ``status_column`` are green when true and red when false.

        Args:
            dfs_dict (dict): {sheet_name: DataFrame}
            output_file (str): Path where the output file will be saved
            status_column (str): Name of the boolean pass/fail column

        Returns:
            str: The written path
        """
        _ensure_parent(output_file)
        with pd.ExcelWriter(output_file, engine="openpyxl") as writer:
            for sheet_name, df in dfs_dict.items():
                df.to_excel(writer, index=False, sheet_name=sheet_name)
                worksheet = writer.sheets[sheet_name]
                for cell in worksheet[1]:
                    cell.font = Font(bold=True)

                if status_column not in df.columns:
                    continue
                status_idx = list(df.columns).index(status_column)
                for row in worksheet.iter_rows(min_row=2, max_row=len(df) + 1):
                    status_cell = row[status_idx]
                    if status_cell.value is True:
                        status_cell.fill = PASS_FILL
                    elif status_cell.value is False:
                        status_cell.fill = FAIL_FILL
        return output_file
