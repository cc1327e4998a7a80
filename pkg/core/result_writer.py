import logging
import os
import threading

import pandas as pd

from core.grid_handler import GridFileHandler
from utils.helpers import create_directories

logger = logging.getLogger(__name__)

MANIFEST_NAME = "MANIFEST.csv"


class ResultWriter:
    """
    Single writer for every file a run produces.

    The output directory is created on the first write. Each file is recorded
    with a short description; :meth:`finalize` writes ``MANIFEST.csv`` listing
    what was written and whether the run completed.
    """

    def __init__(self, output_dir):
        self.output_dir = output_dir
        self.entries = []
        self._lock = threading.Lock()

    def path(self, name):
        return os.path.join(self.output_dir, name)

    def _record(self, name, description):
        self.entries.append({"file": name, "description": description})
        logger.debug("Wrote %s", self.path(name))

    def _prepare(self):
        create_directories([self.output_dir])

    def write_table(self, df, name, description):
        with self._lock:
            self._prepare()
            GridFileHandler.write_table(df, self.path(name))
            self._record(name, description)
        return self.path(name)

    def write_model(self, model, name, description):
        with self._lock:
            self._prepare()
            GridFileHandler.write_model(model, self.path(name))
            self._record(name, description)
        return self.path(name)

    def write_grid(self, grid, fields, name, description, dtype="f8"):
        with self._lock:
            self._prepare()
            GridFileHandler.write_grid(grid, fields, self.path(name), dtype)
            self._record(name, description)
        return self.path(name)

    def finalize(self, complete, status="ok"):
        """
        Write the manifest.

        Args:
            complete (bool): Whether every planned output was written
            status (str): Outcome label, e.g. "ok", "not converged", "failed"

        Returns:
            str: Path of the manifest
        """
        with self._lock:
            self._prepare()
            manifest = pd.DataFrame(self.entries, columns=["file", "description"])
            manifest["complete"] = complete
            manifest["status"] = status
            GridFileHandler.write_table(manifest, self.path(MANIFEST_NAME))
        return self.path(MANIFEST_NAME)
