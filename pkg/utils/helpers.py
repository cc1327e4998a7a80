import logging
import os
from concurrent.futures import ThreadPoolExecutor

LOG_FORMAT = "%(asctime)s %(levelname)-7s %(name)s: %(message)s"


def require_file(file_path, description="Input file"):
    """
    Validate that an input file exists.

    Args:
        file_path (str): Path to check
        description (str): Name used in the error message

    Returns:
        str: The path with surrounding quotes removed

    Raises:
        FileNotFoundError: If the file does not exist
    """
    file_path = str(file_path).strip().strip('"')
    if not os.path.isfile(file_path):
        raise FileNotFoundError(f"{description} not found at '{file_path}'")
    return file_path


def create_directories(path_list):
    """
    Create all directories in the given list if they don't exist.

    Args:
        path_list (list): List of directory paths to create
    """
    for directory in path_list:
        if not os.path.exists(directory):
            os.makedirs(directory)
            logging.getLogger(__name__).info("Created directory: %s", directory)


def setup_logging(verbosity=0):
    """
    Configure the root logger for command-line use.

    Args:
        verbosity (int): -1 for warnings only, 0 for info, 1 or more for debug
    """
    if verbosity < 0:
        level = logging.WARNING
    elif verbosity == 0:
        level = logging.INFO
    else:
        level = logging.DEBUG
    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)
    handler = logging.StreamHandler()
    handler.setFormatter(logging.Formatter(LOG_FORMAT, datefmt="%H:%M:%S"))
    root.addHandler(handler)
    root.setLevel(level)


def thread_map(func, items, threads=1):
    """
    Apply ``func`` to every item, optionally on a thread pool.

    Results come back in input order whatever the thread count.

    Args:
        func (callable): Function of one argument
        items (iterable): Inputs
        threads (int): Worker count; 1 runs inline

    Returns:
        list: ``[func(item) for item in items]``
    """
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as executor:
        return list(executor.map(func, items))
