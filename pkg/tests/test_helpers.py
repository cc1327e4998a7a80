import logging
import threading

import pytest

from utils.helpers import create_directories, require_file, setup_logging, thread_map


def test_require_file(tmp_path):
    path = tmp_path / "data.bin"
    path.write_bytes(b"x")
    assert require_file(f'"{path}"') == str(path)
    with pytest.raises(FileNotFoundError):
        require_file(str(tmp_path / "absent.bin"), "Data file")


def test_create_directories(tmp_path):
    targets = [str(tmp_path / "a"), str(tmp_path / "b" / "c")]
    create_directories(targets)
    create_directories(targets)
    assert (tmp_path / "a").is_dir()
    assert (tmp_path / "b" / "c").is_dir()


def test_thread_map_keeps_order():
    assert thread_map(lambda x: x * x, range(6)) == [0, 1, 4, 9, 16, 25]
    assert thread_map(lambda x: x * x, range(6), threads=3) == [0, 1, 4, 9, 16, 25]
    assert thread_map(lambda x: x, [], threads=4) == []


def test_thread_map_uses_workers():
    names = set(thread_map(lambda _: threading.current_thread().name, range(8), threads=4))
    assert threading.current_thread().name not in names


def test_setup_logging_levels():
    root = logging.getLogger()
    handlers, level = list(root.handlers), root.level
    try:
        setup_logging(-1)
        assert root.level == logging.WARNING
        setup_logging(2)
        assert root.level == logging.DEBUG
        assert len(root.handlers) == 1
    finally:
        root.handlers[:] = handlers
        root.setLevel(level)
