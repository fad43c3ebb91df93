import pytest
import logging
import torch
from src.util import NUM_THREADS_ENV, configure_logging, num_threads, derive_seed, make_generator, file_sha256, resolve_device

def test_derive_seed():
    assert derive_seed(1, 2, 3) == derive_seed(1, 2, 3)
    assert derive_seed(1, 2, 3) != derive_seed(1, 3, 2)
    assert 0 <= derive_seed(0) < 2 ** 63

def test_make_generator():
    a = torch.rand(4, generator=make_generator(3))
    b = torch.rand(4, generator=make_generator(3))
    assert torch.equal(a, b)

def test_num_threads(monkeypatch):
    monkeypatch.delenv(NUM_THREADS_ENV, raising=False)
    assert num_threads() is None
    monkeypatch.setenv(NUM_THREADS_ENV, "3")
    assert num_threads() == 3
    monkeypatch.setenv(NUM_THREADS_ENV, "0")
    with pytest.raises(ValueError):
        num_threads()

def test_file_sha256(tmp_path):
    path = tmp_path / "empty"
    path.write_bytes(b"")
    assert file_sha256(str(path)) == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"

def test_configure_logging_to_file(tmp_path):
    log_file = tmp_path / "run.log"
    configure_logging(logging.INFO, str(log_file))
    logging.getLogger("src.test").info("hello")
    logging.getLogger("src.test").debug("hidden")
    for handler in logging.getLogger().handlers:
        handler.flush()
    text = log_file.read_text()
    assert "INFO - src.test - hello" in text
    assert "hidden" not in text

def test_resolve_device():
    assert resolve_device("cpu") == "cpu"
    assert resolve_device("auto") in ("cpu", "cuda")
