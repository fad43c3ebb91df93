import os
import sys
import logging
import hashlib

NUM_THREADS_ENV = "DMSM_NUM_THREADS"

def configure_logging(level: int | str = logging.INFO, log_file: str | None = None):
    """Installs the handlers used by the command line tools. Calling it twice replaces the previous handlers."""
    handlers: list[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    if log_file is not None:
        handlers.append(logging.FileHandler(log_file))
    logging.basicConfig(
        level=level,
        format="%(asctime)s - %(levelname)s - %(name)s - %(message)s",
        handlers=handlers,
        force=True,
    )

def num_threads() -> int | None:
    """The worker cap from DMSM_NUM_THREADS, or None if unset"""
    value = os.environ.get(NUM_THREADS_ENV)
    if value is None or value.strip() == "":
        return None
    n = int(value)
    if n < 1:
        raise ValueError(f"{NUM_THREADS_ENV} must be a positive integer, got {value}")
    return n

def apply_thread_cap():
    """Caps torch intra-op parallelism if DMSM_NUM_THREADS is set. Returns the cap."""
    import torch
    n = num_threads()
    if n is not None:
        torch.set_num_threads(n)
    return n

def derive_seed(*parts: int) -> int:
    """Derives a 63-bit seed from a tuple of integers. Same parts, same seed, on every platform."""
    h = hashlib.sha256(",".join(str(int(p)) for p in parts).encode()).digest()
    return int.from_bytes(h[:8], "little") & ((1 << 63) - 1)

def make_generator(seed: int, device: str = "cpu"):
    import torch
    g = torch.Generator(device=device)
    g.manual_seed(seed)
    return g

def file_sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()

def resolve_device(device: str) -> str:
    import torch
    if device == "auto":
        return "cuda" if torch.cuda.is_available() else "cpu"
    return device
