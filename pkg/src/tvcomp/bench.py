"""Transfer-cost estimation and wall-clock load benchmarking."""

from __future__ import annotations

import os
import time
from dataclasses import dataclass

from .codec import BLOB_MAGIC, decode_tensors, read_blob
from .errors import IoFailure
from .tensor_store import MAGIC as CONTAINER_MAGIC
from .tensor_store import load_container


@dataclass(frozen=True)
class TransferModel:
    bandwidth_bits_per_sec: float
    fixed_latency_sec: float = 0.0

    def __post_init__(self):
        if self.bandwidth_bits_per_sec <= 0:
            raise ValueError("bandwidth must be positive")
        if self.fixed_latency_sec < 0:
            raise ValueError("latency must be non-negative")


@dataclass(frozen=True)
class BenchReport:
    trials: int
    mean_sec: float
    std_sec: float
    size_bits: int


def estimate_transfer(size_bits: int, tm: TransferModel) -> float:
    """Seconds to move size_bits over the modeled link."""
    if size_bits < 0:
        raise ValueError("size must be non-negative")
    return tm.fixed_latency_sec + size_bits / tm.bandwidth_bits_per_sec


def _load_and_decode(path) -> None:
    with open(path, "rb") as f:
        magic = f.read(5)
    if magic == CONTAINER_MAGIC:
        load_container(path)
    elif magic[:4] == BLOB_MAGIC:
        decode_tensors(read_blob(path))
    else:
        from .codec import ARTIFACT_MAGIC, load_artifact

        if magic[:4] == ARTIFACT_MAGIC:
            load_artifact(path)
        else:
            raise IoFailure(f"{path}: unrecognized file type")


def _read_only(path) -> None:
    with open(path, "rb") as f:
        while f.read(1 << 20):
            pass


def bench_load(path, trials: int = 10, read_only: bool = False, drop_caches: bool = False) -> BenchReport:
    """Time reading (and by default fully decoding) the file `trials` times."""
    if not os.path.exists(path):
        raise IoFailure(f"{path}: no such file")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    size_bits = os.path.getsize(path) * 8
    times = []
    for _ in range(trials):
        if drop_caches:
            _advise_dontneed(path)
        t0 = time.perf_counter()
        if read_only:
            _read_only(path)
        else:
            _load_and_decode(path)
        times.append(time.perf_counter() - t0)
    n = len(times)
    mean = sum(times) / n
    var = sum((t - mean) ** 2 for t in times) / n
    return BenchReport(trials=n, mean_sec=mean, std_sec=var**0.5, size_bits=size_bits)


def _advise_dontneed(path) -> None:
    # best effort: ask the kernel to evict the page cache for this file
    try:
        fd = os.open(path, os.O_RDONLY)
        try:
            os.posix_fadvise(fd, 0, 0, os.POSIX_FADV_DONTNEED)
        finally:
            os.close(fd)
    except (OSError, AttributeError):
        pass
