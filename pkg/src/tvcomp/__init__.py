"""tvcomp: sparse ternary compression and algebra for task vectors."""

from . import bench, codec, compose, core, decompose, merge, sweep, tensor_store, ternary_ops
from .core import CompressedArtifact, TernaryTensor, compress, reconstruct
from .estimator import TernaryCompressor
from .tensor_store import TaskVector, load_container, save_container

__all__ = [
    "bench",
    "codec",
    "compose",
    "core",
    "decompose",
    "merge",
    "sweep",
    "tensor_store",
    "ternary_ops",
    "CompressedArtifact",
    "TernaryTensor",
    "TernaryCompressor",
    "TaskVector",
    "compress",
    "reconstruct",
    "load_container",
    "save_container",
]

__version__ = "0.1.0"
