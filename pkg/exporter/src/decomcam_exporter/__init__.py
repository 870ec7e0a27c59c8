"""Tensor-dump exporter and live scoring endpoint for real torch models."""

from .adapters import ClipAdapter, ResNetAdapter, load_image, make_adapter
from .dcam_writer import write_dump
from .server import ScoreServer

__version__ = "0.1.0"

__all__ = [
    "ClipAdapter",
    "ResNetAdapter",
    "ScoreServer",
    "load_image",
    "make_adapter",
    "write_dump",
]
