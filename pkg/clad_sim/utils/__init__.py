"""Utility modules for logging, file management and seed streams."""

from .file_manager import FileManager
from .logger import add_file_handler, setup_logger
from .seeding import as_generator, combine_seeds, rng_for

__all__ = [
    "FileManager",
    "setup_logger",
    "add_file_handler",
    "rng_for",
    "combine_seeds",
    "as_generator",
]
