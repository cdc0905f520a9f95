"""
Exception hierarchy for the CLAD simulator.

Library code raises these; only the command-line front end turns them into exit codes.
"""

from typing import Dict, Iterable, List, Optional


class CladError(Exception):
    """Base class for every error raised by the simulator."""


class ConfigurationError(CladError, ValueError):
    """Invalid configuration or incompatible model/input dimensions."""

    def __init__(self, message: str, problems: Optional[Iterable[str]] = None):
        self.problems: List[str] = list(problems or [])
        if self.problems:
            message = message + "\n" + "\n".join(f"  - {p}" for p in self.problems)
        super().__init__(message)


class ShapeError(CladError, ValueError):
    """Array shapes or vector lengths that do not line up."""


class DataError(CladError):
    """Problems with device data or client partitioning."""


class MissingFileError(DataError, FileNotFoundError):
    """A device CSV (or config) file does not exist."""


class MissingColumnError(DataError):
    """The configured label column is absent from a CSV header."""


class EmptyDatasetError(DataError):
    """A file or subset contains no usable samples."""


class MalformedRowError(DataError):
    """One or more CSV rows carry non-numeric feature cells."""

    def __init__(self, path: str, row_numbers: List[int]):
        self.path = path
        self.row_numbers = list(row_numbers)
        shown = ", ".join(str(r) for r in self.row_numbers[:20])
        more = "" if len(self.row_numbers) <= 20 else f" (+{len(self.row_numbers) - 20} more)"
        super().__init__(f"Non-numeric feature values in {path} at row(s) {shown}{more}")


class InsufficientSamplesError(DataError):
    """A device pool cannot supply the requested per-class sample counts."""

    def __init__(self, device_id: int, shortfall: Dict[int, int]):
        self.device_id = device_id
        self.shortfall = dict(shortfall)
        detail = ", ".join(f"class {c}: short by {n}" for c, n in sorted(self.shortfall.items()))
        super().__init__(f"Device {device_id} has too few samples ({detail})")


class FingerprintError(CladError):
    """A client cannot be fingerprinted or calibrated (no benign samples)."""
