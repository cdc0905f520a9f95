"""
File Manager Utility

Owns an output directory and writes every result file atomically: content goes to a
temporary file in the target directory, which then replaces the target in one step.
"""

import json
import logging
import os
import tempfile
from pathlib import Path
from typing import Any, Dict, List, Optional

import pandas as pd


class FileManager:
    """
    Manages file operations for experiment outputs.

    This class handles:
    - Atomic JSON, text and CSV writes
    - Loading what it wrote
    - Managing output subdirectories
    """

    def __init__(self, output_dir: Path):
        """
        Initialize the file manager.

        Args:
            output_dir: Base output directory (created if missing)
        """
        self.output_dir = Path(output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)
        self.logger = logging.getLogger(f"{__name__}")

    def get_file_path(self, filename: str, subdir: Optional[str] = None) -> Path:
        file_dir = self.output_dir / subdir if subdir else self.output_dir
        return file_dir / filename

    def _atomic_write(self, file_path: Path, content: str) -> Path:
        file_path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp_name = tempfile.mkstemp(
            prefix=f".{file_path.name}.", suffix=".tmp", dir=file_path.parent
        )
        try:
            # newline="" keeps "\n" line endings on every platform
            with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
                f.write(content)
            os.replace(tmp_name, file_path)
        except Exception:
            if os.path.exists(tmp_name):
                os.unlink(tmp_name)
            raise
        return file_path

    def save_text(self, content: str, filename: str, subdir: Optional[str] = None) -> Path:
        """
        Save text content to file.

        Args:
            content: Text content to save
            filename: Name of the file
            subdir: Optional subdirectory

        Returns:
            Path to saved file
        """
        file_path = self.get_file_path(filename, subdir)
        try:
            self._atomic_write(file_path, content)
            self.logger.debug(f"Saved text file: {file_path}")
            return file_path
        except Exception as e:
            self.logger.error(f"Failed to save text file {file_path}: {e}")
            raise

    def save_json(self, data: Dict[str, Any], filename: str, subdir: Optional[str] = None) -> Path:
        """
        Save data as JSON file.

        Args:
            data: Data to save
            filename: Name of the file
            subdir: Optional subdirectory

        Returns:
            Path to saved file
        """
        file_path = self.get_file_path(filename, subdir)
        try:
            text = json.dumps(data, indent=2, ensure_ascii=False, default=str) + "\n"
            self._atomic_write(file_path, text)
            self.logger.debug(f"Saved JSON file: {file_path}")
            return file_path
        except Exception as e:
            self.logger.error(f"Failed to save JSON file {file_path}: {e}")
            raise

    def save_csv(self, frame: pd.DataFrame, filename: str, subdir: Optional[str] = None) -> Path:
        """
        Save a DataFrame as CSV without its index.

        Floats are written at full repr precision so identical runs give identical bytes.
        """
        file_path = self.get_file_path(filename, subdir)
        try:
            self._atomic_write(file_path, frame.to_csv(index=False, lineterminator="\n"))
            self.logger.debug(f"Saved CSV file: {file_path} ({len(frame)} rows)")
            return file_path
        except Exception as e:
            self.logger.error(f"Failed to save CSV file {file_path}: {e}")
            raise

    def load_json(self, filename: str, subdir: Optional[str] = None) -> Dict[str, Any]:
        file_path = self.get_file_path(filename, subdir)
        try:
            with open(file_path, "r", encoding="utf-8") as f:
                data = json.load(f)
            self.logger.debug(f"Loaded JSON file: {file_path}")
            return data
        except Exception as e:
            self.logger.error(f"Failed to load JSON file {file_path}: {e}")
            raise

    def load_text(self, filename: str, subdir: Optional[str] = None) -> str:
        file_path = self.get_file_path(filename, subdir)
        with open(file_path, "r", encoding="utf-8") as f:
            return f.read()

    def load_csv(self, filename: str, subdir: Optional[str] = None) -> pd.DataFrame:
        return pd.read_csv(self.get_file_path(filename, subdir), encoding="utf-8")

    def list_files(self, pattern: str = "*", subdir: Optional[str] = None) -> List[Path]:
        """Files matching pattern, sorted by name."""
        search_dir = self.output_dir / subdir if subdir else self.output_dir
        if search_dir.exists():
            return sorted(p for p in search_dir.glob(pattern) if p.is_file())
        return []

    def file_exists(self, filename: str, subdir: Optional[str] = None) -> bool:
        return self.get_file_path(filename, subdir).exists()
