"""Output bundle: CSV/text writers that checksum every file into ``manifest.json``."""

import hashlib
import io
import json
import logging
import threading
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import pandas as pd
from pydantic import ValidationError

from bathyfer import __version__
from bathyfer.core.errors import InputError
from bathyfer.models.models import Manifest, ManifestEntry

logger = logging.getLogger(__name__)

MANIFEST = "manifest.json"
FLOAT_FORMAT = "%.17g"


def sha256_file(path: Union[str, Path]) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 16), b""):
            digest.update(block)
    return digest.hexdigest()


def frame_to_csv(frame: pd.DataFrame, header: Optional[Dict[str, object]] = None) -> str:
    buffer = io.StringIO()
    for key, value in (header or {}).items():
        buffer.write(f"# {key}: {value}\n")
    frame.to_csv(buffer, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return buffer.getvalue()


def read_commented_csv(path: Union[str, Path]) -> Tuple[Dict[str, str], pd.DataFrame]:
    """Split a CSV with ``# key: value`` header lines into (metadata, frame)."""
    metadata = {}
    with open(path, encoding="utf-8") as f:
        for line in f:
            if not line.startswith("#"):
                break
            key, _, value = line[1:].partition(":")
            metadata[key.strip()] = value.strip()
    return metadata, pd.read_csv(path, comment="#")


class BundleWriter:
    """Writes files below one directory and records them for the manifest"""

    def __init__(self, directory: Union[str, Path], command: str):
        self.directory = Path(directory)
        self.command = command
        self.directory.mkdir(parents=True, exist_ok=True)
        self._files: List[str] = []
        self._lock = threading.Lock()

    def path(self, name: str) -> Path:
        target = self.directory / name
        target.parent.mkdir(parents=True, exist_ok=True)
        return target

    def _track(self, name: str):
        with self._lock:
            if name not in self._files:
                self._files.append(name)

    def write_text(self, name: str, text: str) -> Path:
        target = self.path(name)
        with self._lock:
            with open(target, "w", encoding="utf-8", newline="\n") as f:
                f.write(text)
        self._track(name)
        logger.info(f"wrote {target}")
        return target

    def write_frame(self, name: str, frame: pd.DataFrame, header: Optional[Dict[str, object]] = None) -> Path:
        return self.write_text(name, frame_to_csv(frame, header))

    def adopt(self, name: str) -> Path:
        """Track a file produced by another writer (e.g. a plot or the ledger)."""
        target = self.directory / name
        if not target.exists():
            raise InputError(f"cannot add missing file {target} to the bundle")
        self._track(name)
        return target

    @property
    def files(self) -> List[str]:
        return list(self._files)

    def write_manifest(self, config_hash: str, seeds: List[int], rng: str, constants: Optional[Dict[str, float]] = None) -> Manifest:
        entries = [
            ManifestEntry(path=name, sha256=sha256_file(self.directory / name), bytes=(self.directory / name).stat().st_size)
            for name in sorted(self._files)
        ]
        manifest = Manifest(
            command=self.command,
            version=__version__,
            config_hash=config_hash,
            seeds=list(seeds),
            rng=rng,
            constants=constants or {},
            files=entries,
        )
        target = self.directory / MANIFEST
        target.write_text(json.dumps(manifest.model_dump(mode="json"), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        logger.info(f"manifest lists {len(entries)} files in {self.directory}")
        return manifest


def load_manifest(directory: Union[str, Path]) -> Manifest:
    target = Path(directory) / MANIFEST
    try:
        return Manifest.model_validate_json(target.read_text(encoding="utf-8"))
    except (OSError, ValidationError) as e:
        raise InputError(f"bundle {directory} has no readable manifest: {e}") from e


def verify_bundle(directory: Union[str, Path]) -> Manifest:
    """Check that every manifest entry exists with its recorded checksum."""
    manifest = load_manifest(directory)
    for entry in manifest.files:
        target = Path(directory) / entry.path
        if not target.exists():
            raise InputError(f"bundle {directory} is incomplete: {entry.path} is missing")
        if sha256_file(target) != entry.sha256:
            raise InputError(f"bundle {directory} is inconsistent: {entry.path} changed after it was written")
    return manifest
