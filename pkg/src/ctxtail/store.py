"""Content-addressed artifact store with a stage manifest.

Objects live under ``objects/<sha256>``; human-friendly aliases are symlinks
at the store root.  A stage is up to date when its recorded input hashes and
config hash match the current ones and all its outputs still verify on disk,
which is what makes reruns with unchanged inputs free.
"""

from __future__ import annotations

import hashlib
import json
import os
from datetime import datetime, timezone
from pathlib import Path

from . import __version__


class StoreError(RuntimeError):
    pass


def file_sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class StoreLock:
    def __init__(self, root: Path):
        self.path = root / ".lock"
        self.acquired = False

    def __enter__(self):
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise StoreError(
                f"store is locked by another run ({self.path}); remove the lock if stale"
            )
        with os.fdopen(fd, "w") as fh:
            fh.write(str(os.getpid()))
        self.acquired = True
        return self

    def __exit__(self, *exc):
        if self.acquired and self.path.exists():
            self.path.unlink()
        self.acquired = False


class ArtifactStore:
    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.objects = self.root / "objects"
        self.objects.mkdir(parents=True, exist_ok=True)
        self.manifest_path = self.root / "manifest.json"
        self.manifest: dict = {"stages": {}}
        if self.manifest_path.exists():
            self.manifest = json.loads(self.manifest_path.read_text(encoding="utf-8"))

    def lock(self) -> StoreLock:
        return StoreLock(self.root)

    def _save_manifest(self) -> None:
        self.manifest_path.write_text(
            json.dumps(self.manifest, indent=2, sort_keys=True), encoding="utf-8"
        )

    def alias_path(self, name: str) -> Path:
        return self.root / name

    def has(self, name: str) -> bool:
        return self.alias_path(name).exists()

    def put_file(self, src: str | Path, alias: str) -> str:
        """Move a produced file into the object store and (re)point its alias."""
        src = Path(src)
        digest = file_sha256(src)
        obj = self.objects / digest
        if not obj.exists():
            src.replace(obj)
        else:
            src.unlink()
        link = self.alias_path(alias)
        if link.is_symlink() or link.exists():
            link.unlink()
        link.symlink_to(os.path.relpath(obj, link.parent))
        return digest

    def hash_of(self, name: str) -> str:
        path = self.alias_path(name)
        if not path.exists():
            raise StoreError(f"missing artifact: {name}")
        return file_sha256(path)

    def verify(self, name: str) -> bool:
        link = self.alias_path(name)
        if not link.exists():
            return False
        if link.is_symlink():
            target = Path(os.path.realpath(link))
            return target.name == file_sha256(link)
        return True

    def stage_up_to_date(self, stage: str, input_hashes: dict, config_hash: str) -> bool:
        entry = self.manifest["stages"].get(stage)
        if entry is None:
            return False
        if entry["inputs"] != input_hashes or entry["config"] != config_hash:
            return False
        for alias, digest in entry["outputs"].items():
            link = self.alias_path(alias)
            if not link.exists() or file_sha256(link) != digest:
                return False
        return True

    def record_stage(self, stage: str, input_hashes: dict, config_hash: str, outputs: dict) -> None:
        self.manifest["stages"][stage] = {
            "inputs": dict(sorted(input_hashes.items())),
            "config": config_hash,
            "outputs": dict(sorted(outputs.items())),
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "version": __version__,
        }
        self._save_manifest()

    def stage_timestamp(self, stage: str) -> str | None:
        entry = self.manifest["stages"].get(stage)
        return entry["timestamp"] if entry else None
