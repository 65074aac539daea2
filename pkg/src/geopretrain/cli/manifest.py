"""Run manifests: the durable record of what a command did.

Written atomically when a run starts (status "running") and finalized on
success; the resolved config inside is sufficient to rerun the command.
"""

from __future__ import annotations

import json
import os
import platform
import sys
import tempfile
import time
from pathlib import Path

MANIFEST_NAME = "manifest.json"


def environment_fingerprint() -> dict:
    import cv2
    import numpy
    import torch
    return {
        "python": sys.version.split()[0],
        "platform": platform.platform(),
        "numpy": numpy.__version__,
        "torch": torch.__version__,
        "opencv": cv2.__version__,
    }


def _write_atomic(path: Path, doc: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as f:
            json.dump(doc, f, indent=1, sort_keys=True)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class RunManifest:
    def __init__(self, out_dir: str | Path, command: str, resolved_config: dict):
        self.path = Path(out_dir) / MANIFEST_NAME
        self._start = time.time()
        self.doc = {
            "command": command,
            "status": "running",
            "config": resolved_config,
            "seed": resolved_config.get("seed", 0),
            "environment": environment_fingerprint(),
            "provenance": [],
            "artifacts": {},
            "history_files": [],
            "warnings": [],
        }

    def write(self) -> None:
        _write_atomic(self.path, self.doc)

    def add_provenance(self, role: str, path: str, checksum: str | None) -> None:
        self.doc["provenance"].append(
            {"role": role, "path": str(path), "checksum": checksum})

    def add_artifact(self, name: str, path: str | Path) -> None:
        self.doc["artifacts"][name] = str(path)

    def add_history(self, path: str | Path) -> None:
        self.doc["history_files"].append(str(path))

    def finalize(self, status: str = "complete") -> None:
        self.doc["status"] = status
        self.doc["wall_clock_seconds"] = round(time.time() - self._start, 3)
        missing = [p for p in self.doc["artifacts"].values() if not Path(p).exists()]
        if status == "complete" and missing:
            raise FileNotFoundError(f"manifest names missing artifacts: {missing}")
        _write_atomic(self.path, self.doc)


def completed_manifest(out_dir: str | Path) -> dict | None:
    """The prior manifest if the directory holds a finished run."""
    path = Path(out_dir) / MANIFEST_NAME
    if not path.is_file():
        return None
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError:
        return None
    if doc.get("status") != "complete":
        return None
    if any(not Path(p).exists() for p in doc.get("artifacts", {}).values()):
        return None
    return doc
