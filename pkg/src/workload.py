#!/usr/bin/env python3
# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

"""Implementation of OutputBase for a directory on the local file system."""

import logging
import os
from pathlib import Path

from typing_extensions import override

from core.workload import OutputBase

logger = logging.getLogger(__name__)


class RunDirectory(OutputBase):
    """Run artifacts stored as files below ``root``; every write is atomic."""

    def __init__(self, root: Path | str):
        self.root = Path(root)

    def _replace(self, content: bytes, file: str) -> None:
        path = self.root / file
        path.parent.mkdir(exist_ok=True, parents=True)
        partial = path.with_name(f".{path.name}.tmp")
        partial.write_bytes(content)
        os.replace(partial, path)
        logger.debug(f"wrote {path}")

    @override
    def write_file(self, content: str, file: str) -> None:
        self._replace(content.encode("utf-8"), file)

    @override
    def write_bytes(self, content: bytes, file: str) -> None:
        self._replace(content, file)

    @override
    def read_file(self, file: str) -> str:
        return (self.root / file).read_text(encoding="utf-8")

    @override
    def read_bytes(self, file: str) -> bytes:
        return (self.root / file).read_bytes()

    @override
    def exists(self, file: str) -> bool:
        return (self.root / file).is_file()

    @override
    def list_files(self, pattern: str) -> list[str]:
        if not self.root.is_dir():
            return []
        return sorted(path.name for path in self.root.glob(pattern) if path.is_file())

    @override
    def child(self, name: str) -> "RunDirectory":
        return RunDirectory(self.root / name)
