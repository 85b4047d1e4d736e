#!/usr/bin/env python3
# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

"""Base objects for run output across different storage backends."""

from abc import ABC, abstractmethod


class OutputBase(ABC):
    """Base interface for writing and reading run artifacts."""

    @abstractmethod
    def write_file(self, content: str, file: str) -> None:
        """Write text content to a file."""
        pass

    @abstractmethod
    def write_bytes(self, content: bytes, file: str) -> None:
        """Write binary content to a file."""
        pass

    @abstractmethod
    def read_file(self, file: str) -> str:
        """Read a text file."""
        pass

    @abstractmethod
    def read_bytes(self, file: str) -> bytes:
        """Read a binary file."""
        pass

    @abstractmethod
    def exists(self, file: str) -> bool:
        """Check if a file is present."""
        pass

    @abstractmethod
    def list_files(self, pattern: str) -> list[str]:
        """Names of the files matching a glob pattern, sorted."""
        pass

    @abstractmethod
    def child(self, name: str) -> "OutputBase":
        """Output location nested under this one."""
        pass
