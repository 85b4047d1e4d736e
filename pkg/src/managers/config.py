#!/usr/bin/env python3
# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

"""Manager for handling configuration parsing + validation."""

import logging
from pathlib import Path

import yaml
from pydantic import ValidationError

from common.exceptions import ConfigError
from core.config import SimConfig

logger = logging.getLogger(__name__)

WORKING_DIR = Path(__file__).absolute().parent


def _flatten(mapping: dict, prefix: str = "") -> dict:
    flat = {}
    for key, value in mapping.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(_flatten(value, f"{name}."))
        else:
            flat[name] = value
    return flat


class ConfigManager:
    """Merge a flat ``key = value`` file over the shipped defaults and validate the result."""

    def __init__(self, path: Path | str | None = None):
        self.path = Path(path) if path else None

    @property
    def defaults(self) -> dict:
        """Nested default configuration."""
        with open(f"{WORKING_DIR}/config/defaults.yaml") as config:
            return yaml.safe_load(config)

    @staticmethod
    def parse_value(raw: str):
        """Interpret one value: comma-separated lists, YAML scalars, bare words."""
        if "," in raw:
            return [ConfigManager.parse_value(item.strip()) for item in raw.split(",")]
        try:
            value = yaml.safe_load(raw)
        except yaml.YAMLError:
            return raw
        # YAML 1.1 reads "1e-2" as a string
        if isinstance(value, str):
            try:
                return float(value)
            except ValueError:
                return value
        return value

    def parse(self, text: str) -> dict:
        """Read ``key = value`` lines with ``#`` comments into a flat mapping.

        Raises:
            ConfigError: listing every malformed line, unknown key and key without value.
        """
        known = _flatten(self.defaults)
        entries, unknown, empty, malformed = {}, [], [], []
        for number, line in enumerate(text.splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                malformed.append(f"line {number}")
                continue
            key, raw = (part.strip() for part in line.split("=", 1))
            if key not in known:
                unknown.append(key)
            elif not raw:
                empty.append(key)
            else:
                entries[key] = self.parse_value(raw)

        problems = []
        if unknown:
            problems.append(f"unknown keys: {', '.join(unknown)}")
        if empty:
            problems.append(f"keys without value: {', '.join(empty)}")
        if malformed:
            problems.append(f"malformed lines: {', '.join(malformed)}")
        if problems:
            raise ConfigError("; ".join(problems), keys=unknown + empty)
        return entries

    def merge(self, entries: dict) -> dict:
        """Nested defaults with the dotted ``entries`` applied."""
        config = self.defaults
        for key, value in entries.items():
            section, name = key.split(".", 1)
            if key == "sweep.eps" and not isinstance(value, list):
                value = [value]
            config[section][name] = value
        return config

    @staticmethod
    def validate(config: dict) -> SimConfig:
        try:
            return SimConfig.parse_obj(config)
        except ValidationError as e:
            keys = [".".join(str(part) for part in error["loc"]) for error in e.errors()]
            raise ConfigError(f"invalid configuration: {e}", keys=keys)

    def load(self) -> SimConfig:
        """Validated configuration from ``path`` (defaults only if no path is set).

        Raises:
            ConfigError: if the file is missing, malformed or violates an invariant.
        """
        if self.path is None:
            return self.validate(self.defaults)
        try:
            text = self.path.read_text()
        except OSError as e:
            raise ConfigError(f"cannot read configuration file {self.path}: {e}")
        config = self.validate(self.merge(self.parse(text)))
        logger.debug(f"loaded configuration from {self.path}")
        return config

    @staticmethod
    def echo(config: SimConfig) -> str:
        """YAML rendering of a configuration, readable by ``from_echo``."""
        return yaml.safe_dump(config.dict(), sort_keys=False)

    @classmethod
    def from_echo(cls, echo: dict | str) -> SimConfig:
        if isinstance(echo, str):
            echo = yaml.safe_load(echo)
        return cls.validate(echo)
