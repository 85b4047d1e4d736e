#!/usr/bin/env python3
# Copyright 2024 Canonical Ltd.
# See LICENSE file for licensing details.

import pytest

from common.exceptions import ConfigError
from managers.config import ConfigManager


def _load(tmp_path, text: str):
    path = tmp_path / "run.cfg"
    path.write_text(text)
    return ConfigManager(path).load()


def test_defaults_are_valid():
    config = ConfigManager().load()
    assert config.grid.nx == 64
    assert config.material.eps == pytest.approx(1e-2)
    assert config.phasefield.scheme == "stabilized"
    assert config.sweep.eps == []
    assert config.time.n_steps == 500


def test_flat_keys_override_defaults(tmp_path):
    config = _load(
        tmp_path,
        "# small run\n"
        "grid.nx = 16\n"
        "grid.ny = 8   # coarse\n"
        "material.eps = 1e-2\n"
        "material.rho2 = 3\n"
        "initial.kind = disk\n"
        "sweep.eps = 0.1, 0.05, 0.02\n",
    )
    assert (config.grid.nx, config.grid.ny) == (16, 8)
    assert isinstance(config.material.eps, float)
    assert config.material.rho2 == 3.0
    assert config.initial.kind == "disk"
    assert config.sweep.eps == [0.1, 0.05, 0.02]


def test_parse_value():
    assert ConfigManager.parse_value("1e-2") == 1e-2
    assert ConfigManager.parse_value("true") is True
    assert ConfigManager.parse_value("ch-ns") == "ch-ns"
    assert ConfigManager.parse_value("1, 2") == [1, 2]


def test_unknown_and_empty_keys_are_listed(tmp_path):
    with pytest.raises(ConfigError) as e:
        _load(tmp_path, "grid.nz = 4\nmaterial.eps =\ngrid.nx = 8\n")
    assert e.value.keys == ["grid.nz", "material.eps"]


def test_malformed_line(tmp_path):
    with pytest.raises(ConfigError):
        _load(tmp_path, "grid.nx 8\n")


def test_too_few_cells(tmp_path):
    with pytest.raises(ConfigError) as e:
        _load(tmp_path, "grid.nx = 2\n")
    assert "grid.nx" in e.value.keys


def test_sweep_must_decrease(tmp_path):
    with pytest.raises(ConfigError):
        _load(tmp_path, "sweep.eps = 0.02, 0.05, 0.1\n")
    with pytest.raises(ConfigError):
        _load(tmp_path, "sweep.eps = 0.1, 0.1, 0.05\n")


def test_stabilized_scheme_rejects_varying_coefficient(tmp_path):
    with pytest.raises(ConfigError):
        _load(tmp_path, "material.a_kind = quadratic\nmaterial.a1 = 0.5\n")
    config = _load(
        tmp_path, "material.a_kind = quadratic\nmaterial.a1 = 0.5\nphasefield.scheme = explicit\n"
    )
    assert config.material.a_kind == "quadratic"


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        ConfigManager(tmp_path / "absent.cfg").load()


def test_echo_round_trip(tmp_path):
    config = _load(tmp_path, "grid.nx = 12\nsweep.eps = 0.1, 0.05, 0.02\n")
    assert ConfigManager.from_echo(ConfigManager.echo(config)) == config


def test_eps_variants_share_everything_else():
    config = ConfigManager().load()
    variant = config.with_eps(0.05)
    assert variant.material.eps == 0.05
    assert variant.sweep.eps == []
    assert variant.without_eps() == config.without_eps()


def test_stabilization_range(tmp_path):
    assert ConfigManager().load().phasefield.stabilization_range == "clipped"
    config = _load(tmp_path, "phasefield.stabilization_range = data\n")
    assert config.phasefield.stabilization_range == "data"
    with pytest.raises(ConfigError):
        _load(tmp_path, "phasefield.stabilization_range = initial\n")
