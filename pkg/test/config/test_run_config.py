from pathlib import Path

import numpy as np
import pytest

from brinkman_vem.core.config import Settings
from brinkman_vem.core.errors import ConfigError, ExpressionSyntaxError
from brinkman_vem.models.run_config import (
    DirichletConfig,
    OutflowConfig,
    SlipConfig,
    load_run_config,
    parse_run_config,
)

CAVITY = {
    "order": 2,
    "nu": 1e-2,
    "permeability": {"kappa": 1e8},
    "mesh": {"family": "quad", "n_cells": 64},
    "tags": [
        {"tag": "lid", "where": {"kind": "halfplane", "a": 0.0, "b": -1.0, "c": -1.0}},
        {"tag": "wall", "where": {"kind": "everywhere"}},
    ],
    "boundary": {
        "lid": {"kind": "dirichlet", "g": ["1", "0"]},
        "wall": {"kind": "dirichlet"},
    },
}

CONFIG_DIR = Path(__file__).resolve().parents[2] / "configs"


def _with(**changes):
    data = dict(CAVITY)
    data.update(changes)
    return data


def test_cavity_configuration():
    config = parse_run_config(CAVITY)
    assert config.order == 2
    assert config.permeability.value() == 1e8
    assert isinstance(config.boundary["lid"], DirichletConfig)
    assert config.boundary_kinds == {"lid": "dirichlet", "wall": "dirichlet"}
    assert config.convergence.levels == 4


def test_boundary_kinds_are_discriminated():
    config = parse_run_config(
        _with(boundary={"lid": {"kind": "slip", "g2": ["1", "0"]}, "wall": {"kind": "outflow"}})
    )
    assert isinstance(config.boundary["lid"], SlipConfig)
    assert isinstance(config.boundary["wall"], OutflowConfig)


@pytest.mark.parametrize(
    "changes, location",
    [
        ({"order": 1}, "order"),
        ({"nu": 2.0}, "nu"),
        ({"nu": 0.0}, "nu"),
        ({"permeability": {"kappa": 1.0, "matrix": [[1, 0], [0, 1]]}}, "permeability"),
        ({"permeability": {"matrix": [[1, 2], [2, 1]]}}, "permeability"),
        ({"mesh": {"family": "hexagon", "n_cells": 64}}, "mesh.family"),
        ({"mesh": {"family": "quad"}}, "mesh"),
        ({"boundary": {"lid": {"kind": "dirichlet"}}}, "<root>"),
        ({"colour": "red"}, "colour"),
    ],
)
def test_invalid_configurations_name_the_location(changes, location):
    with pytest.raises(ConfigError) as info:
        parse_run_config(_with(**changes), source="cavity.toml")
    assert info.value.location.startswith(f"cavity.toml:{location}")


def test_bad_expressions_are_reported():
    with pytest.raises((ConfigError, ExpressionSyntaxError)):
        parse_run_config(_with(source=["x +", "0"]))


def test_manufactured_case_needs_constant_permeability_and_no_outflow():
    exact = {"u": ["y", "x"], "p": "x"}
    with pytest.raises(ConfigError):
        parse_run_config(_with(exact=exact, permeability={"expression": "1 + x"}))
    with pytest.raises(ConfigError):
        parse_run_config(
            _with(exact=exact, boundary={"lid": {"kind": "outflow"}, "wall": {"kind": "dirichlet"}})
        )
    config = parse_run_config(_with(exact=exact, permeability={"matrix": [[2, 0], [0, 1]]}))
    assert config.permeability.value() == pytest.approx(np.diag([2.0, 1.0]))


def test_expression_permeability_is_a_function_of_the_point():
    config = parse_run_config(_with(permeability={"expression": "1 + x"}))
    assert not config.permeability.is_constant
    assert config.permeability.value()(np.array([2.0, 0.0])) == pytest.approx(3.0)


def test_load_errors(tmp_path):
    with pytest.raises(ConfigError) as info:
        load_run_config(tmp_path / "missing.toml")
    assert "file not found" in str(info.value)
    broken = tmp_path / "broken.toml"
    broken.write_text("order = [\n")
    with pytest.raises(ConfigError) as info:
        load_run_config(broken)
    assert "invalid TOML" in str(info.value)


def test_shipped_configurations_load():
    for name in ("cavity", "cylinder", "step", "square"):
        config = load_run_config(CONFIG_DIR / f"{name}.toml")
        assert config.name == name


def test_settings_from_environment(monkeypatch):
    monkeypatch.setenv("BVEM_NITSCHE_FACTOR", "10")
    monkeypatch.setenv("BVEM_LOG_FORMAT", "json")
    settings = Settings()
    assert settings.nitsche_penalty(2) == pytest.approx(90.0)
    assert settings.log_format == "json"
