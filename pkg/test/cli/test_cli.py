import csv
import json
from pathlib import Path

import pytest

from brinkman_vem.main import build_parser, main

SMALL_CAVITY = """
name = "small"
order = 2
nu = 0.1

[permeability]
kappa = 100.0

[mesh]
family = "quad"
n_cells = 16

[[tags]]
tag = "lid"
where = { kind = "halfplane", a = 0.0, b = -1.0, c = -1.0 }

[[tags]]
tag = "wall"
where = { kind = "everywhere" }

[boundary.lid]
kind = "dirichlet"
g = ["1", "0"]

[boundary.wall]
kind = "dirichlet"
"""

LINEAR_EXACT = """
name = "linear"
order = 2

[mesh]
family = "quad"
n_cells = 16

[exact]
u = ["y", "x"]
p = "x - 0.5"

[boundary.boundary]
kind = "dirichlet"

[convergence]
levels = 2
n_start = 16
"""


def _write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return path


def _result(capsys):
    return json.loads(capsys.readouterr().out)


def test_parser_requires_a_command():
    with pytest.raises(SystemExit):
        build_parser().parse_args([])


def test_mesh_command_writes_a_file(tmp_path, capsys):
    output = tmp_path / "meshes" / "voronoi.json"
    code = main(["mesh", "--family", "voronoi", "--n", "32", "--seed", "3", "-o", str(output)])
    assert code == 0
    result = _result(capsys)
    assert result["status"] == "success"
    assert result["details"]["n_cells"] == 32
    document = json.loads(output.read_text())
    assert len(document["cells"]) == 32


def test_mesh_command_reports_impossible_counts(tmp_path, capsys):
    code = main(["mesh", "--family", "quad", "--n", "7", "-o", str(tmp_path / "m.json")])
    assert code == 2
    result = _result(capsys)
    assert result["status"] == "failed"
    assert result["exit_code"] == 2
    assert not (tmp_path / "m.json").exists()


def test_solve_command_writes_results(tmp_path, capsys):
    config = _write(tmp_path, "small.toml", SMALL_CAVITY)
    code = main(["solve", str(config), "-o", str(tmp_path / "out")])
    assert code == 0
    details = _result(capsys)["details"]
    assert details["residual_tol"] == pytest.approx(1e-10)
    run = details["runs"]["small"]
    assert run["residual"] <= details["residual_tol"]
    assert run["residual_within_tol"] is True
    for key in ("vtk", "dofs", "traces"):
        assert Path(run[key]).exists()
        assert Path(run[key]).parent == tmp_path / "out"
    assert run["max_speed"] > 0.0
    assert set(run["trace_errors"]) == {"lid", "wall"}


def test_solve_command_sweeps_permeability(tmp_path, capsys):
    config = _write(tmp_path, "linear.toml", LINEAR_EXACT)
    code = main(["solve", str(config), "-o", str(tmp_path), "--kappa", "1", "--kappa", "1e4"])
    assert code == 0
    runs = _result(capsys)["details"]["runs"]
    assert set(runs) == {"linear_kappa1", "linear_kappa10000"}
    for run in runs.values():
        assert run["e_u"] < 1e-7
        assert run["e_p"] < 1e-7


def test_convergence_command_writes_a_table(tmp_path, capsys):
    config = _write(tmp_path, "linear.toml", LINEAR_EXACT)
    code = main(["convergence", str(config), "-o", str(tmp_path), "--family", "voronoi"])
    assert code == 0
    details = _result(capsys)["details"]
    assert details["residual_within_tol"] is True
    assert details["max_residual"] <= 1e-10
    tables = details["tables"]
    assert len(tables) == 1
    path = next(iter(tables))
    assert path.endswith("linear_voronoi.csv")
    with open(path, newline="") as handle:
        rows = list(csv.reader(handle))
    assert rows[0][:3] == ["N", "h", "e_u"]
    assert [row[0] for row in rows[1:]] == ["16", "64"]


def test_convergence_command_rejects_bad_viscosity(tmp_path, capsys):
    config = _write(tmp_path, "linear.toml", LINEAR_EXACT)
    code = main(["convergence", str(config), "--nu", "0"])
    assert code == 2
    assert "nu" in _result(capsys)["message"]


def test_convergence_needs_exact_solution(tmp_path, capsys):
    config = _write(tmp_path, "small.toml", SMALL_CAVITY)
    code = main(["convergence", str(config), "-o", str(tmp_path)])
    assert code == 2
    assert "[exact]" in _result(capsys)["message"]


def test_missing_configuration_exits_with_config_code(tmp_path):
    assert main(["solve", str(tmp_path / "nope.toml")]) == 2


def test_invalid_configuration_exits_with_config_code(tmp_path):
    config = _write(tmp_path, "bad.toml", SMALL_CAVITY.replace("nu = 0.1", "nu = 5.0"))
    assert main(["solve", str(config)]) == 2


def test_bad_expression_exits_with_config_code(tmp_path):
    config = _write(tmp_path, "bad.toml", SMALL_CAVITY.replace('g = ["1", "0"]', 'g = ["1 +", "0"]'))
    assert main(["solve", str(config)]) == 2


def test_indefinite_permeability_exits_with_element_code(tmp_path, capsys):
    text = SMALL_CAVITY.replace("kappa = 100.0", 'expression = "x - 0.5"')
    config = _write(tmp_path, "indefinite.toml", text)
    code = main(["solve", str(config), "-o", str(tmp_path / "out")])
    assert code == 3
    result = _result(capsys)
    assert result["status"] == "failed"
    assert result["exit_code"] == 3
    assert result["details"]["error_type"] == "ElementError"
    assert "positive definite" in result["message"]


def test_convergence_tables_are_reproducible(tmp_path, capsys):
    config = _write(tmp_path, "linear.toml", LINEAR_EXACT)
    contents = []
    for run in ("first", "second"):
        code = main(["convergence", str(config), "-o", str(tmp_path / run), "--family", "voronoi"])
        assert code == 0
        path = next(iter(_result(capsys)["details"]["tables"]))
        contents.append(Path(path).read_bytes())
    assert contents[0] == contents[1]
