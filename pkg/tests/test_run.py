import json
import sys
from pathlib import Path
from unittest.mock import patch

import pytest

from nlslab.config import GridConfig, RunConfig
from nlslab.errors import ConfigParse, NonconvergedODE, NonpositiveCoefficient
from nlslab.report import TRACE_COLUMNS
from nlslab.run import (
    EXIT_ERROR,
    EXIT_INVALID,
    EXIT_OK,
    EXIT_SOLVER,
    build_config,
    create_parser,
    exit_status,
    main,
    run,
)


def run_main(argv):
    with patch.object(sys, "argv", ["nlslab", *argv]):
        with pytest.raises(SystemExit) as excinfo:
            main()
    return excinfo.value.code


def test_argument_parsing():
    parser = create_parser()

    args = parser.parse_args(["evolve", "--dt", "0.01", "--t-end", "0.5", "--psi0", "scaled-q", "--scale", "0.9"])
    assert args.command == "evolve"
    config = build_config(args)
    assert config.evolution.dt == 0.01
    assert config.evolution.t_end == 0.5
    assert args.scale == 0.9

    args = parser.parse_args(["sigma", "--d", "4", "--omega", "2"])
    config = build_config(args)
    assert config.dimension == 4
    assert config.omega == 2.0

    args = parser.parse_args(["sigma", "--preset", "d5_p2", "--config", "x.json"])
    with pytest.raises(ValueError, match="either --preset or --config"):
        build_config(args)

    args = parser.parse_args(["sigma", "--config", "nonexistent.json"])
    with pytest.raises(FileNotFoundError):
        build_config(args)

    with pytest.raises(SystemExit):
        parser.parse_args(["no-such-command"])


def test_exit_status_mapping():
    assert exit_status(NonconvergedODE("no")) == EXIT_SOLVER
    assert exit_status(NonpositiveCoefficient("no")) == EXIT_INVALID
    assert exit_status(ConfigParse("no")) == EXIT_INVALID
    assert exit_status(OSError("no")) == EXIT_ERROR


def test_validate_writes_csv_manifest_and_log(tmp_path):
    assert run_main(["validate-nl", "--out-dir", str(tmp_path)]) == EXIT_OK

    rows = (tmp_path / "validate-nl.csv").read_text().splitlines()
    assert rows[0] == "d,valid,diagnostic,eps0,p1,p2,growth_branch"
    assert rows[1].startswith("5,true,false,0.2")

    manifest = json.loads((tmp_path / "validate-nl.manifest.json").read_text())
    assert manifest["exit_status"] == 0
    assert manifest["command"] == "validate-nl"
    assert manifest["summary"] == {"valid": "True"}
    assert "numpy" in manifest["versions"]

    logs = list((tmp_path / "logs").glob("run_*.log"))
    assert len(logs) == 1
    text = logs[0].read_text()
    assert "Command: validate-nl" in text
    assert "=== Config ===" in text
    assert "[ERROR]" not in text


def test_exponents_command(tmp_path):
    assert run_main(["exponents", "--d", "5", "--p1", "2", "--out-dir", str(tmp_path)]) == EXIT_OK
    header, row = (tmp_path / "exponents.csv").read_text().splitlines()
    values = dict(zip(header.split(","), row.split(",")))
    assert values["alpha"] == "39/19"
    assert values["rho"] == "182/57"
    assert values["gamma"] == "455/76"
    assert values["alpha_in_interval"] == "true"


def test_exponents_low_dimension(tmp_path):
    assert run_main(["exponents", "--preset", "d4_p25", "--out-dir", str(tmp_path)]) == EXIT_OK
    rows = (tmp_path / "exponents.csv").read_text().splitlines()
    assert rows[0] == "d,norm,q,r"
    assert rows[1] == "4,ES,12/5,6"


def test_pairs_command(tmp_path):
    assert run_main(["pairs", "--p1", "2", "--out-dir", str(tmp_path)]) == EXIT_OK
    rows = (tmp_path / "pairs.csv").read_text().splitlines()
    assert rows[0] == "name,q,r,L2_admissible"
    assert rows[1] == "energy,2,inf,true"
    assert len(rows) == 6
    assert all(row.endswith("true") for row in rows[1:])


def test_invalid_config_exits_with_status_2(tmp_path, capsys):
    config_path = tmp_path / "bad.json"
    config_path.write_text(json.dumps({"dimension": 5, "terms": [[-1.0, 2.0]]}))

    assert run_main(["validate-nl", "--config", str(config_path), "--out-dir", str(tmp_path)]) == EXIT_INVALID
    assert "Error:" in capsys.readouterr().out

    manifest = json.loads((tmp_path / "validate-nl.manifest.json").read_text())
    assert manifest["exit_status"] == EXIT_INVALID
    log = next((tmp_path / "logs").glob("run_*.log")).read_text()
    assert "[ERROR]" in log
    assert "NonpositiveCoefficient" in log


def test_unparseable_config(tmp_path, capsys):
    config_path = tmp_path / "broken.json"
    config_path.write_text("{not json")
    assert run_main(["sigma", "--config", str(config_path)]) == EXIT_INVALID
    assert "Error:" in capsys.readouterr().out

    assert run_main(["sigma", "--preset", "d9_nothing"]) == EXIT_INVALID
    assert run_main(["sigma", "--config", str(tmp_path / "missing.json")]) == EXIT_ERROR


def test_evolve_with_trace_override(tmp_path):
    config = RunConfig(
        evolution_grid=GridConfig(kind="uniform", n=201, r_max=20.0),
        out_dir=str(tmp_path),
    ).with_overrides(**{"evolution.dt": 0.05, "evolution.t_end": 0.2, "evolution.sample_every": 1})
    trace_path = tmp_path / "trace.csv"
    args = create_parser().parse_args(["evolve", "--amplitude", "0.01", "--out", str(trace_path)])

    assert run("evolve", config, args) == EXIT_OK
    rows = trace_path.read_text().splitlines()
    assert rows[0] == ",".join(TRACE_COLUMNS)
    assert len(rows) == 1 + 5
    assert rows[1].startswith("0,0,0,")
    assert not (tmp_path / "evolve.csv").exists()

    manifest = json.loads((tmp_path / "evolve.manifest.json").read_text())
    assert manifest["outputs"] == [str(trace_path)]
    assert float(manifest["summary"]["max_mass_drift"]) < 1e-8


def test_functionals_command(tmp_path):
    config = RunConfig(grid=GridConfig(kind="uniform", n=2001, r_max=20.0), out_dir=str(tmp_path))
    args = create_parser().parse_args(["functionals", "--amplitude", "0.5"])
    assert run("functionals", config, args) == EXIT_OK

    header, row = (tmp_path / "functionals.csv").read_text().splitlines()
    values = dict(zip(header.split(","), map(float, row.split(","))))
    assert values["omega"] == 1.0
    assert values["S_omega"] == pytest.approx(values["H"] + 0.5 * values["mass"])
    assert Path(tmp_path / "functionals.manifest.json").exists()
    assert values["per_term_1"] > 0
    # F = (2/3)|u|^3 for mu = 1, p = 2
    assert values["potF"] == pytest.approx(2.0 / 3.0 * values["per_term_1"])
    assert [values[f"P_{i}"] for i in range(1, 6)] == [0.0] * 5


def _read_table(path):
    header, *rows = path.read_text().splitlines()
    return [dict(zip(header.split(","), row.split(","))) for row in rows]


@pytest.mark.parametrize("d", [4, 6, 7])
def test_pairs_without_p1(tmp_path, d):
    assert run_main(["pairs", "--d", str(d), "--out-dir", str(tmp_path)]) == EXIT_OK
    rows = _read_table(tmp_path / "pairs.csv")
    assert [row["name"] for row in rows] == ["energy", "diagonal", "V", "V_p", "endpoint"]
    assert all(row["L2_admissible"] == "true" for row in rows)


def test_exponents_default_p1_follows_dimension(tmp_path):
    assert run_main(["exponents", "--d", "6", "--out-dir", str(tmp_path)]) == EXIT_OK
    (row,) = _read_table(tmp_path / "exponents.csv")
    assert row["p1"] == "11/6"
    assert row["alpha_in_interval"] == "true"

    # Configured terms win when they are valid for --d
    assert run_main(["exponents", "--d", "5", "--out-dir", str(tmp_path)]) == EXIT_OK
    (row,) = _read_table(tmp_path / "exponents.csv")
    assert row["alpha"] == "39/19"


@pytest.mark.parametrize("d", [4, 5])
def test_sigma_command_on_default_grid(tmp_path, d):
    assert run_main(["sigma", "--d", str(d), "--out-dir", str(tmp_path)]) == EXIT_OK
    (row,) = _read_table(tmp_path / "sigma.csv")
    assert float(row["mismatch"]) < 1e-3
    assert float(row["sigma"]) == pytest.approx(float(row["closed_form"]), rel=1e-3)


def test_ground_state_command(tmp_path):
    assert run_main(["ground-state", "--out-dir", str(tmp_path)]) == EXIT_OK
    (row,) = _read_table(tmp_path / "ground-state.csv")
    assert list(row) == ["omega", "a0", "m_omega", "sigma_pow", "sigma_pow_d2_over_d", "gap", "K_residual"]
    assert float(row["sigma_pow_d2_over_d"]) == pytest.approx(float(row["sigma_pow"]) / 5)
    assert float(row["gap"]) > 0
    assert float(row["K_residual"]) < 1e-4
    assert (tmp_path / "ground-state_Q.csv").exists()

    manifest = json.loads((tmp_path / "ground-state.manifest.json").read_text())
    assert manifest["exit_status"] == EXIT_OK
    assert manifest["config"]["grid"]["n"] == 8192


def test_scan_lambda_command(tmp_path):
    assert run_main(["scan-lambda", "--amplitude", "0.5", "--out-dir", str(tmp_path)]) == EXIT_OK
    assert len(_read_table(tmp_path / "scan-lambda.csv")) == 200
    certificates = _read_table(tmp_path / "scan-lambda_certificates.csv")
    assert certificates and all(row["passed"] == "true" for row in certificates)
    manifest = json.loads((tmp_path / "scan-lambda.manifest.json").read_text())
    assert manifest["summary"]["passed"] == "True"


def test_classify_command(tmp_path):
    argv = ["classify", "--psi0", "scaled-q", "--scale", "0.8", "--out-dir", str(tmp_path)]
    assert run_main(argv) == EXIT_OK
    (row,) = _read_table(tmp_path / "classify.csv")
    assert row["in_A_omega_plus"] == "true"
    assert float(row["K"]) > 0
    assert float(row["m_omega_minus_S"]) > 0


def test_bound_sweep_command(tmp_path):
    config_path = tmp_path / "sweep.json"
    RunConfig(omegas=[1.0], trials={"count": 5}).save(str(config_path))
    assert run_main(["bound-sweep", "--config", str(config_path), "--seed", "3", "--out-dir", str(tmp_path)]) == EXIT_OK

    (ground,) = _read_table(tmp_path / "bound-sweep.csv")
    assert float(ground["K_residual"]) < 1e-4
    bounds = _read_table(tmp_path / "bound-sweep_bounds.csv")
    assert [row["family"] for row in bounds] == ["rescaled", "gaussian", "bubble"]
    gaussian = bounds[1]
    assert gaussian["count"] == "5"
    assert gaussian["above_m_omega"] == "true"
    # T_mu Q projects back onto Q
    assert float(bounds[0]["minimum"]) == pytest.approx(float(ground["m_omega"]), rel=1e-6)
