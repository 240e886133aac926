import json
import subprocess
import sys

import pytest

from hardypot.cli import build_parser, dumps, main
from hardypot.measures import read_field

from .cli_scenarios import SIGMA_SCAN_CFG, scenarios


@pytest.fixture(scope="module")
def cfg_path(tmp_path_factory):
    p = tmp_path_factory.mktemp("cfg") / "scan.cfg"
    p.write_text(SIGMA_SCAN_CFG)
    return p


def _run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr().out
    return code, out


@pytest.mark.parametrize("idx", range(17))
def test_scenario_exit_and_schema(idx, cfg_path, capsys):
    name, argv, expected = scenarios(cfg_path)[idx]
    code, out = _run(argv, capsys)
    assert code == expected, name
    report = json.loads(out)
    assert report["schema"] == 1
    assert out == dumps({k: v for k, v in report.items() if k != "schema"})


def test_scenario_count(cfg_path):
    assert len(scenarios(cfg_path)) == 17


def test_outputs_written(tmp_path, capsys):
    code, out = _run(["solve", "source", "--mu", "2.0", "--resolution", "1000", "--sigma", "1e-3", "--out", str(tmp_path)], capsys)
    assert code == 0
    assert (tmp_path / "solve_source.json").read_text() == out
    u = read_field(tmp_path / "source_field.hbvp")
    assert u.values.shape[0] == u.cloud.n
    code, _ = _run(["scan", "--axis", "mu", "--out", str(tmp_path)], capsys)
    header = (tmp_path / "scan.csv").read_text().splitlines()[0]
    assert header == "p,mu,verdict"


@pytest.mark.parametrize(
    "argv",
    [["exponents", "--k", "5"], ["exponents", "--mu", "9"], ["solve", "source", "--resolution", "10"],
     ["capacity", "--set", "cap:1,0:0.1"], ["solve", "source", "--nu", "wave"]],
)
def test_config_errors_exit_1(argv, capsys):
    assert main(argv) == 1
    assert "error" in capsys.readouterr().err


def test_bad_config_file(tmp_path, capsys):
    f = tmp_path / "bad.cfg"
    f.write_text("domain.colour = red\n")
    assert main(["exponents", "--config", str(f)]) == 1


def test_iteration_budget_exit_3(capsys):
    code, out = _run(["solve", "source", "--mu", "2.0", "--resolution", "1000", "--sigma", "1e-3", "--max-iter", "1"], capsys)
    assert code == 3
    assert json.loads(out)["iteration"]["status"] == "max_iter"


def test_no_wall_time(capsys):
    _, out = _run(["solve", "source", "--mu", "2.0", "--resolution", "1000", "--sigma", "1e-3"], capsys)
    assert "wall_time" not in out


def test_byte_identical_rerun(capsys):
    argv = ["solve", "threshold", "--mu", "2.0", "--resolution", "1000", "--seed", "3"]
    a = _run(argv, capsys)
    b = _run(argv, capsys)
    assert a == b


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "hardypot", "exponents", "--mu", "2.0"], capture_output=True, text=True, check=False)
    assert res.returncode == 0
    assert json.loads(res.stdout)["alpha_plus"] == 2.0


def test_parser_requires_command():
    with pytest.raises(SystemExit):
        build_parser().parse_args([])
