import csv
import io
import json

import numpy as np
import pytest

from eigensteer import __version__
from eigensteer.cli import (
    EXIT_IO,
    EXIT_NMAX,
    EXIT_OK,
    EXIT_PRECONDITION,
    EXIT_USAGE,
    RunConfig,
    dump_config,
    load_config,
    main,
    parse_config,
    parse_u0,
)
from eigensteer.errors import ConfigError


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


# -- config -------------------------------------------------------------------------


def test_empty_config_is_default():
    assert parse_config("") == RunConfig()
    assert parse_config("# only a comment\n\n   \n") == RunConfig()


def test_config_override_and_comments():
    cfg = parse_config("nctrl = 12   # more modes\nstrict = true\nproblem=neumann-x2\n")
    assert cfg.nctrl == 12 and cfg.strict is True and cfg.problem == "neumann-x2"


def test_config_errors_carry_line_numbers():
    with pytest.raises(ConfigError) as exc:
        parse_config("j = 1\nnctrl 12\n")
    assert exc.value.line == 2 and "line 2" in str(exc.value)
    with pytest.raises(ConfigError) as exc:
        parse_config("colour = red\n")
    assert exc.value.line == 1
    with pytest.raises(ConfigError):
        parse_config("nctrl = twelve\n")
    with pytest.raises(ConfigError):
        parse_config("strict = maybe\n")


def test_config_round_trip(tmp_path):
    cfg = RunConfig(problem="radial-x2", j=2, u0="1,0.5", T=0.75, nctrl=8, nsim=20, tol=1e-9, strict=True,
                    nu="12.5", T0=0.2, C=1.5, dt=5e-4, out="r.json", csv="t.csv")
    path = tmp_path / "run.cfg"
    path.write_text(dump_config(cfg))
    assert load_config(str(path)) == cfg


@pytest.mark.parametrize("kw", [dict(problem="nope"), dict(j=0), dict(nctrl=17), dict(T=0.0), dict(C=0.5),
                                dict(nu="abc"), dict(nu="3.0", T0=0.0), dict(mode="global")])
def test_config_validation(kw):
    with pytest.raises(ConfigError):
        RunConfig(**kw).validate()


def test_parse_u0():
    u = parse_u0("eigen+eps:2:1e-3", 1, 5)
    assert u.tolist() == [1.0, 1e-3, 0.0, 0.0, 0.0]
    u = parse_u0("eigen+eps:2:1e-3:5:1e-4", 2, 6)
    assert u.tolist() == [0.0, 1.001, 0.0, 0.0, 1e-4, 0.0]
    assert parse_u0("1, 0, 0.5", 1, 4).tolist() == [1.0, 0.0, 0.5, 0.0]
    for bad in ("eigen+eps:2", "eigen+eps:40:1", "a,b", "0,0,0,0,0,1"):
        with pytest.raises(ConfigError):
            parse_u0(bad, 1, 4)


# -- subcommands --------------------------------------------------------------------


def test_gallery_lists_four(capsys):
    code, out, _ = run(capsys, "gallery")
    assert code == EXIT_OK and len(out.strip().splitlines()) == 5
    code, out, _ = run(capsys, "gallery", "--json")
    d = json.loads(out)
    assert len(d["problems"]) == 4 and d["version"] == __version__


def test_constants_schema(capsys):
    code, out, _ = run(capsys, "constants", "--problem", "dirichlet-x2", "--j", "1", "--T", "1", "--nu", "auto",
                       "--C", "1")
    assert code == EXIT_OK
    d = json.loads(out)
    assert {"Gamma0", "RT", "T1", "Tf", "GammaJ", "M", "C", "version"} <= set(d)
    assert d["GammaJ"] == pytest.approx(79.55697896664643, rel=1e-12)
    assert d["steering"]["lambda_shift"] == pytest.approx(np.pi ** 2)


def test_cost_csv(capsys):
    code, out, _ = run(capsys, "cost", "--tgrid", "0.2,0.5")
    assert code == EXIT_OK
    rows = list(csv.DictReader(io.StringIO(out)))
    assert [float(r["T"]) for r in rows] == [0.2, 0.5]
    assert all(float(r["log_bound"]) > np.log(float(r["empirical_cost"])) for r in rows)
    # 17 significant digits
    assert len(rows[0]["empirical_cost"].split("e")[0].replace(".", "").lstrip("-")) == 17


def test_simulate_csv(capsys):
    code, out, _ = run(capsys, "simulate", "--T", "0.1", "--samples", "3", "--nsim", "4")
    assert code == EXIT_OK
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0] == ["t", "coeff_1", "coeff_2", "coeff_3", "coeff_4", "norm"]
    assert len(rows) == 4
    assert float(rows[-1][1]) == pytest.approx(np.exp(-np.pi ** 2 * 0.1), rel=1e-14)


def test_steer_default_example_exits_zero(capsys, tmp_path):
    report, traj = tmp_path / "r.json", tmp_path / "t.csv"
    code, _, _ = run(capsys, "steer", "--problem", "dirichlet-x2", "--j", "1", "--u0", "eigen+eps:2:1e-3",
                     "--T", "1", "--out", str(report), "--csv", str(traj))
    assert code == EXIT_OK
    d = json.loads(report.read_text())
    assert d["version"] == __version__ and d["report"]["status"] == "converged"
    assert d["report"]["constants"]["Gamma0"] > 0 and d["config"]["C"] == 1.0
    header = traj.read_text().splitlines()[0].split(",")
    assert header[:3] == ["t", "p", "error"] and header[-1] == "norm"


def test_steer_output_is_deterministic(capsys, tmp_path):
    outs = []
    for i in range(2):
        (tmp_path / str(i)).mkdir()
        r, t = tmp_path / str(i) / "r.json", tmp_path / str(i) / "t.csv"
        argv = ["--log", str(tmp_path / "side.log"), "steer", "--out", "r.json", "--csv", "t.csv"]
        with pytest.MonkeyPatch.context() as mp:
            mp.chdir(tmp_path / str(i))
            assert run(capsys, *argv)[0] == 0
        outs.append((r.read_bytes(), t.read_bytes()))
    assert outs[0] == outs[1]
    assert (tmp_path / "side.log").read_text()


def test_steer_exit_codes(capsys, tmp_path):
    assert run(capsys, "steer", "--nmax", "1")[0] == EXIT_NMAX
    assert run(capsys, "steer", "--strict")[0] == EXIT_PRECONDITION
    assert run(capsys, "steer", "--mode", "projection", "--u0", "0.1,0.5", "--R", "1")[0] == EXIT_PRECONDITION
    assert run(capsys, "steer", "--nsim", "5")[0] == EXIT_USAGE


def test_steer_derived_cost_horizon(capsys):
    code, out, _ = run(capsys, "steer", "--T0", "0")
    d = json.loads(out)
    assert code == EXIT_OK and d["report"]["final_error"] <= 1e-8
    assert d["report"]["constants"]["T0"] == pytest.approx(1 / np.pi ** 2)


def test_steer_semiglobal_modes(capsys):
    code, out, _ = run(capsys, "steer", "--mode", "semiglobal", "--u0", "1,0,5", "--R", "5", "--r1", "1e-2")
    assert code == EXIT_OK
    d = json.loads(out)["report"]
    assert d["T_R"] == pytest.approx(d["t_R"] + 1.0)
    code, out, _ = run(capsys, "steer", "--mode", "projection", "--u0=-1,0.5", "--R", "0.5", "--r1", "1e-3")
    assert code == EXIT_OK and json.loads(out)["report"]["unscaled_error"] <= 1e-7


def test_usage_errors(capsys):
    assert run(capsys, "bogus")[0] == EXIT_USAGE
    assert run(capsys, "steer", "--frobnicate")[0] == EXIT_USAGE
    assert run(capsys)[0] == EXIT_USAGE
    code, _, err = run(capsys, "steer", "--T", "-1")
    assert code == EXIT_USAGE and "T must be positive" in err
    assert run(capsys, "--version")[0] == 0


def test_io_errors(capsys, tmp_path):
    assert run(capsys, "steer", "--config", str(tmp_path / "missing.cfg"))[0] == EXIT_IO
    assert run(capsys, "gallery", "--out", str(tmp_path / "no" / "dir" / "x.txt"))[0] == EXIT_IO
    assert run(capsys, "--log", str(tmp_path / "no" / "x.log"), "gallery")[0] == EXIT_IO


def test_config_file_and_flag_precedence(capsys, tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text("problem = neumann-x2\ntgrid = 0.5\n")
    code, out, _ = run(capsys, "cost", "--config", str(path), "--tgrid", "1.0")
    assert code == EXIT_OK
    assert [float(r["T"]) for r in csv.DictReader(io.StringIO(out))] == [1.0]
    path.write_text("nctrl 3\n")
    code, _, err = run(capsys, "cost", "--config", str(path))
    assert code == EXIT_USAGE and "line 1" in err
