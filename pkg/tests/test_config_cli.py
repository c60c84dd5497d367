import csv

import pytest

from robustcmu.cli import main, packaged_config
from robustcmu.config import StudySpec, parse_config
from robustcmu.errors import ConfigError, DimensionMismatch, ExponentOrderViolation, ParseError

BASE = """classes = 2
lambda = 0.5 0.5
mu = 1.0 1.0
mu_hat = 1 1
"""


def _write(tmp_path, text, name="c.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_reference_config_parses(reference):
    assert reference.config.rho.sum() == 1.0
    assert reference.config.m_hat.tolist() == [-0.5, -0.5]
    assert reference.divergence.pbar == 2.0
    assert reference.horizon == 20.0
    assert len(reference.family) == 10
    assert reference.adversary.is_zero


def test_all_shipped_configs_parse():
    for name in ("reference", "asymmetric", "single_class"):
        parse_config(packaged_config(name))


def test_dimension_mismatch_reports_line(tmp_path):
    path = _write(tmp_path, "classes = 2\nlambda = 0.5 0.5\nmu = 1.0\n")
    with pytest.raises(DimensionMismatch) as err:
        parse_config(path)
    assert err.value.line == 3


def test_exponent_order_reports_line(tmp_path):
    path = _write(tmp_path, BASE + "cost.p = 3 3\n# comment\ndiv.pbar = 2\n")
    with pytest.raises(ExponentOrderViolation) as err:
        parse_config(path)
    assert err.value.line == 7


@pytest.mark.parametrize(
    "extra, line",
    [("nonsense\n", 5), ("mu = 1 1\n", 5), ("foo = 1\n", 5), ("cost.c = a b\n", 5), ("discount = weekly\n", 5)],
)
def test_parse_errors(tmp_path, extra, line):
    with pytest.raises(ParseError) as err:
        parse_config(_write(tmp_path, BASE + extra))
    assert err.value.line == line


def test_adversary_and_family_keys(tmp_path):
    text = BASE + "adversary = const 0.5 0.5 -0.5 -0.5\nfamily.feedback = boundary 1\nfamily.feedback = threshold 2 1.5\n"
    bundle = parse_config(_write(tmp_path, text))
    assert bundle.adversary.label == "const(0.5,0.5,-0.5,-0.5)"
    assert [s.label for s in bundle.family[-2:]] == ["feedback:boundary:1", "feedback:threshold:2"]


def test_study_spec_validation():
    with pytest.raises(ConfigError):
        StudySpec(n_grid=())
    with pytest.raises(ConfigError):
        StudySpec(n_grid=(64, 16))
    with pytest.raises(ConfigError):
        StudySpec(reps=1)
    with pytest.raises(ConfigError):
        StudySpec(kind="other")


def test_empty_n_grid_in_file(tmp_path):
    with pytest.raises(ConfigError):
        parse_config(_write(tmp_path, BASE + "study.n_grid = \n"))


def test_cli_validate(capsys):
    assert main(["validate", "@reference"]) == 0
    assert "sum(rho) = 1" in capsys.readouterr().out


def test_cli_exit_codes(tmp_path, capsys):
    bad = _write(tmp_path, "classes = 2\nlambda = 0.5 0.5\nmu = 1.0\n")
    assert main(["validate", str(bad)]) == 2
    assert "line 3" in capsys.readouterr().err
    assert main(["validate", str(tmp_path / "missing.cfg")]) == 3
    tiny = _write(tmp_path, "lambda = 1\nmu = 1\nsim.horizon = 1\n", "tiny.cfg")
    assert main(["prelimit", str(tiny), "--n", "1000000", "--policy", "cmu_preemptive", "--reps", "2"]) == 0
    assert main(["prelimit", str(tiny), "--n", "4", "--policy", "static_priority:3", "--reps", "2"]) == 2


def test_cli_limit_and_prelimit_outputs(tmp_path, capsys):
    out = tmp_path / "limit.csv"
    assert main(["limit", "@reference", "--reps", "4", "--seed", "3", "--out", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    assert rows[0]["strategy_id"] == "zero" and rows[0]["seed"] == "3"
    events, traj = tmp_path / "ev.csv", tmp_path / "tr.csv"
    args = ["prelimit", "@reference", "--n", "16", "--policy", "static_priority:2,1", "--reps", "3"]
    assert main(args + ["--events", str(events), "--trajectory", str(traj)]) == 0
    header = events.read_text().splitlines()[0]
    assert header == "time,kind,class,x_1,x_2,T_1,T_2"
    assert traj.read_text().splitlines()[0] == "t,xhat_1,xhat_2,yhat_1,yhat_2,rn_A_1,rn_A_2,rn_S_1,rn_S_2"


def test_cli_study_collapse(tmp_path):
    cfg = _write(
        tmp_path,
        "lambda = 1\nmu = 1\nlambda_hat = -0.5\nstudy.n_grid = 4 16\nstudy.reps = 3\nsim.horizon = 2\n",
    )
    out = tmp_path / "collapse.csv"
    assert main(["study", str(cfg), "--kind", "collapse", "--out", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    assert [r["n"] for r in rows] == ["4", "16"]
    assert all(float(r["median_collapse_metric"]) <= 1e-8 for r in rows)
    assert main(["study", str(cfg), "--kind", "collapse"]) == 2
