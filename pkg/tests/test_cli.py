import csv

import pytest

from nsnr import NetworkConfig, Scenario
from nsnr.cli import (
    COVERAGE_COLUMNS,
    GAIN_COLUMNS,
    SweepSpec,
    build_parser,
    dump_config,
    load_config,
    main,
    resolve,
)
from nsnr.errors import ConfigError


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_config_round_trip(tmp_path):
    cfg = NetworkConfig(lambda_b=0.3, lambda_u=1.2, power=2.0, noise=0.01, alpha=3.5, scenario=2)
    spec = SweepSpec(theta_db=(-3.0, 0.5), ratios=(1.0, 4.0), scenario=2, methods=("general",), trials=77, seed=9)
    path = tmp_path / "run.ini"
    path.write_text(dump_config(cfg, spec))
    args = build_parser().parse_args(["coverage", "--config", str(path)])
    cfg2, spec2, _ = resolve(args)
    assert cfg2 == cfg and spec2 == spec
    path2 = tmp_path / "again.ini"
    path2.write_text(dump_config(cfg2, spec2))
    assert load_config(path2) == load_config(path)


def test_flags_override_file(tmp_path):
    path = tmp_path / "run.ini"
    path.write_text("[network]\nalpha = 3.0\n[sweep]\ntrials = 10\nseed = 1\n")
    args = build_parser().parse_args(["coverage", "--config", str(path), "--alpha", "5", "--seed", "4"])
    cfg, spec, _ = resolve(args)
    assert cfg.alpha == 5.0 and spec.seed == 4 and spec.trials == 10


def test_defaults():
    cfg, spec, _ = resolve(build_parser().parse_args(["coverage"]))
    assert cfg == NetworkConfig(lambda_u=cfg.lambda_u)
    assert spec.theta_db == (-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0)
    assert spec.ratios == (1.0, 2.0, 5.0, 10.0, 20.0)
    assert spec.trials == 100_000 and spec.seed == 42
    assert spec.scenario is Scenario.ALL_BS_ACTIVE


@pytest.mark.parametrize(
    "text",
    [
        "[network]\nalpha = abc\n",
        "[network]\nunknown = 1\n",
        "[other]\nx = 1\n",
        "[sweep]\nmethods = magic\n",
        "[sweep]\ntrials = many\n",
    ],
)
def test_bad_config_is_rejected(tmp_path, text, capsys):
    path = tmp_path / "bad.ini"
    path.write_text(text)
    assert main(["coverage", "--config", str(path)]) == 1
    assert "error" in capsys.readouterr().err


def test_sweep_spec_validation():
    with pytest.raises(ConfigError):
        SweepSpec(theta_db=())
    with pytest.raises(ConfigError):
        SweepSpec(trials=0)
    SweepSpec(trials=0, methods=("special",))


def test_coverage_csv(tmp_path):
    out = tmp_path / "cov.csv"
    code = main(["coverage", "--ratios", "10,1,5", "--methods", "general,special,approx,montecarlo", "--trials", "3000", "--out", str(out)])
    assert code == 0
    rows = read_csv(out)
    assert tuple(rows[0].keys()) == COVERAGE_COLUMNS
    assert len(rows) == 21
    assert [float(r["ratio"]) for r in rows[::7]] == [1.0, 5.0, 10.0]
    for r in rows:
        for key in ("pc_general", "pc_special", "pc_approx", "pc_mc"):
            assert 0.0 <= float(r[key]) <= 1.0
    for start in (0, 7, 14):
        special = [float(r["pc_special"]) for r in rows[start : start + 7]]
        assert all(b <= a for a, b in zip(special, special[1:]))
    for low, high in zip(rows[0:7], rows[14:21]):
        assert float(high["pc_special"]) >= float(low["pc_special"])
        assert float(high["pc_mc"]) >= float(low["pc_mc"])


def test_coverage_threshold_conversion(tmp_path):
    out = tmp_path / "cov.csv"
    assert main(["coverage", "--theta-db", "10", "--ratios", "2", "--methods", "special", "--out", str(out)]) == 0
    from nsnr.analysis import coverage_special_case

    assert float(read_csv(out)[0]["pc_special"]) == coverage_special_case(10.0, 2.0).probability


def test_unavailable_methods_are_empty(tmp_path):
    out = tmp_path / "cov.csv"
    assert main(["coverage", "--theta-db", "0", "--ratios", "2.5", "--methods", "special,approx", "--out", str(out)]) == 0
    row = read_csv(out)[0]
    assert row["pc_special"] != "" and row["pc_approx"] == "" and row["pc_mc"] == "" and row["pc_general"] == ""
    assert main(["coverage", "--theta-db", "0", "--ratios", "2", "--alpha", "3", "--out", str(out), "--methods", "general,special"]) == 0
    row = read_csv(out)[0]
    assert row["pc_general"] != "" and row["pc_special"] == ""


def test_gain_csv(tmp_path):
    out = tmp_path / "gain.csv"
    assert main(["gain", "--ratios", "1,2,5,10,20", "--out", str(out)]) == 0
    rows = read_csv(out)
    assert tuple(rows[0].keys()) == GAIN_COLUMNS
    assert len(rows) == 10
    by_scenario = {}
    for r in rows:
        assert float(r["gain"]) >= 1.0
        assert float(r["gain"]) == pytest.approx(float(r["tau_s"]) / float(r["tau_r"]))
        by_scenario.setdefault(r["scenario"], []).append(float(r["gain"]))
    for gains in by_scenario.values():
        assert all(b >= a for a, b in zip(gains, gains[1:]))
    first = abs(by_scenario["2"][0] - by_scenario["1"][0])
    last = abs(by_scenario["2"][-1] - by_scenario["1"][-1])
    assert last < first


def test_gain_with_montecarlo(tmp_path):
    out = tmp_path / "gain.csv"
    assert main(["gain", "--ratios", "2", "--scenario", "1", "--methods", "general,montecarlo", "--trials", "2000", "--out", str(out)]) == 0
    (row,) = read_csv(out)
    assert row["scenario"] == "1"
    assert abs(float(row["gain_mc"]) - float(row["gain"])) <= 0.01 + 3 * float(row["gain_mc_ci_halfwidth"])


def test_deployment_is_deterministic(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["deployment", "--seed", "7", "--out", str(a)]) == 0
    assert main(["deployment", "--seed", "7", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    rows = read_csv(a)
    assert sum(r["kind"] == "tagged" for r in rows) == 1


def test_io_error_exit_code(tmp_path):
    assert main(["coverage", "--methods", "special", "--out", str(tmp_path / "missing" / "x.csv")]) == 3


def test_numerical_failure_exit_code(capsys):
    assert main(["coverage", "--methods", "special", "--ratios", "200", "--theta-db", "0"]) == 2
    assert "numerical" in capsys.readouterr().err


def test_invalid_flag_value_exit_code():
    assert main(["coverage", "--alpha", "2", "--methods", "special"]) == 1


def test_validate_small_run(tmp_path, capsys):
    out = tmp_path / "v.csv"
    code = main(["validate", "--trials", "2000", "--ratios", "1,5", "--theta-db", "0,10", "--out", str(out)])
    printed = capsys.readouterr().out
    assert "special_vs_general" in printed
    rows = read_csv(out)
    assert {r["passed"] for r in rows} <= {"pass", "fail"}
    assert code == (0 if all(r["passed"] == "pass" for r in rows) else 1)
