import json

import numpy as np
import pytest

from spimarket import cli
from spimarket.model import CoverageValuation, LinearValuation


SCN = {
    "goods": [{"lambda": 1.0, "mu": 1.0}, {"lambda": 0.8, "mu": 1.2}],
    "buyers": [
        {"gamma": 1.0, "valuation": {"kind": "linear", "weights": [1.0, 1.5]},
         "family": 0},
        {"gamma": 0.7, "valuation": {"kind": "linear", "weights": [2.0, 0.5]},
         "family": 0},
    ],
    "families": [{"kind": "uniform", "n": 2, "rank": 1}],
    "policy": "combinatorial",
    "horizon": 5000.0,
    "seed": 3,
}


@pytest.fixture
def scenario_file(tmp_path):
    path = tmp_path / "scn.json"
    path.write_text(json.dumps(SCN))
    return str(path)


def test_parse_error_reports_location():
    with pytest.raises(cli.ScenarioError, match=r"line 2, column"):
        cli.parse_scenario('{\n  "goods": [,]\n}')
    with pytest.raises(cli.ScenarioError, match="JSON object"):
        cli.parse_scenario("[1, 2]")


def test_instance_round_trip():
    inst = cli.instance_from_scenario(SCN)
    assert inst.n == 2 and inst.m == 2
    back = cli.scenario_from_instance(inst, policy="combinatorial")
    again = cli.instance_from_scenario(back)
    assert again == inst
    text = cli.emit_scenario(back)
    assert cli.instance_from_scenario(cli.parse_scenario(text)) == inst


def test_coverage_and_families_round_trip():
    scn = {
        "goods": [{"lambda": 1.0, "mu": 1.0}, {"lambda": 1.0, "mu": 1.0},
                  {"lambda": 1.0, "mu": 1.0}],
        "buyers": [{"gamma": 1.0,
                    "valuation": {"kind": "coverage", "universe": 2,
                                  "covers": [[0], [1], [0, 1]],
                                  "element_weights": [1.0, 2.0]},
                    "family": 0}],
        "families": [{"kind": "partition", "parts": [0, 0, 1],
                      "capacities": [1, 1]}],
    }
    inst = cli.instance_from_scenario(scn)
    assert isinstance(inst.buyers[0].valuation, CoverageValuation)
    assert cli.instance_from_scenario(
        cli.scenario_from_instance(inst)) == inst

    expl = dict(scn, families=[{"kind": "explicit", "n": 3,
                                "maximal": [3, 4]}])
    inst2 = cli.instance_from_scenario(expl)
    assert cli.instance_from_scenario(cli.scenario_from_instance(inst2)) == inst2


def test_bad_scenarios_rejected():
    with pytest.raises(cli.ScenarioError, match="unknown valuation"):
        cli.instance_from_scenario(
            {"goods": [{"lambda": 1, "mu": 1}],
             "buyers": [{"gamma": 1, "valuation": {"kind": "cubic"}}],
             "families": [{"kind": "uniform", "n": 1, "rank": 1}]})
    with pytest.raises(cli.ScenarioError, match="unknown family"):
        cli.instance_from_scenario(
            {"goods": [{"lambda": 1, "mu": 1}],
             "buyers": [{"gamma": 1,
                         "valuation": {"kind": "linear", "weights": [1.0]}}],
             "families": [{"kind": "graphic"}]})
    with pytest.raises(cli.ScenarioError, match="malformed"):
        cli.instance_from_scenario({"goods": [{"mu": 1}], "buyers": [],
                                    "families": []})
    with pytest.raises(cli.ScenarioError, match="invalid instance"):
        cli.instance_from_scenario(
            {"goods": [{"lambda": 1, "mu": -1}],
             "buyers": [{"gamma": 1,
                         "valuation": {"kind": "linear", "weights": [1.0]}}],
             "families": [{"kind": "uniform", "n": 1, "rank": 1}]})


def test_solve_lp_command(scenario_file, capsys):
    rc = cli.main(["solve-lp", scenario_file])
    out = capsys.readouterr().out
    assert rc == 0
    lines = out.strip().splitlines()
    assert lines[0].startswith("value,")
    assert lines[1] == "good,buyer,rate"
    assert len(lines) == 2 + 4
    off_value = float(lines[0].split(",")[1])
    rc = cli.main(["solve-lp", scenario_file, "--benchmark", "on"])
    on_value = float(capsys.readouterr().out.splitlines()[0].split(",")[1])
    assert rc == 0 and on_value <= off_value + 1e-9


def test_simulate_command_deterministic(scenario_file, capsys):
    rc = cli.main(["simulate", scenario_file, "--horizon", "4000"])
    first = capsys.readouterr().out
    assert rc == 0
    rc = cli.main(["simulate", scenario_file, "--horizon", "4000"])
    second = capsys.readouterr().out
    assert rc == 0 and first == second
    assert "reward_rate," in first
    # a different seed changes the output
    cli.main(["simulate", scenario_file, "--horizon", "4000", "--seed", "99"])
    assert capsys.readouterr().out != first


def test_simulate_trace_and_output_file(scenario_file, tmp_path, capsys):
    out = tmp_path / "rep.csv"
    rc = cli.main(["simulate", scenario_file, "--horizon", "2000",
                   "--trace", "10", "--output", str(out)])
    assert rc == 0
    text = out.read_text()
    assert "trace_time,kind,index,proposal_mask,sold_mask" in text
    assert capsys.readouterr().out == ""


def test_simulate_rejects_bad_warmup(scenario_file, capsys):
    rc = cli.main(["simulate", scenario_file, "--horizon", "100",
                   "--warmup", "200"])
    assert rc == 2
    assert "error:" in capsys.readouterr().err


def test_crs_command(scenario_file, capsys):
    rc = cli.main(["crs", scenario_file, "--buyer", "0"])
    out = capsys.readouterr().out
    assert rc == 0
    assert out.startswith("balance,")
    assert "marginals," in out
    rc = cli.main(["crs", scenario_file, "--buyer", "5"])
    assert rc == 2
    assert "out of range" in capsys.readouterr().err


def test_missing_file_is_usage_error(capsys):
    rc = cli.main(["solve-lp", "/nonexistent/path.json"])
    assert rc == 2
    assert "cannot read scenario" in capsys.readouterr().err


def test_verify_fast_suite_exit_codes(tmp_path, capsys):
    out = tmp_path / "suite.csv"
    rc = cli.main(["verify", "--suite", "fast", "--parallelism", "4",
                   "--output", str(out)])
    captured = capsys.readouterr().out
    assert rc == 0
    assert "suite: all passed" in captured
    csv_text = out.read_text()
    assert csv_text.splitlines()[0] == "name,measured,target,sigma,pass"
    # the negative control flips the exit code to 1
    rc = cli.main(["verify", "--suite", "fast", "--negative-control",
                   "--parallelism", "4"])
    captured = capsys.readouterr().out
    assert rc == 1
    assert "[FAIL] negative-control-corrupted-crs" in captured


def test_report_command(tmp_path, capsys):
    out = tmp_path / "report.csv"
    rc = cli.main(["report", "--suite", "fast", "--parallelism", "4",
                   "--output", str(out)])
    captured = capsys.readouterr()
    assert rc == 0
    assert "suite: all passed" in captured.err
    lines = out.read_text().splitlines()
    assert lines[0] == "name,measured,target,sigma,pass"
    assert all(line.endswith(",1") for line in lines[1:])


def test_policy_from_scenario_variants(scenario_file):
    scn = cli.parse_scenario(open(scenario_file).read())
    inst = cli.instance_from_scenario(scn)
    pol = cli.policy_from_scenario(scn, inst)
    assert pol.kind == "Combinatorial"
    pol = cli.policy_from_scenario(dict(scn, policy="greedy"), inst)
    assert pol.kind == "GreedyBaseline"
    with pytest.raises(cli.ScenarioError, match="unknown policy"):
        cli.policy_from_scenario(dict(scn, policy="psychic"), inst)
