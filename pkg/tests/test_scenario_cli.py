import math

import numpy as np
import pytest

from conftest import complete_flows
from sitplan.cli import EXIT_INFEASIBLE, EXIT_INPUT, EXIT_OK, fmt, main
from sitplan.errors import ScenarioError
from sitplan.metzler import build_connectivity, is_irreducible
from sitplan.scenario import load_preset, parse_grid, parse_scenario, parse_text, preset_names, serialize

BASE = """
name: s
network:
  n: 3
  topology: complete
  rate: 0.02
control:
  lambda_bar: [inf, 0, 250]
"""


def test_inf_token_and_defaults():
    sc = parse_text(BASE)
    cfg = sc.build_config()
    assert cfg.bounds.cs_infinite == {0} and cfg.bounds.cs_finite == {2}
    m = sc.build_model()
    np.testing.assert_array_equal(m.Ds, m.D)
    np.testing.assert_allclose(m.D, build_connectivity(complete_flows(3, 0.02)))
    assert cfg.gamma == 0.6 and cfg.alpha == 1e-4
    np.testing.assert_allclose(m.b, 6.60)


def test_grid_topology():
    sc = load_preset("grid4x5")
    m = sc.build_model()
    assert m.n == 20 and is_irreducible(m.D)
    degree = (m.D > 0).sum(axis=0)
    assert sorted(set(degree.tolist())) == [2, 3, 4]
    assert degree[0] == 2 and degree[6] == 4
    assert sc.build_config().bounds.cs == {5, 7, 9, 15, 17}


def test_sterile_scale_and_trapping():
    text = BASE + """  trapping: {patches: [1, 3], rho: 0.05}
"""
    text = text.replace("  rate: 0.02\n", "  rate: 0.02\n  sterile_flows: {scale: 0.5}\n")
    sc = parse_text(text)
    m, cfg = sc.build_model(), sc.build_config()
    np.testing.assert_allclose(m.Ds, 0.5 * m.D)
    np.testing.assert_allclose(cfg.rho, [0.05, 0, 0.05])
    np.testing.assert_allclose(cfg.rho_s, cfg.rho)
    half = parse_text(text.replace("rho: 0.05}", "rho: 0.05, rho_s: 0.025}")).build_config()
    np.testing.assert_allclose(half.rho_s, [0.025, 0, 0.025])


@pytest.mark.parametrize("edit,fld", [
    (("n: 3", "n: 0"), "network.n"),
    (("topology: complete", "topology: ring"), "network.topology"),
    (("lambda_bar: [inf, 0, 250]", "lambda_bar: [inf, 0]"), "control.lambda_bar"),
    (("lambda_bar: [inf, 0, 250]", "lambda_bar: [inf, -1, 250]"), "control.lambda_bar"),
    (("lambda_bar: [inf, 0, 250]", "lambda_bar: [inf, 0, 250]\n  forbidden: [1]"), "control.forbidden"),
    (("rate: 0.02", "rate: fast"), "network.rate"),
])
def test_validation_errors(edit, fld):
    with pytest.raises(ScenarioError) as err:
        parse_text(BASE.replace(*edit), path="x.yaml")
    assert err.value.field == fld
    assert str(err.value).startswith(f"x.yaml:{fld}")


def test_malformed_yaml():
    with pytest.raises(ScenarioError):
        parse_text("network: [unclosed")
    with pytest.raises(ScenarioError):
        parse_scenario("/nonexistent/file.yaml")


@pytest.mark.parametrize("name", preset_names())
def test_presets_round_trip(name):
    sc = load_preset(name)
    again = parse_text(serialize(sc))
    assert again == sc
    assert parse_text(serialize(again)) == again
    sc.build_model()
    sc.build_config()


def test_round_trip_explicit_flows():
    text = """
name: e
network:
  n: 2
  biology: {b: [6.6, 5.0], a: [0, 12.5]}
  topology: explicit
  flows: [[0, 0.01], [0.03, 0]]
  sterile_flows: [[0, 0.0], [0.02, 0]]
control:
  release: [2]
  release_bound: 800
  pi: [1, 2]
experiment: {kind: enumerate, k: 1, trap: [1], a_grid: "0:100:5"}
"""
    sc = parse_text(text)
    assert parse_text(serialize(sc)) == sc
    assert sc.experiment.a_grid == (0.0, 25.0, 50.0, 75.0, 100.0)
    assert sc.experiment.trap == (0,)
    assert sc.control.lambda_bar == (0.0, 800.0)


def test_parse_grid():
    assert parse_grid("0:100:3") == (0.0, 50.0, 100.0)
    assert parse_grid("1, 2.5") == (1.0, 2.5)


def test_fmt():
    assert fmt(1004.536076) == "1004.54"
    assert fmt(None) == "" and fmt(math.inf) == "inf"


def test_cli_equilibrium(capsys, tmp_path):
    code = main(["--scenario", "preset:complete3_d002", "--out", str(tmp_path), "equilibrium"])
    assert code == EXIT_OK
    assert "(6587.62, 6587.62, 6587.62)" in capsys.readouterr().out
    assert (tmp_path / "complete3_d002_equilibrium.csv").read_text().splitlines()[1] == "1,6587.62"


def test_cli_enumerate_chain7(capsys, tmp_path):
    code = main(["--scenario", "preset:chain7_d002", "--out", str(tmp_path), "enumerate", "--k", "1"])
    assert code == EXIT_OK
    first = capsys.readouterr().out.splitlines()[1]
    assert "{4}" in first and "total 8408" in first


def test_cli_feasibility_exit_codes(tmp_path, capsys):
    f = tmp_path / "none.yaml"
    f.write_text("name: none\nnetwork: {n: 3, topology: complete, rate: 0.02}\ncontrol: {release: []}\n")
    assert main(["--scenario", str(f), "feasibility"]) == EXIT_INFEASIBLE
    assert main(["--scenario", str(f), "optimize"]) == EXIT_INFEASIBLE
    f.write_text("network: {n: -1}\n")
    assert main(["--scenario", str(f), "optimize"]) == EXIT_INPUT
    assert main(["equilibrium"]) == EXIT_INPUT
    assert main(["--scenario", "preset:chain7_d002", "enumerate", "--k", "9"]) == EXIT_INPUT


def test_cli_deterministic_csv(tmp_path):
    outs = []
    for run in ("a", "b"):
        d = tmp_path / run
        assert main(["--scenario", "preset:complete3_het_d002", "--out", str(d), "enumerate", "--k", "2"]) == EXIT_OK
        outs.append((d / "complete3_het_d002_enumerate.csv").read_bytes())
    assert outs[0] == outs[1]


def test_cli_optimize_and_sweep(tmp_path, capsys):
    assert main(["--scenario", "preset:complete3_d002", "--tol-report", "--out", str(tmp_path), "optimize"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "(243,243,243) total 729" in out and "kkt residual" in out
    assert main(["--scenario", "preset:complete3_d002", "sweep-allee", "--a-grid", "0:100:3"]) == EXIT_OK
    assert "fit: total = -0.12" in capsys.readouterr().out


def test_cli_duration_estimate_only(tmp_path, capsys):
    code = main(["--scenario", "preset:duration3", "--out", str(tmp_path), "duration", "--p", "1,2",
                 "--a-grid", "50", "--estimate-only"])
    assert code == EXIT_OK
    lines = (tmp_path / "duration3_duration.csv").read_text().splitlines()
    assert lines[0] == "a_value,p,tau_exact_days,tau_estimate_days,total_released,total_released_estimate"
    assert len(lines) == 3
    row = lines[1].split(",")
    assert row[2] == "" and float(row[3]) > 0


def test_cli_presets_listing(capsys):
    assert main(["presets"]) == EXIT_OK
    assert "grid4x5" in capsys.readouterr().out.split()
