import json

import numpy as np
import pytest

from clustered_stackelberg.cli import main
from clustered_stackelberg.harness import (
    ConfigError,
    RunConfig,
    barrier_gap_sweep,
    build_graph,
    build_spec,
    compare_schedules,
    run,
)
from clustered_stackelberg.scenarios import build_cellular

LQ = {
    "scenario": "lq",
    "scenario_params": {"cluster_sizes": [1, 2], "leader_dims": [2, 1], "follower_dims": [2, 1, 2]},
    "T": 5, "D": 5, "B": 10, "max_iter": 20, "seed": 3,
    "schedule": {"kind": "constant", "beta": 0.02},
    "compare": {"constant_beta": 0.02, "diminishing_scale": 0.05},
}


def _write(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def test_config_round_trip():
    cfg = RunConfig.from_dict(LQ)
    assert cfg.schedule.beta == 0.02 and cfg.compare.diminishing_decay == 0.6
    again = RunConfig.from_dict({k: v for k, v in cfg.to_dict().items()})
    assert again == cfg


@pytest.mark.parametrize("bad", [
    {"scenaro": "lq"},
    {"schedule": {"kind": "constant", "bta": 1.0}},
    {"scenario": "nope"},
    {"T": 0},
    {"schedule": {"kind": "sometimes"}},
    {"xi_fraction": 1.5},
    {"scenario": "file"},
    {"barrier": 3},
])
def test_config_rejects_bad_input(bad):
    with pytest.raises(ConfigError):
        RunConfig.from_dict(bad)


def test_unknown_scenario_params_rejected():
    with pytest.raises(ConfigError):
        build_spec(RunConfig.from_dict({"scenario_params": {"clusters": [1]}}))
    with pytest.raises(ConfigError):
        build_spec(RunConfig.from_dict({"scenario": "microgrid", "scenario_params": {"x": 1}}))


def test_default_graphs():
    cfg = RunConfig.from_dict({"scenario": "microgrid"})
    g = build_graph(cfg, 4)
    assert g.edges == frozenset({(0, 3), (0, 1), (1, 2), (1, 3)})
    g = build_graph(RunConfig(), 3)
    assert g.edges == frozenset({(0, 1), (1, 2)})
    g = build_graph(RunConfig.from_dict({"xi_fraction": 0.25}), 3)
    assert np.isclose(g.xi[0, 1], 0.25 * g.W[0, 0] / g.W[0, 1])


def test_run_writes_outputs_byte_identically(tmp_path):
    cfg = RunConfig.from_dict(LQ)
    run(cfg, tmp_path / "a")
    run(cfg, tmp_path / "b")
    for name in ("trajectory.csv", "theory.json", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    header = (tmp_path / "a" / "trajectory.csv").read_text().splitlines()[0]
    assert header.startswith("k,beta,rel_x_err")
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["seed"] == 3 and manifest["config"]["T"] == 5


def test_run_without_oracle_writes_na(tmp_path):
    cfg = RunConfig.from_dict({**LQ, "oracle": False})
    run(cfg, tmp_path)
    row = (tmp_path / "trajectory.csv").read_text().splitlines()[1].split(",")
    assert row[2] == "NA" and row[-1] == "NA"


def test_compare_needs_both_steps():
    with pytest.raises(ConfigError):
        compare_schedules(RunConfig())
    out = compare_schedules(RunConfig.from_dict(LQ))
    assert set(out["hits"]) == {"constant", "diminishing"}


def test_barrier_sweep_respects_bounds():
    spec = build_cellular(rng_seed=0)
    rows = barrier_gap_sweep(spec, [1e1, 1e3, 1e5])
    for r in rows:
        assert r["gap"] <= r["gap_bound"] and r["y_err"] <= r["y_bound"]
    assert rows[0]["gap"] > rows[-1]["gap"]


def test_cli_run_and_theory(tmp_path, capsys):
    path = _write(tmp_path, LQ)
    assert main(["run", "--config", path, "--out", str(tmp_path / "out")]) == 0
    assert (tmp_path / "out" / "trajectory.csv").exists()
    assert main(["theory", "--config", path]) == 0
    out = capsys.readouterr().out
    assert '"beta_limit"' in out


def test_cli_compare_and_sweep(tmp_path, capsys):
    path = _write(tmp_path, LQ)
    assert main(["compare-schedules", "--config", path, "--out", str(tmp_path / "cmp")]) == 0
    assert (tmp_path / "cmp" / "trajectory_constant.csv").exists()
    cell = _write(tmp_path, {"scenario": "cellular"}, "cell.json")
    assert main(["barrier-sweep", "--config", cell, "--theta", "10,1000"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert "theta,gap,gap_bound,y_err,y_bound" in lines


def test_cli_reports_config_errors(tmp_path, capsys):
    path = _write(tmp_path, {"bogus": 1})
    assert main(["run", "--config", path]) == 2
    assert main(["run", "--config", str(tmp_path / "missing.json")]) == 2
    (tmp_path / "broken.json").write_text("{")
    assert main(["theory", "--config", str(tmp_path / "broken.json")]) == 2
    assert "error:" in capsys.readouterr().err


def test_cli_seed_override(tmp_path):
    path = _write(tmp_path, LQ)
    main(["run", "--config", path, "--seed", "9", "--out", str(tmp_path / "s")])
    manifest = json.loads((tmp_path / "s" / "manifest.json").read_text())
    assert manifest["seed"] == 9
