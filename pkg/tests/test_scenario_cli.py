import json

import pytest

from fogdomain.cli import main
from fogdomain.figures import IncompatibleScenario, figure_data
from fogdomain.scenario import ConfigError, bundled_path, bundled_scenarios, config_from_dict, load_scenario


def test_bundled_scenarios_load():
    names = bundled_scenarios()
    assert "soak_r3_hfalse.yaml" in names and "migrate_postgres.yaml" in names
    for name in names:
        load_scenario(bundled_path(name))


def test_soak_request_and_trigger_counts():
    c = load_scenario(bundled_path("soak_r3_hfalse"))
    assert c.request_count == 28800 and len(c.migration_offsets_s()) == 1585
    c = load_scenario(bundled_path("soak_r1_htrue"))
    assert c.request_count == 86400 and len(c.migration_offsets_s()) == 1114


@pytest.mark.parametrize("bad", [
    {"R": 0},
    {"kind": "bogus"},
    {"colour": "blue"},
    {"client": {"timeout": 3}},
    {"H": "yes"},
    {"cluster_size": 2},
    {"kind": "availability_soak"},
])
def test_invalid_configs_rejected(bad):
    with pytest.raises(ConfigError):
        config_from_dict(bad)


def test_hash_depends_on_every_field():
    a = config_from_dict({})
    b = config_from_dict({"ledger": {"block_interval_ms": 500}})
    assert a.config_hash() != b.config_hash()


def test_yaml_errors_are_config_errors(tmp_path):
    p = tmp_path / "x.yaml"
    p.write_text("R: [1,\n")
    with pytest.raises(ConfigError):
        load_scenario(p)


def test_cli_run_writes_self_describing_artifacts(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["run", "migrate_postgres", "--out", str(out), "--seed", "5"]) == 0
    meta = json.loads((out / "metadata.json").read_text())
    assert meta["seed"] == 5 and meta["config"]["ledger"]["block_interval_ms"] == 1000.0
    assert meta["effective_profiles"]["postgres"]["processing_ms"] == 4.0
    for name in ("samples.jsonl", "ledger.jsonl", "flows.jsonl", "serves.jsonl"):
        header = json.loads((out / name).read_text().splitlines()[0])
        assert header["config_hash"] == meta["config_hash"] and header["seed"] == 5
    episodes = json.loads((out / "episodes.json").read_text())["episodes"]
    assert [e["phase"] for e in episodes] == ["SOLVED", "SOLVED"]
    path = figure_data(out, "f8c")
    rows = path.read_text().splitlines()
    assert rows[0].startswith("request_index") and len(rows) == 61


def test_cli_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("contracts:\n  vote_threshold: 4\n")
    assert main(["verify", str(bad)]) == 1
    assert "unsatisfiable" in capsys.readouterr().out
    assert main(["run", str(bad), "--out", str(tmp_path / "o")]) == 1
    assert main(["verify", "no_such_scenario"]) == 1
    assert main(["verify", "deploy_nginx", "--max-duration", "120"]) == 0


def test_cli_reports_stuck_episode(tmp_path):
    stuck = tmp_path / "stuck.yaml"
    # the run ends before the late migration can finish its vote
    stuck.write_text("kind: migrate\nR: 1\nduration_s: 20\nworkload_start_s: 10\n"
                     "migration_times_s: [18]\ndrain_s: 0\n")
    assert main(["run", str(stuck), "--out", str(tmp_path / "o")]) == 3


def test_figure_data_rejects_wrong_or_empty_runs(tmp_path):
    out = tmp_path / "deploy"
    main(["run", str(bundled_path("deploy_nginx")), "--out", str(out)])
    assert figure_data(out, "f6").exists()
    f7 = figure_data(out, "f7").read_text().splitlines()
    assert f7[0] == "latency_below_ms,percent_of_requests" and f7[-1].endswith(",100.0")
    with pytest.raises(IncompatibleScenario):
        figure_data(out, "f9")
    empty = tmp_path / "empty"
    empty.mkdir()
    (empty / "samples.jsonl").write_text((out / "samples.jsonl").read_text().splitlines()[0] + "\n")
    with pytest.raises(IncompatibleScenario):
        figure_data(empty, "f6")
    with pytest.raises(IncompatibleScenario):
        figure_data(tmp_path / "missing", "f6")
