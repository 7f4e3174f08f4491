import json

from click.testing import CliRunner

from uavnetsim.cli import main

FAST = ["--set", "duration=6", "--set", "agents=3"]


def invoke(*args, env=None):
    return CliRunner().invoke(main, list(args), env=env, catch_exceptions=False)


def test_run_csv_and_out_dir(tmp_path):
    res = invoke("run", *FAST, "--seeds", "2", "--out", str(tmp_path))
    assert res.exit_code == 0, res.output
    lines = res.output.splitlines()
    assert lines[0].startswith("seed,protocol,source,mean_pdr")
    assert len(lines) == 3
    assert (tmp_path / "run.csv").read_text() == res.output
    assert len(list((tmp_path / "runs").glob("*.json"))) == 2


def test_run_json_and_series(tmp_path):
    res = invoke("run", *FAST, "--seed", "7", "--format", "json", "--series", "--out", str(tmp_path))
    assert res.exit_code == 0
    data = json.loads(res.output)
    assert data[0]["seed"] == 7
    series = list((tmp_path / "series").glob("*.csv"))
    assert len(series) == 1 and series[0].read_text().startswith("time_s,pdr")


def test_env_var_out_dir(tmp_path):
    res = invoke("run", *FAST, "--seeds", "1", env={"UAVNETSIM_OUT": str(tmp_path / "envout")})
    assert res.exit_code == 0
    assert (tmp_path / "envout" / "run.csv").exists()


def test_config_file(tmp_path):
    cfg = tmp_path / "s.toml"
    cfg.write_text("agents = 2\nduration = 4.0\n[channel]\nmodel = 'nakagami'\n")
    res = invoke("run", "--config", str(cfg), "--seeds", "1", "--out", str(tmp_path), "--format", "json")
    assert res.exit_code == 0
    assert json.loads(res.output)[0]["protocol"] == "batmobile"


def test_sweep(tmp_path):
    res = invoke("sweep", *FAST, "--param", "prediction.horizon_steps", "--values", "0,15",
                 "--seeds", "1", "--out", str(tmp_path))
    assert res.exit_code == 0, res.output
    lines = res.output.splitlines()
    assert lines[0] == "param_value,protocol,mean_pdr,std,ci_low,ci_high,n"
    assert len(lines) == 3


def test_sweep_info_configs(tmp_path):
    res = invoke("sweep", *FAST, "--param", "gnss.max_error", "--values", "0,60", "--seeds", "1",
                 "--info-configs", "--out", str(tmp_path))
    assert res.exit_code == 0, res.output
    lines = res.output.splitlines()
    assert lines[0].startswith("configuration,param_value")
    assert len(lines) == 1 + 4 * 2


def test_compare_json(tmp_path):
    res = invoke("compare", *FAST, "--seeds", "1", "--format", "json", "--out", str(tmp_path))
    assert res.exit_code == 0, res.output
    data = json.loads(res.output)
    assert len(data["rows"]) == 4
    assert set(data["delta_pdr"]) == {"batmobile", "batman-baseline"}


def test_compare_csv(tmp_path):
    res = invoke("compare", *FAST, "--seeds", "1", "--out", str(tmp_path))
    assert res.exit_code == 0
    assert res.output.startswith("protocol,channel,mean_pdr")
    assert "protocol,delta_pdr" in res.output


def test_config_error_exit_code(tmp_path):
    res = CliRunner().invoke(main, ["run", "--set", "agents=0", "--out", str(tmp_path)])
    assert res.exit_code == 2
    assert "agents" in res.output


def test_unknown_sweep_field(tmp_path):
    res = CliRunner().invoke(main, ["sweep", "--param", "x.y", "--values", "1", "--out", str(tmp_path)])
    assert res.exit_code == 2 and "x.y" in res.output


def test_missing_config_file(tmp_path):
    res = CliRunner().invoke(main, ["run", "--config", str(tmp_path / "none.toml")])
    assert res.exit_code == 2


def test_defaults_command():
    res = invoke("defaults", "--set", "agents=3")
    assert res.exit_code == 0
    assert "agents = 3" in res.output
