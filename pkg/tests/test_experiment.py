import math
from statistics import NormalDist

import pytest

from uavnetsim.config import ConfigError, ScenarioConfig, set_field
from uavnetsim.experiment import (INFO_CONFIGS, Row, Runner, RunFailure, SweepSpec,
                                  compare_protocols, gnss_study, info_config, reaggregate,
                                  rows_to_csv, rows_to_json, run_key, run_sweep, seed_list,
                                  summarize)


def tiny(**kw):
    cfg = set_field(ScenarioConfig(), "duration", 8.0)
    cfg = set_field(cfg, "agents", 4)
    for k, v in kw.items():
        cfg = set_field(cfg, k.replace("__", "."), v)
    return cfg


def test_summarize_matches_formula():
    vals = [0.2, 0.5, 0.9, 0.4]
    s = summarize(vals)
    mean = sum(vals) / 4
    std = math.sqrt(sum((v - mean) ** 2 for v in vals) / 3)
    half = NormalDist().inv_cdf(0.975) * std / 2
    assert (s.mean, s.std, s.ci_low, s.ci_high, s.n) == pytest.approx((mean, std, mean - half, mean + half, 4))


def test_summarize_single_collapses():
    s = summarize([0.7])
    assert (s.ci_low, s.ci_high, s.std) == (0.7, 0.7, 0.0)
    with pytest.raises(ValueError):
        summarize([])


def test_single_value_single_seed_row():
    rows = run_sweep(SweepSpec(tiny(), "prediction.horizon_steps", (15,), 1))
    assert len(rows) == 1
    r = rows[0]
    assert r.n == 1 and r.ci_low == r.ci_high == r.mean_pdr


def test_sweep_csv_schema_and_determinism(tmp_path):
    spec = SweepSpec(tiny(), "prediction.horizon_steps", (0, 15), 2)
    a = rows_to_csv(run_sweep(spec, Runner(tmp_path / "a")))
    b = rows_to_csv(run_sweep(spec, Runner(tmp_path / "b")))
    assert a == b
    lines = a.splitlines()
    assert lines[0] == "param_value,protocol,mean_pdr,std,ci_low,ci_high,n"
    assert [ln.split(",")[0] for ln in lines[1:]] == ["0", "15"]
    for ln in lines[1:]:
        assert all(math.isfinite(float(x)) for x in ln.split(",")[2:])


def test_sweep_parallel_equals_serial(tmp_path):
    spec = SweepSpec(tiny(), "agents", (2, 3), 2)
    serial = run_sweep(spec, Runner(tmp_path / "s", jobs=1))
    parallel = run_sweep(spec, Runner(tmp_path / "p", jobs=2))
    assert serial == parallel


def test_runs_persisted_and_reused(tmp_path):
    spec = SweepSpec(tiny(), "agents", (2, 3), 2)
    runner = Runner(tmp_path)
    rows = run_sweep(spec, runner)
    assert runner.executed == 4
    files = sorted((tmp_path / "runs").glob("*.json"))
    assert len(files) == 4
    again = Runner(tmp_path)
    assert run_sweep(spec, again) == rows and again.executed == 0
    tasks = [(v, cfg, s) for v, cfg in spec.configs() for s in seed_list(2)]
    stats = reaggregate(tmp_path, tasks)
    for r in rows:
        s = stats[r.param_value]
        assert abs(s.mean - r.mean_pdr) <= 1e-9 and abs(s.ci_high - r.ci_high) <= 1e-9


def test_run_key_depends_on_config_and_seed():
    a = tiny()
    assert run_key(a, 1) != run_key(a, 2)
    assert run_key(a, 1) != run_key(set_field(a, "agents", 3), 1)


def test_sweep_spec_validation():
    with pytest.raises(ConfigError):
        SweepSpec(tiny(), "prediction.nope", (1,))
    with pytest.raises(ConfigError):
        SweepSpec(tiny(), "prediction.horizon_steps", ("many",))
    with pytest.raises(ConfigError):
        SweepSpec(tiny(), "prediction.horizon_steps", ())
    with pytest.raises(ConfigError):
        SweepSpec(tiny(), "agents", (0,))


def test_run_failure_reports_value_and_seed(monkeypatch):
    import uavnetsim.experiment as ex

    def boom(cfg, seed):
        raise RuntimeError("kaput")
    monkeypatch.setattr(ex, "run", boom)
    with pytest.raises(RunFailure) as exc:
        run_sweep(SweepSpec(tiny(), "agents", (3,), 1))
    assert exc.value.value == 3 and exc.value.seed == 1


def test_compare_identical_protocols_identical_rows():
    comp = compare_protocols(tiny(), ["batmobile", "batmobile"], 2)
    rows = [r for r in comp.rows]
    assert rows[0] == rows[2] and rows[1] == rows[3]
    assert set(comp.delta) == {"batmobile"}
    friis, naka = comp.row("batmobile", "friis"), comp.row("batmobile", "nakagami")
    assert comp.delta["batmobile"] == pytest.approx(friis.mean_pdr - naka.mean_pdr)


def test_compare_requires_two_protocols():
    with pytest.raises(ConfigError):
        compare_protocols(tiny(), ["batmobile"], 1)


def test_info_configs():
    assert len(INFO_CONFIGS) == 4
    cfg = info_config(tiny(), "extrapolation")
    assert not cfg.prediction.use_steering and not cfg.prediction.use_waypoints
    out = gnss_study(tiny(), (0.0, 60.0), ["waypoints"], 1)
    assert [r.param_value for r in out["waypoints"]] == [0.0, 60.0]


def test_json_emission():
    rows = [Row.of(1, "batmobile", [0.5, 0.7])]
    text = rows_to_json(rows)
    assert '"mean_pdr": 0.6' in text
