"""Command line entry point: ``uavnetsim run | sweep | compare | defaults``."""
from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import tomli

from .config import ConfigError, ScenarioConfig, dumps, load_config, reference_preset, set_field
from .experiment import (COMPARE_COLUMNS, INFO_CONFIGS, ROW_COLUMNS, Runner, RunFailure, SweepSpec,
                         compare_protocols, default_out_dir, info_config, rows_to_csv, rows_to_json,
                         run_key, run_sweep, seed_list)

EXIT_CONFIG = 2
EXIT_RUN = 3


class ConfigProblem(click.ClickException):
    exit_code = EXIT_CONFIG


class RunProblem(click.ClickException):
    exit_code = EXIT_RUN


def _load(path: str | None, preset: bool, overrides=()) -> ScenarioConfig:
    try:
        cfg = load_config(path) if path else ScenarioConfig()
    except (ConfigError, OSError) as exc:
        raise ConfigProblem(str(exc)) from None
    if preset and path is None:
        cfg = reference_preset()
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigProblem(f"{item}: expected KEY=VALUE")
        try:
            cfg = set_field(cfg, key.strip(), _parse_value(value))
        except ConfigError as exc:
            raise ConfigProblem(str(exc)) from None
    return cfg


def _parse_value(tok: str):
    tok = tok.strip()
    try:
        return tomli.loads(f"v = {tok}")["v"]
    except tomli.TOMLDecodeError:
        return tok


def _split(text: str) -> list[str]:
    return [t for t in (s.strip() for s in text.split(",")) if t]


def _emit(text: str, out_dir: Path, name: str) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / name).write_text(text)
    click.echo(text, nl=False)


def _guard(fn):
    try:
        return fn()
    except ConfigError as exc:
        raise ConfigProblem(str(exc)) from None
    except RunFailure as exc:
        raise RunProblem(str(exc)) from None


common = [
    click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
                 help="TOML scenario file; omitted keys take the reference defaults."),
    click.option("--seeds", type=click.IntRange(min=1), default=None,
                 help="Number of seeds (1..N); overrides the config value."),
    click.option("--out", "out", type=click.Path(file_okay=False), default=None,
                 help="Output directory (default $UAVNETSIM_OUT or ./out)."),
    click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="csv"),
    click.option("--jobs", type=click.IntRange(min=1), default=1, help="Worker processes."),
    click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE",
                 help="Dotted override applied after the config file, e.g. channel.model=nakagami."),
    click.option("--reference", is_flag=True,
                 help="Use the full reference traffic (2 Mbit/s, 50 seeds) when no config is given."),
]


def with_common(fn):
    for opt in reversed(common):
        fn = opt(fn)
    return fn


@click.group()
@click.version_option(package_name="artifact")
def main():
    """Simulate predictive mobility-aware routing in UAV swarms."""


@main.command("run")
@with_common
@click.option("--seed", type=int, default=None, help="Run exactly this seed.")
@click.option("--series/--no-series", default=False, help="Also write per-run PDR series CSVs.")
def run_cmd(config_path, seeds, out, fmt, jobs, overrides, reference, seed, series):
    """Run one scenario for one or more seeds."""
    cfg = _load(config_path, reference, overrides)
    out_dir = default_out_dir(out)
    seeds_ = [seed] if seed is not None else seed_list(seeds or cfg.seeds)
    runner = Runner(out_dir, jobs)
    results = _guard(lambda: runner.run_all([(s, cfg, s) for s in seeds_]))
    if series:
        sdir = out_dir / "series"
        sdir.mkdir(parents=True, exist_ok=True)
        for r in results:
            (sdir / f"{run_key(cfg, r.seed)}.csv").write_text(r.series_csv())
    if fmt == "json":
        text = "[" + ",\n".join(r.to_json() for r in results) + "]\n"
        _emit(text, out_dir, "run.json")
    else:
        cols = ["seed", "protocol", "source", "mean_pdr", "packets_sent", "packets_delivered",
                "packets_dropped_no_route", "packets_dropped_channel", "packets_dropped_ttl"]
        lines = [",".join(cols)]
        for r in results:
            lines.append(",".join(repr(getattr(r, c)) if isinstance(getattr(r, c), float)
                                  else str(getattr(r, c)) for c in cols))
        _emit("\n".join(lines) + "\n", out_dir, "run.csv")


@main.command("sweep")
@with_common
@click.option("--param", required=True, help="Dotted config field, e.g. prediction.horizon_steps.")
@click.option("--values", required=True, help="Comma-separated values, e.g. 0,5,15,30.")
@click.option("--info-configs", is_flag=True,
              help="Repeat the sweep for every steering/waypoint information configuration.")
def sweep_cmd(config_path, seeds, out, fmt, jobs, overrides, reference, param, values, info_configs):
    """Sweep one parameter and aggregate PDR across seeds."""
    cfg = _load(config_path, reference, overrides)
    out_dir = default_out_dir(out)
    vals = tuple(_parse_value(v) for v in _split(values))
    runner = Runner(out_dir, jobs)
    names = list(INFO_CONFIGS) if info_configs else [None]

    def go():
        out_rows = []
        for name in names:
            base = info_config(cfg, name) if name else cfg
            spec = SweepSpec(base, param, vals, seeds or 0)
            out_rows.append((name, run_sweep(spec, runner)))
        return out_rows

    blocks = _guard(go)
    if fmt == "json":
        if info_configs:
            data = {name: json.loads(rows_to_json(rows)) for name, rows in blocks}
            text = json.dumps(data, sort_keys=True, indent=1) + "\n"
        else:
            text = rows_to_json(blocks[0][1])
        _emit(text, out_dir, "sweep.json")
    else:
        if info_configs:
            parts = [rows_to_csv(rows, ROW_COLUMNS, {"configuration": name}) for name, rows in blocks]
            text = parts[0] + "".join(p.split("\n", 1)[1] for p in parts[1:])
        else:
            text = rows_to_csv(blocks[0][1])
        _emit(text, out_dir, "sweep.csv")


@main.command("compare")
@with_common
@click.option("--protocols", default="batmobile,batman-baseline", show_default=True)
@click.option("--channels", default="friis,nakagami", show_default=True)
def compare_cmd(config_path, seeds, out, fmt, jobs, overrides, reference, protocols, channels):
    """Protocol x channel matrix with the PDR drop between channels."""
    cfg = _load(config_path, reference, overrides)
    out_dir = default_out_dir(out)
    runner = Runner(out_dir, jobs)
    comp = _guard(lambda: compare_protocols(cfg, _split(protocols), seeds or 0,
                                            _split(channels), runner))
    if fmt == "json":
        data = {"rows": json.loads(rows_to_json(comp.rows)),
                "delta_pdr": comp.delta, "channels": list(comp.channels)}
        _emit(json.dumps(data, sort_keys=True, indent=1) + "\n", out_dir, "compare.json")
    else:
        text = rows_to_csv(comp.rows, COMPARE_COLUMNS)
        text += "\nprotocol,delta_pdr\n"
        text += "".join(f"{p},{d!r}\n" for p, d in comp.delta.items())
        _emit(text, out_dir, "compare.csv")


@main.command("defaults")
@click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None)
@click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE",
              help="Apply a dotted override before printing.")
def defaults_cmd(config_path, overrides):
    """Print the fully resolved configuration as TOML."""
    cfg = _load(config_path, False, overrides)
    click.echo(dumps(cfg), nl=False)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
