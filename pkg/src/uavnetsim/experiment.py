"""Seed sweeps, protocol comparisons and aggregation with confidence intervals.

Every run is persisted as ``<out>/runs/<key>.json`` (the exact
:meth:`RunResult.to_json` bytes) where ``key`` hashes the config digest and
the seed. A present file is reused instead of re-running, which also makes
overlapping studies share work.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from statistics import NormalDist
from typing import Any, Iterable, Sequence

from .config import ConfigError, ScenarioConfig, get_field, set_field
from .sim import RunResult, run

Z95 = NormalDist().inv_cdf(0.975)

ROW_COLUMNS = ("param_value", "protocol", "mean_pdr", "std", "ci_low", "ci_high", "n")
COMPARE_COLUMNS = ("protocol", "channel", "mean_pdr", "std", "ci_low", "ci_high", "n")

# mobility-information configurations for the positioning-error study
INFO_CONFIGS = {
    "steering+waypoints": (True, True),
    "waypoints": (False, True),
    "steering": (True, False),
    "extrapolation": (False, False),
}


class RunFailure(RuntimeError):
    """A single run raised; carries the (value, seed) that failed."""

    def __init__(self, value, seed, cause):
        super().__init__(f"run failed for value={value!r}, seed={seed}: {cause}")
        self.value = value
        self.seed = seed


@dataclass(frozen=True)
class Stats:
    mean: float
    std: float
    ci_low: float
    ci_high: float
    n: int


def summarize(values: Sequence[float]) -> Stats:
    """Mean, sample std and 95% normal-approximation CI."""
    n = len(values)
    if n == 0:
        raise ValueError("cannot summarize an empty sample")
    mean = math.fsum(values) / n
    if n == 1:
        return Stats(mean, 0.0, mean, mean, 1)
    var = math.fsum((v - mean) ** 2 for v in values) / (n - 1)
    std = math.sqrt(var)
    half = Z95 * std / math.sqrt(n)
    return Stats(mean, std, mean - half, mean + half, n)


@dataclass(frozen=True)
class Row:
    param_value: Any
    protocol: str
    mean_pdr: float
    std: float
    ci_low: float
    ci_high: float
    n: int

    @classmethod
    def of(cls, value, protocol: str, values: Sequence[float]) -> Row:
        s = summarize(values)
        return cls(value, protocol, s.mean, s.std, s.ci_low, s.ci_high, s.n)


@dataclass(frozen=True)
class CompareRow:
    protocol: str
    channel: str
    mean_pdr: float
    std: float
    ci_low: float
    ci_high: float
    n: int


@dataclass(frozen=True)
class SweepSpec:
    base: ScenarioConfig
    parameter: str
    values: tuple
    seeds: int = 0  # 0 = base.seeds

    def __post_init__(self):
        if not self.values:
            raise ConfigError("sweep values: must not be empty")
        if self.seeds < 0:
            raise ConfigError(f"sweep seeds: must be >= 0 (got {self.seeds})")
        get_field_checked(self.base, self.parameter)
        # type-check and validate every value up front
        for v in self.values:
            set_field(self.base, self.parameter, v)

    @property
    def seed_count(self) -> int:
        return self.seeds or self.base.seeds

    def configs(self) -> list[tuple[Any, ScenarioConfig]]:
        return [(v, set_field(self.base, self.parameter, v)) for v in self.values]


def get_field_checked(cfg: ScenarioConfig, dotted: str):
    try:
        return get_field(cfg, dotted)
    except AttributeError:
        raise ConfigError(f"{dotted}: not a configuration field") from None


def run_key(cfg: ScenarioConfig, seed: int) -> str:
    return hashlib.sha256(f"{cfg.digest()}:{seed}".encode()).hexdigest()[:20]


def seed_list(n: int) -> list[int]:
    return list(range(1, n + 1))


def _execute(task):
    cfg, seed = task
    return run(cfg, seed).to_json()


@dataclass
class Runner:
    """Runs (config, seed) tasks, optionally in a process pool, with an on-disk cache."""

    out_dir: Path | None = None
    jobs: int = 1
    executed: int = field(default=0, init=False)

    def run_all(self, tasks: Sequence[tuple[Any, ScenarioConfig, int]]) -> list[RunResult]:
        """``tasks`` are (label, config, seed); results come back in task order."""
        texts: list[str | None] = [None] * len(tasks)
        todo = []
        for i, (_, cfg, seed) in enumerate(tasks):
            path = self._path(cfg, seed)
            if path is not None and path.exists():
                texts[i] = path.read_text()
            else:
                todo.append(i)
        if todo:
            work = [(tasks[i][1], tasks[i][2]) for i in todo]
            if self.jobs > 1 and len(work) > 1:
                with ProcessPoolExecutor(max_workers=self.jobs) as pool:
                    futures = [pool.submit(_execute, w) for w in work]
                    outputs = []
                    for i, fut in zip(todo, futures):
                        outputs.append(self._result(fut.result, tasks[i]))
            else:
                outputs = [self._result(lambda w=w: _execute(w), tasks[i])
                           for i, w in zip(todo, work)]
            for i, text in zip(todo, outputs):
                texts[i] = text
                path = self._path(tasks[i][1], tasks[i][2])
                if path is not None:
                    path.parent.mkdir(parents=True, exist_ok=True)
                    path.write_text(text)
            self.executed += len(todo)
        return [RunResult.from_json(t) for t in texts]

    @staticmethod
    def _result(call, task):
        try:
            return call()
        except Exception as exc:  # noqa: BLE001 - re-raised with context
            raise RunFailure(task[0], task[2], exc) from exc

    def _path(self, cfg: ScenarioConfig, seed: int) -> Path | None:
        if self.out_dir is None:
            return None
        return Path(self.out_dir) / "runs" / f"{run_key(cfg, seed)}.json"


def run_sweep(spec: SweepSpec, runner: Runner | None = None) -> list[Row]:
    runner = runner or Runner()
    seeds = seed_list(spec.seed_count)
    configs = spec.configs()
    tasks = [(v, cfg, s) for v, cfg in configs for s in seeds]
    results = runner.run_all(tasks)
    rows = []
    k = 0
    for v, cfg in configs:
        chunk = results[k:k + len(seeds)]
        k += len(seeds)
        rows.append(Row.of(v, cfg.routing.protocol, [r.mean_pdr for r in chunk]))
    return rows


@dataclass(frozen=True)
class Comparison:
    rows: tuple[CompareRow, ...]
    delta: dict  # protocol -> mean PDR(first channel) - mean PDR(second channel)
    channels: tuple[str, ...]

    def row(self, protocol: str, channel: str) -> CompareRow:
        for r in self.rows:
            if r.protocol == protocol and r.channel == channel:
                return r
        raise KeyError((protocol, channel))


def compare_protocols(scenario: ScenarioConfig, protocols: Sequence[str], seeds: int = 0,
                      channels: Sequence[str] = ("friis", "nakagami"),
                      runner: Runner | None = None) -> Comparison:
    """Per (protocol, channel) statistics plus the PDR drop between the channels.

    The drop is reported as ``mean(channels[0]) - mean(channels[-1])``, i.e.
    rural to urban for the default channel pair.
    """
    if len(protocols) < 2:
        raise ConfigError("protocols: at least two are required for a comparison")
    if not channels:
        raise ConfigError("channels: must not be empty")
    runner = runner or Runner()
    seeds_ = seed_list(seeds or scenario.seeds)
    cells = []
    for p in protocols:
        for ch in channels:
            cfg = set_field(set_field(scenario, "routing.protocol", p), "channel.model", ch)
            cells.append((p, ch, cfg))
    tasks = [((p, ch), cfg, s) for p, ch, cfg in cells for s in seeds_]
    results = runner.run_all(tasks)
    rows = []
    for i, (p, ch, _) in enumerate(cells):
        chunk = results[i * len(seeds_):(i + 1) * len(seeds_)]
        s = summarize([r.mean_pdr for r in chunk])
        rows.append(CompareRow(p, ch, s.mean, s.std, s.ci_low, s.ci_high, s.n))
    delta = {}
    for p in protocols:
        first = next(r for r in rows if r.protocol == p and r.channel == channels[0])
        last = next(r for r in rows if r.protocol == p and r.channel == channels[-1])
        delta[p] = first.mean_pdr - last.mean_pdr
    return Comparison(tuple(rows), delta, tuple(channels))


def info_config(cfg: ScenarioConfig, name: str) -> ScenarioConfig:
    steering, waypoints = INFO_CONFIGS[name]
    cfg = set_field(cfg, "prediction.use_steering", steering)
    return set_field(cfg, "prediction.use_waypoints", waypoints)


def gnss_study(base: ScenarioConfig, errors: Iterable[float], configs: Iterable[str] | None = None,
               seeds: int = 0, runner: Runner | None = None) -> dict[str, list[Row]]:
    """Positioning-error sweep for each mobility-information configuration."""
    runner = runner or Runner()
    out = {}
    for name in (configs or INFO_CONFIGS):
        spec = SweepSpec(info_config(base, name), "gnss.max_error", tuple(errors), seeds)
        out[name] = run_sweep(spec, runner)
    return out


# -- emission -----------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def rows_to_csv(rows: Sequence, columns: Sequence[str] = ROW_COLUMNS, extra: dict | None = None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    head = list(extra) if extra else []
    w.writerow(head + list(columns))
    for r in rows:
        d = asdict(r)
        w.writerow([_fmt(extra[k]) for k in head] + [_fmt(d[c]) for c in columns])
    return buf.getvalue()


def rows_to_json(rows: Sequence) -> str:
    return json.dumps([asdict(r) for r in rows], sort_keys=True, indent=1) + "\n"


def reaggregate(out_dir, tasks: Sequence[tuple[Any, ScenarioConfig, int]]) -> dict:
    """Recompute per-label statistics from the persisted raw runs."""
    groups: dict = {}
    for label, cfg, seed in tasks:
        path = Path(out_dir) / "runs" / f"{run_key(cfg, seed)}.json"
        groups.setdefault(label, []).append(RunResult.from_json(path.read_text()).mean_pdr)
    return {k: summarize(v) for k, v in groups.items()}


def default_out_dir(cli_value: str | None = None) -> Path:
    if cli_value:
        return Path(cli_value)
    return Path(os.environ.get("UAVNETSIM_OUT", "out"))
