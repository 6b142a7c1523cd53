"""Key-value configuration files for runs and experiments.

Format: one ``key = value`` pair per line, ``#`` starts a comment, blank
lines are ignored.  Keys map one-to-one onto SimConfig fields; ``crash`` may
repeat and takes ``node:time``.  Experiment files add ``name``, ``sweep``,
``values`` (comma separated), and ``repetitions``.
"""

from __future__ import annotations

from dataclasses import dataclass

from .simulator import SimConfig

_INT_KEYS = {
    "n",
    "f",
    "seed",
    "max_rounds",
    "hybrid_conflict_threshold",
    "max_witness_paths",
    "batch_cap",
    "genesis_pool",
    "tx_stop_margin",
}
_FLOAT_KEYS = {
    "delay_mean",
    "delay_low",
    "delay_high",
    "tx_rate",
    "conflict_fraction",
    "max_time",
}
_STR_KEYS = {"delay_model", "mode", "link_policy", "order_policy"}


class ConfigError(Exception):
    pass


def parse_pairs(text: str) -> list[tuple[str, str]]:
    pairs = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        pairs.append((key.strip(), value.strip()))
    return pairs


def _apply_config_pair(cfg_kwargs: dict, crashes: list, key: str, value: str) -> bool:
    if key == "crash":
        try:
            node, time = value.split(":")
            crashes.append((int(node), float(time)))
        except ValueError as exc:
            raise ConfigError(f"bad crash entry {value!r}: want node:time") from exc
        return True
    if key in _INT_KEYS:
        cfg_kwargs[key] = int(value)
        return True
    if key in _FLOAT_KEYS:
        cfg_kwargs[key] = None if value in ("", "none", "None") else float(value)
        return True
    if key in _STR_KEYS:
        cfg_kwargs[key] = value
        return True
    return False


def load_sim_config(text: str) -> SimConfig:
    cfg_kwargs: dict = {}
    crashes: list[tuple[int, float]] = []
    for key, value in parse_pairs(text):
        if not _apply_config_pair(cfg_kwargs, crashes, key, value):
            raise ConfigError(f"unknown configuration key {key!r}")
    if crashes:
        cfg_kwargs["crashes"] = tuple(crashes)
    cfg = SimConfig(**cfg_kwargs)
    cfg.validate()
    return cfg


@dataclass
class ExperimentSpec:
    name: str
    base: SimConfig
    sweep_var: str  # load | n | crashed
    values: list[float]
    repetitions: int

    def __post_init__(self):
        if self.sweep_var not in ("load", "n", "crashed"):
            raise ConfigError(f"unknown sweep variable {self.sweep_var!r}")
        if not self.values:
            raise ConfigError("sweep values must be non-empty")
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")


def load_experiment_spec(text: str) -> ExperimentSpec:
    cfg_kwargs: dict = {}
    crashes: list[tuple[int, float]] = []
    name = "experiment"
    sweep_var = None
    values: list[float] = []
    repetitions = 1
    for key, value in parse_pairs(text):
        if key == "name":
            name = value
        elif key == "sweep":
            sweep_var = value
        elif key == "values":
            values = [float(v) for v in value.split(",") if v.strip() != ""]
        elif key == "repetitions":
            repetitions = int(value)
        elif not _apply_config_pair(cfg_kwargs, crashes, key, value):
            raise ConfigError(f"unknown configuration key {key!r}")
    if sweep_var is None:
        raise ConfigError("experiment file needs a 'sweep' key")
    if crashes:
        cfg_kwargs["crashes"] = tuple(crashes)
    base = SimConfig(**cfg_kwargs)
    return ExperimentSpec(
        name=name, base=base, sweep_var=sweep_var, values=values, repetitions=repetitions
    )
