"""Experiment sweeps: load, committee size, and crashed-node degradation."""

from __future__ import annotations

from dataclasses import replace

from .config import ExperimentSpec
from .metrics import summarize, summary_row
from .simulator import SimConfig, run


def config_for_point(base: SimConfig, sweep_var: str, value: float, seed: int) -> SimConfig:
    if sweep_var == "load":
        cfg = replace(base, tx_rate=float(value), seed=seed)
    elif sweep_var == "n":
        cfg = replace(base, n=int(value), f=-1, seed=seed)
    elif sweep_var == "crashed":
        count = int(value)
        # Crash the highest-index nodes one by one, spaced out mid-run.
        crashes = tuple(
            (base.n - 1 - i, base_crash_time(base) + 10.0 * i) for i in range(count)
        )
        cfg = replace(base, crashes=crashes, seed=seed)
    else:
        raise ValueError(f"unknown sweep variable {sweep_var!r}")
    cfg.validate()
    return cfg


def base_crash_time(base: SimConfig) -> float:
    # Roughly a quarter into the run under the default delay models.
    return 0.75 * base.max_rounds


def run_experiment(spec: ExperimentSpec) -> list[dict]:
    """One row per (sweep value, seed); rows carry full provenance."""
    rows = []
    for value in spec.values:
        for rep in range(spec.repetitions):
            seed = spec.base.seed + rep
            cfg = config_for_point(spec.base, spec.sweep_var, value, seed)
            result = run(cfg)
            summary = summarize(result)
            rows.append(
                summary_row(
                    summary,
                    experiment=spec.name,
                    sweep_var=spec.sweep_var,
                    sweep_value=value,
                    seed=seed,
                    config_hash=cfg.config_hash(),
                    n=cfg.n,
                    f=cfg.resolved_f(),
                )
            )
    return rows
