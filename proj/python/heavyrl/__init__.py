"""Heavy-tailed linear bandits and linear MDPs via adaptive Huber regression."""

from pathlib import Path

from ._heavyrl import (
    ConfigError,
    ExperimentConfig,
    HuberRegressor,
    HuberSchedule,
    default_schedule,
    exact_dp_values,
    huber_grad,
    huber_kappa,
    huber_loss,
    load_config,
    parse_config,
    report,
    run_experiment,
    selftest,
)


def run(path, seeds=None, jobs=1, out=None):
    """Load a config file, optionally override its seeds, and run it."""
    config = load_config(Path(path))
    if seeds is not None:
        config.seeds = list(seeds)
    return run_experiment(config, jobs=jobs, out=None if out is None else str(out))


__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "HuberRegressor",
    "HuberSchedule",
    "default_schedule",
    "exact_dp_values",
    "huber_grad",
    "huber_kappa",
    "huber_loss",
    "load_config",
    "parse_config",
    "report",
    "run",
    "run_experiment",
    "selftest",
]
