"""Command line entry point: ``weyl-lab <experiment> [--config path] [overrides]``."""

import sys
from dataclasses import replace

import click

from . import experiments
from .errors import ResourceError
from .experiments import EXPERIMENTS, ConfigError


@click.command(context_settings={"help_option_names": ["-h", "--help"]})
@click.argument("experiment", type=click.Choice(EXPERIMENTS))
@click.option("--config", "config_path", type=click.Path(dir_okay=False), help="TOML experiment file.")
@click.option("--lambda", "lambdas", type=float, multiple=True, help="Frequency; repeat for a list.")
@click.option("--threads", type=int, help="Worker threads.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), help="Output directory.")
@click.option("--cache", "cache_dir", type=click.Path(file_okay=False), help="Spectra cache directory.")
@click.option("--seed", type=int, help="Seed for pair sampling.")
def main(experiment, config_path, lambdas, threads, out_dir, cache_dir, seed):
    """Run one verification experiment and write results.csv and summary.json.

    Exit status is 0 when every acceptance flag passes and 1 otherwise.
    """
    overrides = {
        "lambdas": list(lambdas) or None,
        "threads": threads,
        "out_dir": out_dir,
        "seed": seed,
    }
    try:
        if config_path:
            config = experiments.load_config(config_path, experiment, overrides)
        else:
            config = experiments.make_config(experiment, None, overrides)
        cache = experiments.resolve_cache_dir(config.cache_dir, cache_dir)
        config = replace(config, cache_dir=cache)
    except ConfigError as exc:
        raise click.UsageError(f"invalid config field {exc}") from None
    try:
        summary = experiments.run(config)
    except ResourceError as exc:
        click.echo(f"error: {exc} (estimated modes: {exc.estimated_count})", err=True)
        sys.exit(3)
    for name, flag in summary.flags.items():
        status = "PASS" if flag.passed else "FAIL"
        click.echo(f"[{status}] criterion {flag.criterion} {name}: {flag.description}")
    click.echo(f"outputs in {config.out_dir}")
    sys.exit(0 if summary.passed else 1)


if __name__ == "__main__":
    main()
