"""
Command-line front door for the CosDefense simulator.

Commands:
    run               One experiment, or a sweep with --sweep AXIS
    replay            Re-run the experiment recorded in a manifest
    layer-similarity  Independent-training layer similarity curves
"""

import logging
import sys

import click

from . import config
from .exceptions import SimulationError
from .experiment_config import ExperimentConfig
from .experiment_runner import parse_config, replay_manifest, run_experiment, run_layer_similarity, run_sweep
from .utils import format_metric, set_log_level

logger = logging.getLogger(__name__)

ATTACKS = click.Choice(list(config.ATTACK_KINDS))
DEFENSES = click.Choice(list(config.DEFENSE_KINDS))
LOG_LEVELS = click.Choice(["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"], case_sensitive=False)

# CLI flag name -> ExperimentConfig field
FLAG_FIELDS = {
    "dataset": "dataset",
    "data_dir": "data_dir",
    "clients": "num_clients",
    "rounds": "num_rounds",
    "sample_rate": "sample_rate",
    "lr": "learning_rate",
    "batch": "batch_size",
    "local_iters": "local_iters",
    "q": "q",
    "malicious_frac": "malicious_frac",
    "attack": "attack",
    "ipm_eps": "ipm_eps",
    "noise_sigma": "noise_sigma",
    "attack_start": "attack_start",
    "defense": "defense",
    "krum_f": "krum_f",
    "clip_bound": "clip_bound",
    "post_filter": "post_filter_aggregation",
    "include_bias": "cos_include_bias",
    "seed": "seed",
    "out": "out_dir",
    "workers": "workers",
}


def _config_from_flags(config_path, options, progress: bool) -> ExperimentConfig:
    overrides = {field: options.get(flag) for flag, field in FLAG_FIELDS.items()}
    if not progress:
        overrides["progress"] = False
    return parse_config(config_path, overrides)


def _fail(error: Exception) -> None:
    click.echo(f"Error: {error}", err=True)
    sys.exit(2 if isinstance(error, SimulationError) else 1)


@click.group()
@click.option("--log-level", type=LOG_LEVELS, default=config.LOG_LEVEL, show_default=True)
def cli(log_level: str) -> None:
    """Federated-learning poisoning simulator with CosDefense."""
    set_log_level(log_level)


@cli.command()
@click.option("--config", "config_path", type=click.Path(dir_okay=False), help="JSON config file")
@click.option("--dataset", type=click.Choice(list(config.DATASETS)))
@click.option("--data-dir", type=click.Path(file_okay=False))
@click.option("--clients", type=int, help="Total clients K")
@click.option("--rounds", type=int, help="Rounds T")
@click.option("--sample-rate", type=float)
@click.option("--lr", type=float, help="Local learning rate")
@click.option("--batch", type=int, help="Local batch size")
@click.option("--local-iters", type=int)
@click.option("--q", type=float, help="Non-iid degree")
@click.option("--malicious-frac", type=float)
@click.option("--attack", type=ATTACKS)
@click.option("--ipm-eps", type=float)
@click.option("--noise-sigma", type=float)
@click.option("--attack-start", type=int)
@click.option("--defense", type=DEFENSES)
@click.option("--krum-f", type=int)
@click.option("--clip-bound", type=float)
@click.option("--post-filter", type=click.Choice(list(config.POST_FILTER_AGGREGATIONS)))
@click.option(
    "--include-bias/--no-include-bias",
    default=None,
    help="Append the last layer bias to the CosDefense vectors",
)
@click.option("--seed", type=int)
@click.option("--out", type=click.Path(file_okay=False), help="Output directory")
@click.option("--workers", type=int, help="Threads for local updates within a round")
@click.option("--sweep", type=str, help="Sweep axis: malicious_frac, q or ipm_eps")
@click.option("--sweep-defenses", type=str, help="Comma-separated defenses for --sweep")
@click.option("--jobs", type=int, default=1, show_default=True, help="Processes for sweep cells")
@click.option("--progress/--no-progress", default=True)
def run(config_path, sweep, sweep_defenses, jobs, progress, **options) -> None:
    """Run one experiment, or a sweep over an axis."""
    try:
        cfg = _config_from_flags(config_path, options, progress)
        if sweep:
            defenses = sweep_defenses.split(",") if sweep_defenses else None
            summary = run_sweep(cfg, sweep, defenses=defenses, jobs=jobs)
            click.echo(summary.to_string(index=False))
            return
        result = run_experiment(cfg)
    except (SimulationError, FileNotFoundError) as e:
        _fail(e)
        return
    click.echo(f"final_accuracy={format_metric(result.summary['final_accuracy'])}")
    click.echo(f"outputs={cfg.out_dir}")


@cli.command()
@click.argument("manifest", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.Path(file_okay=False), help="Write outputs here instead")
def replay(manifest, out) -> None:
    """Re-run the experiment described by MANIFEST."""
    try:
        result = replay_manifest(manifest, out_dir=out)
    except (SimulationError, FileNotFoundError) as e:
        _fail(e)
        return
    click.echo(f"final_accuracy={format_metric(result.summary['final_accuracy'])}")


@cli.command("layer-similarity")
@click.option("--config", "config_path", type=click.Path(dir_okay=False))
@click.option("--dataset", type=click.Choice(list(config.DATASETS)))
@click.option("--data-dir", type=click.Path(file_okay=False))
@click.option("--q", type=float)
@click.option("--lr", type=float)
@click.option("--batch", type=int)
@click.option("--seed", type=int)
@click.option("--out", type=click.Path(file_okay=False))
@click.option("--clients", "n_clients", type=int, default=config.SIMILARITY_CLIENTS, show_default=True)
@click.option("--iters", type=int, default=config.SIMILARITY_ITERS, show_default=True)
@click.option("--sample-every", type=int, default=config.SIMILARITY_SAMPLE_EVERY, show_default=True)
@click.option("--progress/--no-progress", default=True)
def layer_similarity(config_path, n_clients, iters, sample_every, progress, **options) -> None:
    """Train clients independently and record per-layer similarity."""
    try:
        cfg = _config_from_flags(config_path, options, progress)
        curves = run_layer_similarity(cfg, n_clients=n_clients, iters=iters, sample_every=sample_every)
    except (SimulationError, FileNotFoundError) as e:
        _fail(e)
        return
    final = curves[curves["iteration"] == curves["iteration"].max()]
    click.echo(final.to_string(index=False))


if __name__ == "__main__":
    cli()
