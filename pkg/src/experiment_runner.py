"""
Experiment Runner Module for the CosDefense simulator

This module drives whole experiments:
- Config parsing (JSON file plus overrides)
- Single runs with CSV / JSON outputs and a replayable manifest
- Attacker-fraction and non-iid sweeps over several defenses
- The layer-wise similarity experiment
"""

import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import pandas as pd
from pydantic import BaseModel, ConfigDict, ValidationError
from tqdm.auto import tqdm

from . import config
from .attacks import AttackInjector
from .data_loader import DataLoader, Dataset, make_synthetic
from .defenses import RobustAggregator, calibrate_clip_bound
from .exceptions import ConfigurationError
from .experiment_config import ExperimentConfig
from .fl_core import FederatedSimulator, RoundHooks
from .metrics import (
    RoundRecord,
    benign_filter_rate,
    detection_stats,
    layerwise_similarity_experiment,
    records_to_frame,
    trace_separation,
)
from .partitioner import assign_malicious_clients, get_partition_summary, partition_noniid
from .report_writer import read_json, write_json, write_round_csv, write_similarity_csv, write_sweep_outputs
from .tensor_nn import LayerSpec, ParamVector, build_layer_specs, init_model
from .utils import child_seed, format_metric, log_analysis_step, validate_data

logger = logging.getLogger(__name__)

AXIS_ALIASES = {
    "malicious_fraction": "malicious_frac",
    "p": "malicious_frac",
    "epsilon": "ipm_eps",
    "eps": "ipm_eps",
}


class RunManifest(BaseModel):
    """
    Everything needed to reproduce a run.

    Attributes:
        config: Full ExperimentConfig snapshot
        seed: Run seed
        version: Simulator version
        outputs: Output name -> path
        duration_seconds: Wall-clock run time
    """

    model_config = ConfigDict(frozen=True)

    config: Dict
    seed: int
    version: str
    outputs: Dict[str, str]
    duration_seconds: float


@dataclass(frozen=True, eq=False)
class ExperimentResult:
    manifest: RunManifest
    summary: Dict
    records: List[RoundRecord]
    final_params: ParamVector


def _format_validation_error(error: ValidationError) -> str:
    messages = []
    for item in error.errors():
        key = ".".join(str(part) for part in item["loc"])
        message = item["msg"].removeprefix("Value error, ")
        messages.append(f"{key}: {message}" if key else message)
    return "; ".join(messages)


def build_config(values: Mapping) -> ExperimentConfig:
    """
    Validate a mapping into an ExperimentConfig.

    Raises:
        ConfigurationError: Unknown key or invalid value; the message names
            the key
    """
    try:
        return ExperimentConfig(**values)
    except ValidationError as e:
        raise ConfigurationError(f"Invalid configuration: {_format_validation_error(e)}") from e


def parse_config(path: Optional[str] = None, overrides: Optional[Mapping] = None) -> ExperimentConfig:
    """
    Build the experiment config from a JSON file and flag overrides.

    Flags win over file values; keys absent from both take the protocol
    defaults. Override values of None are ignored.

    Args:
        path: Optional JSON file of ExperimentConfig fields
        overrides: Optional field -> value mapping

    Returns:
        Validated ExperimentConfig

    Example:
        >>> parse_config(overrides={"q": 0.5}).num_clients
        100
    """
    values: Dict = {}
    if path is not None:
        if not os.path.exists(path):
            raise FileNotFoundError(f"Config file not found: {path}")
        try:
            with open(path, "r", encoding="utf-8") as handle:
                loaded = json.load(handle)
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"Config file {path} is not valid JSON: {e}") from e
        if not isinstance(loaded, dict):
            raise ConfigurationError(f"Config file {path} must hold a JSON object")
        values.update(loaded)
    if overrides:
        values.update({k: v for k, v in overrides.items() if v is not None})
    return build_config(values)


def build_datasets(cfg: ExperimentConfig) -> Tuple[Dataset, Dataset]:
    """
    Load or generate the train and test sets.

    Raises:
        FileNotFoundError: If IDX files are missing
    """
    loader = DataLoader(cfg.data_dir)
    if cfg.dataset == "synthetic":
        train = make_synthetic(
            cfg.synthetic_classes, cfg.synthetic_per_class, cfg.synthetic_dim, cfg.seed, split="train"
        )
        test = make_synthetic(
            cfg.synthetic_classes, cfg.synthetic_test_per_class, cfg.synthetic_dim, cfg.seed + 1, split="test"
        )
    else:
        splits = loader.load_train_test(cfg.dataset)
        train, test = splits["train"], splits["test"]

    for split in (train, test):
        log_analysis_step("ExperimentRunner", f"Dataset {cfg.dataset}: {loader.get_data_summary(split)}")
    return train, test


def model_spec(cfg: ExperimentConfig, input_dim: int) -> List[LayerSpec]:
    return build_layer_specs([input_dim, *cfg.hidden_dims, cfg.num_classes])


def _summarize(cfg: ExperimentConfig, records: Sequence[RoundRecord], malicious_ids, clip_bound) -> Dict:
    is_valid, errors = validate_data(records_to_frame(records), "test_accuracy", 0.0, 1.0)
    if not is_valid:
        for error in errors:
            log_analysis_step("ExperimentRunner", error, "ERROR")
    accuracies = [record.test_accuracy for record in records]
    return {
        "final_accuracy": accuracies[-1],
        "best_accuracy": max(accuracies),
        "num_rounds": len(records),
        "trace": trace_separation(records),
        "detection": detection_stats(records).to_dict(),
        "benign_filter_rate": benign_filter_rate(records),
        "malicious_ids": sorted(malicious_ids),
        "clip_bound": clip_bound,
        "attack": cfg.attack,
        "defense": cfg.defense,
        "seed": cfg.seed,
        "version": config.METADATA["version"],
    }


def run_experiment(cfg: ExperimentConfig, write: bool = True) -> ExperimentResult:
    """
    Run one full experiment and write its outputs to cfg.out_dir.

    Outputs: rounds.csv (per-round trace), summary.json and
    manifest.json.

    Args:
        cfg: Validated experiment config
        write: Write output files

    Returns:
        ExperimentResult with the manifest, summary and records

    Raises:
        FileNotFoundError: Dataset files missing (before any round runs)
    """
    started = time.perf_counter()
    log_analysis_step(
        "ExperimentRunner",
        f"dataset={cfg.dataset} attack={cfg.attack} defense={cfg.defense} seed={cfg.seed}",
    )

    train, test = build_datasets(cfg)
    partition = partition_noniid(train, cfg.num_clients, cfg.q, cfg.seed)
    log_analysis_step("ExperimentRunner", f"Partition: {get_partition_summary(partition, train)}")
    malicious_ids = assign_malicious_clients(cfg.num_clients, cfg.num_classes, cfg.num_malicious, cfg.seed)

    initial = init_model(model_spec(cfg, train.dim), cfg.seed)

    defense_spec = cfg.defense_spec()
    clip_bound = defense_spec.clip_bound
    if defense_spec.uses_clipping and clip_bound is None:
        clip_bound = calibrate_clip_bound(cfg, train, partition, initial)

    hooks = RoundHooks(
        attack=AttackInjector(cfg.attack_spec(), cfg.num_classes, cfg.seed),
        defense=RobustAggregator(defense_spec, clip_bound=clip_bound),
    )
    simulator = FederatedSimulator(cfg, train, test, partition, malicious_ids, hooks)
    final_params, records = simulator.run(initial)

    summary = _summarize(cfg, records, malicious_ids, clip_bound)
    log_analysis_step(
        "ExperimentRunner",
        f"final accuracy {format_metric(summary['final_accuracy'])}, "
        f"precision {format_metric(summary['detection']['precision'])}, "
        f"recall {format_metric(summary['detection']['recall'])}",
    )

    outputs: Dict[str, str] = {}
    if write:
        outputs["rounds"] = write_round_csv(records, os.path.join(cfg.out_dir, config.ROUNDS_CSV))
        outputs["summary"] = write_json(summary, os.path.join(cfg.out_dir, config.SUMMARY_JSON))
        outputs["manifest"] = os.path.join(cfg.out_dir, config.MANIFEST_JSON)

    manifest = RunManifest(
        config=cfg.model_dump(mode="json"),
        seed=cfg.seed,
        version=config.METADATA["version"],
        outputs=outputs,
        duration_seconds=time.perf_counter() - started,
    )
    if write:
        write_json(manifest.model_dump(), outputs["manifest"])
    return ExperimentResult(manifest=manifest, summary=summary, records=records, final_params=final_params)


def replay_manifest(path: str, out_dir: Optional[str] = None) -> ExperimentResult:
    """
    Re-run the experiment a manifest describes.

    Args:
        path: manifest.json of an earlier run
        out_dir: Write outputs here instead of the recorded directory
    """
    manifest = read_json(path)
    values = dict(manifest["config"])
    if out_dir is not None:
        values["out_dir"] = out_dir
    log_analysis_step("ExperimentRunner", f"Replaying {path} into {values['out_dir']}")
    return run_experiment(build_config(values))


def resolve_axis(axis: str) -> str:
    axis = AXIS_ALIASES.get(axis, axis)
    if axis not in config.SWEEP_AXES:
        raise ConfigurationError(
            f"Invalid sweep axis: {axis}. Must be one of {sorted(config.SWEEP_AXES)}"
        )
    return axis


def sweep_cells(
    base: ExperimentConfig,
    axis: str,
    defenses: Sequence[str],
    values: Sequence[float],
) -> List[Dict]:
    """
    Grid cells in order: every axis value, then every defense.

    Cell i runs with seed base.seed * 1000 + i.
    """
    cells = []
    for value in values:
        for defense in defenses:
            index = len(cells)
            overrides = {
                axis: value,
                "defense": defense,
                "seed": child_seed(base.seed, index),
                "out_dir": os.path.join(base.out_dir, f"cell_{index:03d}_{axis}_{value}_{defense}"),
                "progress": False,
            }
            cells.append({"index": index, "axis": axis, "value": value, "defense": defense, "overrides": overrides})
    return cells


def _run_cell(base_values: Dict, cell: Dict) -> Dict:
    row = {
        "index": cell["index"],
        "axis": cell["axis"],
        "value": cell["value"],
        "defense": cell["defense"],
        "seed": cell["overrides"]["seed"],
        "final_accuracy": None,
        "best_accuracy": None,
        "status": "ok",
        "error": "",
    }
    try:
        result = run_experiment(build_config({**base_values, **cell["overrides"]}))
        row["final_accuracy"] = result.summary["final_accuracy"]
        row["best_accuracy"] = result.summary["best_accuracy"]
    except Exception as e:
        logger.error(f"Sweep cell {cell['index']} ({cell['axis']}={cell['value']}, {cell['defense']}) failed: {e}")
        row["status"] = "failed"
        row["error"] = f"{type(e).__name__}: {e}"
    return row


def run_sweep(
    base: ExperimentConfig,
    axis: str,
    defenses: Optional[Sequence[str]] = None,
    values: Optional[Sequence[float]] = None,
    jobs: int = 1,
    write: bool = True,
) -> pd.DataFrame:
    """
    Run every (axis value, defense) cell and tabulate final accuracies.

    Failed cells are logged and recorded with status 'failed'; the sweep
    carries on.

    Args:
        base: Base config
        axis: 'malicious_frac', 'q' or 'ipm_eps' (aliases accepted)
        defenses: Defense kinds; config.SWEEP_DEFENSES when None
        values: Axis values; config.SWEEP_AXES[axis] when None
        jobs: Worker processes for independent cells

    Returns:
        DataFrame with config.SWEEP_COLUMNS, one row per cell in grid order
    """
    axis = resolve_axis(axis)
    defenses = list(defenses or config.SWEEP_DEFENSES)
    values = list(values if values is not None else config.SWEEP_AXES[axis])
    cells = sweep_cells(base, axis, defenses, values)
    base_values = base.model_dump()
    log_analysis_step("Sweep", f"{len(cells)} cells over {axis}={values} x {defenses}, jobs={jobs}")

    if jobs > 1:
        rows = []
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_run_cell, base_values, cell) for cell in cells]
            for future in tqdm(as_completed(futures), total=len(futures), disable=not base.progress, desc="sweep"):
                rows.append(future.result())
    else:
        rows = [
            _run_cell(base_values, cell)
            for cell in tqdm(cells, disable=not base.progress, desc="sweep")
        ]

    rows.sort(key=lambda row: row["index"])
    summary = pd.DataFrame(rows, columns=config.SWEEP_COLUMNS)
    failed = int((summary["status"] == "failed").sum())
    if failed:
        log_analysis_step("Sweep", f"{failed} of {len(summary)} cells failed", "WARNING")
    if write:
        write_sweep_outputs(summary, base.out_dir, {"axis": axis, "base_config": base.model_dump(mode="json")})
    return summary


def run_layer_similarity(
    cfg: ExperimentConfig,
    n_clients: int = config.SIMILARITY_CLIENTS,
    iters: int = config.SIMILARITY_ITERS,
    sample_every: int = config.SIMILARITY_SAMPLE_EVERY,
    write: bool = True,
) -> pd.DataFrame:
    """
    Independent-training layer similarity on cfg's training set.

    Clients are partitioned with degree cfg.q; curves go to
    layer_similarity.csv in cfg.out_dir.
    """
    train, _ = build_datasets(cfg)
    curves = layerwise_similarity_experiment(
        model_spec(cfg, train.dim),
        train,
        n_clients=n_clients,
        iters=iters,
        seed=cfg.seed,
        q=cfg.q,
        learning_rate=cfg.learning_rate,
        batch_size=cfg.batch_size,
        sample_every=sample_every,
        progress=cfg.progress,
    )
    if write:
        write_similarity_csv(curves, os.path.join(cfg.out_dir, config.SIMILARITY_CSV))
    return curves
