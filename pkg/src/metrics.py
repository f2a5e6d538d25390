"""
Metrics Module for the CosDefense simulator

This module evaluates models and summarizes runs:
- Test accuracy
- Per-round last-layer cosine traces and their moving-average smoothing
- Detection quality of filtering defenses (precision, recall, FPR)
- The layer-wise similarity experiment over independently trained clients
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from tqdm.auto import tqdm

from . import config
from .data_loader import Dataset
from .exceptions import ConfigurationError
from .partitioner import Partition, partition_noniid, sample_batch
from .tensor_nn import WEIGHT, LayerSpec, ParamVector, init_model, last_layer_vector, predict, sgd_step, slice_segment
from .utils import cosine_similarity, derive_rng, log_analysis_step, safe_mean

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RoundRecord:
    """
    Everything observed in one federated round.

    Attributes:
        round: Round index t (0-based)
        test_accuracy: Accuracy of theta_{t+1} on the test set
        mean_abs_cos_all: Mean |cos| between the last-layer weights of
            theta_t and of every received update
        mean_abs_cos_benign_truth: Same, over truly benign clients (NaN if none)
        mean_abs_cos_malicious_truth: Same, over truly malicious clients (NaN if none)
        filtered_ids: Clients excluded by the defense
        benign_set_size: Clients the defense kept
        attack_active: Whether attackers misbehaved this round
        sampled_ids: Clients whose updates reached the server
        malicious_sampled_ids: Ground-truth attackers among them
    """

    round: int
    test_accuracy: float
    mean_abs_cos_all: float
    mean_abs_cos_benign_truth: float
    mean_abs_cos_malicious_truth: float
    filtered_ids: Tuple[int, ...]
    benign_set_size: int
    attack_active: bool
    sampled_ids: Tuple[int, ...] = field(default_factory=tuple)
    malicious_sampled_ids: Tuple[int, ...] = field(default_factory=tuple)

    @property
    def n_filtered(self) -> int:
        return len(self.filtered_ids)

    def to_row(self) -> Dict:
        """CSV row in config.ROUND_CSV_COLUMNS order."""
        return {
            "round": self.round,
            "test_accuracy": self.test_accuracy,
            "mean_abs_cos_all": self.mean_abs_cos_all,
            "mean_abs_cos_benign_truth": self.mean_abs_cos_benign_truth,
            "mean_abs_cos_malicious_truth": self.mean_abs_cos_malicious_truth,
            "n_filtered": self.n_filtered,
            "filtered_ids": config.FILTERED_IDS_SEPARATOR.join(str(i) for i in self.filtered_ids),
            "attack_active": int(self.attack_active),
        }


@dataclass(frozen=True)
class TraceSeries:
    """
    A per-round series and the window used to smooth it.
    """

    values: Tuple[float, ...]
    window: int = config.SMOOTHING_WINDOW

    @property
    def smoothed(self) -> np.ndarray:
        return moving_average(self.values, self.window)


@dataclass(frozen=True)
class DetectionStats:
    """
    Confusion counts over (round, client) decisions; rates are None when
    their denominator is zero.
    """

    true_positives: int
    false_positives: int
    false_negatives: int
    true_negatives: int
    precision: Optional[float]
    recall: Optional[float]
    false_positive_rate: Optional[float]

    def to_dict(self) -> Dict:
        return {
            "true_positives": self.true_positives,
            "false_positives": self.false_positives,
            "false_negatives": self.false_negatives,
            "true_negatives": self.true_negatives,
            "precision": self.precision,
            "recall": self.recall,
            "false_positive_rate": self.false_positive_rate,
        }


def evaluate_accuracy(params: ParamVector, dataset: Dataset) -> float:
    """
    Fraction of examples whose argmax prediction matches the label.

    Args:
        params: Model parameters
        dataset: Non-empty evaluation set

    Returns:
        Accuracy in [0, 1]; argmax ties go to the lowest class index
    """
    predictions = predict(params, dataset.features)
    return float(np.mean(predictions == dataset.labels))


def last_layer_abs_cosines(
    global_params: ParamVector,
    deltas: Mapping[int, ParamVector],
    include_bias: bool = False,
) -> Dict[int, float]:
    """
    |cos| between the last layer of theta_t and the last layer of each update.

    Args:
        global_params: theta_t
        deltas: client id -> update

    Returns:
        client id -> absolute cosine
    """
    reference = last_layer_vector(global_params, include_bias)
    return {
        client_id: abs(cosine_similarity(reference, last_layer_vector(delta, include_bias)))
        for client_id, delta in deltas.items()
    }


def moving_average(series: Sequence[float], window: int) -> np.ndarray:
    """
    Trailing moving average that keeps the series length.

    Element k is the mean of elements max(0, k - window + 1) .. k; NaN
    entries are skipped.

    Example:
        >>> moving_average([1, 3, 5], 2).tolist()
        [1.0, 2.0, 4.0]
    """
    if window < 1:
        raise ConfigurationError(f"Smoothing window must be >= 1, got {window}")
    values = pd.Series(np.asarray(series, dtype=np.float64))
    return values.rolling(window, min_periods=1).mean().to_numpy()


def records_to_frame(records: Sequence[RoundRecord]) -> pd.DataFrame:
    """
    Per-round records as a DataFrame in CSV column order.
    """
    return pd.DataFrame([record.to_row() for record in records], columns=config.ROUND_CSV_COLUMNS)


def window_mean(values: np.ndarray, rounds: np.ndarray, start: int, end: int) -> float:
    """Mean of values whose round lies in [start, end]; NaN if none."""
    mask = (rounds >= start) & (rounds <= end)
    selected = values[mask]
    selected = selected[~np.isnan(selected)]
    return float(selected.mean()) if selected.size else math.nan


def trace_separation(
    records: Sequence[RoundRecord],
    window: int = config.SMOOTHING_WINDOW,
    pre_window: Tuple[int, int] = config.PRE_ATTACK_WINDOW,
    post_window: Tuple[int, int] = config.POST_ATTACK_WINDOW,
) -> Dict[str, float]:
    """
    Compare the smoothed mean |cos| trace before and after the attack.

    Returns:
        {
            'pre_attack_mean': smoothed trace averaged over pre_window,
            'post_attack_mean': smoothed trace averaged over post_window,
            'malicious_above_benign_fraction': share of attack-active rounds
                (with both kinds sampled) where attackers scored higher
        }
    """
    rounds = np.array([record.round for record in records])
    trace = TraceSeries(values=tuple(record.mean_abs_cos_all for record in records), window=window)
    smoothed = trace.smoothed

    compared = [
        record.mean_abs_cos_malicious_truth > record.mean_abs_cos_benign_truth
        for record in records
        if record.attack_active
        and not math.isnan(record.mean_abs_cos_malicious_truth)
        and not math.isnan(record.mean_abs_cos_benign_truth)
    ]
    return {
        "pre_attack_mean": window_mean(smoothed, rounds, *pre_window),
        "post_attack_mean": window_mean(smoothed, rounds, *post_window),
        "malicious_above_benign_fraction": (
            float(np.mean(compared)) if compared else math.nan
        ),
    }


def _ratio(numerator: int, denominator: int) -> Optional[float]:
    return numerator / denominator if denominator > 0 else None


def detection_stats(records: Sequence[RoundRecord]) -> DetectionStats:
    """
    Precision, recall and false-positive rate of the filtering decisions.

    Every (round, sampled client) pair of an attack-active round is one
    decision: filtered counts as a positive, a ground-truth attacker as a
    true positive.

    Args:
        records: Round records of one run

    Returns:
        DetectionStats; undefined rates are None
    """
    tp = fp = fn = tn = 0
    for record in records:
        if not record.attack_active:
            continue
        filtered = set(record.filtered_ids)
        malicious = set(record.malicious_sampled_ids)
        for client_id in record.sampled_ids:
            if client_id in malicious:
                if client_id in filtered:
                    tp += 1
                else:
                    fn += 1
            elif client_id in filtered:
                fp += 1
            else:
                tn += 1

    if tp + fn == 0:
        log_analysis_step(
            "Metrics", "No attacker was sampled in an attack-active round", "WARNING"
        )

    return DetectionStats(
        true_positives=tp,
        false_positives=fp,
        false_negatives=fn,
        true_negatives=tn,
        precision=_ratio(tp, tp + fp),
        recall=_ratio(tp, tp + fn),
        false_positive_rate=_ratio(fp, fp + tn),
    )


def benign_filter_rate(records: Sequence[RoundRecord]) -> float:
    """
    Average over rounds of the share of truly benign sampled clients that
    the defense filtered out.
    """
    rates = []
    for record in records:
        malicious = set(record.malicious_sampled_ids)
        benign = [cid for cid in record.sampled_ids if cid not in malicious]
        if not benign:
            continue
        filtered = set(record.filtered_ids)
        rates.append(sum(cid in filtered for cid in benign) / len(benign))
    return safe_mean(rates)


def layerwise_similarity_experiment(
    spec: Sequence[LayerSpec],
    dataset: Dataset,
    n_clients: int = config.SIMILARITY_CLIENTS,
    iters: int = config.SIMILARITY_ITERS,
    seed: int = config.DEFAULT_SEED,
    q: float = config.NONIID_Q,
    learning_rate: float = config.LEARNING_RATE,
    batch_size: int = config.BATCH_SIZE,
    sample_every: int = config.SIMILARITY_SAMPLE_EVERY,
    client_indices: Optional[Sequence[np.ndarray]] = None,
    client_seeds: Optional[Sequence[int]] = None,
    progress: bool = False,
) -> pd.DataFrame:
    """
    Train clients independently from one initialization and track how
    similar each layer's weights stay across clients.

    Every ``sample_every`` iterations (and at iteration 0) the cosine
    similarity of each layer's weight matrix is computed for every client
    pair.

    Args:
        spec: Model layers
        dataset: Training set, partitioned non-iid with degree q unless
            client_indices is given
        n_clients: Number of independent clients (>= 2)
        iters: SGD iterations per client
        seed: Seed for the shared initialization and the partition
        client_indices: Optional explicit per-client example indices
        client_seeds: Optional per-client batch-sampling seeds

    Returns:
        DataFrame with columns iteration, layer, reference_similarity
        (client 0 against the others) and mean_similarity (all pairs)
    """
    if client_indices is not None:
        n_clients = len(client_indices)
    if n_clients < 2:
        raise ConfigurationError(f"Layer similarity needs at least 2 clients, got {n_clients}")
    if sample_every < 1:
        raise ConfigurationError(f"sample_every must be >= 1, got {sample_every}")

    if client_indices is None:
        partition = partition_noniid(dataset, n_clients, q, seed)
    else:
        partition = Partition(
            assignments={cid: np.asarray(ix) for cid, ix in enumerate(client_indices)},
            num_clients=n_clients,
            num_groups=1,
        )
    if client_seeds is None:
        rngs = [derive_rng(seed, config.STREAM_LOCAL_TRAINING, cid) for cid in range(n_clients)]
    else:
        rngs = [np.random.default_rng(s) for s in client_seeds]

    log_analysis_step(
        "LayerSimilarity", f"Training {n_clients} clients for {iters} iterations independently"
    )
    initial = init_model(spec, seed)
    models: List[ParamVector] = [initial] * n_clients
    num_layers = len(spec)
    rows = []

    def snapshot(iteration: int) -> None:
        for layer in range(num_layers):
            weights = [slice_segment(model, layer, WEIGHT) for model in models]
            pairwise = np.ones((n_clients, n_clients))
            for a in range(n_clients):
                for b in range(a + 1, n_clients):
                    pairwise[a, b] = pairwise[b, a] = cosine_similarity(weights[a], weights[b])
            off_diagonal = pairwise[~np.eye(n_clients, dtype=bool)]
            rows.append(
                {
                    "iteration": iteration,
                    "layer": layer,
                    "reference_similarity": float(pairwise[0, 1:].mean()),
                    "mean_similarity": float(off_diagonal.mean()),
                }
            )

    snapshot(0)
    for iteration in tqdm(range(1, iters + 1), disable=not progress, desc="independent training"):
        for cid in range(n_clients):
            batch = sample_batch(dataset, partition, cid, batch_size, rngs[cid])
            _, models[cid] = sgd_step(models[cid], batch, learning_rate)
        if iteration % sample_every == 0:
            snapshot(iteration)

    return pd.DataFrame(rows, columns=["iteration", "layer", "reference_similarity", "mean_similarity"])
